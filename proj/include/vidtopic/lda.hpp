#pragma once

// Latent Dirichlet allocation by collapsed Gibbs sampling, one model per
// feature space, plus fold-in inference of topic proportions for new
// documents with the topic-word distributions held fixed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vidtopic/error.hpp"
#include "vidtopic/ingest.hpp"
#include "vidtopic/rng.hpp"

namespace vidtopic {

struct WordProb {
  std::int32_t word = 0;
  double prob = 0.0;
  friend bool operator==(const WordProb&, const WordProb&) = default;
};

// A distribution over one space's vocabulary, stored sparsely and sorted by
// word id. Primary topics list every word (the prior keeps them non-zero);
// refined topics only list the words of their blob.
struct Topic {
  int id = 0;
  FeatureSpace space = FeatureSpace::Motion;
  std::vector<WordProb> words;
  double mass_hint = 0.0;  // expected number of tokens explained by the topic
  std::optional<Direction> direction;
  std::optional<int> source_topic;  // primary topic this one was cut from

  double total_prob() const {
    double s = 0.0;
    for (const auto& w : words) s += w.prob;
    return s;
  }
  friend bool operator==(const Topic&, const Topic&) = default;
};

enum class ModelStage : std::uint8_t { Primary = 0, Secondary = 1 };

inline const char* to_string(ModelStage s) { return s == ModelStage::Primary ? "primary" : "secondary"; }

// Deduplication bookkeeping: every pre-deduplication topic id and the final
// topic that now stands for it.
struct RemapEntry {
  int old_id = 0;
  int new_id = 0;
  friend bool operator==(const RemapEntry&, const RemapEntry&) = default;
};

struct TopicModel {
  FeatureSpace space = FeatureSpace::Motion;
  int vocabulary_size = 0;
  int grid_w = 0;
  int grid_h = 0;
  std::vector<Topic> topics;
  double alpha = 0.1;
  double beta = 0.01;
  ModelStage stage = ModelStage::Primary;
  int iterations = 0;
  std::uint64_t seed = 0;
  std::vector<RemapEntry> remap;
  std::vector<int> dropped_topics;  // primary ids whose support came out empty

  int num_topics() const { return static_cast<int>(topics.size()); }
  friend bool operator==(const TopicModel&, const TopicModel&) = default;
};

struct LdaParams {
  int num_topics = 10;
  std::optional<double> alpha;  // defaults to 50 / num_topics
  double beta = 0.01;
  int iterations = 200;
  std::uint64_t seed = 1;

  double resolved_alpha() const { return alpha.value_or(50.0 / static_cast<double>(num_topics)); }
};

inline void validate_lda_params(const LdaParams& p) {
  if (p.num_topics < 1) throw ConfigError("num_topics must be >= 1");
  if (!(p.resolved_alpha() > 0.0)) throw ConfigError("alpha must be > 0");
  if (!(p.beta > 0.0)) throw ConfigError("beta must be > 0");
  if (p.iterations < 1) throw ConfigError("iterations must be >= 1");
}

// Collapsed Gibbs state over a fixed corpus. Exposed so tests can inspect
// the count tables between sweeps; train_lda is the usual entry point.
class GibbsSampler {
 public:
  GibbsSampler(std::span<const ClipDocument> corpus, const SceneConfig& cfg, const LdaParams& params)
      : params_(params), alpha_(params.resolved_alpha()) {
    validate_lda_params(params);
    if (corpus.empty()) throw ConfigError("cannot train on an empty corpus");
    space_ = corpus.front().space;
    grid_w_ = cfg.grid_w;
    grid_h_ = cfg.grid_h;
    vocab_ = vocabulary_size(space_, cfg);
    for (const auto& d : corpus) {
      if (d.space != space_)
        throw ConfigError(std::string("corpus mixes feature spaces ") + to_string(space_) + " and " +
                          to_string(d.space));
      validate_document(d, cfg);
      doc_offsets_.push_back(tokens_.size());
      for (const auto& w : d.words)
        for (int c = 0; c < w.count; ++c) tokens_.push_back(w.word);
    }
    doc_offsets_.push_back(tokens_.size());
    const auto K = static_cast<std::size_t>(params_.num_topics);
    n_kw_.assign(K * static_cast<std::size_t>(vocab_), 0);
    n_k_.assign(K, 0);
    m_dk_.assign(K * num_docs(), 0);
    z_.resize(tokens_.size());
    probs_.resize(K);
    Rng init(mix_seed(params_.seed, 0x696e6974ULL));
    for (std::size_t d = 0; d < num_docs(); ++d)
      for (std::size_t i = doc_offsets_[d]; i < doc_offsets_[d + 1]; ++i) {
        const auto k = static_cast<int>(init.below(K));
        z_[i] = k;
        add(d, i, k, +1);
      }
    rng_.emplace(mix_seed(params_.seed, 0x7377656570ULL));
  }

  std::size_t num_docs() const { return doc_offsets_.size() - 1; }
  std::size_t num_tokens() const { return tokens_.size(); }
  int num_topics() const { return params_.num_topics; }
  int vocabulary() const { return vocab_; }
  int sweeps_done() const { return sweeps_; }

  void sweep() {
    const auto K = static_cast<std::size_t>(params_.num_topics);
    const double vbeta = static_cast<double>(vocab_) * params_.beta;
    for (std::size_t d = 0; d < num_docs(); ++d) {
      for (std::size_t i = doc_offsets_[d]; i < doc_offsets_[d + 1]; ++i) {
        add(d, i, z_[i], -1);
        const auto w = static_cast<std::size_t>(tokens_[i]);
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          const double p = (m_dk_[d * K + k] + alpha_) * (n_kw_[k * static_cast<std::size_t>(vocab_) + w] + params_.beta) /
                           (n_k_[k] + vbeta);
          probs_[k] = p;
          total += p;
        }
        const int k = static_cast<int>(rng_->categorical(probs_, total));
        z_[i] = k;
        add(d, i, k, +1);
      }
    }
    ++sweeps_;
  }

  // Count-table consistency; returns an empty string when every invariant
  // holds, else a description of the first violation.
  std::string check_consistency() const {
    const auto K = static_cast<std::size_t>(params_.num_topics);
    for (std::size_t k = 0; k < K; ++k) {
      long long row = 0;
      for (int w = 0; w < vocab_; ++w) row += n_kw_[k * static_cast<std::size_t>(vocab_) + static_cast<std::size_t>(w)];
      if (row != n_k_[k]) return "sum_w n_kw != n_k for topic " + std::to_string(k);
    }
    for (std::size_t d = 0; d < num_docs(); ++d) {
      long long total = 0;
      for (std::size_t k = 0; k < K; ++k) total += m_dk_[d * K + k];
      if (total != static_cast<long long>(doc_offsets_[d + 1] - doc_offsets_[d]))
        return "sum_k m_dk != |d| for document " + std::to_string(d);
    }
    return {};
  }

  TopicModel to_model() const {
    TopicModel m;
    m.space = space_;
    m.vocabulary_size = vocab_;
    m.grid_w = grid_w_;
    m.grid_h = grid_h_;
    m.alpha = alpha_;
    m.beta = params_.beta;
    m.stage = ModelStage::Primary;
    m.iterations = sweeps_;
    m.seed = params_.seed;
    const double vbeta = static_cast<double>(vocab_) * params_.beta;
    for (int k = 0; k < params_.num_topics; ++k) {
      Topic t;
      t.id = k;
      t.space = space_;
      t.mass_hint = static_cast<double>(n_k_[static_cast<std::size_t>(k)]);
      t.words.reserve(static_cast<std::size_t>(vocab_));
      const double denom = n_k_[static_cast<std::size_t>(k)] + vbeta;
      for (int w = 0; w < vocab_; ++w)
        t.words.push_back(
            {w, (n_kw_[static_cast<std::size_t>(k) * static_cast<std::size_t>(vocab_) + static_cast<std::size_t>(w)] +
                 params_.beta) /
                    denom});
      m.topics.push_back(std::move(t));
    }
    return m;
  }

 private:
  void add(std::size_t d, std::size_t i, int k, int delta) {
    const auto K = static_cast<std::size_t>(params_.num_topics);
    const auto ku = static_cast<std::size_t>(k);
    n_kw_[ku * static_cast<std::size_t>(vocab_) + static_cast<std::size_t>(tokens_[i])] += delta;
    n_k_[ku] += delta;
    m_dk_[d * K + ku] += delta;
  }

  LdaParams params_;
  double alpha_;
  FeatureSpace space_ = FeatureSpace::Motion;
  int grid_w_ = 0, grid_h_ = 0, vocab_ = 0;
  std::vector<std::int32_t> tokens_;
  std::vector<std::size_t> doc_offsets_;
  std::vector<int> z_;
  std::vector<int> n_kw_;
  std::vector<long long> n_k_;
  std::vector<int> m_dk_;
  std::vector<double> probs_;
  std::optional<Rng> rng_;
  int sweeps_ = 0;
};

inline TopicModel train_lda(std::span<const ClipDocument> corpus, const SceneConfig& cfg, const LdaParams& params) {
  GibbsSampler sampler(corpus, cfg, params);
  for (int it = 0; it < params.iterations; ++it) sampler.sweep();
  return sampler.to_model();
}

// Fold-in inference against a fixed model. Building the word -> topic index
// once and reusing it keeps indexing linear in the corpus.
class TopicInference {
 public:
  explicit TopicInference(const TopicModel& model)
      : space_(model.space), k_(model.num_topics()), alpha_(model.alpha), by_word_(static_cast<std::size_t>(model.vocabulary_size)) {
    for (const auto& t : model.topics)
      for (const auto& w : t.words)
        if (w.prob > 0.0 && w.word >= 0 && w.word < model.vocabulary_size)
          by_word_[static_cast<std::size_t>(w.word)].push_back({t.id, w.prob});
  }

  int num_topics() const { return k_; }
  FeatureSpace space() const { return space_; }

  // Topic probabilities for one word; empty when no topic explains it.
  std::span<const std::pair<int, double>> topics_of(int word) const {
    if (word < 0 || static_cast<std::size_t>(word) >= by_word_.size()) return {};
    return by_word_[static_cast<std::size_t>(word)];
  }

  // Tokens no topic explains are ignored; a document with nothing left
  // receives the prior (uniform) distribution.
  std::vector<double> infer(const ClipDocument& doc, int iterations, std::uint64_t seed) const {
    if (doc.space != space_)
      throw ConfigError(std::string("document space ") + to_string(doc.space) + " does not match model space " +
                        to_string(space_));
    if (iterations < 0) throw ConfigError("fold-in iterations must be >= 0");
    std::vector<std::int32_t> tokens;
    for (const auto& w : doc.words)
      if (!topics_of(w.word).empty())
        for (int c = 0; c < w.count; ++c) tokens.push_back(w.word);
    const auto K = static_cast<std::size_t>(k_);
    std::vector<int> m(K, 0);
    std::vector<int> z(tokens.size(), 0);
    std::vector<double> probs;
    Rng rng(seed);
    auto draw = [&](std::int32_t word) {
      const auto cand = topics_of(word);
      probs.resize(cand.size());
      double total = 0.0;
      for (std::size_t j = 0; j < cand.size(); ++j) {
        probs[j] = (m[static_cast<std::size_t>(cand[j].first)] + alpha_) * cand[j].second;
        total += probs[j];
      }
      return cand[rng.categorical(probs, total)].first;
    };
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      z[i] = draw(tokens[i]);
      ++m[static_cast<std::size_t>(z[i])];
    }
    for (int it = 0; it < iterations; ++it)
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        --m[static_cast<std::size_t>(z[i])];
        z[i] = draw(tokens[i]);
        ++m[static_cast<std::size_t>(z[i])];
      }
    std::vector<double> theta(K);
    const double denom = static_cast<double>(tokens.size()) + static_cast<double>(K) * alpha_;
    for (std::size_t k = 0; k < K; ++k) theta[k] = (m[k] + alpha_) / denom;
    return theta;
  }

 private:
  FeatureSpace space_;
  int k_;
  double alpha_;
  std::vector<std::vector<std::pair<int, double>>> by_word_;
};

inline std::vector<double> infer_distribution(const TopicModel& model, const ClipDocument& doc,
                                              int fold_in_iterations = 50, std::uint64_t seed = 1) {
  return TopicInference(model).infer(doc, fold_in_iterations, seed);
}

// exp(-mean log p(w)) with per-document proportions from fold-in. A token
// with zero probability under the model makes the result infinite.
inline double perplexity(const TopicModel& model, std::span<const ClipDocument> corpus, int fold_in_iterations = 50,
                         std::uint64_t seed = 1) {
  if (corpus.empty()) throw ConfigError("perplexity needs a non-empty corpus");
  const TopicInference inf(model);
  double log_lik = 0.0;
  std::int64_t tokens = 0;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto theta = inf.infer(corpus[d], fold_in_iterations, mix_seed(seed, d));
    for (const auto& w : corpus[d].words) {
      double p = 0.0;
      for (const auto& [k, phi] : inf.topics_of(w.word)) p += theta[static_cast<std::size_t>(k)] * phi;
      if (p <= 0.0) return std::numeric_limits<double>::infinity();
      log_lik += w.count * std::log(p);
      tokens += w.count;
    }
  }
  if (tokens == 0) throw ConfigError("perplexity needs at least one token");
  return std::exp(-log_lik / static_cast<double>(tokens));
}

// Pick the topic count with the lowest held-out perplexity. Every fifth
// document is held out; ties go to the smaller count.
inline int select_topic_count(std::span<const ClipDocument> corpus, const SceneConfig& cfg, LdaParams params,
                              std::span<const int> candidates) {
  if (candidates.empty()) throw ConfigError("topic count grid is empty");
  std::vector<ClipDocument> train, held;
  for (std::size_t i = 0; i < corpus.size(); ++i) (i % 5 == 4 ? held : train).push_back(corpus[i]);
  if (train.empty() || held.empty()) return candidates.front();
  int best = candidates.front();
  double best_pp = std::numeric_limits<double>::infinity();
  for (int k : candidates) {
    params.num_topics = k;
    const auto model = train_lda(train, cfg, params);
    const double pp = perplexity(model, held, 20, params.seed);
    if (pp < best_pp) {
      best_pp = pp;
      best = k;
    }
  }
  return best;
}

}  // namespace vidtopic
