#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance binary. Each check returns an empty string on success and a
// description of the first disagreement otherwise.

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vidtopic/ingest.hpp"
#include "vidtopic/retrieval.hpp"

namespace vtest {

using namespace vidtopic;

// ---- connected components --------------------------------------------------

// Breadth-first flood fill; returns a label per occupied cell.
inline std::map<Cell, int> flood_labels(const std::set<Cell>& cells, int connectivity) {
  std::map<Cell, int> label;
  int next = 0;
  for (const Cell& start : cells) {
    if (label.count(start)) continue;
    std::queue<Cell> q;
    q.push(start);
    label[start] = next;
    while (!q.empty()) {
      const Cell c = q.front();
      q.pop();
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (connectivity == 4 && dx != 0 && dy != 0) continue;
          const Cell n{c.x + dx, c.y + dy};
          if (cells.count(n) && !label.count(n)) {
            label[n] = next;
            q.push(n);
          }
        }
    }
    ++next;
  }
  return label;
}

// Random 20x20 grids at varying density, both connectivities. The blobs must
// form exactly the flood-fill partition.
inline std::string check_ccl_against_flood_fill(int trials, std::uint64_t seed = 2024) {
  std::mt19937_64 gen(seed);
  for (int trial = 0; trial < trials; ++trial) {
    const double density = 0.15 + 0.6 * (trial % 10) / 10.0;
    std::bernoulli_distribution on(density);
    std::vector<Cell> cells;
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 20; ++x)
        if (on(gen)) cells.push_back({x, y});
    for (int conn : {4, 8}) {
      const auto blobs = connected_components(cells, 20, 20, conn);
      const auto oracle = flood_labels(std::set<Cell>(cells.begin(), cells.end()), conn);
      std::set<int> used;
      std::size_t total = 0;
      const std::string where = "trial " + std::to_string(trial) + " connectivity " + std::to_string(conn);
      for (const auto& b : blobs) {
        if (b.empty()) return where + ": empty blob";
        const int l = oracle.at(b.front());
        for (const Cell& c : b)
          if (oracle.at(c) != l) return where + ": blob mixes flood-fill components";
        if (!used.insert(l).second) return where + ": component split across blobs";
        total += b.size();
      }
      if (total != cells.size()) return where + ": cell count differs";
    }
  }
  return "";
}

// ---- local alignment -------------------------------------------------------

// A chain of aligned (query, stream) pairs, strictly increasing in both.
// Everything skipped between consecutive pairs is a gap. Pair (i, j) is bit
// i*8+j of the match mask; `span` marks the stream positions covered.
struct Chain {
  std::uint32_t span = 0;
  int length = 0;
  int gaps = 0;
  std::array<std::uint8_t, 4> bits{};
};

inline void subsets(int n, int k, int start, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == k) {
    out.push_back(cur);
    return;
  }
  for (int v = start; v < n; ++v) {
    cur.push_back(v);
    subsets(n, k, v + 1, cur, out);
    cur.pop_back();
  }
}

inline Chain make_chain(const std::vector<std::pair<int, int>>& pairs) {
  Chain c;
  c.length = static_cast<int>(pairs.size());
  for (std::size_t t = 0; t < pairs.size(); ++t) c.bits[t] = static_cast<std::uint8_t>(pairs[t].first * 8 + pairs[t].second);
  for (int j = pairs.front().second; j <= pairs.back().second; ++j) c.span |= 1u << j;
  c.gaps = (pairs.back().first - pairs.front().first + 1 - c.length) +
           (pairs.back().second - pairs.front().second + 1 - c.length);
  return c;
}

// Score when every pair matches.
inline int chain_bound(const Chain& c) { return 2 * c.length - c.gaps; }

inline std::vector<Chain> all_chains(int m, int n) {
  std::vector<Chain> out;
  for (int k = 1; k <= std::min(m, n); ++k) {
    std::vector<std::vector<int>> qi, sj;
    std::vector<int> cur;
    subsets(m, k, 0, cur, qi);
    subsets(n, k, 0, cur, sj);
    for (const auto& a : qi)
      for (const auto& b : sj) {
        std::vector<std::pair<int, int>> pairs;
        for (int t = 0; t < k; ++t) pairs.push_back({a[t], b[t]});
        out.push_back(make_chain(pairs));
      }
  }
  // Highest attainable score first, so the search can stop early.
  std::stable_sort(out.begin(), out.end(), [](const Chain& a, const Chain& b) { return chain_bound(a) > chain_bound(b); });
  return out;
}

// Scoring 2 / -1 / gap 1: h matching pairs out of k score 2h - (k - h) - gaps.
inline int chain_score(const Chain& c, std::uint32_t hits) {
  int h = 0;
  for (int t = 0; t < c.length; ++t) h += (hits >> c.bits[t]) & 1;
  return 3 * h - c.length - c.gaps;
}

// Best score over every local alignment whose stream span avoids the mask.
inline int exhaustive_best(const std::vector<Chain>& chains, std::uint32_t hits, std::uint32_t masked) {
  int best = 0;
  for (const auto& c : chains) {
    if (chain_bound(c) <= best) break;
    if (!(c.span & masked)) best = std::max(best, chain_score(c, hits));
  }
  return best;
}

// Every query of length 1..4 over {A, B} against every stream of length
// 0..8 whose clips are subsets of {A, B}. With a positive threshold the
// iterated search must report, in order, the best remaining alignment until
// none with a positive score is left.
inline std::string check_smith_waterman_exhaustive(std::size_t* cases_out = nullptr) {
  const TopicRef A{FeatureSpace::Motion, 0}, B{FeatureSpace::Motion, 1};
  AlignmentParams p;
  p.score_threshold = 1e-9;
  const std::array<ClipSlot, 4> slots{ClipSlot{}, ClipSlot{{A, 1.0}}, ClipSlot{{B, 1.0}}, ClipSlot{{A, 1.0}, {B, 1.0}}};
  std::size_t cases = 0;
  for (int m = 1; m <= 4; ++m)
    for (int n = 0; n <= 8; ++n) {
      const auto chains = all_chains(m, n);
      for (int sc = 0; sc < (1 << (2 * n)); ++sc) {
        std::vector<int> s(n);
        std::vector<ClipSlot> stream(n);
        for (int j = 0; j < n; ++j) {
          s[j] = (sc >> (2 * j)) & 3;
          stream[j] = slots[s[j]];
        }
        for (int qc = 0; qc < (1 << m); ++qc) {
          std::vector<TopicRef> query(m);
          std::uint32_t hits = 0;
          for (int i = 0; i < m; ++i) {
            const int letter = (qc >> i) & 1;
            query[i] = letter ? B : A;
            for (int j = 0; j < n; ++j)
              if ((s[j] >> letter) & 1) hits |= 1u << (i * 8 + j);
          }
          ++cases;
          auto where = [&] {
            std::ostringstream o;
            o << "query " << qc << " (length " << m << ") stream " << sc << " (length " << n << ")";
            return o.str();
          };
          std::uint32_t masked = 0;
          double prev = std::numeric_limits<double>::infinity();
          for (const auto& h : smith_waterman(query, stream, p)) {
            const int expect = exhaustive_best(chains, hits, masked);
            if (h.score != expect)
              return where() + ": score " + std::to_string(h.score) + ", exhaustive " + std::to_string(expect);
            if (h.score > prev) return where() + ": scores not descending";
            prev = h.score;
            std::vector<std::pair<int, int>> pairs;
            for (auto [i, j] : h.pairs) pairs.push_back({static_cast<int>(i), static_cast<int>(j)});
            if (pairs.empty()) return where() + ": empty traceback";
            const Chain c = make_chain(pairs);
            if (chain_score(c, hits) != h.score) return where() + ": traceback does not reproduce the score";
            if (h.first != h.pairs.front().second || h.last != h.pairs.back().second) return where() + ": span mismatch";
            if (c.span & masked) return where() + ": alignment overlaps an earlier one";
            masked |= c.span;
          }
          if (exhaustive_best(chains, hits, masked) != 0) return where() + ": a positive alignment was not reported";
        }
      }
    }
  if (cases_out) *cases_out = cases;
  return "";
}

}  // namespace vtest
