#pragma once

// Scripted scenes shipped with the library. All use the default 480x320
// frame with 10 px cells, i.e. a 48x32 grid.

#include <cmath>
#include <string>
#include <vector>

#include "vidtopic/error.hpp"
#include "vidtopic/query.hpp"
#include "vidtopic/scene.hpp"

namespace vidtopic::scenarios {

// The three-leg turn: east along row 24, north up column 16, east along row 8.
inline const std::vector<Point>& turn_route() {
  static const std::vector<Point> r{{0, 24}, {16, 24}, {16, 8}, {46, 8}};
  return r;
}

inline const std::vector<Point>& straight_route() {
  static const std::vector<Point> r{{0, 24}, {46, 24}};
  return r;
}

inline const std::vector<Point>& south_route() {
  static const std::vector<Point> r{{34, 0}, {34, 30}};
  return r;
}

inline const std::vector<Point>& west_route() {
  static const std::vector<Point> r{{46, 16}, {0, 16}};
  return r;
}

inline constexpr double kCarSpeed = 0.4;
inline const Cell kParkingP1{40, 28};
inline const Cell kParkingP2{4, 2};
inline const Cell kParkingP3{24, 2};

inline Agent car(std::vector<Point> path, std::int64_t start, std::string label, double speed = kCarSpeed,
                 int size = 4) {
  Agent a;
  a.path = std::move(path);
  a.speed = speed;
  a.size_cells = size;
  a.start_frame = start;
  a.label = std::move(label);
  return a;
}

inline Agent parked(Cell at, std::vector<std::pair<std::int64_t, std::int64_t>> stops, std::string label) {
  Agent a;
  a.path = {Point{static_cast<double>(at.x), static_cast<double>(at.y)}};
  a.speed = 1.0;
  a.size_cells = 4;
  a.start_frame = stops.empty() ? 0 : stops.front().first;
  for (auto [start, duration] : stops) a.stop_events.push_back({at, start, duration});
  a.label = std::move(label);
  return a;
}

// Junction: 12 turn traversals, through traffic on three other routes (with
// some buses), four stops in lot P1, and one overlapping pair of stops in
// P2/P3 (plus a solo stop in each).
inline Scenario junction() {
  Scenario s;
  s.total_frames = 7200;
  s.noise_rate = 0.00005;
  for (int i = 0; i < 12; ++i) s.agents.push_back(car(turn_route(), 100 + 550 * i, "turn"));
  for (int i = 0; i < 8; ++i) s.agents.push_back(car(straight_route(), 300 + 800 * i, "straight"));
  for (int i = 0; i < 8; ++i) s.agents.push_back(car(south_route(), 450 + 850 * i, "south"));
  for (int i = 0; i < 10; ++i)
    s.agents.push_back(car(west_route(), 200 + 700 * i, i % 3 == 1 ? "west-bus" : "west", 0.5, i % 3 == 1 ? 9 : 4));
  s.agents.push_back(parked(kParkingP1, {{400, 150}, {2100, 240}, {3900, 180}, {5600, 210}}, "P1"));
  s.agents.push_back(parked(kParkingP2, {{1200, 300}, {4500, 200}}, "P2"));
  s.agents.push_back(parked(kParkingP3, {{1350, 300}, {6300, 200}}, "P3"));
  return s;
}

// Partial manoeuvres that only join into the turn when clips are long: car
// X drives leg A, then leg B and leaves north; car Y drives along row 8 and
// reaches leg C `delay` frames after X has left leg B. Four genuine turns
// are included.
inline Scenario adversarial() {
  Scenario s;
  s.total_frames = 4800;
  s.noise_rate = 0.00005;
  const std::vector<Point> x_path{{0, 24}, {16, 24}, {16, 0}};
  const std::vector<Point> y_path{{0, 8}, {46, 8}};
  // X leaves leg B 80 frames after its start; Y reaches leg C 40 frames
  // after its own.
  const std::int64_t delays[] = {100, 110, 120, 105, 115, 125};
  for (int i = 0; i < 6; ++i) {
    const std::int64_t x0 = 100 + 500 * i;
    s.agents.push_back(car(x_path, x0, "partial-x"));
    s.agents.push_back(car(y_path, x0 + 80 + delays[i] - 40, "partial-y"));
  }
  for (int i = 0; i < 4; ++i) s.agents.push_back(car(turn_route(), 3100 + 420 * i, "turn"));
  return s;
}

inline Scenario single_car() {
  Scenario s;
  s.total_frames = 600;
  s.agents.push_back(car(turn_route(), 100, "turn"));
  return s;
}

// Two parked cars whose stops overlap in [1300, 1450).
inline Scenario two_stops() {
  Scenario s;
  s.total_frames = 2400;
  s.agents.push_back(parked(kParkingP2, {{1000, 450}}, "P2"));
  s.agents.push_back(parked(kParkingP3, {{1300, 500}}, "P3"));
  return s;
}

inline Scenario by_name(const std::string& name) {
  if (name == "junction") return junction();
  if (name == "adversarial") return adversarial();
  if (name == "single-car") return single_car();
  if (name == "two-stops") return two_stops();
  if (name == "empty") return Scenario{{}, 1200, 0.0};
  throw NotFoundError("unknown scenario '" + name + "' (junction, adversarial, single-car, two-stops, empty)");
}

// One motion stroke per leg of a route.
inline std::vector<SketchStroke> route_strokes(const std::vector<Point>& route) {
  std::vector<SketchStroke> out;
  for (std::size_t i = 0; i + 1 < route.size(); ++i) {
    SketchStroke s;
    s.space = FeatureSpace::Motion;
    s.points = {Cell{static_cast<int>(std::lround(route[i].x)), static_cast<int>(std::lround(route[i].y))},
                Cell{static_cast<int>(std::lround(route[i + 1].x)), static_cast<int>(std::lround(route[i + 1].y))}};
    out.push_back(std::move(s));
  }
  return out;
}

// The footprint of a parked car, as a persistence region.
inline SketchRegion parking_region(Cell at, int size_cells = 4) {
  SketchRegion r;
  r.space = FeatureSpace::Persistence;
  const int side = block_side(size_cells);
  for (int dy = 0; dy < side; ++dy)
    for (int dx = 0; dx < side; ++dx) r.cells.push_back({at.x + dx, at.y + dy});
  return r;
}

}  // namespace vidtopic::scenarios
