#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "leap/errors.hpp"

namespace leap {

// Grid of terrain heights. grid(row, col) sits at
// (origin.x + col * resolution, origin.y + row * resolution).
struct HeightMap {
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  double resolution = 0.05;  // m per cell
  Eigen::MatrixXd grid;      // rows x cols, heights in m

  int rows() const { return static_cast<int>(grid.rows()); }
  int cols() const { return static_cast<int>(grid.cols()); }
  double x_max() const { return origin.x() + (cols() - 1) * resolution; }
  double y_max() const { return origin.y() + (rows() - 1) * resolution; }

  bool contains(double x, double y) const {
    return x >= origin.x() && x <= x_max() && y >= origin.y() && y <= y_max();
  }

  void validate() const {
    if (resolution <= 0.0) throw BadInput("heightmap resolution must be positive");
    if (grid.size() == 0) throw BadInput("heightmap grid is empty");
    if (!grid.allFinite()) throw BadInput("heightmap heights must be finite");
  }
};

// Smooth step model for a discrete change in elevation:
//   z(x, y) = a / (1 + exp(-gamma * (x - b - d*y)))
struct SigmoidStep {
  double a = 0.0;                // step height [m]
  double b = 0.0;                // edge offset [m]
  double d = 0.0;                // edge skew in y
  double gamma_steepness = 50.0; // [1/m]

  double height(double x, double y) const {
    return a / (1.0 + std::exp(-gamma_steepness * (x - b - d * y)));
  }
  // d(height)/d(x,y)
  Eigen::Vector2d gradient(double x, double y) const {
    const double e = std::exp(-gamma_steepness * (x - b - d * y));
    const double s = 1.0 / (1.0 + e);
    const double common = a * s * (1.0 - s) * gamma_steepness;
    return {common, -common * d};
  }
};

struct FlatSurface {
  int id = -1;
  double mean_height = 0.0;
  std::vector<std::pair<int, int>> cells;            // (row, col)
  std::vector<Eigen::Vector2d> boundary_polygon;     // outer boundary, CCW-ish
};

// Bilinear interpolation of the four surrounding cells.
inline double height_at(const HeightMap& map, double x, double y) {
  if (!map.contains(x, y)) throw OutOfBounds("height query outside map bounds");
  const double fx = (x - map.origin.x()) / map.resolution;
  const double fy = (y - map.origin.y()) / map.resolution;
  const int c0 = std::min(static_cast<int>(std::floor(fx)), map.cols() - 2 >= 0 ? map.cols() - 2 : 0);
  const int r0 = std::min(static_cast<int>(std::floor(fy)), map.rows() - 2 >= 0 ? map.rows() - 2 : 0);
  const int c1 = std::min(c0 + 1, map.cols() - 1);
  const int r1 = std::min(r0 + 1, map.rows() - 1);
  const double tx = std::clamp(fx - c0, 0.0, 1.0);
  const double ty = std::clamp(fy - r0, 0.0, 1.0);
  const double h00 = map.grid(r0, c0), h01 = map.grid(r0, c1);
  const double h10 = map.grid(r1, c0), h11 = map.grid(r1, c1);
  return (1 - ty) * ((1 - tx) * h00 + tx * h01) + ty * ((1 - tx) * h10 + tx * h11);
}

namespace detail {

// Outer boundary of a 4-connected cell region, traced along cell edges with
// the region kept on the left. Cells are unit squares in grid coordinates;
// the result is converted to world coordinates. At pinch corners the
// sharpest left turn is taken so the loop never crosses itself.
inline std::vector<Eigen::Vector2d> trace_boundary(const HeightMap& map,
                                                   const std::vector<std::pair<int, int>>& cells) {
  if (cells.empty()) return {};
  std::map<std::pair<int, int>, bool> in_region;
  for (const auto& rc : cells) in_region[rc] = true;
  auto inside = [&](int r, int c) { return in_region.count({r, c}) > 0; };

  using Corner = std::pair<int, int>;  // (cx, cy) grid corner
  std::map<Corner, std::vector<Corner>> edges;
  for (const auto& [r, c] : cells) {
    if (!inside(r - 1, c)) edges[{c, r}].push_back({c + 1, r});          // bottom, +x
    if (!inside(r, c + 1)) edges[{c + 1, r}].push_back({c + 1, r + 1});  // right, +y
    if (!inside(r + 1, c)) edges[{c + 1, r + 1}].push_back({c, r + 1});  // top, -x
    if (!inside(r, c - 1)) edges[{c, r + 1}].push_back({c, r});          // left, -y
  }

  // Lexicographically smallest corner lies on the outer loop.
  const Corner start = edges.begin()->first;
  std::vector<Eigen::Vector2d> corners;
  Corner cur = start;
  Corner dir_in{0, -1};
  std::size_t total_edges = 0;
  for (const auto& [k, v] : edges) total_edges += v.size();
  for (std::size_t step = 0; step <= total_edges; ++step) {
    corners.emplace_back(cur.first, cur.second);
    auto it = edges.find(cur);
    if (it == edges.end() || it->second.empty()) break;
    // Prefer the sharpest left turn relative to the incoming direction.
    int best = 0;
    double best_turn = -10.0;
    for (int k = 0; k < static_cast<int>(it->second.size()); ++k) {
      const double dx = it->second[k].first - cur.first;
      const double dy = it->second[k].second - cur.second;
      const double cross = dir_in.first * dy - dir_in.second * dx;
      const double dot = dir_in.first * dx + dir_in.second * dy;
      const double turn = std::atan2(cross, dot);
      if (turn > best_turn) {
        best_turn = turn;
        best = k;
      }
    }
    const Corner nxt = it->second[best];
    dir_in = {nxt.first - cur.first, nxt.second - cur.second};
    it->second.erase(it->second.begin() + best);
    cur = nxt;
    if (cur == start) break;
  }

  const double res = map.resolution;
  const double hx = map.origin.x() - 0.5 * res, hy = map.origin.y() - 0.5 * res;
  std::vector<Eigen::Vector2d> poly;
  poly.reserve(corners.size());
  for (const auto& v : corners) poly.emplace_back(hx + v.x() * res, hy + v.y() * res);
  return poly;
}

}  // namespace detail

// Region growing over 4-connected cells whose height stays within height_tol
// of the running region mean. Regions smaller than min_cells are discarded.
inline std::vector<FlatSurface> segment_surfaces(const HeightMap& map, double height_tol,
                                                 int min_cells) {
  map.validate();
  const int R = map.rows(), C = map.cols();
  Eigen::MatrixXi label = Eigen::MatrixXi::Constant(R, C, -1);
  std::vector<FlatSurface> out;

  for (int r0 = 0; r0 < R; ++r0) {
    for (int c0 = 0; c0 < C; ++c0) {
      if (label(r0, c0) != -1) continue;
      FlatSurface surf;
      surf.id = static_cast<int>(out.size());
      double sum = 0.0;
      std::deque<std::pair<int, int>> frontier{{r0, c0}};
      label(r0, c0) = surf.id;
      while (!frontier.empty()) {
        auto [r, c] = frontier.front();
        frontier.pop_front();
        surf.cells.emplace_back(r, c);
        sum += map.grid(r, c);
        const double mean = sum / surf.cells.size();
        const int dr[] = {1, -1, 0, 0}, dc[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int rn = r + dr[k], cn = c + dc[k];
          if (rn < 0 || rn >= R || cn < 0 || cn >= C) continue;
          if (label(rn, cn) != -1) continue;
          if (std::abs(map.grid(rn, cn) - mean) > height_tol) continue;
          label(rn, cn) = surf.id;
          frontier.emplace_back(rn, cn);
        }
      }
      // Enforce the membership invariant against the final mean. Dropping a
      // cell moves the mean, so iterate to a fixpoint (monotone shrink).
      double region_sum = sum;
      while (!surf.cells.empty()) {
        surf.mean_height = region_sum / surf.cells.size();
        std::vector<std::pair<int, int>> kept;
        kept.reserve(surf.cells.size());
        double kept_sum = 0.0;
        for (const auto& [r, c] : surf.cells) {
          if (std::abs(map.grid(r, c) - surf.mean_height) <= height_tol) {
            kept.push_back({r, c});
            kept_sum += map.grid(r, c);
          } else {
            label(r, c) = -2;  // drop; do not regrow into a broken region
          }
        }
        const bool stable = kept.size() == surf.cells.size();
        surf.cells = std::move(kept);
        region_sum = kept_sum;
        if (stable) break;
      }
      if (static_cast<int>(surf.cells.size()) < min_cells || surf.cells.empty()) {
        for (const auto& [r, c] : surf.cells) label(r, c) = -2;
        continue;
      }
      surf.mean_height = region_sum / surf.cells.size();
      surf.id = static_cast<int>(out.size());
      for (const auto& [r, c] : surf.cells) label(r, c) = surf.id;
      surf.boundary_polygon = detail::trace_boundary(map, surf.cells);
      out.push_back(std::move(surf));
    }
  }
  return out;
}

struct FitWindow {
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
};

struct SigmoidFit {
  SigmoidStep step;
  double rms_residual = 0.0;
  double baseline = 0.0;  // lower-surface height subtracted before fitting
};

// Least-squares fit of (a, b, d) plus the lower-level height, gamma fixed,
// Gauss-Newton with Levenberg damping. The window must span two height
// levels; the step is expressed relative to the lower level (baseline
// reported separately).
inline SigmoidFit fit_sigmoid(const HeightMap& map, const FitWindow& window,
                              double gamma_steepness) {
  std::vector<Eigen::Vector3d> samples;  // (x, y, z)
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) {
      const double x = map.origin.x() + c * map.resolution;
      const double y = map.origin.y() + r * map.resolution;
      if (x < window.x_min || x > window.x_max || y < window.y_min || y > window.y_max) continue;
      samples.emplace_back(x, y, map.grid(r, c));
    }
  }
  if (samples.size() < 6) throw DegenerateFit("fit window contains too few cells");

  double z_lo = samples[0].z(), z_hi = samples[0].z();
  for (const auto& s : samples) {
    z_lo = std::min(z_lo, s.z());
    z_hi = std::max(z_hi, s.z());
  }
  if (z_hi - z_lo < 1e-4) throw DegenerateFit("fit window spans fewer than two height levels");

  // Split at mid-height to estimate baseline and initial edge position.
  const double mid = 0.5 * (z_lo + z_hi);
  double base_sum = 0.0, top_sum = 0.0, b0 = 0.0;
  int base_n = 0, top_n = 0;
  double lo_edge = -1e9, hi_edge = 1e9;
  for (const auto& s : samples) {
    if (s.z() < mid) {
      base_sum += s.z();
      ++base_n;
      lo_edge = std::max(lo_edge, s.x());
    } else {
      top_sum += s.z();
      ++top_n;
      hi_edge = std::min(hi_edge, s.x());
    }
  }
  if (base_n == 0 || top_n == 0)
    throw DegenerateFit("fit window spans fewer than two height levels");
  b0 = 0.5 * (lo_edge + hi_edge);

  // p = (a, b, d, baseline)
  Eigen::Vector4d p(top_sum / top_n - base_sum / base_n, b0, 0.0, base_sum / base_n);
  auto sum_sq = [&](const Eigen::Vector4d& q) {
    double s2 = 0.0;
    for (const auto& s : samples) {
      const double e = std::exp(-gamma_steepness * (s.x() - q[1] - q[2] * s.y()));
      const double r = q[3] + q[0] / (1.0 + e) - s.z();
      s2 += r * r;
    }
    return s2;
  };
  double lambda = 1e-3;
  double cur_sse = sum_sq(p);
  for (int it = 0; it < 200; ++it) {
    Eigen::Matrix4d JtJ = Eigen::Matrix4d::Zero();
    Eigen::Vector4d Jtr = Eigen::Vector4d::Zero();
    for (const auto& s : samples) {
      const double e = std::exp(-gamma_steepness * (s.x() - p[1] - p[2] * s.y()));
      const double sig = 1.0 / (1.0 + e);
      const double r = p[3] + p[0] * sig - s.z();
      const double dsig = sig * (1.0 - sig) * gamma_steepness;
      const Eigen::Vector4d J(sig, -p[0] * dsig, -p[0] * dsig * s.y(), 1.0);
      JtJ += J * J.transpose();
      Jtr += J * r;
    }
    Eigen::Matrix4d damped = JtJ + lambda * Eigen::Matrix4d(JtJ.diagonal().asDiagonal());
    const Eigen::Vector4d dp = damped.ldlt().solve(Jtr);
    const Eigen::Vector4d trial = p - dp;
    const double trial_sse = sum_sq(trial);
    if (trial_sse <= cur_sse) {
      p = trial;
      cur_sse = trial_sse;
      lambda = std::max(lambda * 0.3, 1e-10);
      if (dp.norm() < 1e-12) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e8) break;
    }
  }

  SigmoidStep step{p[0], p[1], p[2], gamma_steepness};
  return {step, std::sqrt(cur_sse / samples.size()), p[3]};
}

// --- JSON / CSV ---

inline void to_json(nlohmann::json& j, const HeightMap& m) {
  j = nlohmann::json{{"origin", {m.origin.x(), m.origin.y()}},
                     {"resolution", m.resolution},
                     {"rows", m.rows()},
                     {"cols", m.cols()}};
  auto& h = j["heights"] = nlohmann::json::array();
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) h.push_back(m.grid(r, c));
}

inline void from_json(const nlohmann::json& j, HeightMap& m) {
  m.origin = Eigen::Vector2d(j.at("origin").at(0), j.at("origin").at(1));
  j.at("resolution").get_to(m.resolution);
  const int rows = j.at("rows"), cols = j.at("cols");
  m.grid.resize(rows, cols);
  if (j.contains("heights")) {
    const auto& h = j.at("heights");
    if (static_cast<int>(h.size()) != rows * cols)
      throw BadInput("heights length does not match rows*cols");
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m.grid(r, c) = h.at(r * cols + c);
  } else if (j.contains("heights_csv")) {
    std::ifstream in(j.at("heights_csv").get<std::string>());
    if (!in) throw BadInput("cannot open heights_csv file");
    std::string line;
    for (int r = 0; r < rows; ++r) {
      if (!std::getline(in, line)) throw BadInput("heights_csv has too few rows");
      std::stringstream ss(line);
      std::string cell;
      for (int c = 0; c < cols; ++c) {
        if (!std::getline(ss, cell, ',')) throw BadInput("heights_csv has too few columns");
        m.grid(r, c) = std::stod(cell);
      }
    }
  } else {
    throw BadInput("heightmap needs heights or heights_csv");
  }
  m.validate();
}

// GeoJSON-style export of segmented surfaces for plotting.
inline nlohmann::json surfaces_to_geojson(const std::vector<FlatSurface>& surfaces) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& s : surfaces) {
    nlohmann::json ring = nlohmann::json::array();
    for (const auto& v : s.boundary_polygon) ring.push_back({v.x(), v.y()});
    if (!s.boundary_polygon.empty()) {
      ring.push_back({s.boundary_polygon.front().x(), s.boundary_polygon.front().y()});
    }
    features.push_back({{"type", "Feature"},
                        {"properties", {{"id", s.id}, {"mean_height", s.mean_height}}},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", {ring}}}}});
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

inline void to_json(nlohmann::json& j, const SigmoidStep& s) {
  j = {{"a", s.a}, {"b", s.b}, {"d", s.d}, {"gamma_steepness", s.gamma_steepness}};
}

inline void from_json(const nlohmann::json& j, SigmoidStep& s) {
  j.at("a").get_to(s.a);
  j.at("b").get_to(s.b);
  j.at("d").get_to(s.d);
  j.at("gamma_steepness").get_to(s.gamma_steepness);
  if (s.gamma_steepness <= 0.0) throw BadInput("gamma_steepness must be positive");
}

}  // namespace leap
