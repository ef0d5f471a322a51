#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <fstream>
#include <set>

#include "leap/rng.hpp"
#include "leap/terrain.hpp"

using namespace leap;

namespace {

template <typename F>
HeightMap make_map(double x0, double y0, double res, int rows, int cols, F f) {
  HeightMap m;
  m.origin = Eigen::Vector2d(x0, y0);
  m.resolution = res;
  m.grid.resize(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m.grid(r, c) = f(x0 + c * res, y0 + r * res);
  return m;
}

double shoelace(const std::vector<Eigen::Vector2d>& poly) {
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    s += a.x() * b.y() - b.x() * a.y();
  }
  return 0.5 * s;
}

}  // namespace

TEST_CASE("bilinear height interpolation is exact on planes") {
  const auto plane = [](double x, double y) { return 0.3 + 0.1 * x - 0.2 * y; };
  const HeightMap m = make_map(-0.5, -0.25, 0.05, 30, 50, plane);
  Rng rng(42);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(m.origin.x(), m.x_max());
    const double y = rng.uniform(m.origin.y(), m.y_max());
    REQUIRE(std::abs(height_at(m, x, y) - plane(x, y)) < 1e-12);
  }
  REQUIRE_THROWS_AS(height_at(m, m.x_max() + 0.01, 0.0), OutOfBounds);
  REQUIRE_THROWS_AS(height_at(m, 0.0, m.origin.y() - 0.01), OutOfBounds);
}

TEST_CASE("segmentation splits a two-level map into the expected regions") {
  // 0.2 m plateau for x >= 1.0, zero elsewhere; 40x40 cells at 5 cm.
  const HeightMap m =
      make_map(0.0, 0.0, 0.05, 40, 40, [](double x, double) { return x >= 1.0 ? 0.2 : 0.0; });
  const auto surfaces = segment_surfaces(m, 0.02, 4);
  REQUIRE(surfaces.size() == 2);

  const auto& low = surfaces[0].mean_height < surfaces[1].mean_height ? surfaces[0] : surfaces[1];
  const auto& high = surfaces[0].mean_height < surfaces[1].mean_height ? surfaces[1] : surfaces[0];
  REQUIRE(std::abs(low.mean_height - 0.0) < 1e-12);
  REQUIRE(std::abs(high.mean_height - 0.2) < 1e-12);
  REQUIRE(low.cells.size() == 40u * 20u);
  REQUIRE(high.cells.size() == 40u * 20u);

  // Disjoint cell sets and the membership invariant.
  std::set<std::pair<int, int>> seen;
  for (const auto& s : surfaces) {
    for (const auto& rc : s.cells) {
      REQUIRE(seen.insert(rc).second);
      REQUIRE(std::abs(m.grid(rc.first, rc.second) - s.mean_height) <= 0.02);
    }
  }
}

TEST_CASE("segmentation keeps the membership invariant under noise") {
  Rng rng(7);
  HeightMap m = make_map(0.0, 0.0, 0.05, 30, 30,
                         [](double x, double) { return x >= 0.75 ? 0.15 : 0.0; });
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) m.grid(r, c) += rng.uniform(-0.004, 0.004);

  const auto surfaces = segment_surfaces(m, 0.02, 4);
  REQUIRE(surfaces.size() == 2);
  std::set<std::pair<int, int>> seen;
  for (const auto& s : surfaces) {
    for (const auto& rc : s.cells) {
      REQUIRE(seen.insert(rc).second);
      REQUIRE(std::abs(m.grid(rc.first, rc.second) - s.mean_height) <= 0.02);
    }
  }
}

TEST_CASE("regions below the cell-count floor are discarded") {
  HeightMap m = make_map(0.0, 0.0, 0.05, 20, 20, [](double, double) { return 0.0; });
  m.grid(10, 10) = 0.5;  // isolated spike
  const auto surfaces = segment_surfaces(m, 0.02, 4);
  REQUIRE(surfaces.size() == 1);
  REQUIRE(surfaces[0].cells.size() == 399u);
  for (const auto& rc : surfaces[0].cells) REQUIRE(rc != std::make_pair(10, 10));
}

TEST_CASE("boundary polygons are closed CCW loops with the right area") {
  // Corner plateau: both regions are simply connected, so the outer loop
  // area equals the covered cell area exactly.
  const HeightMap m = make_map(0.0, 0.0, 0.1, 20, 30, [](double x, double y) {
    return (x >= 1.5 && y >= 1.0) ? 0.3 : 0.0;
  });
  const auto surfaces = segment_surfaces(m, 0.02, 4);
  REQUIRE(surfaces.size() == 2);
  for (const auto& s : surfaces) {
    REQUIRE(s.boundary_polygon.size() >= 4u);
    const double area = shoelace(s.boundary_polygon);
    REQUIRE(area > 0.0);  // CCW
    REQUIRE(std::abs(area - s.cells.size() * 0.1 * 0.1) < 1e-9);
  }
}

TEST_CASE("the boundary polygon of a region with a hole is its outer loop") {
  const HeightMap m = make_map(0.0, 0.0, 0.1, 20, 30, [](double x, double y) {
    return (x >= 0.5 && x <= 1.45 && y >= 0.4 && y <= 1.15) ? 0.3 : 0.0;
  });
  const auto surfaces = segment_surfaces(m, 0.02, 4);
  REQUIRE(surfaces.size() == 2);
  const auto& low = surfaces[0].mean_height < surfaces[1].mean_height ? surfaces[0] : surfaces[1];
  const auto& high = surfaces[0].mean_height < surfaces[1].mean_height ? surfaces[1] : surfaces[0];
  REQUIRE(std::abs(shoelace(high.boundary_polygon) - high.cells.size() * 0.01) < 1e-9);
  // Low region surrounds the island; its outer loop covers the whole map.
  REQUIRE(std::abs(shoelace(low.boundary_polygon) - 20 * 30 * 0.01) < 1e-9);
}

TEST_CASE("sigmoid fit recovers step parameters on clean data") {
  for (const double a_true : {0.20, 0.35}) {
    const SigmoidStep truth{a_true, 1.0, 0.0, 50.0};
    const HeightMap m = make_map(0.0, 0.0, 0.05, 21, 41,
                                 [&](double x, double y) { return truth.height(x, y); });
    const SigmoidFit fit = fit_sigmoid(m, {0.2, 1.8, 0.0, 1.0}, 50.0);
    REQUIRE(std::abs(fit.step.a - a_true) <= 0.01 * a_true);
    REQUIRE(std::abs(fit.step.b - 1.0) <= 0.05);
    REQUIRE(std::abs(fit.step.d) <= 0.02);
    REQUIRE(fit.rms_residual < 1e-6);
    REQUIRE(std::abs(fit.baseline) < 1e-3);
  }
}

TEST_CASE("sigmoid fit recovers a skewed edge and a raised baseline") {
  const SigmoidStep truth{0.2, 1.0, 0.3, 50.0};
  const HeightMap m = make_map(0.0, 0.0, 0.05, 21, 61, [&](double x, double y) {
    return 0.5 + truth.height(x, y);
  });
  const SigmoidFit fit = fit_sigmoid(m, {0.0, 3.0, 0.0, 1.0}, 50.0);
  REQUIRE(std::abs(fit.baseline - 0.5) < 2e-3);
  REQUIRE(std::abs(fit.step.a - 0.2) <= 0.004);
  REQUIRE(std::abs(fit.step.b - 1.0) <= 0.05);
  REQUIRE(std::abs(fit.step.d - 0.3) <= 0.02);
}

TEST_CASE("sigmoid fit is equivariant under map translation") {
  const SigmoidStep truth{0.25, 0.9, 0.0, 50.0};
  const HeightMap m1 = make_map(0.0, 0.0, 0.05, 21, 41,
                                [&](double x, double y) { return truth.height(x, y); });
  const HeightMap m2 = make_map(3.0, -1.0, 0.05, 21, 41, [&](double x, double y) {
    return truth.height(x - 3.0, y + 1.0);
  });
  const SigmoidFit f1 = fit_sigmoid(m1, {0.2, 1.8, 0.0, 1.0}, 50.0);
  const SigmoidFit f2 = fit_sigmoid(m2, {3.2, 4.8, -1.0, 0.0}, 50.0);
  REQUIRE(std::abs(f2.step.a - f1.step.a) < 1e-6);
  REQUIRE(std::abs((f2.step.b - 3.0) - f1.step.b) < 1e-6);
}

TEST_CASE("degenerate fit windows are rejected") {
  const HeightMap flat = make_map(0.0, 0.0, 0.05, 21, 41, [](double, double) { return 0.1; });
  REQUIRE_THROWS_AS(fit_sigmoid(flat, {0.2, 1.8, 0.0, 1.0}, 50.0), DegenerateFit);

  const HeightMap m = make_map(0.0, 0.0, 0.05, 21, 41,
                               [](double x, double) { return x > 1.0 ? 0.2 : 0.0; });
  REQUIRE_THROWS_AS(fit_sigmoid(m, {0.9, 0.95, 0.0, 0.05}, 50.0), DegenerateFit);
}

TEST_CASE("sigmoid gradient matches central differences") {
  const SigmoidStep s{0.2, 1.0, 0.25, 50.0};
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const double x = rng.uniform(0.8, 1.2), y = rng.uniform(-0.5, 0.5);
    const double eps = 1e-7;
    const Eigen::Vector2d g = s.gradient(x, y);
    const double gx = (s.height(x + eps, y) - s.height(x - eps, y)) / (2 * eps);
    const double gy = (s.height(x, y + eps) - s.height(x, y - eps)) / (2 * eps);
    REQUIRE(std::abs(g.x() - gx) <= 1e-5 * std::max(1.0, std::abs(gx)));
    REQUIRE(std::abs(g.y() - gy) <= 1e-5 * std::max(1.0, std::abs(gy)));
  }
}

TEST_CASE("heightmap json round trips through both storage layouts") {
  const HeightMap m = make_map(-1.0, 2.0, 0.1, 5, 7, [](double x, double y) {
    return 0.05 * x - 0.02 * y + 0.3;
  });
  nlohmann::json j = m;
  const HeightMap m2 = j.get<HeightMap>();
  REQUIRE(m2.grid.isApprox(m.grid, 0.0));
  REQUIRE(m2.origin == m.origin);
  REQUIRE(m2.resolution == m.resolution);

  const std::string csv_path = "test_heights_tmp.csv";
  {
    std::ofstream out(csv_path);
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) {
        out << m.grid(r, c);
        if (c + 1 < m.cols()) out << ",";
      }
      out << "\n";
    }
  }
  nlohmann::json jc{{"origin", {-1.0, 2.0}},
                    {"resolution", 0.1},
                    {"rows", 5},
                    {"cols", 7},
                    {"heights_csv", csv_path}};
  const HeightMap m3 = jc.get<HeightMap>();
  REQUIRE((m3.grid - m.grid).cwiseAbs().maxCoeff() < 1e-12);
  std::remove(csv_path.c_str());
}

TEST_CASE("geojson export closes every surface ring") {
  const HeightMap m = make_map(0.0, 0.0, 0.1, 12, 12, [](double x, double) {
    return x >= 0.6 ? 0.2 : 0.0;
  });
  const auto surfaces = segment_surfaces(m, 0.02, 4);
  const nlohmann::json gj = surfaces_to_geojson(surfaces);
  REQUIRE(gj.at("type") == "FeatureCollection");
  REQUIRE(gj.at("features").size() == surfaces.size());
  for (const auto& f : gj.at("features")) {
    const auto& ring = f.at("geometry").at("coordinates").at(0);
    REQUIRE(ring.size() >= 5u);
    REQUIRE(ring.front() == ring.back());
  }
}
