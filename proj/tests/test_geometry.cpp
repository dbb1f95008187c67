#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "oae/errors.hpp"
#include "oae/geometry.hpp"
#include "oae/grad_check.hpp"
#include "test_util.hpp"

using namespace oae;
using oae::testing::random_cloud;
using oae::testing::random_tensor;

namespace oracle {

// O(N^2 G): recompute every candidate's distance to the chosen set from scratch.
std::vector<std::size_t> fps(const PointCloud& c, std::size_t g, std::size_t start) {
  std::vector<std::size_t> chosen{start};
  while (chosen.size() < g) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      double dmin = std::numeric_limits<double>::infinity();
      for (std::size_t s : chosen) dmin = std::min(dmin, squared_distance(c.points[j], c.points[s]));
      if (dmin > best_d) {
        best_d = dmin;
        best = j;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

std::vector<std::size_t> knn(const PointCloud& c, std::size_t seed, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> keyed;
  for (std::size_t j = 0; j < c.size(); ++j) keyed.emplace_back(squared_distance(c.points[j], c.points[seed]), j);
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(keyed[i].second);
  return out;
}

double chamfer(const std::vector<Point3>& a, const std::vector<Point3>& b) {
  auto one_side = [](const std::vector<Point3>& x, const std::vector<Point3>& y) {
    double total = 0.0;
    for (const auto& p : x) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : y) best = std::min(best, std::sqrt(squared_distance(p, q)));
      total += best;
    }
    return total / static_cast<double>(x.size());
  };
  return one_side(a, b) + one_side(b, a);
}

double emd_brute(const std::vector<Point3>& a, const std::vector<Point3>& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += std::sqrt(squared_distance(a[i], b[perm[i]]));
    best = std::min(best, total / static_cast<double>(a.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace oracle

TEST_CASE("fps picks the farthest point") {
  PointCloud c{{{0, 0, 0}, {1, 0, 0}, {0.1, 0, 0}, {2, 0, 0}}};
  CHECK(fps(c, 2, 0) == std::vector<std::size_t>{0, 3});
  auto all = fps(c, 4, 0);
  CHECK(all == std::vector<std::size_t>{0, 3, 1, 2});
  CHECK_THROWS_AS(fps(c, 5, 0), UsageError);
}

TEST_CASE("fps matches brute-force max-min on random clouds") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto c = random_cloud(64, s);
    CHECK(fps(c, 8, 0) == oracle::fps(c, 8, 0));
  }
}

TEST_CASE("fps ignores appended duplicates and is deterministic") {
  const auto c = random_cloud(64, 5);
  auto with_dups = c;
  for (std::size_t i = 0; i < 10; ++i) with_dups.points.push_back(c.points[i * 3]);
  CHECK(fps(c, 16, 0) == fps(with_dups, 16, 0));
  CHECK(fps_seeded(c, 16, 99) == fps_seeded(c, 16, 99));
}

TEST_CASE("knn grouping and centralization") {
  SUBCASE("small example") {
    PointCloud c{{{0, 0, 0}, {1, 0, 0}, {3, 0, 0}}};
    const std::size_t seed[] = {0};
    auto p = knn_group_centralize(c, seed, 2);
    CHECK(p.source_indices == std::vector<std::size_t>{0, 1});
    CHECK(p.offsets[0] == Point3{0, 0, 0});
    CHECK(p.offsets[1] == Point3{1, 0, 0});
  }
  SUBCASE("K = 1 gives the zero offset at each seed") {
    const auto c = random_cloud(32, 3);
    const auto seeds = fps(c, 6, 0);
    auto p = knn_group_centralize(c, seeds, 1);
    for (std::size_t g = 0; g < 6; ++g) {
      CHECK(p.source_indices[g] == seeds[g]);
      CHECK(p.offsets[g] == Point3{0, 0, 0});
    }
  }
  SUBCASE("K > N is rejected") {
    const auto c = random_cloud(4, 3);
    const std::size_t seed[] = {0};
    CHECK_THROWS_AS(knn_group_centralize(c, seed, 5), UsageError);
  }
}

TEST_CASE("knn matches a full-sort oracle and offsets restore parents exactly") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto c = normalize(random_cloud(128, 1000 + s));
    const auto seeds = fps(c, 16, 0);
    const auto p = knn_group_centralize(c, seeds, 8);
    for (std::size_t g = 0; g < 16; ++g) {
      const auto expect = oracle::knn(c, seeds[g], 8);
      for (std::size_t k = 0; k < 8; ++k) {
        const std::size_t src = p.source_indices[g * 8 + k];
        CHECK(src == expect[k]);
        const Point3& off = p.offsets[g * 8 + k];
        for (int a = 0; a < 3; ++a) CHECK(off[a] + p.seeds[g][a] == c.points[src][a]);
      }
      CHECK(p.seeds[g] == c.points[seeds[g]]);
    }
  }
}

TEST_CASE("normalization postconditions") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto c = random_cloud(200, s);
    for (auto& p : c.points) p = {p[0] * 3 + 5, p[1] * 0.2 - 1, p[2] * 7};
    const auto n = normalize(c);
    Point3 centroid{0, 0, 0};
    double r = 0.0;
    for (const auto& p : n.points) {
      for (int a = 0; a < 3; ++a) centroid[a] += p[a] / static_cast<double>(n.size());
      r = std::max(r, std::sqrt(squared_distance(p, {0, 0, 0})));
    }
    for (double v : centroid) CHECK(std::abs(v) <= 1e-6);
    CHECK(r <= 1.0);
    CHECK(r >= 1.0 - 1e-6);
  }
  CHECK_THROWS_AS(normalize(PointCloud{}), DataError);
  CHECK_THROWS_AS(normalize(PointCloud{{{0, std::nan(""), 0}}}), DataError);
}

TEST_CASE("occlusion masks") {
  std::vector<Point3> seeds64(64, Point3{0, 0, 0});
  SUBCASE("ratio 0.75 of 64 gives 48") {
    auto m = occlude(64, 0.75, OcclusionStrategy::random, seeds64, 7);
    CHECK(m.occluded.size() == 48);
    CHECK(m.visible.size() == 16);
  }
  SUBCASE("ratio zero occludes nothing") {
    auto m = occlude(64, 0.0, OcclusionStrategy::random, seeds64, 7);
    CHECK(m.occluded.empty());
    CHECK(m.visible.size() == 64);
  }
  SUBCASE("block occlusion on a line") {
    std::vector<Point3> line;
    for (int i = 0; i < 8; ++i) line.push_back({static_cast<double>(i), 0, 0});
    auto m = occlude_block(8, 0.5, line, 0);
    CHECK(m.occluded == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(m.visible == std::vector<std::size_t>{4, 5, 6, 7});
  }
  SUBCASE("invalid ratio") {
    CHECK_THROWS_AS(occlude(8, 1.0, OcclusionStrategy::random, std::span<const Point3>(seeds64).first(8), 1),
                    UsageError);
    CHECK_THROWS_AS(occlude(8, -0.1, OcclusionStrategy::random, std::span<const Point3>(seeds64).first(8), 1),
                    UsageError);
  }
}

TEST_CASE("occlusion masks partition indices and are reproducible") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto c = random_cloud(40, s);
    const auto seeds = fps(c, 20, 0);
    const auto p = knn_group_centralize(c, seeds, 2);
    for (auto strategy : {OcclusionStrategy::random, OcclusionStrategy::block}) {
      const double ratio = 0.05 * static_cast<double>(s % 19);
      auto m = occlude(20, ratio, strategy, p.seeds, s);
      auto again = occlude(20, ratio, strategy, p.seeds, s);
      CHECK(m.occluded == again.occluded);
      CHECK(m.occluded.size() == static_cast<std::size_t>(std::llround(ratio * 20)));
      std::vector<std::size_t> all = m.visible;
      all.insert(all.end(), m.occluded.begin(), m.occluded.end());
      std::sort(all.begin(), all.end());
      std::vector<std::size_t> expect(20);
      std::iota(expect.begin(), expect.end(), std::size_t{0});
      CHECK(all == expect);
      CHECK(std::is_sorted(m.visible.begin(), m.visible.end()));
      CHECK(std::is_sorted(m.occluded.begin(), m.occluded.end()));
    }
  }
}

TEST_CASE("chamfer distance closed forms") {
  std::vector<Point3> a{{0, 0, 0}}, b{{3, 4, 0}};
  CHECK(chamfer_distance(a, b) == doctest::Approx(10.0).epsilon(1e-15));
  const auto c = random_cloud(10, 1).points;
  CHECK(chamfer_distance(c, c) == 0.0);
  CHECK_THROWS_AS(chamfer_distance(std::vector<Point3>{}, b), ShapeError);
}

TEST_CASE("chamfer distance matches the double-loop oracle") {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto a = random_cloud(8 + s % 5, 2 * s).points;
    const auto b = random_cloud(8 + s % 7, 2 * s + 1).points;
    const double got = chamfer_distance(a, b);
    CHECK(std::abs(got - oracle::chamfer(a, b)) <= 1e-9);
    CHECK(std::abs(got - chamfer_distance(b, a)) <= 1e-12);
    CHECK(got >= 0.0);
    auto shuffled = a;
    std::reverse(shuffled.begin(), shuffled.end());
    std::rotate(shuffled.begin(), shuffled.begin() + 3, shuffled.end());
    CHECK(std::abs(chamfer_distance(shuffled, b) - got) <= 1e-12);
  }
}

TEST_CASE("chamfer distance gradient passes finite differences") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto target = to_tensor<double>(random_cloud(8, 50 + s).points);
    const auto x = to_tensor<double>(random_cloud(8, 60 + s).points);
    auto report = grad_check([&](const Tensor<double>& p) { return chamfer_distance(p, target); }, x, 1e-6, 1e-4);
    INFO("max rel error " << report.max_rel_error);
    CHECK(report.pass);
    auto wrt_target =
        grad_check([&](const Tensor<double>& q) { return chamfer_distance(x, q); }, target, 1e-6, 1e-4);
    CHECK(wrt_target.pass);
  }
}

TEST_CASE("assignment solver and exact EMD") {
  SUBCASE("permutation of the same set") {
    const auto a = random_cloud(7, 3).points;
    auto b = a;
    std::reverse(b.begin(), b.end());
    CHECK(emd_exact(a, b) <= 1e-12);
  }
  SUBCASE("monotone 1-D matching") {
    std::vector<Point3> a{{0, 0, 0}, {1, 0, 0}}, b{{2, 0, 0}, {3, 0, 0}};
    CHECK(emd_exact(a, b) == doctest::Approx(2.0).epsilon(1e-15));
  }
  SUBCASE("errors") {
    std::vector<Point3> two(2), three(3), big(65);
    CHECK_THROWS_AS(emd_exact(two, three), UsageError);
    CHECK_THROWS_AS(emd_exact(big, big), UsageError);
  }
  SUBCASE("brute force over permutations") {
    for (std::uint64_t s = 0; s < 40; ++s) {
      const std::size_t n = 1 + s % 6;
      const auto a = random_cloud(n, 300 + s).points;
      const auto b = random_cloud(n, 400 + s).points;
      CHECK(std::abs(emd_exact(a, b) - oracle::emd_brute(a, b)) <= 1e-9);
    }
  }
}

TEST_CASE("EMD properties against Chamfer") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto a = random_cloud(12, 500 + s).points;
    const auto b = random_cloud(12, 600 + s).points;
    const double emd = emd_exact(a, b);
    double one_side = 0.0;
    for (const auto& p : a) {
      double best = 1e300;
      for (const auto& q : b) best = std::min(best, std::sqrt(squared_distance(p, q)));
      one_side += best / 12.0;
    }
    CHECK(emd >= one_side - 1e-12);
    auto pa = a, pb = b;
    std::rotate(pa.begin(), pa.begin() + 5, pa.end());
    std::reverse(pb.begin(), pb.end());
    CHECK(std::abs(emd_exact(pa, pb) - emd) <= 1e-12);
  }
}

TEST_CASE("differentiable EMD matches the exact value and finite differences") {
  const auto a = random_cloud(6, 700).points;
  const auto b = random_cloud(6, 701).points;
  const auto ta = to_tensor<double>(a), tb = to_tensor<double>(b);
  CHECK(std::abs(emd_distance(ta, tb).item() - emd_exact(a, b)) <= 1e-12);
  auto report = grad_check([&](const Tensor<double>& p) { return emd_distance(p, tb); }, ta, 1e-6, 1e-4);
  CHECK(report.pass);
}

TEST_CASE("solve_assignment on a hand-checked matrix") {
  const double cost[] = {4, 1, 3, 2, 0, 5, 3, 2, 2};
  auto r = solve_assignment(cost, 3);
  CHECK(r.cost == 5.0);
  CHECK(r.column_of_row == std::vector<std::size_t>{1, 0, 2});
}
