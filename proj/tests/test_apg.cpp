#include <doctest.h>

#include <random>

#include "fixed_oracle.hpp"
#include "xannot/apg.hpp"

using namespace xannot;
using namespace xannot::apg;

namespace {

SoftMask rect_mask(int w, int h, std::initializer_list<BBox> rects) {
  SoftMask m(w, h, 0.0);
  for (const auto& r : rects) {
    for (int y = r.y_min; y <= r.y_max; ++y) {
      for (int x = r.x_min; x <= r.x_max; ++x) m(x, y) = 1.0;
    }
  }
  return m;
}

std::int64_t brute_max(const std::vector<Pixel>& a, const std::vector<Pixel>& b) {
  std::int64_t best = -1;
  for (const auto& p : a) {
    for (const auto& q : b) {
      const std::int64_t dx = p.x - q.x, dy = p.y - q.y;
      best = std::max(best, dx * dx + dy * dy);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("box conventions") {
  const Box b = to_box({2, 3, 5, 7});
  CHECK(b.x0 == 2.0);
  CHECK(b.y0 == 3.0);
  CHECK(b.x1 == 6.0);
  CHECK(b.y1 == 8.0);
  CHECK(b.area() == 20.0);
  CHECK(b.contains(6.0, 8.0));
  CHECK_FALSE(b.contains(6.01, 5.0));

  const Box s = scale_box({0, 0, 10, 20}, 1.1, 0.9);
  CHECK(s.x0 == doctest::Approx(-0.5));
  CHECK(s.x1 == doctest::Approx(10.5));
  CHECK(s.y0 == doctest::Approx(1.0));
  CHECK(s.y1 == doctest::Approx(19.0));
  const Box c = clip_box(s, 10, 10);
  CHECK(c.x0 == 0.0);
  CHECK(c.x1 == 10.0);
  CHECK(c.y1 == 10.0);
}

TEST_CASE("tau frozen values") {
  const APGConfig cfg;
  CHECK(cfg.tau({0, 0, 10, 10}) == 2.0);
  CHECK(cfg.tau({0, 0, 300, 400}) == doctest::Approx(10.0));
  CHECK(cfg.tau({0, 0, 60, 80}) == 2.0);
}

TEST_CASE("config validation") {
  APGConfig cfg;
  cfg.k = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.scale_low = 1.2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.binarize_threshold = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("bbox of a soft mask") {
  SoftMask m(5, 5, 0.0);
  m(1, 2) = 0.6;
  m(3, 4) = 0.49;
  CHECK(bbox_of(m) == BBox{1, 2, 1, 2});
  CHECK(bbox_of(m, 0.4) == BBox{1, 2, 3, 4});
  CHECK_THROWS_AS(bbox_of(m, 0.7), DegenerateMask);
}

TEST_CASE("convex hull drops collinear points") {
  std::vector<Pixel> grid;
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) grid.push_back({x, y});
  }
  const auto hull = convex_hull(grid);
  CHECK(hull.size() == 4);
  CHECK(convex_hull({{1, 1}, {1, 1}}).size() == 1);
}

TEST_CASE("farthest pair matches brute force including ties") {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> coord(0, 12), count(1, 30);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Pixel> a, b;
    const int na = count(gen), nb = count(gen);
    for (int i = 0; i < na; ++i) a.push_back({coord(gen), coord(gen)});
    for (int i = 0; i < nb; ++i) b.push_back({coord(gen) + 10, coord(gen)});
    const auto brute = farthest_cross_pair_brute(a, b);
    const auto hull = farthest_cross_pair_hull(a, b);
    REQUIRE(squared_distance(brute.first, brute.second) == brute_max(a, b));
    REQUIRE(squared_distance(hull.first, hull.second) == brute_max(a, b));
    CHECK(brute == hull);
  }
  // Two equally distant pairs: the lexicographically smallest (y, x) wins.
  const auto tie = farthest_cross_pair({{0, 0}, {0, 4}}, {{3, 0}, {3, 4}});
  CHECK(tie.first == Pixel{0, 0});
  CHECK(tie.second == Pixel{3, 4});
  CHECK_THROWS_AS(farthest_cross_pair({}, {{1, 1}}), Error);
}

TEST_CASE("clustering splits two separated blobs") {
  const auto mask = rect_mask(40, 20, {{2, 5, 8, 12}, {28, 4, 36, 14}});
  Rng rng(1);
  const auto cl = cluster_foreground(mask, {0, 0, 40, 20}, {}, rng);
  CHECK(cl.separated);
  CHECK(cl.c1_pixels.size() + cl.c2_pixels.size() == 7 * 8 + 9 * 11);
  const bool c1_left = cl.c1.x < 20;
  for (const auto& p : cl.c1_pixels) CHECK((p.x < 20) == c1_left);
  for (const auto& p : cl.c2_pixels) CHECK((p.x < 20) != c1_left);
  Rng other(1);
  CHECK_THROWS_AS(cluster_foreground(mask, {12, 0, 20, 20}, {}, other), DegenerateMask);
}

TEST_CASE("generate in clustered mode") {
  auto mask = rect_mask(40, 20, {{2, 5, 8, 12}, {28, 4, 36, 14}});
  FixedOracle oracle({{SoftMask(40, 20, 0.0), 0.1}, {mask, 0.9}});
  APGConfig cfg;
  cfg.rng_seed = 3;
  const auto r = generate(blank_request(40, 20), {5.5, 8.5, 1}, oracle, cfg);
  REQUIRE(r.mode == Mode::clustered);
  CHECK(oracle.requests.size() == 1);
  CHECK(oracle.requests[0].points == std::vector<PointPrompt>{{5.5, 8.5, 1}});
  CHECK(r.b0 == BBox{2, 4, 36, 14});
  CHECK(r.s_w >= 0.9);
  CHECK(r.s_w < 1.1);
  const auto [p, q] = r.points;
  CHECK(mask(static_cast<int>(p.x), static_cast<int>(p.y)) == 1.0);
  CHECK(mask(static_cast<int>(q.x), static_cast<int>(q.y)) == 1.0);
  CHECK(((p.x < 20) != (q.x < 20)));
  const Pixel a{static_cast<int>(p.x), static_cast<int>(p.y)}, b{static_cast<int>(q.x), static_cast<int>(q.y)};
  CHECK(squared_distance(a, b) == brute_max(r.c1_pixels, r.c2_pixels));

  FixedOracle again({{SoftMask(40, 20, 0.0), 0.1}, {mask, 0.9}});
  const auto r2 = generate(blank_request(40, 20), {5.5, 8.5, 1}, again, cfg);
  CHECK(r2.points == r.points);
}

TEST_CASE("generate falls back on a compact blob") {
  const auto mask = rect_mask(20, 20, {{9, 9, 10, 10}});
  FixedOracle oracle({{mask, 1.0}});
  const auto r = generate(blank_request(20, 20), {9.5, 9.5, 1}, oracle, {});
  CHECK(r.mode == Mode::fallback);
  REQUIRE(r.box);
  for (const auto& p : {r.points.first, r.points.second}) CHECK(r.box->contains(p.x, p.y));
}

TEST_CASE("generate degenerate and error paths") {
  FixedOracle empty_mask({{SoftMask(8, 8, 0.0), 0.7}});
  const auto r = generate(blank_request(8, 8), {2.0, 3.0, 1}, empty_mask, {});
  CHECK(r.mode == Mode::degenerate);
  CHECK(r.points.first == PointPrompt{2.0, 3.0, 1});
  CHECK(r.points.second == PointPrompt{2.0, 3.0, 1});
  CHECK_FALSE(r.box);

  FixedOracle none({});
  CHECK_THROWS_AS(generate(blank_request(8, 8), {2.0, 3.0, 1}, none, {}), BackendError);
  FixedOracle wrong_size({{SoftMask(4, 4, 1.0), 0.7}});
  CHECK_THROWS_AS(generate(blank_request(8, 8), {2.0, 3.0, 1}, wrong_size, {}), BackendError);
  FixedOracle fine({{SoftMask(8, 8, 1.0), 0.7}});
  CHECK_THROWS_AS(generate(blank_request(8, 8), {8.0, 3.0, 1}, fine, {}), ValidationError);
  CHECK(to_string(Mode::fallback) == "fallback");
}
