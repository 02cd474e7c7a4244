#include <doctest.h>

#include <cstring>
#include <random>

#include "oracles.hpp"
#include "xannot/eval.hpp"
#include "xannot/io.hpp"

using namespace xannot;
using namespace xannot::eval;

namespace {

BinaryMask from_rows(std::initializer_list<const char*> rows) {
  const int h = static_cast<int>(rows.size());
  const int w = static_cast<int>(std::strlen(*rows.begin()));
  BinaryMask m(w, h, 0);
  int y = 0;
  for (const char* r : rows) {
    for (int x = 0; x < w; ++x) m(x, y) = r[x] == '#';
    ++y;
  }
  return m;
}

}  // namespace

TEST_CASE("iou and dice frozen values") {
  const auto a = from_rows({"##", ".."});
  const auto b = from_rows({"#.", "#."});
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(dice(a, b) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(iou(a, a) == 1.0);
  const BinaryMask empty(2, 2, 0);
  CHECK(iou(empty, empty) == 1.0);
  CHECK(dice(empty, empty) == 1.0);
  CHECK(iou(a, empty) == 0.0);
  CHECK_THROWS_AS(iou(a, BinaryMask(3, 2, 0)), ShapeError);
}

TEST_CASE("metrics match the pixel-count oracle and the Dice identity") {
  std::mt19937_64 gen(12);
  std::uniform_int_distribution<int> dim(1, 40);
  std::uniform_real_distribution<double> dens(0.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    const int w = dim(gen), h = dim(gen);
    const auto a = oracle::random_mask(gen, w, h, dens(gen));
    const auto b = oracle::random_mask(gen, w, h, dens(gen));
    const double j = iou(a, b), d = dice(a, b);
    REQUIRE(j == oracle::iou(a, b));
    REQUIRE(d == oracle::dice(a, b));
    CHECK(std::abs(d - 2.0 * j / (1.0 + j)) < 1e-12);
  }
}

TEST_CASE("sign test frozen values and oracle") {
  CHECK(sign_test_p(0, 0) == 1.0);
  CHECK(sign_test_p(5, 0) == doctest::Approx(1.0 / 32.0).epsilon(1e-12));
  CHECK(sign_test_p(3, 3) == doctest::Approx(42.0 / 64.0).epsilon(1e-12));
  CHECK(sign_test_p(0, 7) == doctest::Approx(1.0));
  for (int w = 0; w <= 40; w += 3) {
    for (int l = 0; l <= 40; l += 5) {
      CHECK(sign_test_p(w, l) == doctest::Approx(oracle::binomial_upper_tail(w, l)).epsilon(1e-9));
    }
  }
  CHECK(sign_test_p(197, 3) < 1e-50);
}

TEST_CASE("macro average over categories then repetitions") {
  const auto gt = from_rows({"##", ".."});
  const auto miss = from_rows({"..", "##"});
  const auto third = from_rows({"#.", "#."});
  std::vector<EvalItem> items{
      {"b", "knife", gt, {gt, gt}},
      {"a", "knife", gt, {miss, gt}},
      {"c", "gun", gt, {third, gt}},
  };
  EvalOptions opts;
  opts.repetitions = 2;
  opts.run = "r1";
  const auto rep = evaluate_run(items, opts);
  REQUIRE(rep.miou_per_repetition.size() == 2);
  CHECK(rep.miou_per_repetition[0] == doctest::Approx((0.5 + 1.0 / 3.0) / 2.0));
  CHECK(rep.miou_per_repetition[1] == 1.0);
  CHECK(rep.miou == doctest::Approx(((0.5 + 1.0 / 3.0) / 2.0 + 1.0) / 2.0));
  CHECK(rep.instances.front().id == "a");
  CHECK(rep.categories.size() == 2);
  CHECK(rep.config_hash.size() == 16);

  std::reverse(items.begin(), items.end());
  CHECK(to_json(evaluate_run(items, opts)) == to_json(rep));
}

TEST_CASE("missing or mismatched inputs become error entries") {
  const auto gt = from_rows({"##", ".."});
  std::vector<EvalItem> items{
      {"nogt", "x", std::nullopt, {gt}},
      {"nopred", "x", gt, {std::nullopt}},
      {"shape", "x", gt, {BinaryMask(3, 3, 0)}},
      {"fine", "x", gt, {gt}},
  };
  EvalOptions opts;
  opts.repetitions = 1;
  const auto rep = evaluate_run(items, opts);
  CHECK(rep.errors.size() == 3);
  CHECK(rep.instances.size() == 1);
  CHECK(rep.miou == 1.0);
  items.push_back({"fine", "x", gt, {gt}});
  CHECK_THROWS_AS(evaluate_run(items, opts), ValidationError);
}

TEST_CASE("report text round trip") {
  const auto gt = from_rows({"##", ".."});
  EvalOptions opts;
  opts.repetitions = 1;
  opts.seeds = {7};
  const auto rep = evaluate_run({{"a", "x", gt, {gt}}}, opts);
  const auto text = format_report(rep);
  CHECK(text.find("## summary") != std::string::npos);
  const auto back = report_from_json(parse_report_summary(text));
  CHECK(to_json(back) == to_json(rep));
  CHECK_THROWS_AS(parse_report_summary("no summary here"), ValidationError);
}

TEST_CASE("load_run reads flat and repeated layouts") {
  namespace fs = std::filesystem;
  const auto dir = oracle::temp_dir("evalrun");
  const auto gt = from_rows({"##", ".."});
  fs::create_directories(dir / "gt");
  fs::create_directories(dir / "flat");
  fs::create_directories(dir / "reps" / "rep0");
  fs::create_directories(dir / "reps" / "rep1");
  io::write_file(dir / "gt" / "a.png", io::encode_mask_png(gt));
  io::write_file(dir / "gt" / "b.png", io::encode_mask_png(gt));
  io::write_file(dir / "flat" / "a.png", io::encode_mask_png(gt));
  io::write_file(dir / "reps" / "rep0" / "a.png", io::encode_mask_png(gt));
  io::write_file(dir / "reps" / "rep1" / "b.png", io::encode_mask_png(gt));

  int reps = 0;
  auto items = load_run(dir / "flat", dir / "gt", {{"a", "Gun"}}, &reps);
  CHECK(reps == 1);
  REQUIRE(items.size() == 2);
  auto rep = evaluate_run(items, {1, {}, "flat"});
  CHECK(rep.errors.size() == 1);
  CHECK(rep.instances.size() == 1);
  CHECK(rep.instances[0].category == "Gun");

  items = load_run(dir / "reps", dir / "gt", {}, &reps);
  CHECK(reps == 2);
  rep = evaluate_run(items, {reps, {}, "reps"});
  CHECK(rep.instances.size() == 2);
  CHECK(rep.errors.size() == 2);
  CHECK(rep.instances[0].category == "object");
  fs::remove_all(dir);
}
