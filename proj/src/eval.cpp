#include "xannot/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "xannot/io.hpp"

namespace xannot::eval {

namespace fs = std::filesystem;
using nlohmann::json;

Overlap overlap(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) throw ShapeError("masks differ in size");
  Overlap o;
  const auto& va = a.storage();
  const auto& vb = b.storage();
  for (std::size_t i = 0; i < va.size(); ++i) {
    const bool x = va[i] != 0, y = vb[i] != 0;
    o.a += x;
    o.b += y;
    o.intersection += x && y;
  }
  return o;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  const Overlap o = overlap(a, b);
  const std::size_t uni = o.a + o.b - o.intersection;
  return uni == 0 ? 1.0 : static_cast<double>(o.intersection) / static_cast<double>(uni);
}

double dice(const BinaryMask& a, const BinaryMask& b) {
  const Overlap o = overlap(a, b);
  const std::size_t total = o.a + o.b;
  return total == 0 ? 1.0 : 2.0 * static_cast<double>(o.intersection) / static_cast<double>(total);
}

double sign_test_p(std::size_t wins, std::size_t losses) {
  const std::size_t n = wins + losses;
  if (n == 0) return 1.0;
  // Sum the upper binomial tail in log space.
  const double log_half_n = static_cast<double>(n) * std::log(0.5);
  double p = 0.0;
  for (std::size_t k = wins; k <= n; ++k) {
    const double log_c = std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
                         std::lgamma(static_cast<double>(n - k) + 1.0);
    p += std::exp(log_c + log_half_n);
  }
  return std::min(p, 1.0);
}

EvalReport evaluate_run(std::vector<EvalItem> items, const EvalOptions& options) {
  if (options.repetitions < 1) throw ConfigError("repetitions must be >= 1");
  std::sort(items.begin(), items.end(), [](const EvalItem& a, const EvalItem& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < items.size(); ++i) {
    if (items[i].id == items[i - 1].id) throw ValidationError("duplicate evaluation item '" + items[i].id + "'");
  }

  EvalReport report;
  report.run = options.run;
  report.repetitions = options.repetitions;
  report.seeds = options.seeds;
  const json config{{"repetitions", options.repetitions}, {"seeds", options.seeds}};
  const std::string dumped = config.dump();
  report.config_hash =
      io::sha256_hex({reinterpret_cast<const std::uint8_t*>(dumped.data()), dumped.size()}).substr(0, 16);

  struct Sums {
    double iou = 0.0;
    double dice = 0.0;
    std::size_t n = 0;
  };
  // category -> per-repetition sums
  std::map<std::string, std::vector<Sums>> per_cat;
  for (const auto& item : items) {
    for (int r = 0; r < options.repetitions; ++r) {
      if (!item.ground_truth) {
        report.errors.push_back({item.id, r, "missing ground truth"});
        continue;
      }
      const auto idx = static_cast<std::size_t>(r);
      if (idx >= item.predictions.size() || !item.predictions[idx]) {
        report.errors.push_back({item.id, r, "missing prediction"});
        continue;
      }
      const BinaryMask& pred = *item.predictions[idx];
      if (!pred.same_shape(*item.ground_truth)) {
        report.errors.push_back({item.id, r, "prediction and ground truth differ in size"});
        continue;
      }
      const double i = iou(pred, *item.ground_truth);
      const double d = dice(pred, *item.ground_truth);
      report.instances.push_back({item.id, item.category, r, i, d});
      auto& sums = per_cat[item.category];
      sums.resize(static_cast<std::size_t>(options.repetitions));
      sums[idx].iou += i;
      sums[idx].dice += d;
      ++sums[idx].n;
    }
  }

  std::vector<double> dice_per_rep;
  for (int r = 0; r < options.repetitions; ++r) {
    double si = 0.0, sd = 0.0;
    std::size_t cats = 0;
    for (const auto& [cat, sums] : per_cat) {
      const Sums& s = sums[static_cast<std::size_t>(r)];
      if (s.n == 0) continue;
      si += s.iou / static_cast<double>(s.n);
      sd += s.dice / static_cast<double>(s.n);
      ++cats;
    }
    if (cats == 0) continue;
    report.miou_per_repetition.push_back(si / static_cast<double>(cats));
    dice_per_rep.push_back(sd / static_cast<double>(cats));
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  report.miou = mean(report.miou_per_repetition);
  report.mean_dice = mean(dice_per_rep);

  for (const auto& [cat, sums] : per_cat) {
    CategoryResult c{cat, 0.0, 0.0, 0};
    std::vector<double> ri, rd;
    for (const auto& s : sums) {
      if (s.n == 0) continue;
      ri.push_back(s.iou / static_cast<double>(s.n));
      rd.push_back(s.dice / static_cast<double>(s.n));
      c.instances = std::max(c.instances, s.n);
    }
    c.mean_iou = mean(ri);
    c.mean_dice = mean(rd);
    report.categories.push_back(c);
  }
  return report;
}

json to_json(const EvalReport& r) {
  json instances = json::array();
  for (const auto& i : r.instances) {
    instances.push_back(
        {{"id", i.id}, {"category", i.category}, {"repetition", i.repetition}, {"iou", i.iou}, {"dice", i.dice}});
  }
  json categories = json::array();
  for (const auto& c : r.categories) {
    categories.push_back(
        {{"category", c.category}, {"mean_iou", c.mean_iou}, {"mean_dice", c.mean_dice}, {"instances", c.instances}});
  }
  json errors = json::array();
  for (const auto& e : r.errors) errors.push_back({{"id", e.id}, {"repetition", e.repetition}, {"error", e.message}});
  return {{"run", r.run},
          {"repetitions", r.repetitions},
          {"seeds", r.seeds},
          {"config_hash", r.config_hash},
          {"miou", r.miou},
          {"mean_dice", r.mean_dice},
          {"miou_per_repetition", r.miou_per_repetition},
          {"categories", std::move(categories)},
          {"instances", std::move(instances)},
          {"errors", std::move(errors)}};
}

EvalReport report_from_json(const json& j) {
  try {
    EvalReport r;
    r.run = j.at("run").get<std::string>();
    r.repetitions = j.at("repetitions").get<int>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.miou = j.at("miou").get<double>();
    r.mean_dice = j.at("mean_dice").get<double>();
    r.miou_per_repetition = j.at("miou_per_repetition").get<std::vector<double>>();
    for (const auto& c : j.at("categories")) {
      r.categories.push_back({c.at("category").get<std::string>(), c.at("mean_iou").get<double>(),
                              c.at("mean_dice").get<double>(), c.at("instances").get<std::size_t>()});
    }
    for (const auto& i : j.at("instances")) {
      r.instances.push_back({i.at("id").get<std::string>(), i.at("category").get<std::string>(),
                             i.at("repetition").get<int>(), i.at("iou").get<double>(), i.at("dice").get<double>()});
    }
    for (const auto& e : j.at("errors")) {
      r.errors.push_back({e.at("id").get<std::string>(), e.at("repetition").get<int>(), e.at("error").get<std::string>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("evaluation report: ") + e.what());
  }
}

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  out << "# evaluation report\n";
  out << "run: " << (r.run.empty() ? "-" : r.run) << "\n";
  out << "repetitions: " << r.repetitions << "\n";
  out << "config_hash: " << r.config_hash << "\n\n";
  out << "category\tinstances\tmean_iou\tmean_dice\n";
  for (const auto& c : r.categories) {
    out << c.category << "\t" << c.instances << "\t" << fixed(c.mean_iou) << "\t" << fixed(c.mean_dice) << "\n";
  }
  out << "\nmIoU: " << fixed(r.miou) << "\nmean Dice: " << fixed(r.mean_dice) << "\n";
  if (!r.errors.empty()) {
    out << "\nerrors:\n";
    for (const auto& e : r.errors) out << "  " << e.id << " rep" << e.repetition << ": " << e.message << "\n";
  }
  out << "\n## summary\n" << to_json(r).dump() << "\n";
  return out.str();
}

json parse_report_summary(std::string_view text) {
  const std::string_view marker = "\n## summary\n";
  const auto pos = text.rfind(marker);
  if (pos == std::string_view::npos) throw ValidationError("report has no summary block");
  try {
    return json::parse(text.substr(pos + marker.size()));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("report summary: ") + e.what());
  }
}

namespace {

std::set<std::string> png_stems(const fs::path& dir) {
  std::set<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") out.insert(entry.path().stem().string());
  }
  return out;
}

std::optional<BinaryMask> try_load(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  return io::decode_mask_png(io::read_file(path));
}

}  // namespace

std::vector<EvalItem> load_run(const fs::path& pred_dir, const fs::path& gt_dir,
                               const std::map<std::string, std::string>& categories, int* repetitions) {
  if (!fs::is_directory(pred_dir)) throw IoError("prediction directory not found: " + pred_dir.string());
  if (!fs::is_directory(gt_dir)) throw IoError("ground-truth directory not found: " + gt_dir.string());

  std::vector<fs::path> rep_dirs;
  for (int r = 0;; ++r) {
    const fs::path d = pred_dir / ("rep" + std::to_string(r));
    if (!fs::is_directory(d)) break;
    rep_dirs.push_back(d);
  }
  if (rep_dirs.empty()) rep_dirs.push_back(pred_dir);
  if (repetitions) *repetitions = static_cast<int>(rep_dirs.size());

  std::set<std::string> ids = png_stems(gt_dir);
  for (const auto& d : rep_dirs) {
    for (const auto& s : png_stems(d)) ids.insert(s);
  }
  std::vector<EvalItem> items;
  for (const auto& id : ids) {
    EvalItem item;
    item.id = id;
    const auto cat = categories.find(id);
    item.category = cat == categories.end() ? "object" : cat->second;
    item.ground_truth = try_load(gt_dir / (id + ".png"));
    for (const auto& d : rep_dirs) item.predictions.push_back(try_load(d / (id + ".png")));
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace xannot::eval
