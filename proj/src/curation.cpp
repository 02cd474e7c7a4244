#include "xannot/curation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "xannot/io.hpp"
#include "xannot/random.hpp"

namespace xannot::curation {

using nlohmann::json;

void FilterConfig::validate() const {
  if (min_resolution < 0) throw ConfigError("min_resolution must be non-negative");
  if (!(aspect_low > 0.0) || !(aspect_low < aspect_high)) {
    throw ConfigError("aspect range must satisfy 0 < low < high");
  }
  if (!(discard_probability >= 0.0 && discard_probability <= 1.0)) {
    throw ConfigError("discard_probability must lie in [0, 1]");
  }
  if (!std::isfinite(laplacian_threshold)) throw ConfigError("laplacian_threshold must be finite");
}

const char* to_string(Decision d) noexcept { return d == Decision::keep ? "keep" : "reject"; }

const char* to_string(Reason r) noexcept {
  switch (r) {
    case Reason::none: return "none";
    case Reason::resolution: return "resolution";
    case Reason::aspect_ratio: return "aspect_ratio";
    case Reason::noise: return "noise";
    case Reason::io_error: return "io_error";
  }
  return "?";
}

double laplacian_variance(const GrayPlane& gray) {
  if (gray.width() < 3 || gray.height() < 3) {
    throw ShapeError("laplacian_variance: plane must be at least 3x3");
  }
  const int w = gray.width(), h = gray.height();
  const auto n = static_cast<double>(w - 2) * (h - 2);
  double sum = 0.0;
  auto response = [&](int x, int y) {
    return static_cast<double>(gray(x, y - 1)) + gray(x - 1, y) + gray(x + 1, y) + gray(x, y + 1) -
           4.0 * gray(x, y);
  };
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) sum += response(x, y);
  }
  const double mean = sum / n;
  double ss = 0.0;
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const double d = response(x, y) - mean;
      ss += d * d;
    }
  }
  return ss / n;
}

namespace {

CurationRecord decide_deterministic(std::string id, std::string source, int width, int height,
                                    const FilterConfig& config) {
  CurationRecord rec;
  rec.id = std::move(id);
  rec.source = std::move(source);
  rec.width = width;
  rec.height = height;
  rec.aspect_ratio = height > 0 ? static_cast<double>(width) / height : 0.0;
  if (std::min(width, height) < config.min_resolution) {
    rec.decision = Decision::reject;
    rec.reason = Reason::resolution;
  } else if (rec.aspect_ratio < config.aspect_low || rec.aspect_ratio > config.aspect_high) {
    rec.decision = Decision::reject;
    rec.reason = Reason::aspect_ratio;
  }
  return rec;
}

void decide_noise(CurationRecord& rec, double variance, const FilterConfig& config) {
  rec.laplacian_variance = variance;
  if (variance > config.laplacian_threshold) {
    Rng rng(mix_seed(config.rng_seed, fnv1a64(rec.id)));
    if (rng.bernoulli(config.discard_probability)) {
      rec.decision = Decision::reject;
      rec.reason = Reason::noise;
    }
  }
}

}  // namespace

CurationRecord evaluate(const CorpusImage& image, const FilterConfig& config) {
  CurationRecord rec = decide_deterministic(image.id, image.source, image.gray.width(), image.gray.height(), config);
  if (rec.decision == Decision::keep) {
    decide_noise(rec, laplacian_variance(image.gray), config);
  }
  return rec;
}

std::vector<CurationRecord> apply_filters(std::span<const CorpusImage> corpus, const FilterConfig& config) {
  config.validate();
  std::vector<CurationRecord> out;
  out.reserve(corpus.size());
  for (const auto& img : corpus) out.push_back(evaluate(img, config));
  return out;
}

std::vector<CurationRecord> curate_directory(const std::filesystem::path& dir, const FilterConfig& config) {
  namespace fs = std::filesystem;
  config.validate();
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<CurationRecord> out;
  for (const auto& path : files) {
    const fs::path rel = fs::relative(path, dir);
    std::string id = rel.generic_string();
    id.erase(id.size() - 4);
    const std::string source = std::distance(rel.begin(), rel.end()) > 1 ? rel.begin()->string() : "default";
    try {
      const io::Bytes bytes = io::read_file(path);
      const auto [w, h] = io::png_dimensions(bytes);
      CurationRecord rec = decide_deterministic(id, source, w, h, config);
      if (rec.decision == Decision::keep) {
        decide_noise(rec, laplacian_variance(io::decode_png_gray(bytes)), config);
      }
      out.push_back(std::move(rec));
    } catch (const Error& e) {
      CurationRecord rec;
      rec.id = id;
      rec.source = source;
      rec.decision = Decision::reject;
      rec.reason = Reason::io_error;
      rec.error = e.what();
      out.push_back(std::move(rec));
    }
  }
  return out;
}

const char* to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation" || s == "val") return Split::validation;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

std::map<std::string, std::array<int, 3>> SplitAssignment::counts() const {
  std::map<std::string, std::array<int, 3>> out;
  for (const auto& [id, s] : split) {
    out[source.at(id)][static_cast<std::size_t>(s)] += 1;
  }
  return out;
}

std::array<int, 3> apportion(int n, const SplitRatios& ratios) {
  const std::array<long long, 3> r{ratios.train, ratios.validation, ratios.test};
  const long long total = r[0] + r[1] + r[2];
  std::array<int, 3> out{};
  std::array<long long, 3> rem{};
  int assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    out[i] = static_cast<int>(n * r[i] / total);
    rem[i] = n * r[i] % total;
    assigned += out[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) out[order[k % 3]] += 1;
  return out;
}

SplitAssignment split(std::span<const SplitItem> kept, const SplitRatios& ratios,
                      std::span<const std::pair<std::string, Split>> preserved, std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.validation <= 0 || ratios.test <= 0) {
    throw ValidationError("split ratios must be positive");
  }
  SplitAssignment out;
  for (const auto& item : kept) {
    if (!out.source.emplace(item.id, item.source).second) {
      throw ValidationError("duplicate image id '" + item.id + "'");
    }
  }
  for (const auto& [id, s] : preserved) {
    if (!out.source.contains(id)) {
      throw ValidationError("preserved id '" + id + "' is not among the kept images");
    }
    const auto [it, inserted] = out.split.emplace(id, s);
    if (!inserted && it->second != s) {
      throw ValidationError("conflicting preserved assignments for '" + id + "'");
    }
  }

  std::map<std::string, std::vector<std::string>> pending;
  for (const auto& item : kept) {
    if (!out.split.contains(item.id)) pending[item.source].push_back(item.id);
  }
  for (auto& [source, ids] : pending) {
    std::sort(ids.begin(), ids.end());
    Rng rng(mix_seed(seed, fnv1a64(source)));
    rng.shuffle(ids.begin(), ids.end());
    const auto counts = apportion(static_cast<int>(ids.size()), ratios);
    std::size_t pos = 0;
    for (std::size_t bucket = 0; bucket < 3; ++bucket) {
      for (int i = 0; i < counts[bucket]; ++i) out.split[ids[pos++]] = static_cast<Split>(bucket);
    }
  }
  return out;
}

Summary summarize(std::span<const CurationRecord> records) {
  Summary s;
  s.total = static_cast<int>(records.size());
  for (const auto& r : records) {
    if (r.decision == Decision::keep) {
      ++s.kept;
    } else {
      s.rejected_by_reason[to_string(r.reason)] += 1;
    }
  }
  return s;
}

std::string format_report(std::span<const CurationRecord> records, const FilterConfig& config) {
  std::vector<const CurationRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });

  std::string out;
  for (const auto* r : sorted) {
    json j{{"id", r->id},
           {"source", r->source},
           {"decision", to_string(r->decision)},
           {"reason", to_string(r->reason)},
           {"width", r->width},
           {"height", r->height},
           {"min_dim", r->min_dim()},
           {"aspect_ratio", r->aspect_ratio}};
    j["laplacian_variance"] = r->laplacian_variance ? json(*r->laplacian_variance) : json(nullptr);
    if (!r->error.empty()) j["error"] = r->error;
    out += j.dump() + "\n";
  }
  const Summary s = summarize(records);
  json summary{{"total", s.total},
               {"kept", s.kept},
               {"rejected", s.rejected_by_reason},
               {"config",
                {{"min_resolution", config.min_resolution},
                 {"aspect_range", {config.aspect_low, config.aspect_high}},
                 {"laplacian_threshold", config.laplacian_threshold},
                 {"discard_probability", config.discard_probability},
                 {"rng_seed", config.rng_seed}}}};
  out += json{{"summary", summary}}.dump() + "\n";
  return out;
}

FilterConfig config_from_json(std::string_view json_text) {
  FilterConfig c;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("curation config: ") + e.what());
  }
  if (j.contains("curation")) j = j["curation"];
  try {
    if (j.contains("min_resolution")) c.min_resolution = j["min_resolution"].get<int>();
    if (j.contains("aspect_range")) {
      c.aspect_low = j["aspect_range"].at(0).get<double>();
      c.aspect_high = j["aspect_range"].at(1).get<double>();
    }
    if (j.contains("laplacian_threshold")) c.laplacian_threshold = j["laplacian_threshold"].get<double>();
    if (j.contains("discard_probability")) c.discard_probability = j["discard_probability"].get<double>();
    if (j.contains("rng_seed")) c.rng_seed = j["rng_seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("curation config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace xannot::curation
