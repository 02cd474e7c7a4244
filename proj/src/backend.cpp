#include "xannot/backend.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <httplib.h>

#include "xannot/io.hpp"
#include "xannot/rle.hpp"

namespace xannot::backend {

using nlohmann::json;

void OracleRequest::validate() const {
  if (width < 1 || height < 1) throw ValidationError("oracle request: image dimensions must be positive");
  if (points.empty()) throw ValidationError("oracle request: at least one prompt is required");
  for (const auto& p : points) {
    if (!(p.x >= 0.0 && p.x < width && p.y >= 0.0 && p.y < height)) {
      throw ValidationError("oracle request: prompt outside image bounds");
    }
  }
  if (max_proposals < 1) throw ValidationError("oracle request: max_proposals must be >= 1");
}

std::size_t select_best_index(std::span<const MaskProposal> proposals) {
  if (proposals.empty()) throw BackendError(BackendError::Kind::empty, "no mask proposals to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < proposals.size(); ++i) {
    if (proposals[i].score > proposals[best].score) best = i;
  }
  return best;
}

const SoftMask& select_best(std::span<const MaskProposal> proposals) {
  return proposals[select_best_index(proposals)].mask;
}

void RegionGrowConfig::validate() const {
  if (!(tolerance >= 0.0)) throw ConfigError("region grow tolerance must be >= 0");
  if (connectivity != 4) throw ConfigError("region grow supports 4-connectivity only");
  if (!(max_region_fraction > 0.0 && max_region_fraction <= 1.0)) {
    throw ConfigError("max_region_fraction must lie in (0, 1]");
  }
}

double compactness(const BinaryMask& mask) {
  std::size_t area = 0, perimeter = 0;
  const int w = mask.width(), h = mask.height();
  auto bg = [&](int x, int y) { return !mask.contains(x, y) || mask(x, y) == 0; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask(x, y)) continue;
      ++area;
      perimeter += bg(x - 1, y) + bg(x + 1, y) + bg(x, y - 1) + bg(x, y + 1);
    }
  }
  if (area == 0) return 0.0;
  const double p = static_cast<double>(perimeter);
  return std::clamp(4.0 * std::numbers::pi * static_cast<double>(area) / (p * p), 0.0, 1.0);
}

BinaryMask flood_fill(const GrayPlane& plane, int seed_x, int seed_y, double tolerance) {
  BinaryMask out(plane.width(), plane.height(), 0);
  if (!plane.contains(seed_x, seed_y)) return out;
  const double seed = plane(seed_x, seed_y);
  std::vector<std::pair<int, int>> stack{{seed_x, seed_y}};
  out(seed_x, seed_y) = 1;
  while (!stack.empty()) {
    const auto [x, y] = stack.back();
    stack.pop_back();
    constexpr int dx[4] = {1, -1, 0, 0};
    constexpr int dy[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int nx = x + dx[k], ny = y + dy[k];
      if (!plane.contains(nx, ny) || out(nx, ny)) continue;
      if (std::abs(plane(nx, ny) - seed) <= tolerance) {
        out(nx, ny) = 1;
        stack.emplace_back(nx, ny);
      }
    }
  }
  return out;
}

std::vector<MaskProposal> region_grow_segment(const GrayPlane& low, std::span<const PointPrompt> prompts,
                                              const RegionGrowConfig& config) {
  config.validate();
  for (const auto& p : prompts) {
    if (!(p.x >= 0.0 && p.x < low.width() && p.y >= 0.0 && p.y < low.height())) {
      throw ValidationError("region grow: prompt outside image bounds");
    }
  }
  const double limit = config.max_region_fraction * static_cast<double>(low.size());
  std::vector<MaskProposal> out;
  for (double t : {config.tolerance / 2.0, config.tolerance, config.tolerance * 2.0}) {
    BinaryMask region(low.width(), low.height(), 0);
    for (const auto& p : prompts) {
      const BinaryMask fill = flood_fill(low, static_cast<int>(p.x), static_cast<int>(p.y), t);
      for (std::size_t i = 0; i < region.size(); ++i) region.storage()[i] |= fill.storage()[i];
    }
    if (static_cast<double>(count_foreground(region)) > limit) {
      std::fill(region.storage().begin(), region.storage().end(), std::uint8_t{0});
    }
    const double score = compactness(region);
    out.push_back({to_soft(region), score});
  }
  return out;
}

std::vector<MaskProposal> BuiltinOracle::segment(const OracleRequest& request) {
  request.validate();
  if (!request.image) throw BackendError(BackendError::Kind::malformed, "builtin oracle needs the image inline");
  if (request.image->width != request.width || request.image->height != request.height) {
    throw ValidationError("oracle request: image dimensions disagree with the request");
  }
  const energy::DualEnergyPair pair = energy::decompose(*request.image);
  auto proposals = region_grow_segment(pair.low, request.points, config_);
  if (proposals.size() > static_cast<std::size_t>(request.max_proposals)) {
    proposals.resize(static_cast<std::size_t>(request.max_proposals));
  }
  return proposals;
}

// --- remote client -----------------------------------------------------------

json request_to_json(const OracleRequest& request) {
  json body;
  if (request.image) {
    body["image_png_base64"] = io::base64_encode(io::encode_png(*request.image));
  } else {
    body["image_id"] = request.image_id;
  }
  json points = json::array();
  for (const auto& p : request.points) points.push_back({{"x", p.x}, {"y", p.y}, {"label", p.label}});
  body["points"] = std::move(points);
  body["max_proposals"] = request.max_proposals;
  return body;
}

RemoteResult parse_response(const json& body, int expected_width, int expected_height) {
  auto malformed = [](const std::string& why) {
    return BackendError(BackendError::Kind::malformed, "segment response: " + why);
  };
  if (!body.is_object() || !body.contains("proposals") || !body["proposals"].is_array()) {
    throw malformed("missing 'proposals' array");
  }
  RemoteResult result;
  for (const auto& p : body["proposals"]) {
    if (!p.is_object() || !p.contains("rle") || !p.contains("size") || !p.contains("score")) {
      throw malformed("proposal needs rle, size and score");
    }
    const auto& size = p["size"];
    if (!size.is_array() || size.size() != 2 || !size[0].is_number_integer() || !size[1].is_number_integer()) {
      throw malformed("size must be [H, W]");
    }
    datastore::RLEMask rle;
    rle.height = size[0].get<int>();
    rle.width = size[1].get<int>();
    if (rle.height != expected_height || rle.width != expected_width) throw malformed("mask size differs from image");
    if (!p["rle"].is_array()) throw malformed("rle must be an array of counts");
    for (const auto& c : p["rle"]) {
      if (!c.is_number_integer() || c.get<std::int64_t>() < 0 || c.get<std::int64_t>() > 0xffffffffLL) {
        throw malformed("rle counts must be non-negative integers");
      }
      rle.counts.push_back(c.get<std::uint32_t>());
    }
    if (!p["score"].is_number() || !std::isfinite(p["score"].get<double>())) throw malformed("score must be a number");
    double score = p["score"].get<double>();
    BinaryMask mask;
    try {
      mask = datastore::rle_decode(rle);
    } catch (const CodecError& e) {
      throw malformed(e.what());
    }
    if (score < 0.0 || score > 1.0) {
      const double clamped = std::clamp(score, 0.0, 1.0);
      result.warnings.push_back("score " + std::to_string(score) + " clamped to " + std::to_string(clamped));
      score = clamped;
    }
    result.proposals.push_back({to_soft(mask), score});
  }
  return result;
}

RemoteResult remote_segment(const RemoteConfig& config, const OracleRequest& request) {
  request.validate();
  const std::string body = request_to_json(request).dump();
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);

  for (int attempt = 0;; ++attempt) {
    httplib::Client client(config.endpoint);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    auto res = client.Post("/segment", body, "application/json");
    if (!res) {
      if (attempt < config.retries) continue;
      throw BackendError(BackendError::Kind::timeout,
                         "segment request to " + config.endpoint + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
      throw BackendError(BackendError::Kind::status, "segmenter returned HTTP " + std::to_string(res->status),
                         res->status);
    }
    json parsed;
    try {
      parsed = json::parse(res->body);
    } catch (const json::exception&) {
      throw BackendError(BackendError::Kind::malformed, "segment response is not JSON");
    }
    return parse_response(parsed, request.width, request.height);
  }
}

std::vector<MaskProposal> RemoteOracle::segment(const OracleRequest& request) {
  RemoteResult r = remote_segment(config_, request);
  warnings_.insert(warnings_.end(), r.warnings.begin(), r.warnings.end());
  return std::move(r.proposals);
}

}  // namespace xannot::backend
