#include "xannot/energy.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace xannot::energy {

DualEnergyPair decompose(const PseudoColorImage& image) {
  DualEnergyPair pair{GrayPlane(image.width, image.height), GrayPlane(image.width, image.height)};
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const std::uint8_t* p = image.pixel(x, y);
      pair.high(x, y) = std::max({p[0], p[1], p[2]});
      pair.low(x, y) = std::min({p[0], p[1], p[2]});
    }
  }
  return pair;
}

double attenuation(double energy_kev, double atomic_number, double photo_scale, double compton_scale) {
  if (!(energy_kev > 0.0)) {
    throw DomainError("attenuation: beam energy must be positive");
  }
  if (atomic_number < 0.0) {
    throw DomainError("attenuation: atomic number must be non-negative");
  }
  const double z3 = atomic_number * atomic_number * atomic_number;
  const double e3 = energy_kev * energy_kev * energy_kev;
  return photo_scale * z3 / e3 + compton_scale / energy_kev;
}

void validate(const SyntheticScene& scene) {
  if (scene.width < 1 || scene.height < 1) {
    throw ConfigError("scene canvas must be at least 1x1");
  }
  if (!(scene.energy_low > 0.0) || !(scene.energy_low < scene.energy_high)) {
    throw ConfigError("scene energies must satisfy 0 < E_l < E_h");
  }
  if (!(scene.photo_scale > 0.0) || !(scene.compton_scale > 0.0)) {
    throw ConfigError("attenuation scales must be positive");
  }
  if (!(scene.incident_intensity > 0.0)) {
    throw ConfigError("incident intensity must be positive");
  }
  for (const auto& m : scene.materials) {
    if (m.offset_x < 0 || m.offset_y < 0 || m.offset_x + m.thickness.width() > scene.width ||
        m.offset_y + m.thickness.height() > scene.height) {
      throw PlacementError("material footprint extends outside the canvas");
    }
    for (double d : m.thickness.values()) {
      if (d < 0.0 || !std::isfinite(d)) throw ConfigError("thickness must be finite and non-negative");
    }
  }
}

Transmission transmit(const SyntheticScene& scene) {
  validate(scene);
  // Accumulate optical depth per energy, then exponentiate once.
  Grid<double> depth_high(scene.width, scene.height, 0.0);
  Grid<double> depth_low(scene.width, scene.height, 0.0);
  for (const auto& m : scene.materials) {
    const double mu_h = attenuation(scene.energy_high, m.atomic_number, scene.photo_scale, scene.compton_scale);
    const double mu_l = attenuation(scene.energy_low, m.atomic_number, scene.photo_scale, scene.compton_scale);
    for (int y = 0; y < m.thickness.height(); ++y) {
      for (int x = 0; x < m.thickness.width(); ++x) {
        const double d = m.thickness(x, y);
        if (d <= 0.0) continue;
        depth_high(m.offset_x + x, m.offset_y + y) += mu_h * d;
        depth_low(m.offset_x + x, m.offset_y + y) += mu_l * d;
      }
    }
  }
  Transmission t{Grid<double>(scene.width, scene.height), Grid<double>(scene.width, scene.height)};
  for (std::size_t i = 0; i < t.high.size(); ++i) {
    t.high.storage()[i] = scene.incident_intensity * std::exp(-depth_high.storage()[i]);
    t.low.storage()[i] = scene.incident_intensity * std::exp(-depth_low.storage()[i]);
  }
  return t;
}

std::uint8_t quantize(double value) noexcept {
  if (!(value > 0.0)) return 0;
  const double r = std::floor(value + 0.5);
  return static_cast<std::uint8_t>(std::min(r, 255.0));
}

namespace {

Rgb map_canonical(std::uint8_t g_max, std::uint8_t g_min) {
  const auto mid = static_cast<std::uint8_t>((static_cast<unsigned>(g_max) + g_min) / 2);
  return {g_min, mid, g_max};
}

// Green-dominant rendering that still keeps the extremes as channels.
Rgb map_greenish(std::uint8_t g_max, std::uint8_t g_min) {
  const auto mid = static_cast<std::uint8_t>((static_cast<unsigned>(g_max) * 3 + g_min) / 4);
  return {mid, g_max, g_min};
}

// Orange-tinted rendering that compresses the low plane, so it is lossy.
Rgb map_warm(std::uint8_t g_max, std::uint8_t g_min) {
  const auto r = g_max;
  const auto g = static_cast<std::uint8_t>((static_cast<unsigned>(g_max) + g_min * 3) / 4);
  const auto b = static_cast<std::uint8_t>(g_min / 2);
  return {r, g, b};
}

const std::array<Palette, 3>& palettes() {
  static const std::array<Palette, 3> all{{
      {"canonical", true, true, &map_canonical},
      {"greenish", false, true, &map_greenish},
      {"warm", false, false, &map_warm},
  }};
  return all;
}

}  // namespace

const Palette& canonical_palette() { return palettes()[0]; }

const Palette& palette_by_name(std::string_view name) {
  for (const auto& p : palettes()) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown palette '" + std::string(name) + "'");
}

std::vector<std::string> palette_names() {
  std::vector<std::string> names;
  for (const auto& p : palettes()) names.push_back(p.name);
  return names;
}

PseudoColorImage apply_palette(const DualEnergyPair& pair, const Palette& palette) {
  if (!pair.high.same_shape(pair.low)) {
    throw ShapeError("dual-energy planes differ in size");
  }
  if (palette.map == nullptr) {
    throw ConfigError("palette '" + palette.name + "' has no mapping");
  }
  PseudoColorImage out(pair.width(), pair.height());
  for (int y = 0; y < pair.height(); ++y) {
    for (int x = 0; x < pair.width(); ++x) {
      const auto hi = std::max(pair.high(x, y), pair.low(x, y));
      const auto lo = std::min(pair.high(x, y), pair.low(x, y));
      const Rgb c = palette.map(hi, lo);
      std::uint8_t* p = out.pixel(x, y);
      p[0] = c.r;
      p[1] = c.g;
      p[2] = c.b;
    }
  }
  return out;
}

RenderedScene render_scene(const SyntheticScene& scene, const Palette& palette) {
  const Transmission t = transmit(scene);
  RenderedScene out;
  out.pair.high = GrayPlane(scene.width, scene.height);
  out.pair.low = GrayPlane(scene.width, scene.height);
  for (std::size_t i = 0; i < t.high.size(); ++i) {
    out.pair.high.storage()[i] = quantize(t.high.storage()[i]);
    out.pair.low.storage()[i] = quantize(t.low.storage()[i]);
  }
  out.image = apply_palette(out.pair, palette);

  std::map<int, BinaryMask> objects;
  int next_anonymous = 1 << 20;
  for (const auto& m : scene.materials) {
    BinaryMask mask(scene.width, scene.height, 0);
    for (int y = 0; y < m.thickness.height(); ++y) {
      for (int x = 0; x < m.thickness.width(); ++x) {
        if (m.thickness(x, y) > 0.0) mask(m.offset_x + x, m.offset_y + y) = 1;
      }
    }
    const int id = m.object_id >= 0 ? m.object_id : next_anonymous++;
    auto [it, inserted] = objects.try_emplace(id, scene.width, scene.height, std::uint8_t{0});
    for (std::size_t i = 0; i < mask.size(); ++i) {
      it->second.storage()[i] |= mask.storage()[i];
    }
    out.material_masks.push_back(std::move(mask));
  }
  for (auto& [id, mask] : objects) {
    out.object_ids.push_back(id);
    out.object_masks.push_back(std::move(mask));
  }
  return out;
}

// --- scene descriptions -----------------------------------------------------

namespace {

struct Extent {
  double x0, y0, x1, y1;
};

Extent extent_of(const ShapeSpec& s) {
  switch (s.kind) {
    case ShapeKind::disk:
      return {s.cx - s.rx, s.cy - s.rx, s.cx + s.rx, s.cy + s.rx};
    case ShapeKind::ellipse:
      return {s.cx - s.rx, s.cy - s.ry, s.cx + s.rx, s.cy + s.ry};
    case ShapeKind::rect:
      return {s.cx, s.cy, s.cx + s.rx, s.cy + s.ry};
  }
  return {0, 0, 0, 0};
}

bool inside(const ShapeSpec& s, double px, double py) {
  switch (s.kind) {
    case ShapeKind::disk: {
      const double dx = px - s.cx, dy = py - s.cy;
      return dx * dx + dy * dy <= s.rx * s.rx;
    }
    case ShapeKind::ellipse: {
      const double dx = (px - s.cx) / s.rx, dy = (py - s.cy) / s.ry;
      return dx * dx + dy * dy <= 1.0;
    }
    case ShapeKind::rect:
      return px >= s.cx && px < s.cx + s.rx && py >= s.cy && py < s.cy + s.ry;
  }
  return false;
}

const char* kind_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::disk: return "disk";
    case ShapeKind::rect: return "rect";
    case ShapeKind::ellipse: return "ellipse";
  }
  return "?";
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError("scene: bad number for '" + std::string(key) + "': '" + std::string(v) + "'");
  }
  return out;
}

int parse_int(std::string_view key, std::string_view v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError("scene: bad integer for '" + std::string(key) + "': '" + std::string(v) + "'");
  }
  return out;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

SyntheticScene build_scene(const SceneDescription& desc) {
  SyntheticScene scene;
  scene.width = desc.width;
  scene.height = desc.height;
  scene.incident_intensity = desc.incident_intensity;
  scene.energy_low = desc.energy_low;
  scene.energy_high = desc.energy_high;
  scene.photo_scale = desc.photo_scale;
  scene.compton_scale = desc.compton_scale;
  if (desc.width < 1 || desc.height < 1) throw ConfigError("scene canvas must be at least 1x1");

  for (const auto& s : desc.shapes) {
    if (!(s.rx > 0.0) || !(s.ry > 0.0)) throw ConfigError("shape extents must be positive");
    if (!(s.thickness > 0.0) || (s.thickness_end && !(*s.thickness_end > 0.0))) {
      throw ConfigError("shape thickness must be positive");
    }
    const Extent e = extent_of(s);
    if (e.x0 < 0.0 || e.y0 < 0.0 || e.x1 > desc.width || e.y1 > desc.height) {
      throw PlacementError("shape extends outside the canvas");
    }
    const int x0 = static_cast<int>(std::floor(e.x0));
    const int y0 = static_cast<int>(std::floor(e.y0));
    const int x1 = std::min(desc.width - 1, static_cast<int>(std::ceil(e.x1)));
    const int y1 = std::min(desc.height - 1, static_cast<int>(std::ceil(e.y1)));
    const double lo = s.ramp_axis == 'y' ? e.y0 : e.x0;
    const double hi = s.ramp_axis == 'y' ? e.y1 : e.x1;
    const double t_end = s.thickness_end.value_or(s.thickness);

    Material m;
    m.atomic_number = s.atomic_number;
    m.object_id = s.object_id;
    m.offset_x = x0;
    m.offset_y = y0;
    m.thickness = Grid<double>(x1 - x0 + 1, y1 - y0 + 1, 0.0);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        if (!inside(s, px, py)) continue;
        const double pos = s.ramp_axis == 'y' ? py : px;
        const double f = std::clamp((pos - lo) / (hi - lo), 0.0, 1.0);
        m.thickness(x - x0, y - y0) = s.thickness + (t_end - s.thickness) * f;
      }
    }
    scene.materials.push_back(std::move(m));
  }
  validate(scene);
  return scene;
}

SceneDescription parse_scene(std::string_view text) {
  SceneDescription desc;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "material") {
      ShapeSpec s;
      bool have_shape = false;
      std::string kv;
      while (ls >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
          throw ConfigError("scene line " + std::to_string(lineno) + ": expected key=value, got '" + kv + "'");
        }
        const std::string k = kv.substr(0, eq);
        const std::string v = kv.substr(eq + 1);
        if (k == "shape") {
          if (v == "disk") s.kind = ShapeKind::disk;
          else if (v == "rect") s.kind = ShapeKind::rect;
          else if (v == "ellipse") s.kind = ShapeKind::ellipse;
          else throw ConfigError("scene: unknown shape '" + v + "'");
          have_shape = true;
        } else if (k == "z") s.atomic_number = parse_double(k, v);
        else if (k == "cx" || k == "x") s.cx = parse_double(k, v);
        else if (k == "cy" || k == "y") s.cy = parse_double(k, v);
        else if (k == "r") s.rx = s.ry = parse_double(k, v);
        else if (k == "rx" || k == "w") s.rx = parse_double(k, v);
        else if (k == "ry" || k == "h") s.ry = parse_double(k, v);
        else if (k == "thickness") s.thickness = parse_double(k, v);
        else if (k == "thickness_end") s.thickness_end = parse_double(k, v);
        else if (k == "ramp") {
          if (v != "x" && v != "y") throw ConfigError("scene: ramp must be x or y");
          s.ramp_axis = v[0];
        } else if (k == "object") s.object_id = parse_int(k, v);
        else throw ConfigError("scene line " + std::to_string(lineno) + ": unknown material key '" + k + "'");
      }
      if (!have_shape) throw ConfigError("scene line " + std::to_string(lineno) + ": material without shape");
      desc.shapes.push_back(s);
      continue;
    }
    std::string value;
    if (!(ls >> value)) throw ConfigError("scene line " + std::to_string(lineno) + ": missing value for '" + key + "'");
    if (key == "width") desc.width = parse_int(key, value);
    else if (key == "height") desc.height = parse_int(key, value);
    else if (key == "incident_intensity") desc.incident_intensity = parse_double(key, value);
    else if (key == "energy_low") desc.energy_low = parse_double(key, value);
    else if (key == "energy_high") desc.energy_high = parse_double(key, value);
    else if (key == "photo_scale") desc.photo_scale = parse_double(key, value);
    else if (key == "compton_scale") desc.compton_scale = parse_double(key, value);
    else if (key == "palette") desc.palette = value;
    else throw ConfigError("scene line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return desc;
}

std::string format_scene(const SceneDescription& desc) {
  std::ostringstream os;
  os << "width " << desc.width << "\n"
     << "height " << desc.height << "\n"
     << "incident_intensity " << fmt_double(desc.incident_intensity) << "\n"
     << "energy_low " << fmt_double(desc.energy_low) << "\n"
     << "energy_high " << fmt_double(desc.energy_high) << "\n"
     << "photo_scale " << fmt_double(desc.photo_scale) << "\n"
     << "compton_scale " << fmt_double(desc.compton_scale) << "\n"
     << "palette " << desc.palette << "\n";
  for (const auto& s : desc.shapes) {
    os << "material shape=" << kind_name(s.kind) << " z=" << fmt_double(s.atomic_number);
    if (s.kind == ShapeKind::rect) {
      os << " x=" << fmt_double(s.cx) << " y=" << fmt_double(s.cy) << " w=" << fmt_double(s.rx)
         << " h=" << fmt_double(s.ry);
    } else if (s.kind == ShapeKind::disk) {
      os << " cx=" << fmt_double(s.cx) << " cy=" << fmt_double(s.cy) << " r=" << fmt_double(s.rx);
    } else {
      os << " cx=" << fmt_double(s.cx) << " cy=" << fmt_double(s.cy) << " rx=" << fmt_double(s.rx)
         << " ry=" << fmt_double(s.ry);
    }
    os << " thickness=" << fmt_double(s.thickness);
    if (s.thickness_end) os << " thickness_end=" << fmt_double(*s.thickness_end) << " ramp=" << s.ramp_axis;
    if (s.object_id >= 0) os << " object=" << s.object_id;
    os << "\n";
  }
  return os.str();
}

namespace {

// Materials roughly spanning organics, light metals and steel.
constexpr std::array<double, 5> kAtomicNumbers{6.0, 8.0, 13.0, 20.0, 26.0};

void add_tool(SceneDescription& desc, Rng& rng, int object_id) {
  const bool vertical = rng.bernoulli(0.5);
  double blade_len = rng.uniform(30.0, 44.0);
  double handle_len = rng.uniform(14.0, 22.0);
  const double breadth = rng.uniform(8.0, 13.0);
  // Shrink along the long axis on canvases too short for the drawn lengths.
  const double room = (vertical ? desc.height : desc.width) - 2.0;
  if (blade_len + handle_len > room) {
    const double f = room / (blade_len + handle_len);
    blade_len *= f;
    handle_len *= f;
  }
  const double total = blade_len + handle_len;
  const double along_span = (vertical ? desc.height : desc.width) - total - 2.0;
  const double across_span = (vertical ? desc.width : desc.height) - breadth - 2.0;
  const double start = 1.0 + rng.uniform(0.0, std::max(0.0, along_span));
  const double across = 1.0 + rng.uniform(0.0, std::max(0.0, across_span));
  const bool handle_first = rng.bernoulli(0.5);

  ShapeSpec blade;
  blade.kind = ShapeKind::rect;
  blade.atomic_number = 26.0;
  blade.object_id = object_id;
  blade.ramp_axis = vertical ? 'y' : 'x';
  // Thick spine at the handle, thin at the tip.
  const double spine = rng.uniform(2.2, 3.2);
  const double tip = rng.uniform(0.3, 0.6);
  blade.thickness = handle_first ? spine : tip;
  blade.thickness_end = handle_first ? tip : spine;

  ShapeSpec handle;
  handle.kind = ShapeKind::rect;
  handle.atomic_number = 6.0;
  handle.object_id = object_id;
  handle.thickness = rng.uniform(18.0, 30.0);

  const double blade_at = handle_first ? start + handle_len : start;
  const double handle_at = handle_first ? start : start + blade_len;
  if (vertical) {
    blade.cx = across; blade.cy = blade_at; blade.rx = breadth; blade.ry = blade_len;
    handle.cx = across; handle.cy = handle_at; handle.rx = breadth; handle.ry = handle_len;
  } else {
    blade.cx = blade_at; blade.cy = across; blade.rx = blade_len; blade.ry = breadth;
    handle.cx = handle_at; handle.cy = across; handle.rx = handle_len; handle.ry = breadth;
  }
  desc.shapes.push_back(blade);
  desc.shapes.push_back(handle);
}

}  // namespace

SceneDescription composite_tool_scene(Rng& rng, int width, int height) {
  SceneDescription desc;
  desc.width = width;
  desc.height = height;
  add_tool(desc, rng, 0);
  return desc;
}

SceneDescription dumbbell_scene(int width, int height) {
  SceneDescription desc;
  desc.width = width;
  desc.height = height;
  const double cy = height / 2.0;
  const double r = std::min(width, height) * 0.18;
  const double left = width * 0.22, right = width * 0.78;
  ShapeSpec a;
  a.kind = ShapeKind::disk;
  a.atomic_number = 26.0;
  a.cx = left;
  a.cy = cy;
  a.rx = a.ry = r;
  a.thickness = 1.5;
  a.object_id = 0;
  ShapeSpec b = a;
  b.cx = right;
  // The bridge abuts the disks instead of overlapping them, so the whole object
  // has one thickness and therefore one intensity.
  ShapeSpec bridge = a;
  bridge.kind = ShapeKind::rect;
  bridge.cy = std::floor(cy) - 1.0;
  bridge.ry = 3.0;
  double x_start = 0.0, x_end = width;
  for (int row = 0; row < 3; ++row) {
    const double dy = bridge.cy + row + 0.5 - cy;
    const double half = std::sqrt(std::max(0.0, r * r - dy * dy));
    x_start = std::max(x_start, std::floor(left + half - 0.5) + 1.0);
    x_end = std::min(x_end, std::ceil(right - half - 0.5));
  }
  bridge.cx = x_start;
  bridge.rx = x_end - x_start;
  desc.shapes = {a, b, bridge};
  return desc;
}

SceneDescription random_scene(Rng& rng, const SceneGenConfig& config) {
  if (config.min_objects < 0 || config.max_objects < config.min_objects) {
    throw ConfigError("scene generator: bad object count range");
  }
  SceneDescription desc;
  desc.width = config.width;
  desc.height = config.height;
  const auto span = static_cast<std::uint64_t>(config.max_objects - config.min_objects + 1);
  const int count = config.min_objects + static_cast<int>(rng.below(span));
  const double min_dim = std::min(config.width, config.height);
  for (int obj = 0; obj < count; ++obj) {
    const auto kind = rng.below(4);
    if (kind == 3 && min_dim >= 64) {
      add_tool(desc, rng, obj);
      continue;
    }
    ShapeSpec s;
    s.object_id = obj;
    s.atomic_number = kAtomicNumbers[rng.below(kAtomicNumbers.size())];
    // Light elements need more material to show up at all.
    s.thickness = s.atomic_number < 10.0 ? rng.uniform(10.0, 30.0) : rng.uniform(0.5, 3.0);
    const double r = rng.uniform(min_dim * 0.06, min_dim * 0.18);
    if (kind == 0) {
      s.kind = ShapeKind::disk;
      s.rx = s.ry = r;
      s.cx = rng.uniform(r, config.width - r);
      s.cy = rng.uniform(r, config.height - r);
    } else if (kind == 1) {
      s.kind = ShapeKind::rect;
      s.rx = rng.uniform(r, 2.0 * r);
      s.ry = rng.uniform(r * 0.5, r * 1.5);
      s.cx = rng.uniform(0.0, config.width - s.rx);
      s.cy = rng.uniform(0.0, config.height - s.ry);
    } else {
      s.kind = ShapeKind::ellipse;
      s.rx = r;
      s.ry = rng.uniform(r * 0.4, r);
      s.cx = rng.uniform(s.rx, config.width - s.rx);
      s.cy = rng.uniform(s.ry, config.height - s.ry);
    }
    desc.shapes.push_back(s);
  }
  return desc;
}

}  // namespace xannot::energy
