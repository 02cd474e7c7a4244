#include "xannot/taxonomy.hpp"

#include "xannot/error.hpp"
#include "xannot/io.hpp"

namespace xannot::datastore {

namespace {

constexpr const char* kScissorsNote =
    "\"Scissors\" is both a superclass and one of its own fine-grained classes; the table is "
    "authoritative, so the fine-grained entry is kept and counted among the 30 classes.";

}  // namespace

Taxonomy::Taxonomy(std::vector<Superclass> groups) : groups_(std::move(groups)) {
  for (const auto& g : groups_) {
    if (g.name.empty()) throw TaxonomyError("taxonomy: superclass name is empty");
    if (g.classes.empty()) throw TaxonomyError("taxonomy: superclass '" + g.name + "' has no classes");
    for (const auto& c : g.classes) {
      if (c.empty()) throw TaxonomyError("taxonomy: empty class name under '" + g.name + "'");
      if (!index_.emplace(c, g.name).second) throw TaxonomyError("taxonomy: duplicate class '" + c + "'");
    }
  }
}

const Taxonomy& Taxonomy::builtin() {
  static const Taxonomy t = [] {
    Taxonomy tax({
        {"Batteries", {"ColumnarBlockBattery", "MotorBattery"}},
        {"Suspicious Liquid", {"PlasticbottleLiquid", "GlassbottleLiquid", "MetalbottleLiquid"}},
        {"Fruitknife", {"MetalhandleFruitknife", "PlastichandleFruitknife"}},
        {"Cleaver", {"MetalhandleCleaver", "PlastichandleCleaver"}},
        {"Scissors", {"MetalhandleScissors", "PlastichandleScissors", "Scissors"}},
        {"Batons", {"ExpandableBatons", "Baton"}},
        {"Electronic Devices", {"Powerbank", "Mobilephone", "Laptop"}},
        {"Tools", {"Hammer", "Pliers", "Wrench", "Screwdriver"}},
        {"Firearms", {"Gun", "Bullet"}},
        {"Others", {"Pressure", "Handcuffs", "Lighter", "Fireworks", "Dart", "Razorblade", "Sawblade"}},
    });
    tax.note_ = kScissorsNote;
    return tax;
  }();
  return t;
}

Taxonomy Taxonomy::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("superclasses") || !j["superclasses"].is_array()) {
    throw TaxonomyError("taxonomy: expected an object with a 'superclasses' array");
  }
  std::vector<Superclass> groups;
  for (const auto& g : j["superclasses"]) {
    if (!g.is_object() || !g.contains("name") || !g["name"].is_string() || !g.contains("classes") ||
        !g["classes"].is_array()) {
      throw TaxonomyError("taxonomy: each superclass needs 'name' and 'classes'");
    }
    Superclass s{g["name"].get<std::string>(), {}};
    for (const auto& c : g["classes"]) {
      if (!c.is_string()) throw TaxonomyError("taxonomy: class names must be strings");
      s.classes.push_back(c.get<std::string>());
    }
    groups.push_back(std::move(s));
  }
  Taxonomy t(std::move(groups));
  if (j.contains("note") && j["note"].is_string()) t.note_ = j["note"].get<std::string>();
  return t;
}

Taxonomy Taxonomy::load(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw TaxonomyError("taxonomy: " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json Taxonomy::to_json() const {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : groups_) groups.push_back({{"name", g.name}, {"classes", g.classes}});
  nlohmann::json j{{"superclasses", std::move(groups)}};
  if (!note_.empty()) j["note"] = note_;
  return j;
}

CategoryRef Taxonomy::validate_category(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw TaxonomyError("unknown category '" + std::string(name) + "'");
  return {it->second, it->first};
}

bool Taxonomy::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

}  // namespace xannot::datastore
