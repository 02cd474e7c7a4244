#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace xannot::datastore {

struct Superclass {
  std::string name;
  std::vector<std::string> classes;
};

struct CategoryRef {
  std::string superclass;
  std::string fine;

  friend bool operator==(const CategoryRef&, const CategoryRef&) = default;
};

class Taxonomy {
 public:
  Taxonomy() = default;
  /// Throws TaxonomyError on duplicate fine-grained names or empty groups.
  explicit Taxonomy(std::vector<Superclass> groups);

  /// The 30 fine-grained contraband classes in ten superclasses.
  static const Taxonomy& builtin();

  /// {"superclasses": [{"name": ..., "classes": [...]}, ...], "note": optional}
  static Taxonomy from_json(const nlohmann::json& j);
  static Taxonomy load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  /// Throws TaxonomyError for names that are not fine-grained classes.
  CategoryRef validate_category(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::vector<Superclass>& groups() const noexcept { return groups_; }
  std::size_t class_count() const noexcept { return index_.size(); }
  const std::string& note() const noexcept { return note_; }

 private:
  std::vector<Superclass> groups_;
  std::map<std::string, std::string, std::less<>> index_;
  std::string note_;
};

}  // namespace xannot::datastore
