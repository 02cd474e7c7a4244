#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xannot/curation.hpp"
#include "xannot/grid.hpp"
#include "xannot/io.hpp"
#include "xannot/rle.hpp"
#include "xannot/taxonomy.hpp"

namespace xannot::datastore {

enum class Origin { model, human };
enum class Status { proposed, accepted, superseded };

std::string to_string(Origin o);
std::string to_string(Status s);
Origin origin_from_string(std::string_view s);
Status status_from_string(std::string_view s);

struct ImageRecord {
  std::string id;
  std::string source;
  int width = 0;
  int height = 0;
  /// SHA-256 of the stored PNG bytes.
  std::string content_hash;
  /// Relative to the store root.
  std::string path;
  std::optional<curation::Split> split;
};

struct Annotation {
  std::int64_t id = 0;
  std::string image_id;
  RLEMask rle;
  std::string category;
  std::string superclass;
  BBox bbox;
  int round = 1;
  Origin origin = Origin::model;
  Status status = Status::proposed;
  std::optional<std::int64_t> predecessor;
  bool human_verified = false;
  /// SHA-256 of the mask PNG blob under masks/.
  std::string mask_hash;
};

nlohmann::json to_json(const Annotation& a);
nlohmann::json to_json(const ImageRecord& r);

struct ImageProgress {
  ImageRecord image;
  std::size_t accepted = 0;
  std::size_t proposed = 0;
  int max_round = 0;
};

struct ImageFilter {
  std::optional<curation::Split> split;
  /// "annotated" (at least one accepted annotation) or "unannotated".
  std::optional<std::string> status;
  std::size_t offset = 0;
  std::size_t limit = 100;
};

struct Job {
  std::string id;
  std::string kind;
  /// queued | running | done | failed
  std::string status;
  nlohmann::json params;
  std::string report_path;
  std::string error;
  std::int64_t seq = 0;
};

struct StoreConfig {
  /// Closed-loop rounds allowed per image.
  int max_rounds = 5;
};

/// Annotation store rooted at a directory: store.sqlite, images/<sha256>.png and
/// masks/<sha256>.png. Transitions on one image are serialized; reads only see
/// committed state.
class AnnotationStore {
 public:
  static std::unique_ptr<AnnotationStore> open(const std::filesystem::path& root, StoreConfig config = {},
                                               Taxonomy taxonomy = Taxonomy::builtin());
  ~AnnotationStore();
  AnnotationStore(const AnnotationStore&) = delete;
  AnnotationStore& operator=(const AnnotationStore&) = delete;

  const std::filesystem::path& root() const noexcept { return root_; }
  const Taxonomy& taxonomy() const noexcept { return taxonomy_; }
  const StoreConfig& config() const noexcept { return config_; }

  /// Stores PNG bytes under images/. Throws ValidationError on a duplicate id or undecodable PNG.
  ImageRecord add_image(const std::string& id, const std::string& source, std::span<const std::uint8_t> png,
                        std::optional<curation::Split> split = std::nullopt);
  std::optional<ImageRecord> find_image(const std::string& id) const;
  /// Throws NotFoundError.
  ImageRecord get_image(const std::string& id) const;
  io::Bytes image_bytes(const std::string& id) const;
  std::vector<ImageProgress> list_images(const ImageFilter& filter = {}) const;
  std::size_t image_count() const;

  /// New model proposal (status proposed). Throws RoundLimitError past max_rounds.
  Annotation propose(const std::string& image_id, const RLEMask& rle, const std::string& category, int round = 1);
  /// proposed -> accepted. Accepted or superseded input throws StateError.
  Annotation accept(std::int64_t annotation_id);
  /// Accepts a mask that was never stored as a proposal. `verified_model` marks a
  /// model mask the annotator approved unchanged; otherwise origin is human.
  /// Throws StateError if an identical mask is already active on the image.
  Annotation accept_new(const std::string& image_id, const RLEMask& rle, const std::string& category,
                        bool verified_model, int round = 1);
  /// Replaces a non-superseded annotation with a human correction (accepted), linked
  /// by predecessor. Round stays, or advances by one when `new_round`.
  Annotation correct(std::int64_t predecessor_id, const RLEMask& rle, const std::string& category,
                     bool new_round = false);

  std::optional<Annotation> find_annotation(std::int64_t id) const;
  /// Throws NotFoundError.
  Annotation get_annotation(std::int64_t id) const;
  std::vector<Annotation> annotations_for(const std::string& image_id) const;
  std::vector<Annotation> all_annotations() const;
  /// Oldest first, ending at `head_id`.
  std::vector<Annotation> chain(std::int64_t head_id) const;
  /// Throws StateError if any chain is cyclic or has other than one non-superseded head.
  void check_invariants() const;

  /// Raw insert used by import; status, round and predecessor are taken as given.
  Annotation insert_raw(const Annotation& a);

  std::string create_job(const std::string& kind, const nlohmann::json& params);
  void update_job(const Job& job);
  std::optional<Job> find_job(const std::string& id) const;
  /// Jobs with status queued or running, oldest first.
  std::vector<Job> unfinished_jobs() const;

 private:
  AnnotationStore(std::filesystem::path root, StoreConfig config, Taxonomy taxonomy);
  struct Db;

  std::shared_ptr<std::mutex> image_lock(const std::string& image_id);
  Annotation insert_annotation(Annotation a);
  std::string store_mask_blob(const RLEMask& rle);
  void check_round(int round) const;

  std::filesystem::path root_;
  StoreConfig config_;
  Taxonomy taxonomy_;
  std::unique_ptr<Db> db_;
  mutable std::mutex db_mutex_;
  std::mutex locks_mutex_;
  std::map<std::string, std::shared_ptr<std::mutex>> image_locks_;
};

/// Archive layout: manifest.json, images.jsonl, annotations.jsonl (inline RLE),
/// images/<image id>.png and masks/<annotation id>.png.
struct ArchiveSummary {
  std::size_t images = 0;
  std::size_t annotations = 0;
};

ArchiveSummary export_archive(const AnnotationStore& store, const std::filesystem::path& dir);
/// Images already present with the same content hash are skipped; annotation ids
/// are reassigned and predecessor links remapped.
ArchiveSummary import_archive(AnnotationStore& store, const std::filesystem::path& dir);

}  // namespace xannot::datastore
