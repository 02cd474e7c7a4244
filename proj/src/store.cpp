#include "xannot/store.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <sqlite3.h>

#include "xannot/error.hpp"

namespace xannot::datastore {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Origin o) { return o == Origin::model ? "model" : "human"; }

std::string to_string(Status s) {
  switch (s) {
    case Status::proposed: return "proposed";
    case Status::accepted: return "accepted";
    case Status::superseded: return "superseded";
  }
  return "unknown";
}

Origin origin_from_string(std::string_view s) {
  if (s == "model") return Origin::model;
  if (s == "human") return Origin::human;
  throw ValidationError("unknown origin '" + std::string(s) + "'");
}

Status status_from_string(std::string_view s) {
  if (s == "proposed") return Status::proposed;
  if (s == "accepted") return Status::accepted;
  if (s == "superseded") return Status::superseded;
  throw ValidationError("unknown status '" + std::string(s) + "'");
}

json to_json(const Annotation& a) {
  json j{{"id", a.id},
         {"image_id", a.image_id},
         {"rle", a.rle.counts},
         {"size", {a.rle.height, a.rle.width}},
         {"category", a.category},
         {"superclass", a.superclass},
         {"bbox", {a.bbox.x_min, a.bbox.y_min, a.bbox.x_max, a.bbox.y_max}},
         {"round", a.round},
         {"origin", to_string(a.origin)},
         {"status", to_string(a.status)},
         {"human_verified", a.human_verified},
         {"mask_hash", a.mask_hash}};
  j["predecessor"] = a.predecessor ? json(*a.predecessor) : json(nullptr);
  return j;
}

json to_json(const ImageRecord& r) {
  json j{{"id", r.id},           {"source", r.source},
         {"width", r.width},     {"height", r.height},
         {"content_hash", r.content_hash}, {"path", r.path}};
  j["split"] = r.split ? json(curation::to_string(*r.split)) : json(nullptr);
  return j;
}

// --- sqlite plumbing ---------------------------------------------------------

namespace {

class Stmt {
 public:
  Stmt(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
      throw IoError(std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    }
  }
  ~Stmt() { sqlite3_finalize(stmt_); }
  Stmt(const Stmt&) = delete;
  Stmt& operator=(const Stmt&) = delete;

  Stmt& bind(int i, std::int64_t v) { return check(sqlite3_bind_int64(stmt_, i, v)); }
  Stmt& bind(int i, int v) { return check(sqlite3_bind_int(stmt_, i, v)); }
  Stmt& bind(int i, const std::string& v) {
    return check(sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
  }
  Stmt& bind_null(int i) { return check(sqlite3_bind_null(stmt_, i)); }

  /// True while a row is available.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw IoError(std::string("sqlite step: ") + sqlite3_errmsg(db_));
  }

  std::int64_t i64(int c) const { return sqlite3_column_int64(stmt_, c); }
  int i32(int c) const { return sqlite3_column_int(stmt_, c); }
  bool is_null(int c) const { return sqlite3_column_type(stmt_, c) == SQLITE_NULL; }
  std::string text(int c) const {
    const auto* p = sqlite3_column_text(stmt_, c);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, c)))
             : std::string();
  }

 private:
  Stmt& check(int rc) {
    if (rc != SQLITE_OK) throw IoError(std::string("sqlite bind: ") + sqlite3_errmsg(db_));
    return *this;
  }
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    throw IoError("sqlite: " + msg);
  }
}

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS images (
  seq INTEGER PRIMARY KEY AUTOINCREMENT,
  id TEXT NOT NULL UNIQUE,
  source TEXT NOT NULL,
  width INTEGER NOT NULL,
  height INTEGER NOT NULL,
  hash TEXT NOT NULL,
  path TEXT NOT NULL,
  split TEXT
);
CREATE TABLE IF NOT EXISTS annotations (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  image_id TEXT NOT NULL REFERENCES images(id),
  height INTEGER NOT NULL,
  width INTEGER NOT NULL,
  rle TEXT NOT NULL,
  category TEXT NOT NULL,
  superclass TEXT NOT NULL,
  x_min INTEGER NOT NULL, y_min INTEGER NOT NULL, x_max INTEGER NOT NULL, y_max INTEGER NOT NULL,
  round INTEGER NOT NULL,
  origin TEXT NOT NULL,
  status TEXT NOT NULL,
  predecessor INTEGER REFERENCES annotations(id),
  human_verified INTEGER NOT NULL,
  mask_hash TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS annotations_image ON annotations(image_id);
CREATE TABLE IF NOT EXISTS jobs (
  seq INTEGER PRIMARY KEY AUTOINCREMENT,
  id TEXT UNIQUE,
  kind TEXT NOT NULL,
  status TEXT NOT NULL,
  params TEXT NOT NULL,
  report_path TEXT NOT NULL DEFAULT '',
  error TEXT NOT NULL DEFAULT ''
);
)sql";

constexpr const char* kAnnotationColumns =
    "id, image_id, height, width, rle, category, superclass, x_min, y_min, x_max, y_max, round, origin, status, "
    "predecessor, human_verified, mask_hash";

Annotation read_annotation(const Stmt& s) {
  Annotation a;
  a.id = s.i64(0);
  a.image_id = s.text(1);
  a.rle.height = s.i32(2);
  a.rle.width = s.i32(3);
  a.rle.counts = json::parse(s.text(4)).get<std::vector<std::uint32_t>>();
  a.category = s.text(5);
  a.superclass = s.text(6);
  a.bbox = {s.i32(7), s.i32(8), s.i32(9), s.i32(10)};
  a.round = s.i32(11);
  a.origin = origin_from_string(s.text(12));
  a.status = status_from_string(s.text(13));
  if (!s.is_null(14)) a.predecessor = s.i64(14);
  a.human_verified = s.i32(15) != 0;
  a.mask_hash = s.text(16);
  return a;
}

ImageRecord read_image(const Stmt& s) {
  ImageRecord r;
  r.id = s.text(0);
  r.source = s.text(1);
  r.width = s.i32(2);
  r.height = s.i32(3);
  r.content_hash = s.text(4);
  r.path = s.text(5);
  if (!s.is_null(6)) r.split = curation::split_from_string(s.text(6));
  return r;
}

Job read_job(const Stmt& s) {
  Job j;
  j.seq = s.i64(0);
  j.id = s.text(1);
  j.kind = s.text(2);
  j.status = s.text(3);
  j.params = json::parse(s.text(4));
  j.report_path = s.text(5);
  j.error = s.text(6);
  return j;
}

void validate_image_id(const std::string& id) {
  if (id.empty() || id.size() > 200) throw ValidationError("image id must be 1-200 characters");
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    if (!ok) throw ValidationError("image id '" + id + "' may only contain letters, digits, '-', '_' and '.'");
  }
  if (id == "." || id == "..") throw ValidationError("image id may not be '.' or '..'");
}

}  // namespace

struct AnnotationStore::Db {
  sqlite3* handle = nullptr;
  ~Db() { sqlite3_close(handle); }
};

AnnotationStore::AnnotationStore(fs::path root, StoreConfig config, Taxonomy taxonomy)
    : root_(std::move(root)), config_(config), taxonomy_(std::move(taxonomy)), db_(std::make_unique<Db>()) {}

AnnotationStore::~AnnotationStore() = default;

std::unique_ptr<AnnotationStore> AnnotationStore::open(const fs::path& root, StoreConfig config, Taxonomy taxonomy) {
  if (config.max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  fs::create_directories(root / "masks", ec);
  if (ec) throw IoError("cannot create store directory " + root.string() + ": " + ec.message());
  std::unique_ptr<AnnotationStore> store(new AnnotationStore(root, config, std::move(taxonomy)));
  const std::string path = (root / "store.sqlite").string();
  if (sqlite3_open_v2(path.c_str(), &store->db_->handle,
                      SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX, nullptr) != SQLITE_OK) {
    throw IoError("cannot open " + path + ": " + sqlite3_errmsg(store->db_->handle));
  }
  exec(store->db_->handle, "PRAGMA foreign_keys = ON;");
  exec(store->db_->handle, kSchema);
  return store;
}

std::shared_ptr<std::mutex> AnnotationStore::image_lock(const std::string& image_id) {
  std::lock_guard guard(locks_mutex_);
  auto& slot = image_locks_[image_id];
  if (!slot) slot = std::make_shared<std::mutex>();
  return slot;
}

void AnnotationStore::check_round(int round) const {
  if (round < 1) throw ValidationError("round must be >= 1");
  if (round > config_.max_rounds) {
    throw RoundLimitError("round " + std::to_string(round) + " exceeds the limit of " +
                          std::to_string(config_.max_rounds));
  }
}

// --- images ------------------------------------------------------------------

ImageRecord AnnotationStore::add_image(const std::string& id, const std::string& source,
                                       std::span<const std::uint8_t> png, std::optional<curation::Split> split) {
  validate_image_id(id);
  if (source.empty()) throw ValidationError("image source tag is empty");
  std::pair<int, int> dims;
  try {
    dims = io::png_dimensions(png);
  } catch (const Error& e) {
    throw ValidationError("image '" + id + "' is not a readable PNG: " + e.what());
  }
  ImageRecord rec{id, source, dims.first, dims.second, io::sha256_hex(png), "", split};
  rec.path = "images/" + rec.content_hash + ".png";

  std::lock_guard guard(db_mutex_);
  {
    Stmt q(db_->handle, "SELECT 1 FROM images WHERE id = ?");
    q.bind(1, id);
    if (q.step()) throw ValidationError("image '" + id + "' already exists");
  }
  if (!fs::exists(root_ / rec.path)) io::write_file(root_ / rec.path, png);
  Stmt s(db_->handle, "INSERT INTO images (id, source, width, height, hash, path, split) VALUES (?,?,?,?,?,?,?)");
  s.bind(1, rec.id).bind(2, rec.source).bind(3, rec.width).bind(4, rec.height).bind(5, rec.content_hash).bind(6, rec.path);
  if (split) {
    s.bind(7, std::string(curation::to_string(*split)));
  } else {
    s.bind_null(7);
  }
  s.step();
  return rec;
}

std::optional<ImageRecord> AnnotationStore::find_image(const std::string& id) const {
  std::lock_guard guard(db_mutex_);
  Stmt s(db_->handle, "SELECT id, source, width, height, hash, path, split FROM images WHERE id = ?");
  s.bind(1, id);
  if (!s.step()) return std::nullopt;
  return read_image(s);
}

ImageRecord AnnotationStore::get_image(const std::string& id) const {
  auto r = find_image(id);
  if (!r) throw NotFoundError("unknown image '" + id + "'");
  return *r;
}

io::Bytes AnnotationStore::image_bytes(const std::string& id) const {
  const ImageRecord rec = get_image(id);
  io::Bytes bytes = io::read_file(root_ / rec.path);
  if (io::sha256_hex(bytes) != rec.content_hash) throw IoError("stored bytes of image '" + id + "' fail their hash");
  return bytes;
}

std::vector<ImageProgress> AnnotationStore::list_images(const ImageFilter& filter) const {
  std::lock_guard guard(db_mutex_);
  Stmt s(db_->handle,
         "SELECT i.id, i.source, i.width, i.height, i.hash, i.path, i.split, "
         "  (SELECT COUNT(*) FROM annotations a WHERE a.image_id = i.id AND a.status = 'accepted'), "
         "  (SELECT COUNT(*) FROM annotations a WHERE a.image_id = i.id AND a.status = 'proposed'), "
         "  (SELECT COALESCE(MAX(round), 0) FROM annotations a WHERE a.image_id = i.id) "
         "FROM images i ORDER BY i.id");
  std::vector<ImageProgress> out;
  std::size_t skipped = 0;
  while (s.step()) {
    ImageProgress p{read_image(s), static_cast<std::size_t>(s.i64(7)), static_cast<std::size_t>(s.i64(8)), s.i32(9)};
    if (filter.split && p.image.split != filter.split) continue;
    if (filter.status) {
      const bool annotated = p.accepted > 0;
      if ((*filter.status == "annotated") != annotated) continue;
    }
    if (skipped < filter.offset) {
      ++skipped;
      continue;
    }
    if (out.size() >= filter.limit) break;
    out.push_back(std::move(p));
  }
  return out;
}

std::size_t AnnotationStore::image_count() const {
  std::lock_guard guard(db_mutex_);
  Stmt s(db_->handle, "SELECT COUNT(*) FROM images");
  s.step();
  return static_cast<std::size_t>(s.i64(0));
}

// --- annotations ---------------------------------------------------------------

std::string AnnotationStore::store_mask_blob(const RLEMask& rle) {
  const io::Bytes png = io::encode_mask_png(rle_decode(rle));
  const std::string hash = io::sha256_hex(png);
  const fs::path path = root_ / "masks" / (hash + ".png");
  if (!fs::exists(path)) io::write_file(path, png);
  return hash;
}

Annotation AnnotationStore::insert_annotation(Annotation a) {
  Stmt s(db_->handle,
         "INSERT INTO annotations (image_id, height, width, rle, category, superclass, x_min, y_min, x_max, y_max, "
         "round, origin, status, predecessor, human_verified, mask_hash) VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?)");
  s.bind(1, a.image_id).bind(2, a.rle.height).bind(3, a.rle.width).bind(4, json(a.rle.counts).dump());
  s.bind(5, a.category).bind(6, a.superclass);
  s.bind(7, a.bbox.x_min).bind(8, a.bbox.y_min).bind(9, a.bbox.x_max).bind(10, a.bbox.y_max);
  s.bind(11, a.round).bind(12, to_string(a.origin)).bind(13, to_string(a.status));
  if (a.predecessor) {
    s.bind(14, *a.predecessor);
  } else {
    s.bind_null(14);
  }
  s.bind(15, a.human_verified ? 1 : 0).bind(16, a.mask_hash);
  s.step();
  a.id = sqlite3_last_insert_rowid(db_->handle);
  return a;
}

namespace {

// Shape, category and geometry checks shared by every write path.
Annotation prepare(const AnnotationStore& store, const ImageRecord& image, const RLEMask& rle,
                   const std::string& category) {
  rle_validate(rle);
  if (rle.height != image.height || rle.width != image.width) {
    throw ValidationError("mask size " + std::to_string(rle.height) + "x" + std::to_string(rle.width) +
                          " differs from image " + std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  Annotation a;
  a.image_id = image.id;
  a.rle = rle;
  const CategoryRef ref = store.taxonomy().validate_category(category);
  a.category = ref.fine;
  a.superclass = ref.superclass;
  try {
    a.bbox = bbox_from_mask(rle_decode(rle));
  } catch (const DegenerateMask&) {
    throw ValidationError("annotation mask is empty");
  }
  return a;
}

}  // namespace

Annotation AnnotationStore::propose(const std::string& image_id, const RLEMask& rle, const std::string& category,
                                    int round) {
  check_round(round);
  const ImageRecord image = get_image(image_id);
  Annotation a = prepare(*this, image, rle, category);
  a.round = round;
  a.origin = Origin::model;
  a.status = Status::proposed;
  auto lock = image_lock(image_id);
  std::lock_guard image_guard(*lock);
  a.mask_hash = store_mask_blob(rle);
  std::lock_guard guard(db_mutex_);
  return insert_annotation(std::move(a));
}

Annotation AnnotationStore::accept(std::int64_t annotation_id) {
  const Annotation current = get_annotation(annotation_id);
  auto lock = image_lock(current.image_id);
  std::lock_guard image_guard(*lock);
  Annotation a = get_annotation(annotation_id);
  if (a.status != Status::proposed) {
    throw StateError("annotation " + std::to_string(a.id) + " is " + to_string(a.status) + ", not proposed");
  }
  a.status = Status::accepted;
  a.human_verified = true;
  std::lock_guard guard(db_mutex_);
  Stmt s(db_->handle, "UPDATE annotations SET status = 'accepted', human_verified = 1 WHERE id = ?");
  s.bind(1, a.id);
  s.step();
  return a;
}

Annotation AnnotationStore::accept_new(const std::string& image_id, const RLEMask& rle, const std::string& category,
                                       bool verified_model, int round) {
  check_round(round);
  const ImageRecord image = get_image(image_id);
  Annotation a = prepare(*this, image, rle, category);
  a.round = round;
  a.origin = verified_model ? Origin::model : Origin::human;
  a.status = Status::accepted;
  a.human_verified = true;
  auto lock = image_lock(image_id);
  std::lock_guard image_guard(*lock);
  for (const auto& other : annotations_for(image_id)) {
    if (other.status != Status::superseded && other.rle == rle) {
      throw StateError("an identical mask is already active as annotation " + std::to_string(other.id));
    }
  }
  a.mask_hash = store_mask_blob(rle);
  std::lock_guard guard(db_mutex_);
  return insert_annotation(std::move(a));
}

Annotation AnnotationStore::correct(std::int64_t predecessor_id, const RLEMask& rle, const std::string& category,
                                    bool new_round) {
  const Annotation first = get_annotation(predecessor_id);
  auto lock = image_lock(first.image_id);
  std::lock_guard image_guard(*lock);
  const Annotation pred = get_annotation(predecessor_id);
  if (pred.status == Status::superseded) {
    throw StateError("annotation " + std::to_string(pred.id) + " is already superseded");
  }
  const int round = pred.round + (new_round ? 1 : 0);
  check_round(round);
  Annotation a = prepare(*this, get_image(pred.image_id), rle, category);
  a.round = round;
  a.origin = Origin::human;
  a.status = Status::accepted;
  a.human_verified = true;
  a.predecessor = pred.id;
  a.mask_hash = store_mask_blob(rle);

  std::lock_guard guard(db_mutex_);
  exec(db_->handle, "BEGIN IMMEDIATE");
  try {
    Stmt s(db_->handle, "UPDATE annotations SET status = 'superseded' WHERE id = ?");
    s.bind(1, pred.id);
    s.step();
    a = insert_annotation(std::move(a));
    exec(db_->handle, "COMMIT");
  } catch (...) {
    exec(db_->handle, "ROLLBACK");
    throw;
  }
  return a;
}

Annotation AnnotationStore::insert_raw(const Annotation& raw) {
  check_round(raw.round);
  const ImageRecord image = get_image(raw.image_id);
  Annotation a = prepare(*this, image, raw.rle, raw.category);
  a.round = raw.round;
  a.origin = raw.origin;
  a.status = raw.status;
  a.predecessor = raw.predecessor;
  a.human_verified = raw.human_verified;
  if (a.predecessor && !find_annotation(*a.predecessor)) {
    throw ValidationError("predecessor " + std::to_string(*a.predecessor) + " does not exist");
  }
  auto lock = image_lock(a.image_id);
  std::lock_guard image_guard(*lock);
  a.mask_hash = store_mask_blob(a.rle);
  std::lock_guard guard(db_mutex_);
  return insert_annotation(std::move(a));
}

std::optional<Annotation> AnnotationStore::find_annotation(std::int64_t id) const {
  std::lock_guard guard(db_mutex_);
  const std::string sql = std::string("SELECT ") + kAnnotationColumns + " FROM annotations WHERE id = ?";
  Stmt s(db_->handle, sql.c_str());
  s.bind(1, id);
  if (!s.step()) return std::nullopt;
  return read_annotation(s);
}

Annotation AnnotationStore::get_annotation(std::int64_t id) const {
  auto a = find_annotation(id);
  if (!a) throw NotFoundError("unknown annotation " + std::to_string(id));
  return *a;
}

std::vector<Annotation> AnnotationStore::annotations_for(const std::string& image_id) const {
  std::lock_guard guard(db_mutex_);
  const std::string sql = std::string("SELECT ") + kAnnotationColumns + " FROM annotations WHERE image_id = ? ORDER BY id";
  Stmt s(db_->handle, sql.c_str());
  s.bind(1, image_id);
  std::vector<Annotation> out;
  while (s.step()) out.push_back(read_annotation(s));
  return out;
}

std::vector<Annotation> AnnotationStore::all_annotations() const {
  std::lock_guard guard(db_mutex_);
  const std::string sql = std::string("SELECT ") + kAnnotationColumns + " FROM annotations ORDER BY id";
  Stmt s(db_->handle, sql.c_str());
  std::vector<Annotation> out;
  while (s.step()) out.push_back(read_annotation(s));
  return out;
}

std::vector<Annotation> AnnotationStore::chain(std::int64_t head_id) const {
  std::vector<Annotation> out;
  std::set<std::int64_t> seen;
  std::optional<std::int64_t> cur = head_id;
  while (cur) {
    if (!seen.insert(*cur).second) throw StateError("annotation chain through " + std::to_string(*cur) + " is cyclic");
    out.push_back(get_annotation(*cur));
    cur = out.back().predecessor;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

void AnnotationStore::check_invariants() const {
  const auto all = all_annotations();
  std::map<std::int64_t, const Annotation*> by_id;
  std::map<std::int64_t, int> successors;
  for (const auto& a : all) by_id[a.id] = &a;
  for (const auto& a : all) {
    if (a.status == Status::accepted && a.origin != Origin::human && !a.human_verified) {
      throw StateError("annotation " + std::to_string(a.id) + " is accepted without human review");
    }
    if (!a.predecessor) continue;
    if (!by_id.count(*a.predecessor)) throw StateError("dangling predecessor on " + std::to_string(a.id));
    if (++successors[*a.predecessor] > 1) throw StateError("annotation chain forks at " + std::to_string(*a.predecessor));
    if (by_id[*a.predecessor]->image_id != a.image_id) throw StateError("chain crosses images at " + std::to_string(a.id));
  }
  // Walk every chain from its tails; each must end in exactly one non-superseded head.
  for (const auto& a : all) {
    if (successors.count(a.id)) continue;
    std::set<std::int64_t> seen;
    std::size_t active = 0;
    const Annotation* cur = &a;
    while (true) {
      if (!seen.insert(cur->id).second) throw StateError("cyclic chain through " + std::to_string(cur->id));
      if (cur->status != Status::superseded) ++active;
      if (!cur->predecessor) break;
      cur = by_id[*cur->predecessor];
    }
    if (active != 1 || a.status == Status::superseded) {
      throw StateError("chain ending at " + std::to_string(a.id) + " has " + std::to_string(active) + " active heads");
    }
  }
  std::size_t reached = 0;
  for (const auto& a : all) {
    if (successors.count(a.id)) continue;
    reached += chain(a.id).size();
  }
  if (reached != all.size()) throw StateError("annotation chains contain a cycle");
}

// --- jobs ----------------------------------------------------------------------

std::string AnnotationStore::create_job(const std::string& kind, const json& params) {
  std::lock_guard guard(db_mutex_);
  Stmt s(db_->handle, "INSERT INTO jobs (kind, status, params) VALUES (?, 'queued', ?)");
  s.bind(1, kind).bind(2, params.dump());
  s.step();
  const std::int64_t seq = sqlite3_last_insert_rowid(db_->handle);
  const std::string id = "job-" + std::to_string(seq);
  Stmt u(db_->handle, "UPDATE jobs SET id = ? WHERE seq = ?");
  u.bind(1, id).bind(2, seq);
  u.step();
  return id;
}

void AnnotationStore::update_job(const Job& job) {
  std::lock_guard guard(db_mutex_);
  Stmt s(db_->handle, "UPDATE jobs SET status = ?, report_path = ?, error = ? WHERE id = ?");
  s.bind(1, job.status).bind(2, job.report_path).bind(3, job.error).bind(4, job.id);
  s.step();
  if (sqlite3_changes(db_->handle) == 0) throw NotFoundError("unknown job '" + job.id + "'");
}

std::optional<Job> AnnotationStore::find_job(const std::string& id) const {
  std::lock_guard guard(db_mutex_);
  Stmt s(db_->handle, "SELECT seq, id, kind, status, params, report_path, error FROM jobs WHERE id = ?");
  s.bind(1, id);
  if (!s.step()) return std::nullopt;
  return read_job(s);
}

std::vector<Job> AnnotationStore::unfinished_jobs() const {
  std::lock_guard guard(db_mutex_);
  Stmt s(db_->handle,
         "SELECT seq, id, kind, status, params, report_path, error FROM jobs "
         "WHERE status IN ('queued', 'running') ORDER BY seq");
  std::vector<Job> out;
  while (s.step()) out.push_back(read_job(s));
  return out;
}

// --- archive -------------------------------------------------------------------

namespace {

constexpr const char* kArchiveFormat = "xannot-archive";
constexpr int kArchiveVersion = 1;

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> out;
  std::istringstream in(io::read_text(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

ArchiveSummary export_archive(const AnnotationStore& store, const fs::path& dir) {
  ArchiveSummary summary;
  std::string images_jsonl, annotations_jsonl;
  ImageFilter all;
  all.limit = static_cast<std::size_t>(-1);
  for (const auto& p : store.list_images(all)) {
    const io::Bytes bytes = store.image_bytes(p.image.id);
    io::write_file(dir / "images" / (p.image.id + ".png"), bytes);
    json j = to_json(p.image);
    j["path"] = "images/" + p.image.id + ".png";
    images_jsonl += j.dump() + "\n";
    ++summary.images;
  }
  for (const auto& a : store.all_annotations()) {
    io::write_file(dir / "masks" / (std::to_string(a.id) + ".png"), io::encode_mask_png(rle_decode(a.rle)));
    json j = to_json(a);
    j["mask_path"] = "masks/" + std::to_string(a.id) + ".png";
    annotations_jsonl += j.dump() + "\n";
    ++summary.annotations;
  }
  io::write_text(dir / "images.jsonl", images_jsonl);
  io::write_text(dir / "annotations.jsonl", annotations_jsonl);
  const json manifest{{"format", kArchiveFormat},
                      {"version", kArchiveVersion},
                      {"images", summary.images},
                      {"annotations", summary.annotations},
                      {"max_rounds", store.config().max_rounds},
                      {"rle", "column-major run lengths starting with background"},
                      {"taxonomy", store.taxonomy().to_json()}};
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return summary;
}

ArchiveSummary import_archive(AnnotationStore& store, const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(io::read_text(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw ValidationError("archive manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != kArchiveFormat || manifest.value("version", 0) != kArchiveVersion) {
    throw ValidationError("archive manifest: unsupported format or version");
  }
  ArchiveSummary summary;
  try {
    for (const auto& j : read_jsonl(dir / "images.jsonl")) {
      const std::string id = j.at("id").get<std::string>();
      const io::Bytes bytes = io::read_file(dir / j.at("path").get<std::string>());
      if (io::sha256_hex(bytes) != j.at("content_hash").get<std::string>()) {
        throw ValidationError("archive image '" + id + "' fails its content hash");
      }
      if (auto existing = store.find_image(id)) {
        if (existing->content_hash != j.at("content_hash").get<std::string>()) {
          throw ValidationError("image '" + id + "' already exists with different content");
        }
        continue;
      }
      std::optional<curation::Split> split;
      if (j.contains("split") && !j["split"].is_null()) split = curation::split_from_string(j["split"].get<std::string>());
      store.add_image(id, j.at("source").get<std::string>(), bytes, split);
      ++summary.images;
    }
    // Predecessors precede their successors in id order, so one pass remaps every link.
    std::map<std::int64_t, std::int64_t> remap;
    auto rows = read_jsonl(dir / "annotations.jsonl");
    std::sort(rows.begin(), rows.end(),
              [](const json& a, const json& b) { return a.at("id").get<std::int64_t>() < b.at("id").get<std::int64_t>(); });
    for (const auto& j : rows) {
      Annotation a;
      a.image_id = j.at("image_id").get<std::string>();
      a.rle.height = j.at("size").at(0).get<int>();
      a.rle.width = j.at("size").at(1).get<int>();
      a.rle.counts = j.at("rle").get<std::vector<std::uint32_t>>();
      a.category = j.at("category").get<std::string>();
      a.round = j.at("round").get<int>();
      a.origin = origin_from_string(j.at("origin").get<std::string>());
      a.status = status_from_string(j.at("status").get<std::string>());
      a.human_verified = j.at("human_verified").get<bool>();
      if (!j.at("predecessor").is_null()) {
        const auto it = remap.find(j["predecessor"].get<std::int64_t>());
        if (it == remap.end()) throw ValidationError("archive annotation predecessor is missing or out of order");
        a.predecessor = it->second;
      }
      remap[j.at("id").get<std::int64_t>()] = store.insert_raw(a).id;
      ++summary.annotations;
    }
  } catch (const json::exception& e) {
    throw ValidationError("archive record: " + std::string(e.what()));
  }
  store.check_invariants();
  return summary;
}

}  // namespace xannot::datastore
