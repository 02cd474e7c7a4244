#include "xannot/service.hpp"

#include <bit>
#include <cctype>
#include <cmath>

#include <httplib.h>

#include "xannot/curation.hpp"
#include "xannot/eval.hpp"
#include "xannot/io.hpp"
#include "xannot/random.hpp"

namespace xannot::service {

namespace fs = std::filesystem;
using nlohmann::json;

// --- configuration -------------------------------------------------------------

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) throw ConfigError("port must lie in [0, 65535]");
  if (backend != "builtin" && backend.rfind("http://", 0) != 0 && backend.rfind("https://", 0) != 0) {
    throw ConfigError("backend must be 'builtin' or an http(s) URL, got '" + backend + "'");
  }
  if (remote_timeout_ms < 1) throw ConfigError("remote_timeout_ms must be >= 1");
  if (remote_retries < 0) throw ConfigError("remote_retries must be >= 0");
  if (max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
  region_grow.validate();
  apg.validate();
}

Overrides env_overrides(const std::function<const char*(const char*)>& getenv) {
  static constexpr std::pair<const char*, const char*> kVars[] = {
      {"XANNOT_PORT", "port"},         {"XANNOT_HOST", "host"},         {"XANNOT_BACKEND", "backend"},
      {"XANNOT_DATA_ROOT", "data_root"}, {"XANNOT_TAXONOMY", "taxonomy"}, {"XANNOT_UI_DIR", "ui_dir"}};
  Overrides out;
  for (const auto& [var, key] : kVars) {
    if (const char* v = getenv(var); v != nullptr && *v != '\0') out[key] = v;
  }
  return out;
}

namespace {

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
}

void apply(ServiceConfig& c, const std::string& key, const std::string& value) {
  if (key == "port") c.port = parse_int(key, value);
  else if (key == "host") c.host = value;
  else if (key == "backend") c.backend = value;
  else if (key == "data_root") c.data_root = value;
  else if (key == "taxonomy") c.taxonomy_path = fs::path(value);
  else if (key == "ui_dir") c.ui_dir = fs::path(value);
  else if (key == "remote_timeout_ms") c.remote_timeout_ms = parse_int(key, value);
  else if (key == "remote_retries") c.remote_retries = parse_int(key, value);
  else if (key == "max_rounds") c.max_rounds = parse_int(key, value);
  else throw ConfigError("unknown service setting '" + key + "'");
}

}  // namespace

ServiceConfig resolve_config(const Overrides& flags, const Overrides& env, const json& file) {
  ServiceConfig c;
  if (!file.is_null()) {
    if (!file.is_object()) throw ConfigError("service config must be a JSON object");
    const json& section = file.contains("service") ? file["service"] : file;
    for (const auto& [key, value] : section.items()) {
      if (key == "region_grow") {
        c.region_grow.tolerance = value.value("tolerance", c.region_grow.tolerance);
        c.region_grow.max_region_fraction = value.value("max_region_fraction", c.region_grow.max_region_fraction);
      } else if (key == "apg") {
        c.apg.scale_low = value.value("scale_low", c.apg.scale_low);
        c.apg.scale_high = value.value("scale_high", c.apg.scale_high);
        c.apg.intensity_features = value.value("intensity_features", c.apg.intensity_features);
      } else if (key == "curation") {
        continue;
      } else {
        apply(c, key, value.is_string() ? value.get<std::string>() : value.dump());
      }
    }
  }
  for (const auto& [k, v] : env) apply(c, k, v);
  for (const auto& [k, v] : flags) apply(c, k, v);
  c.validate();
  return c;
}

int status_for(const std::exception& e) {
  if (dynamic_cast<const NotFoundError*>(&e)) return 404;
  if (dynamic_cast<const StateError*>(&e)) return 409;
  if (dynamic_cast<const BackendError*>(&e)) return 502;
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ConfigError*>(&e) ||
      dynamic_cast<const ShapeError*>(&e) || dynamic_cast<const CodecError*>(&e) ||
      dynamic_cast<const TaxonomyError*>(&e) || dynamic_cast<const json::exception*>(&e)) {
    return 400;
  }
  return 500;
}

// --- helpers -------------------------------------------------------------------

namespace {

json proposal_json(const backend::MaskProposal& p) {
  const datastore::RLEMask rle = datastore::rle_encode(binarize(p.mask));
  return {{"rle", rle.counts}, {"size", {rle.height, rle.width}}, {"score", p.score}};
}

json point_json(const backend::PointPrompt& p) { return {{"x", p.x}, {"y", p.y}, {"label", p.label}}; }

double require_number(const json& body, const char* key) {
  if (!body.contains(key) || !body[key].is_number()) {
    throw ValidationError(std::string("'") + key + "' must be a number");
  }
  const double v = body[key].get<double>();
  if (!std::isfinite(v)) throw ValidationError(std::string("'") + key + "' must be finite");
  return v;
}

datastore::RLEMask rle_from_body(const json& body, const datastore::ImageRecord& image) {
  if (!body.contains("rle") || !body["rle"].is_array()) throw ValidationError("'rle' must be an array of counts");
  datastore::RLEMask rle;
  rle.height = image.height;
  rle.width = image.width;
  if (body.contains("size")) {
    const auto& s = body["size"];
    if (!s.is_array() || s.size() != 2 || !s[0].is_number_integer() || !s[1].is_number_integer()) {
      throw ValidationError("'size' must be [H, W]");
    }
    rle.height = s[0].get<int>();
    rle.width = s[1].get<int>();
  }
  for (const auto& c : body["rle"]) {
    if (!c.is_number_integer() || c.get<std::int64_t>() < 0 || c.get<std::int64_t>() > 0xffffffffLL) {
      throw ValidationError("rle counts must be non-negative integers");
    }
    rle.counts.push_back(c.get<std::uint32_t>());
  }
  datastore::rle_validate(rle);
  return rle;
}

std::uint64_t double_bits(double v) { return std::bit_cast<std::uint64_t>(v); }

void check_name(const std::string& name, const char* what) {
  if (name.empty() || name.size() > 200) throw ValidationError(std::string(what) + " must be 1-200 characters");
  for (char c : name) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') {
      throw ValidationError(std::string(what) + " may only contain letters, digits, '-', '_' and '.'");
    }
  }
  if (name == "." || name == "..") throw ValidationError(std::string(what) + " may not be '.' or '..'");
}

}  // namespace

// --- service -------------------------------------------------------------------

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  config_.validate();
  datastore::Taxonomy taxonomy =
      config_.taxonomy_path ? datastore::Taxonomy::load(*config_.taxonomy_path) : datastore::Taxonomy::builtin();
  store_ = datastore::AnnotationStore::open(config_.data_root, {config_.max_rounds}, std::move(taxonomy));

  // Jobs left queued or running by a previous process resume in FIFO order.
  for (auto job : store_->unfinished_jobs()) {
    if (job.status == "running") {
      job.status = "queued";
      store_->update_job(job);
    }
    queue_.push_back(job.id);
  }
  worker_ = std::thread([this] { worker_loop(); });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(jobs_mutex_);
    stopping_ = true;
  }
  jobs_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

std::unique_ptr<backend::SegmentationOracle> Service::make_oracle(const std::string& backend) const {
  if (backend == "builtin") return std::make_unique<backend::BuiltinOracle>(config_.region_grow);
  backend::RemoteConfig rc;
  rc.endpoint = backend;
  rc.timeout = std::chrono::milliseconds(config_.remote_timeout_ms);
  rc.retries = config_.remote_retries;
  return std::make_unique<backend::RemoteOracle>(rc);
}

Session& Service::session(const std::string& id) {
  auto [it, inserted] = sessions_.try_emplace(id);
  if (inserted) {
    it->second.id = id;
    it->second.backend = config_.backend;
  }
  return it->second;
}

json Service::list_images(const std::map<std::string, std::string>& query) {
  datastore::ImageFilter filter;
  if (auto it = query.find("split"); it != query.end() && !it->second.empty()) {
    filter.split = curation::split_from_string(it->second);
  }
  if (auto it = query.find("status"); it != query.end() && !it->second.empty()) {
    if (it->second != "annotated" && it->second != "unannotated") {
      throw ValidationError("status must be 'annotated' or 'unannotated'");
    }
    filter.status = it->second;
  }
  auto number = [&](const char* key, std::size_t fallback) -> std::size_t {
    auto it = query.find(key);
    if (it == query.end() || it->second.empty()) return fallback;
    const int v = parse_int(key, it->second);
    if (v < 0) throw ValidationError(std::string(key) + " must be >= 0");
    return static_cast<std::size_t>(v);
  };
  try {
    filter.offset = number("offset", 0);
    filter.limit = std::min<std::size_t>(number("limit", 100), 1000);
  } catch (const ConfigError& e) {
    throw ValidationError(e.what());
  }
  json images = json::array();
  for (const auto& p : store_->list_images(filter)) {
    json j = datastore::to_json(p.image);
    j["accepted"] = p.accepted;
    j["proposed"] = p.proposed;
    j["max_round"] = p.max_round;
    images.push_back(std::move(j));
  }
  return {{"images", std::move(images)},
          {"offset", filter.offset},
          {"limit", filter.limit},
          {"total", store_->image_count()}};
}

json Service::get_image(const std::string& id, bool with_bytes) {
  const datastore::ImageRecord rec = store_->get_image(id);
  json annotations = json::array();
  for (const auto& a : store_->annotations_for(id)) annotations.push_back(datastore::to_json(a));
  json out{{"image", datastore::to_json(rec)}, {"annotations", std::move(annotations)}};
  if (with_bytes) out["png_base64"] = io::base64_encode(store_->image_bytes(id));
  return out;
}

json Service::click(const std::string& session_id, const std::string& image_id, const json& body) {
  if (!body.is_object()) throw ValidationError("click body must be a JSON object");
  const double x = require_number(body, "x");
  const double y = require_number(body, "y");
  const bool reseed = body.contains("reseed") && body["reseed"].is_boolean() && body["reseed"].get<bool>();

  const datastore::ImageRecord rec = store_->get_image(image_id);
  if (!(x >= 0.0 && x < rec.width && y >= 0.0 && y < rec.height)) {
    throw ValidationError("click (" + std::to_string(x) + ", " + std::to_string(y) + ") lies outside the " +
                          std::to_string(rec.width) + "x" + std::to_string(rec.height) + " image");
  }
  auto image = std::make_shared<PseudoColorImage>(io::decode_png_rgb(store_->image_bytes(image_id)));

  std::string backend_name;
  std::uint64_t reseeds = 0;
  {
    std::lock_guard lock(sessions_mutex_);
    Session& s = session(session_id);
    if (reseed) ++s.reseeds;
    s.current_image = image_id;
    backend_name = s.backend;
    reseeds = s.reseeds;
  }
  std::uint64_t seed = mix_seed(fnv1a64(session_id), fnv1a64(image_id));
  seed = mix_seed(seed, mix_seed(double_bits(x), double_bits(y)));
  if (reseeds > 0) seed = mix_seed(seed, reseeds);

  auto oracle = make_oracle(backend_name);
  backend::OracleRequest request;
  request.image_id = image_id;
  request.image = image;
  request.width = rec.width;
  request.height = rec.height;
  apg::APGConfig cfg = config_.apg;
  cfg.rng_seed = seed;
  const backend::PointPrompt p0{x, y, 1};
  const apg::APGResult result = apg::generate(request, p0, *oracle, cfg);

  std::vector<backend::MaskProposal> proposals;
  if (result.mode == apg::Mode::degenerate) {
    proposals = result.initial_proposals;
  } else {
    request.points = {result.points.first, result.points.second};
    proposals = oracle->segment(request);
  }

  json apg{{"mode", apg::to_string(result.mode)},
           {"p0", point_json(p0)},
           {"points", {point_json(result.points.first), point_json(result.points.second)}},
           {"scales", {result.s_w, result.s_h}}};
  apg["bbox"] = result.b0 ? json{result.b0->x_min, result.b0->y_min, result.b0->x_max, result.b0->y_max} : json(nullptr);
  apg["box"] = result.box ? json{result.box->x0, result.box->y0, result.box->x1, result.box->y1} : json(nullptr);
  apg["centroids"] = result.c1 ? json{{result.c1->x, result.c1->y}, {result.c2->x, result.c2->y}} : json(nullptr);

  json props = json::array();
  for (const auto& p : proposals) props.push_back(proposal_json(p));
  json out{{"image_id", image_id},
           {"seed", std::to_string(seed)},
           {"backend", backend_name},
           {"apg", std::move(apg)},
           {"proposals", props},
           {"best", proposals.empty() ? json(nullptr) : json(backend::select_best_index(proposals))}};
  {
    std::lock_guard lock(sessions_mutex_);
    session(session_id).pending[image_id] = std::move(props);
  }
  return out;
}

json Service::annotate(const std::string& session_id, const std::string& image_id, const json& body) {
  if (!body.is_object()) throw ValidationError("annotation body must be a JSON object");
  if (!body.contains("action") || !body["action"].is_string()) {
    throw ValidationError("'action' must be one of propose, accept, correct");
  }
  const std::string action = body["action"].get<std::string>();
  const datastore::ImageRecord rec = store_->get_image(image_id);

  std::optional<std::int64_t> predecessor;
  if (body.contains("predecessor") && !body["predecessor"].is_null()) {
    if (!body["predecessor"].is_number_integer()) throw ValidationError("'predecessor' must be an annotation id");
    predecessor = body["predecessor"].get<std::int64_t>();
    if (store_->get_annotation(*predecessor).image_id != image_id) {
      throw NotFoundError("annotation " + std::to_string(*predecessor) + " does not belong to image '" + image_id + "'");
    }
  }
  auto category = [&]() -> std::string {
    if (!body.contains("category") || !body["category"].is_string()) throw ValidationError("'category' is required");
    return body["category"].get<std::string>();
  };
  int round = 1;
  if (body.contains("round")) {
    if (!body["round"].is_number_integer()) throw ValidationError("'round' must be an integer");
    round = body["round"].get<int>();
  }

  datastore::Annotation a;
  if (action == "propose") {
    a = store_->propose(image_id, rle_from_body(body, rec), category(), round);
  } else if (action == "accept") {
    if (predecessor) {
      const datastore::Annotation target = store_->get_annotation(*predecessor);
      if (body.contains("rle") && !(rle_from_body(body, rec) == target.rle)) {
        throw ValidationError("accept keeps the stored mask; send action 'correct' to change it");
      }
      a = store_->accept(*predecessor);
    } else {
      const datastore::RLEMask rle = rle_from_body(body, rec);
      bool from_model = false;
      {
        std::lock_guard lock(sessions_mutex_);
        Session& s = session(session_id);
        if (auto it = s.pending.find(image_id); it != s.pending.end()) {
          for (const auto& p : it->second) {
            if (p["rle"].get<std::vector<std::uint32_t>>() == rle.counts) from_model = true;
          }
        }
      }
      a = store_->accept_new(image_id, rle, category(), from_model, round);
      std::lock_guard lock(sessions_mutex_);
      session(session_id).pending.erase(image_id);
    }
  } else if (action == "correct") {
    if (!predecessor) throw ValidationError("'correct' needs a predecessor annotation id");
    const bool new_round = body.contains("new_round") && body["new_round"].is_boolean() && body["new_round"].get<bool>();
    a = store_->correct(*predecessor, rle_from_body(body, rec), category(), new_round);
  } else {
    throw ValidationError("'action' must be one of propose, accept, correct");
  }
  return {{"id", a.id}, {"round", a.round}, {"status", datastore::to_string(a.status)},
          {"annotation", datastore::to_json(a)}};
}

json Service::taxonomy() const {
  json out = store_->taxonomy().to_json();
  out["class_count"] = store_->taxonomy().class_count();
  return out;
}

json Service::set_session_backend(const std::string& session_id, const json& body) {
  if (!body.is_object() || !body.contains("backend") || !body["backend"].is_string()) {
    throw ValidationError("'backend' must be 'builtin' or an http(s) URL");
  }
  ServiceConfig probe = config_;
  probe.backend = body["backend"].get<std::string>();
  try {
    probe.validate();
  } catch (const ConfigError& e) {
    throw ValidationError(e.what());
  }
  std::lock_guard lock(sessions_mutex_);
  Session& s = session(session_id);
  s.backend = probe.backend;
  return {{"session", s.id}, {"backend", s.backend}};
}

json Service::start_curation(const json& body) {
  if (!body.is_object()) throw ValidationError("curation body must be a JSON object");
  const json config = body.value("config", json::object());
  try {
    curation::config_from_json(config.dump()).validate();
  } catch (const ConfigError& e) {
    throw ValidationError(e.what());
  }
  const std::string in = body.contains("in") && body["in"].is_string() ? body["in"].get<std::string>()
                                                                         : (config_.data_root / "incoming").string();
  const std::string id = store_->create_job("curation", {{"config", config}, {"in", in}});
  {
    std::lock_guard lock(jobs_mutex_);
    queue_.push_back(id);
  }
  jobs_cv_.notify_one();
  return {{"job_id", id}, {"status", "queued"}};
}

json Service::job(const std::string& id) {
  const auto job = store_->find_job(id);
  if (!job) throw NotFoundError("unknown job '" + id + "'");
  json out{{"id", job->id}, {"kind", job->kind}, {"status", job->status}, {"params", job->params}};
  out["report"] = job->report_path.empty() ? json(nullptr) : json(job->report_path);
  out["error"] = job->error.empty() ? json(nullptr) : json(job->error);
  return out;
}

json Service::eval_report(const std::string& run) {
  check_name(run, "run name");
  const fs::path path = config_.data_root / "eval" / (run + ".txt");
  if (!fs::exists(path)) throw NotFoundError("no evaluation report for run '" + run + "'");
  return eval::parse_report_summary(io::read_text(path));
}

void Service::worker_loop() {
  while (true) {
    std::string id;
    {
      std::unique_lock lock(jobs_mutex_);
      jobs_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
      job_running_ = true;
    }
    if (auto job = store_->find_job(id)) run_job(*job);
    {
      std::lock_guard lock(jobs_mutex_);
      job_running_ = false;
    }
    jobs_idle_cv_.notify_all();
  }
}

void Service::run_job(datastore::Job job) {
  job.status = "running";
  store_->update_job(job);
  try {
    const curation::FilterConfig cfg = curation::config_from_json(job.params.value("config", json::object()).dump());
    const fs::path in = job.params.at("in").get<std::string>();
    if (!fs::is_directory(in)) throw IoError("curation input directory not found: " + in.string());
    const auto records = curation::curate_directory(in, cfg);
    const fs::path report = config_.data_root / "reports" / (job.id + ".jsonl");
    io::write_text(report, curation::format_report(records, cfg));
    job.status = "done";
    job.report_path = report.string();
  } catch (const std::exception& e) {
    job.status = "failed";
    job.error = e.what();
  }
  store_->update_job(job);
}

void Service::drain_jobs() {
  std::unique_lock lock(jobs_mutex_);
  jobs_idle_cv_.wait(lock, [this] { return queue_.empty() && !job_running_; });
}

// --- HTTP ----------------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("request body is not valid JSON: ") + e.what());
  }
}

std::string session_of(const httplib::Request& req) {
  const std::string s = req.get_header_value("X-Session-Id");
  return s.empty() ? "default" : s;
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const std::exception& e) {
      const int status = status_for(e);
      json body{{"error", e.what()}, {"status", status}};
      if (const auto* be = dynamic_cast<const BackendError*>(&e)) body["kind"] = to_string(be->kind());
      send_json(res, status, body);
    }
  };
}

}  // namespace

void Service::install_routes() {
  auto& s = *server_;
  s.Get("/health", guarded([](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  }));
  s.Get("/images", guarded([this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query[k] = v;
    send_json(res, 200, list_images(query));
  }));
  s.Get(R"(/images/([^/]+)/image\.png)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const io::Bytes bytes = store_->image_bytes(req.matches[1]);
    res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
  }));
  s.Get(R"(/images/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, get_image(req.matches[1], true));
  }));
  s.Post(R"(/images/([^/]+)/click)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, click(session_of(req), req.matches[1], parse_body(req)));
  }));
  s.Post(R"(/images/([^/]+)/annotations)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 201, annotate(session_of(req), req.matches[1], parse_body(req)));
  }));
  s.Get("/taxonomy", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, taxonomy());
  }));
  s.Post("/session", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, set_session_backend(session_of(req), parse_body(req)));
  }));
  s.Post("/curation/run", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 202, start_curation(parse_body(req)));
  }));
  s.Get(R"(/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, job(req.matches[1]));
  }));
  s.Get("/eval/report", guarded([this](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("run")) throw ValidationError("query parameter 'run' is required");
    send_json(res, 200, eval_report(req.get_param_value("run")));
  }));
  if (config_.ui_dir && fs::is_directory(*config_.ui_dir)) {
    s.set_mount_point("/ui", config_.ui_dir->string());
    s.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/ui/"); });
  }
  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send_json(res, res.status, {{"error", httplib::status_message(res.status)}, {"status", res.status}});
  });
}

int Service::start() {
  if (server_) throw StateError("service already started");
  server_ = std::make_unique<httplib::Server>();
  install_routes();
  int port = config_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(config_.host);
  } else if (!server_->bind_to_port(config_.host, port)) {
    port = -1;
  }
  if (port < 0) {
    server_.reset();
    throw IoError("cannot bind " + config_.host + ":" + std::to_string(config_.port));
  }
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void Service::wait() {
  if (server_thread_.joinable()) server_thread_.join();
}

void Service::stop() {
  if (server_) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
  server_.reset();
}

}  // namespace xannot::service
