#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "xannot/apg.hpp"
#include "xannot/backend.hpp"
#include "xannot/store.hpp"

namespace httplib {
class Server;
}

namespace xannot::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  /// 0 binds an ephemeral port.
  int port = 8080;
  /// "builtin" or the base URL of a remote segmenter.
  std::string backend = "builtin";
  std::filesystem::path data_root = "xannot-data";
  std::optional<std::filesystem::path> taxonomy_path;
  std::optional<std::filesystem::path> ui_dir;
  int remote_timeout_ms = 10000;
  int remote_retries = 0;
  int max_rounds = 5;
  backend::RegionGrowConfig region_grow;
  apg::APGConfig apg;

  void validate() const;
};

/// Keys accepted in the config file and as overrides: port, host, backend,
/// data_root, taxonomy, ui_dir, remote_timeout_ms, remote_retries, max_rounds.
using Overrides = std::map<std::string, std::string>;

/// Reads XANNOT_PORT, XANNOT_HOST, XANNOT_BACKEND, XANNOT_DATA_ROOT, XANNOT_TAXONOMY
/// and XANNOT_UI_DIR through `getenv`.
Overrides env_overrides(const std::function<const char*(const char*)>& getenv);

/// Precedence: flags > env > file > defaults. `file` may be empty.
ServiceConfig resolve_config(const Overrides& flags, const Overrides& env, const nlohmann::json& file);

struct Session {
  std::string id;
  std::optional<std::string> current_image;
  std::string backend;
  std::uint64_t reseeds = 0;
  /// Pending proposals per image, as RLE masks with scores.
  std::map<std::string, nlohmann::json> pending;
};

/// HTTP status for an exception thrown while serving a request.
int status_for(const std::exception& e);

class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  datastore::AnnotationStore& store() { return *store_; }
  const ServiceConfig& config() const noexcept { return config_; }

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Blocks until the server stops.
  void wait();
  void stop();

  // Route bodies, usable without HTTP. Each returns the JSON response body and
  // throws xannot::Error subclasses that status_for() maps to HTTP codes.
  nlohmann::json list_images(const std::map<std::string, std::string>& query);
  nlohmann::json get_image(const std::string& id, bool with_bytes);
  nlohmann::json click(const std::string& session_id, const std::string& image_id, const nlohmann::json& body);
  nlohmann::json annotate(const std::string& session_id, const std::string& image_id, const nlohmann::json& body);
  nlohmann::json taxonomy() const;
  nlohmann::json start_curation(const nlohmann::json& body);
  nlohmann::json job(const std::string& id);
  nlohmann::json eval_report(const std::string& run);
  nlohmann::json set_session_backend(const std::string& session_id, const nlohmann::json& body);

  /// Waits until the curation queue is empty.
  void drain_jobs();

 private:
  std::unique_ptr<backend::SegmentationOracle> make_oracle(const std::string& backend) const;
  Session& session(const std::string& id);
  void install_routes();
  void worker_loop();
  void run_job(datastore::Job job);

  ServiceConfig config_;
  std::unique_ptr<datastore::AnnotationStore> store_;
  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;

  std::mutex sessions_mutex_;
  std::map<std::string, Session> sessions_;

  std::mutex jobs_mutex_;
  std::condition_variable jobs_cv_;
  std::condition_variable jobs_idle_cv_;
  std::deque<std::string> queue_;
  bool job_running_ = false;
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace xannot::service
