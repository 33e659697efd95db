#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "cnatlas/atlas/atlas.hpp"

namespace httplib {
class Server;
}

namespace cnatlas::service {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string cors_origin = "http://localhost:5173";
  std::uint64_t decimation_seed = 0;
  std::size_t default_decimate = 100;
  std::size_t max_transfer_points = 30;
  std::function<std::string()> clock = atlas::utc_timestamp;
};

struct Reply {
  int status = 200;
  nlohmann::json body;
};

/// Label review backend over one atlas directory. Handlers are callable
/// directly; serve() exposes them over HTTP.
class ReviewService {
 public:
  /// Loads the atlas at `atlas_dir`; an empty path starts without an atlas
  /// and every endpoint answers 503.
  explicit ReviewService(std::filesystem::path atlas_dir, ServiceOptions options = {});
  ~ReviewService();

  Reply list_clusters(std::size_t offset, std::optional<std::size_t> limit) const;
  Reply geometry(std::int64_t cluster_id, std::optional<std::size_t> decimate) const;
  Reply post_label(std::int64_t cluster_id, const std::string& body);
  Reply progress() const;

  /// Binds the HTTP listener; port 0 picks a free port. Returns the bound port.
  int bind();
  /// Blocks until stop().
  void run();
  void stop();

 private:
  nlohmann::json summary(const atlas::FiberCluster& c) const;
  void install_routes();

  std::filesystem::path dir_;
  ServiceOptions options_;
  std::optional<atlas::Atlas> atlas_;
  mutable std::shared_mutex mutex_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace cnatlas::service
