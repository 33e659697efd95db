#include "cnatlas/service/review_service.hpp"

#include <charconv>
#include <mutex>

#include <httplib.h>

#include "cnatlas/core/error.hpp"
#include "cnatlas/core/random.hpp"
#include "cnatlas/core/streamline_ops.hpp"
#include "cnatlas/io/atlas_store.hpp"

namespace cnatlas::service {
using nlohmann::json;

namespace {

Reply error_reply(int status, const std::string& message) { return {status, json{{"error", message}}}; }

Reply no_atlas() { return error_reply(503, "no atlas loaded"); }

/// Parses a non-negative integer query parameter.
std::optional<std::size_t> size_param(const httplib::Request& req, const char* name, bool& bad) {
  if (!req.has_param(name)) return std::nullopt;
  const std::string v = req.get_param_value(name);
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (v.empty() || res.ec != std::errc{} || res.ptr != end) {
    bad = true;
    return std::nullopt;
  }
  return out;
}

/// Cluster id from a route match; out-of-range ids name no cluster.
std::optional<std::int64_t> id_param(const std::string& v) {
  std::int64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{}) return std::nullopt;
  return out;
}

}  // namespace

ReviewService::ReviewService(std::filesystem::path atlas_dir, ServiceOptions options)
    : dir_(std::move(atlas_dir)), options_(std::move(options)) {
  if (!dir_.empty()) atlas_ = io::load_atlas(dir_);
}

ReviewService::~ReviewService() = default;

json ReviewService::summary(const atlas::FiberCluster& c) const {
  double length = 0.0;
  Point3 center;
  std::size_t points = 0;
  for (std::size_t idx : c.members) {
    const Streamline& s = atlas_->fibers.streamlines[idx];
    length += streamline_length(s);
    for (const auto& p : s.points) center = center + p;
    points += s.points.size();
  }
  const double n = static_cast<double>(c.members.size());
  json centroid = points ? json::array({center.x / static_cast<double>(points), center.y / static_cast<double>(points),
                                        center.z / static_cast<double>(points)})
                         : json(nullptr);
  json candidates = json::array();
  for (ClusterLabel l : c.candidates) candidates.push_back(std::string(label_name(l)));
  return json{{"id", c.id},
              {"member_count", c.members.size()},
              {"mean_length_mm", c.members.empty() ? json(nullptr) : json(length / n)},
              {"centroid_mm", centroid},
              {"label", std::string(label_name(c.label))},
              {"status", std::string(atlas::status_name(c.status))},
              {"candidates", candidates},
              {"pruned", c.pruned}};
}

Reply ReviewService::list_clusters(std::size_t offset, std::optional<std::size_t> limit) const {
  std::shared_lock lock(mutex_);
  if (!atlas_) return no_atlas();
  const std::size_t total = atlas_->clusters.size();
  const std::size_t begin = std::min(offset, total);
  const std::size_t end = limit ? std::min(total, begin + *limit) : total;
  json items = json::array();
  for (std::size_t i = begin; i < end; ++i) items.push_back(summary(atlas_->clusters[i]));
  return {200, json{{"total", total}, {"offset", begin}, {"count", items.size()}, {"clusters", items}}};
}

Reply ReviewService::geometry(std::int64_t cluster_id, std::optional<std::size_t> decimate) const {
  std::shared_lock lock(mutex_);
  if (!atlas_) return no_atlas();
  const atlas::FiberCluster* c = atlas_->find(cluster_id);
  if (c == nullptr) return error_reply(404, "unknown cluster " + std::to_string(cluster_id));
  const std::size_t n = decimate.value_or(options_.default_decimate);
  const auto chosen = sample_indices(c->members.size(), n, mix_seed(options_.decimation_seed, static_cast<std::uint64_t>(cluster_id)));
  json fibers = json::array();
  json ids = json::array();
  for (std::size_t k : chosen) {
    const Streamline& s = atlas_->fibers.streamlines[c->members[k]];
    const std::size_t p = std::min(options_.max_transfer_points, s.points.size());
    json line = json::array();
    for (const auto& q : resample_points(s.points, p)) line.push_back(json::array({q.x, q.y, q.z}));
    fibers.push_back(std::move(line));
    ids.push_back(k);
  }
  return {200, json{{"id", cluster_id}, {"member_count", c->members.size()}, {"members", ids}, {"fibers", fibers}}};
}

Reply ReviewService::post_label(std::int64_t cluster_id, const std::string& body) {
  std::unique_lock lock(mutex_);
  if (!atlas_) return no_atlas();
  atlas::FiberCluster* c = atlas_->find(cluster_id);
  if (c == nullptr) return error_reply(404, "unknown cluster " + std::to_string(cluster_id));
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception&) {
    return error_reply(400, "body is not valid JSON");
  }
  if (!req.is_object() || !req.contains("label") || !req["label"].is_string()) {
    return error_reply(422, "body needs a string 'label'");
  }
  if (!req.contains("rater") || !req["rater"].is_string() || req["rater"].get<std::string>().empty()) {
    return error_reply(422, "body needs a non-empty string 'rater'");
  }
  const auto label = parse_label(req["label"].get<std::string>());
  if (!label || *label == ClusterLabel::unlabeled) {
    return error_reply(422, "unknown label '" + req["label"].get<std::string>() + "'");
  }

  const ClusterLabel old_label = c->label;
  const atlas::ReviewStatus old_status = c->status;
  atlas::apply_label(*atlas_, cluster_id, *label, req["rater"].get<std::string>(), options_.clock());
  try {
    io::persist_last_label(*atlas_, dir_);
  } catch (const std::exception& e) {
    atlas_->audit.pop_back();
    c->label = old_label;
    c->status = old_status;
    return error_reply(500, std::string("label not persisted: ") + e.what());
  }
  return {200, summary(*c)};
}

Reply ReviewService::progress() const {
  std::shared_lock lock(mutex_);
  if (!atlas_) return no_atlas();
  std::size_t labeled = 0;
  json per_label = json::object();
  for (ClusterLabel l : kNerveLabels) per_label[std::string(label_name(l))] = 0;
  per_label["rejected"] = 0;
  for (const auto& c : atlas_->clusters) {
    if (c.status == atlas::ReviewStatus::reviewed) ++labeled;
    if (is_nerve(c.label) || c.label == ClusterLabel::rejected) {
      per_label[std::string(label_name(c.label))] = per_label[std::string(label_name(c.label))].get<std::size_t>() + 1;
    }
  }
  json per_group = json::object();
  for (const auto& [g, n] : atlas::group_counts(*atlas_)) per_group[std::string(group_key(g))] = n;
  return {200, json{{"labeled", labeled},
                    {"total", atlas_->clusters.size()},
                    {"per_label", per_label},
                    {"per_group", per_group},
                    {"audit_entries", atlas_->audit.size()}}};
}

void ReviewService::install_routes() {
  auto& srv = *server_;
  const std::string origin = options_.cors_origin;
  auto send = [origin](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_content(r.body.dump(), "application/json");
  };
  srv.Options(R"(/api/.*)", [origin](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
  srv.Get("/api/clusters", [this, send](const httplib::Request& req, httplib::Response& res) {
    bool bad = false;
    const auto offset = size_param(req, "offset", bad);
    const auto limit = size_param(req, "limit", bad);
    if (bad) return send(res, error_reply(400, "offset and limit must be non-negative integers"));
    send(res, list_clusters(offset.value_or(0), limit));
  });
  srv.Get(R"(/api/clusters/(-?\d+)/geometry)", [this, send](const httplib::Request& req, httplib::Response& res) {
    bool bad = false;
    const auto n = size_param(req, "decimate", bad);
    if (bad) return send(res, error_reply(400, "decimate must be a non-negative integer"));
    const auto id = id_param(req.matches[1]);
    send(res, id ? geometry(*id, n) : error_reply(404, "unknown cluster"));
  });
  srv.Post(R"(/api/clusters/(-?\d+)/label)", [this, send](const httplib::Request& req, httplib::Response& res) {
    const auto id = id_param(req.matches[1]);
    send(res, id ? post_label(*id, req.body) : error_reply(404, "unknown cluster"));
  });
  srv.Get("/api/progress", [this, send](const httplib::Request&, httplib::Response& res) { send(res, progress()); });
}

int ReviewService::bind() {
  server_ = std::make_unique<httplib::Server>();
  install_routes();
  int port = options_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(options_.host);
    if (port < 0) raise(ErrorCode::IoError, "cannot bind " + options_.host);
  } else if (!server_->bind_to_port(options_.host, port)) {
    raise(ErrorCode::IoError, "cannot bind " + options_.host + ":" + std::to_string(port));
  }
  return port;
}

void ReviewService::run() {
  if (!server_) bind();
  server_->listen_after_bind();
}

void ReviewService::stop() {
  if (server_) server_->stop();
}

}  // namespace cnatlas::service
