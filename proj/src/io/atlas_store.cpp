#include "cnatlas/io/atlas_store.hpp"

#include <cstdio>
#include <set>

#include "cnatlas/core/error.hpp"
#include "cnatlas/io/bytes.hpp"
#include "cnatlas/io/matrix_blob.hpp"
#include "cnatlas/io/tck.hpp"

namespace cnatlas::io {
namespace fs = std::filesystem;
using nlohmann::json;
using atlas::Atlas;
using atlas::AtlasStageConfig;
using atlas::FiberCluster;
using atlas::LabelEvent;
using atlas::ReviewStatus;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kBasis = "embedding_basis.mat";
constexpr const char* kLandmarks = "landmarks.mat";
constexpr const char* kCentroids = "centroids.mat";
constexpr const char* kLabels = "labels.json";
constexpr const char* kAudit = "audit.jsonl";

std::string cluster_file(std::int64_t id) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "clusters/cluster_%05lld.tck", static_cast<long long>(id));
  return buf;
}

std::string_view kind_name(DistanceKind k) {
  return k == DistanceKind::pointwise_mean ? "pointwise_mean" : "mean_closest";
}

DistanceKind parse_kind(const std::string& s) {
  if (s == "pointwise_mean") return DistanceKind::pointwise_mean;
  if (s == "mean_closest") return DistanceKind::mean_closest;
  raise(ErrorCode::InvalidConfig, "unknown distance kind '" + s + "'");
}

ReviewStatus parse_status(const std::string& s) {
  if (s == "pending") return ReviewStatus::pending;
  if (s == "ambiguous") return ReviewStatus::ambiguous;
  if (s == "reviewed") return ReviewStatus::reviewed;
  raise(ErrorCode::CorruptAtlas, "unknown review status '" + s + "'");
}

ClusterLabel parse_label_or_throw(const std::string& s, ErrorCode code) {
  const auto l = parse_label(s);
  if (!l) raise(code, "unknown label '" + s + "'");
  return *l;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd json_vector(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

LabelEvent label_event_from_json(const json& j) {
  LabelEvent e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.cluster = j.at("cluster").get<std::int64_t>();
  e.label = parse_label_or_throw(j.at("label").get<std::string>(), ErrorCode::CorruptAtlas);
  e.status = parse_status(j.at("status").get<std::string>());
  e.rater = j.at("rater").get<std::string>();
  e.timestamp = j.at("timestamp").get<std::string>();
  return e;
}

std::string audit_lines(const std::vector<LabelEvent>& events) {
  std::string out;
  for (const auto& e : events) out += label_event_to_json(e).dump() + "\n";
  return out;
}

std::vector<LabelEvent> parse_audit(const std::string& text) {
  std::vector<LabelEvent> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) break;  // torn final append: never acknowledged
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      out.push_back(label_event_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      raise(ErrorCode::CorruptAtlas, std::string("malformed audit entry: ") + e.what());
    }
  }
  return out;
}

void replay(Atlas& a, const LabelEvent& e) {
  FiberCluster* c = a.find(e.cluster);
  if (c == nullptr) raise(ErrorCode::CorruptAtlas, "audit entry names unknown cluster " + std::to_string(e.cluster));
  c->label = e.label;
  c->status = e.status;
}

}  // namespace

json label_event_to_json(const LabelEvent& e) {
  return json{{"seq", e.seq},
              {"cluster", e.cluster},
              {"label", std::string(label_name(e.label))},
              {"status", std::string(atlas::status_name(e.status))},
              {"rater", e.rater},
              {"timestamp", e.timestamp}};
}

json labels_to_json(const Atlas& a) {
  json clusters = json::array();
  for (const auto& c : a.clusters) {
    json cand = json::array();
    for (ClusterLabel l : c.candidates) cand.push_back(std::string(label_name(l)));
    clusters.push_back({{"id", c.id},
                        {"label", std::string(label_name(c.label))},
                        {"status", std::string(atlas::status_name(c.status))},
                        {"candidates", cand}});
  }
  return json{{"version", kAtlasFormatVersion},
              {"last_seq", a.audit.empty() ? 0 : a.audit.back().seq},
              {"clusters", clusters}};
}

json stage_config_to_json(const AtlasStageConfig& c) {
  return json{{"K", c.k},
              {"outlier_std", c.outlier_std},
              {"outlier_iterations", c.outlier_iterations},
              {"sample_per_subject", c.sample_per_subject},
              {"min_length_mm", c.min_length_mm},
              {"seed", c.seed},
              {"sigma", c.affinity.sigma},
              {"distance", std::string(kind_name(c.affinity.kind))},
              {"points", c.affinity.points},
              {"embedding_dim", c.embedding_dim},
              {"landmarks", c.landmarks}};
}

AtlasStageConfig stage_config_from_json(const json& j, const AtlasStageConfig& defaults) {
  static const std::set<std::string> known = {"K",     "outlier_std", "outlier_iterations", "sample_per_subject",
                                              "min_length_mm", "seed", "sigma", "distance", "points",
                                              "embedding_dim", "landmarks"};
  if (!j.is_object()) raise(ErrorCode::InvalidConfig, "stage config must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) raise(ErrorCode::InvalidConfig, "unknown stage config key '" + key + "'");
  }
  if (!j.contains("seed")) raise(ErrorCode::InvalidConfig, "stage config requires an explicit 'seed'");
  AtlasStageConfig c = defaults;
  try {
    if (j.contains("K")) c.k = j["K"].get<std::size_t>();
    if (j.contains("outlier_std")) c.outlier_std = j["outlier_std"].get<double>();
    if (j.contains("outlier_iterations")) c.outlier_iterations = j["outlier_iterations"].get<std::size_t>();
    if (j.contains("sample_per_subject")) c.sample_per_subject = j["sample_per_subject"].get<std::size_t>();
    if (j.contains("min_length_mm")) c.min_length_mm = j["min_length_mm"].get<double>();
    c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("sigma")) c.affinity.sigma = j["sigma"].get<double>();
    if (j.contains("distance")) c.affinity.kind = parse_kind(j["distance"].get<std::string>());
    if (j.contains("points")) c.affinity.points = j["points"].get<std::size_t>();
    if (j.contains("embedding_dim")) c.embedding_dim = j["embedding_dim"].get<std::size_t>();
    if (j.contains("landmarks")) c.landmarks = j["landmarks"].get<std::size_t>();
  } catch (const json::exception& e) {
    raise(ErrorCode::InvalidConfig, std::string("stage config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_atlas(const Atlas& a, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "clusters", ec);
  if (ec) raise(ErrorCode::IoError, "cannot create atlas directory " + dir.string() + ": " + ec.message());
  // Stale cluster files from an earlier save would be confusing; clear them.
  for (const auto& entry : fs::directory_iterator(dir / "clusters")) fs::remove(entry.path(), ec);

  const auto& e = a.embedding;
  const auto m = static_cast<Eigen::Index>(e.landmarks.size());
  const auto t = static_cast<Eigen::Index>(e.dimension());
  const std::size_t p = e.landmarks.empty() ? e.params.points : e.landmarks.front().size();

  Eigen::MatrixXd basis(m, 2 + t);
  if (m > 0) {
    basis.col(0) = e.degree_weights;
    basis.col(1) = e.landmark_degrees;
    basis.rightCols(t) = e.basis;
  }
  Eigen::MatrixXd landmarks(m, static_cast<Eigen::Index>(3 * p));
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& f = e.landmarks[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < p; ++k) {
      landmarks(i, static_cast<Eigen::Index>(3 * k)) = f[k].x;
      landmarks(i, static_cast<Eigen::Index>(3 * k + 1)) = f[k].y;
      landmarks(i, static_cast<Eigen::Index>(3 * k + 2)) = f[k].z;
    }
  }
  Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(a.clusters.size()), t);
  for (std::size_t c = 0; c < a.clusters.size(); ++c) {
    if (a.clusters[c].centroid.size() == t) centroids.row(static_cast<Eigen::Index>(c)) = a.clusters[c].centroid;
  }

  json files = json::object();
  auto put = [&](const std::string& name, const std::string& bytes) {
    write_file_atomic(dir / name, bytes);
    files[name] = sha256_hex(bytes);
  };
  put(kBasis, encode_matrix(basis));
  put(kLandmarks, encode_matrix(landmarks));
  put(kCentroids, encode_matrix(centroids));

  json clusters = json::array();
  for (const auto& c : a.clusters) {
    Tractogram members;
    members.subject_id = "cluster_" + std::to_string(c.id);
    members.space = SpaceTag::atlas;
    json origins = json::array();
    for (std::size_t k = 0; k < c.members.size(); ++k) {
      const Streamline& s = a.fibers.streamlines.at(c.members[k]);
      members.streamlines.push_back({static_cast<std::int64_t>(k), s.points, {}});
      origins.push_back(json::array({s.origin.subject, s.origin.id}));
    }
    const std::string name = cluster_file(c.id);
    put(name, encode_tck(members));
    clusters.push_back({{"id", c.id}, {"pruned", c.pruned}, {"file", name}, {"members", origins}});
  }

  json manifest{
      {"format", "cnatlas-atlas"},
      {"version", kAtlasFormatVersion},
      {"stage", std::string(atlas::stage_name(a.stage))},
      {"screened", a.screened},
      {"stage1", stage_config_to_json(a.stage1)},
      {"stage2", a.stage2 ? stage_config_to_json(*a.stage2) : json(nullptr)},
      {"embedding",
       {{"sigma", e.params.sigma},
        {"distance", std::string(kind_name(e.params.kind))},
        {"points", e.params.points},
        {"dimension", e.dimension()},
        {"landmark_count", e.landmark_count()},
        {"landmark_ids", e.landmark_ids},
        {"rank_reduced", e.rank_reduced},
        {"eigenvalues", vector_json(e.eigenvalues)},
        {"spectrum", vector_json(e.spectrum)}}},
      {"presets", presets_to_json(a.presets)},
      {"bspline",
       {{"grid", a.bspline.grid}, {"sigma_schedule", a.bspline.sigma_schedule}, {"status", a.bspline.status}}},
      {"clusters", clusters},
      {"files", files}};
  write_file_atomic(dir / kLabels, dump(labels_to_json(a)));
  write_file_atomic(dir / kAudit, audit_lines(a.audit));
  write_file_atomic(dir / kManifest, dump(manifest));
}

Atlas load_atlas(const fs::path& dir) {
  if (!fs::exists(dir / kManifest)) raise(ErrorCode::IoError, "no atlas manifest in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(read_file(dir / kManifest));
  } catch (const json::exception& e) {
    raise(ErrorCode::CorruptAtlas, std::string("manifest is not valid JSON: ") + e.what());
  }

  Atlas a;
  try {
    if (manifest.at("format").get<std::string>() != "cnatlas-atlas") {
      raise(ErrorCode::CorruptAtlas, "manifest format tag mismatch");
    }
    const int version = manifest.at("version").get<int>();
    if (version != kAtlasFormatVersion) {
      raise(ErrorCode::VersionError, "atlas format version " + std::to_string(version) + " is not supported (expected " +
                                         std::to_string(kAtlasFormatVersion) + ")");
    }

    std::map<std::string, std::string> blobs;
    for (const auto& [name, sum] : manifest.at("files").items()) {
      const fs::path path = dir / name;
      if (!fs::exists(path)) raise(ErrorCode::CorruptAtlas, "inventoried file missing: " + name);
      std::string bytes = read_file(path);
      if (sha256_hex(bytes) != sum.get<std::string>()) raise(ErrorCode::CorruptAtlas, "checksum mismatch: " + name);
      blobs.emplace(name, std::move(bytes));
    }
    auto blob = [&](const std::string& name) -> const std::string& {
      const auto it = blobs.find(name);
      if (it == blobs.end()) raise(ErrorCode::CorruptAtlas, "file not inventoried: " + name);
      return it->second;
    };

    const std::string stage = manifest.at("stage").get<std::string>();
    if (stage != "initial" && stage != "enhanced") raise(ErrorCode::CorruptAtlas, "unknown stage '" + stage + "'");
    a.stage = stage == "initial" ? atlas::AtlasStage::initial : atlas::AtlasStage::enhanced;
    a.screened = manifest.at("screened").get<bool>();
    a.stage1 = stage_config_from_json(manifest.at("stage1"), AtlasStageConfig{});
    if (!manifest.at("stage2").is_null()) a.stage2 = stage_config_from_json(manifest.at("stage2"), AtlasStageConfig{});

    const json& ej = manifest.at("embedding");
    auto& e = a.embedding;
    e.params.sigma = ej.at("sigma").get<double>();
    e.params.kind = parse_kind(ej.at("distance").get<std::string>());
    e.params.points = ej.at("points").get<std::size_t>();
    const auto t = static_cast<Eigen::Index>(ej.at("dimension").get<std::size_t>());
    const auto m = static_cast<Eigen::Index>(ej.at("landmark_count").get<std::size_t>());
    e.landmark_ids = ej.at("landmark_ids").get<std::vector<std::int64_t>>();
    e.rank_reduced = ej.at("rank_reduced").get<bool>();
    e.eigenvalues = json_vector(ej.at("eigenvalues"));
    e.spectrum = json_vector(ej.at("spectrum"));

    const Eigen::MatrixXd basis = decode_matrix(blob(kBasis));
    const Eigen::MatrixXd landmarks = decode_matrix(blob(kLandmarks));
    const Eigen::MatrixXd centroids = decode_matrix(blob(kCentroids));
    const auto p = static_cast<Eigen::Index>(e.params.points);
    if (basis.rows() != m || basis.cols() != 2 + t || landmarks.rows() != m || landmarks.cols() != 3 * p ||
        e.eigenvalues.size() != t || static_cast<Eigen::Index>(e.landmark_ids.size()) != m) {
      raise(ErrorCode::CorruptAtlas, "embedding matrices disagree with the manifest");
    }
    e.degree_weights = basis.col(0);
    e.landmark_degrees = basis.col(1);
    e.basis = basis.rightCols(t);
    for (Eigen::Index i = 0; i < m; ++i) {
      std::vector<Point3> f(static_cast<std::size_t>(p));
      for (Eigen::Index k = 0; k < p; ++k) {
        f[static_cast<std::size_t>(k)] = {landmarks(i, 3 * k), landmarks(i, 3 * k + 1), landmarks(i, 3 * k + 2)};
      }
      e.landmarks.push_back(std::move(f));
    }

    a.presets = presets_from_json(manifest.at("presets"));
    const json& bj = manifest.at("bspline");
    a.bspline.grid = bj.at("grid").get<std::array<int, 3>>();
    a.bspline.sigma_schedule = bj.at("sigma_schedule").get<std::vector<double>>();
    a.bspline.status = bj.at("status").get<std::string>();

    const json& cj = manifest.at("clusters");
    if (centroids.rows() != static_cast<Eigen::Index>(cj.size()) || centroids.cols() != t) {
      raise(ErrorCode::CorruptAtlas, "centroid matrix disagrees with the cluster table");
    }
    a.fibers.subject_id = "atlas";
    a.fibers.space = SpaceTag::atlas;
    for (std::size_t ci = 0; ci < cj.size(); ++ci) {
      FiberCluster c;
      c.id = cj[ci].at("id").get<std::int64_t>();
      c.pruned = cj[ci].at("pruned").get<bool>();
      c.centroid = centroids.row(static_cast<Eigen::Index>(ci));
      const Tractogram members = parse_tck(blob(cj[ci].at("file").get<std::string>()));
      const json& origins = cj[ci].at("members");
      if (origins.size() != members.size()) raise(ErrorCode::CorruptAtlas, "member table disagrees with cluster file");
      for (std::size_t k = 0; k < members.size(); ++k) {
        Streamline s = members.streamlines[k];
        s.id = static_cast<std::int64_t>(a.fibers.size());
        s.origin = {origins[k].at(0).get<std::string>(), origins[k].at(1).get<std::int64_t>()};
        c.members.push_back(a.fibers.size());
        a.fibers.streamlines.push_back(std::move(s));
      }
      a.clusters.push_back(std::move(c));
    }

    // Mutable label state: snapshot first, then newer audit entries.
    const json labels = json::parse(read_file(dir / kLabels));
    if (labels.at("version").get<int>() != kAtlasFormatVersion) {
      raise(ErrorCode::VersionError, "labels.json version mismatch");
    }
    const std::uint64_t last_seq = labels.at("last_seq").get<std::uint64_t>();
    const json& lc = labels.at("clusters");
    if (lc.size() != a.clusters.size()) raise(ErrorCode::CorruptAtlas, "labels.json cluster count mismatch");
    for (std::size_t ci = 0; ci < lc.size(); ++ci) {
      FiberCluster& c = a.clusters[ci];
      if (lc[ci].at("id").get<std::int64_t>() != c.id) raise(ErrorCode::CorruptAtlas, "labels.json id order mismatch");
      c.label = parse_label_or_throw(lc[ci].at("label").get<std::string>(), ErrorCode::CorruptAtlas);
      c.status = parse_status(lc[ci].at("status").get<std::string>());
      for (const auto& l : lc[ci].at("candidates")) {
        c.candidates.push_back(parse_label_or_throw(l.get<std::string>(), ErrorCode::CorruptAtlas));
      }
    }
    if (fs::exists(dir / kAudit)) a.audit = parse_audit(read_file(dir / kAudit));
    for (const auto& ev : a.audit) {
      if (ev.seq > last_seq) replay(a, ev);
    }
  } catch (const json::exception& ex) {
    raise(ErrorCode::CorruptAtlas, std::string("atlas metadata malformed: ") + ex.what());
  }
  return a;
}

void persist_last_label(const Atlas& a, const fs::path& dir) {
  if (a.audit.empty()) return;
  append_file_durable(dir / kAudit, label_event_to_json(a.audit.back()).dump() + "\n");
  write_file_atomic(dir / kLabels, dump(labels_to_json(a)));
}

}  // namespace cnatlas::io
