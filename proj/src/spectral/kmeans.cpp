#include "cnatlas/spectral/kmeans.hpp"

#include <algorithm>
#include <limits>

#include "cnatlas/core/error.hpp"
#include "cnatlas/core/parallel.hpp"
#include "cnatlas/core/random.hpp"

namespace cnatlas::spectral {
namespace {

std::vector<std::size_t> plus_plus_seeds(const Eigen::MatrixXd& x, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::size_t> seeds;
  std::vector<std::uint8_t> chosen(n, 0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t next = static_cast<std::size_t>(rng.uniform_index(n));
  while (seeds.size() < k) {
    seeds.push_back(next);
    chosen[next] = 1;
    const Eigen::RowVectorXd c = x.row(static_cast<Eigen::Index>(next));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(static_cast<Eigen::Index>(i)) - c).squaredNorm());
      if (!chosen[i]) total += d2[i];
    }
    if (seeds.size() == k) break;
    if (total > 0.0) {
      const double r = rng.uniform01() * total;
      double acc = 0.0;
      next = n;
      std::size_t last = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        last = i;
        acc += d2[i];
        if (acc > r) {
          next = i;
          break;
        }
      }
      if (next == n) next = last;
    } else {
      // Every remaining point coincides with a seed.
      next = 0;
      while (chosen[next]) ++next;
    }
  }
  return seeds;
}

}  // namespace

Eigen::RowVectorXd normalized_mean(const Eigen::MatrixXd& rows, const std::vector<std::size_t>& members) {
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(rows.cols());
  for (std::size_t i : members) sum += rows.row(static_cast<Eigen::Index>(i));
  const double norm = sum.norm();
  return norm > 1e-300 ? Eigen::RowVectorXd(sum / norm) : sum;
}

std::vector<double> member_similarity(const Eigen::MatrixXd& rows, const std::vector<std::size_t>& members) {
  std::vector<double> out(members.size(), 1.0);
  if (members.size() < 2) return out;
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(rows.cols());
  for (std::size_t i : members) sum += rows.row(static_cast<Eigen::Index>(i));
  const double others = static_cast<double>(members.size() - 1);
  for (std::size_t m = 0; m < members.size(); ++m) {
    const auto r = rows.row(static_cast<Eigen::Index>(members[m]));
    out[m] = (r.dot(sum) - r.squaredNorm()) / others;
  }
  return out;
}

ClusteringResult kmeans_embedding(const Eigen::MatrixXd& x, std::size_t k, std::uint64_t seed,
                                  std::size_t max_iterations) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (k == 0) raise(ErrorCode::InvalidK, "K must be >= 1");
  if (k > n) raise(ErrorCode::InvalidK, "K=" + std::to_string(k) + " exceeds " + std::to_string(n) + " fibers");
  const auto ki = static_cast<Eigen::Index>(k);
  Rng rng(seed);

  ClusteringResult r;
  r.k = k;
  r.centroids.resize(ki, x.cols());
  const auto seeds = plus_plus_seeds(x, k, rng);
  for (std::size_t c = 0; c < k; ++c) r.centroids.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(seeds[c]));

  r.labels.assign(n, -1);
  std::vector<double> dist(n, 0.0);
  for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
    std::vector<std::uint8_t> changed(n, 0);
    parallel_for(n, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        const auto row = x.row(static_cast<Eigen::Index>(i));
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < ki; ++c) {
          const double d = (row - r.centroids.row(c)).squaredNorm();
          if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
          }
        }
        changed[i] = r.labels[i] != best;
        r.labels[i] = best;
        dist[i] = best_d;
      }
    });
    bool any_changed = false;
    for (auto c : changed) any_changed |= c != 0;

    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(r.labels[i])].push_back(i);
    for (std::size_t c = 0; c < k; ++c) {
      if (!members[c].empty()) continue;
      // Farthest point among clusters that can spare one.
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (members[static_cast<std::size_t>(r.labels[i])].size() < 2) continue;
        if (far == n || dist[i] > dist[far]) far = i;
      }
      if (far == n) break;
      auto& old = members[static_cast<std::size_t>(r.labels[far])];
      old.erase(std::find(old.begin(), old.end(), far));
      members[c].push_back(far);
      r.labels[far] = static_cast<int>(c);
      dist[far] = 0.0;
      any_changed = true;
    }
    for (std::size_t c = 0; c < k; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      Eigen::RowVectorXd mean = normalized_mean(x, members[c]);
      if (mean.norm() > 0.0) r.centroids.row(ci) = mean;
      else if (!members[c].empty()) r.centroids.row(ci) = x.row(static_cast<Eigen::Index>(members[c].front()));
    }
    if (!any_changed && r.iterations > 0) {
      r.converged = true;
      break;
    }
  }

  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(r.labels[i])].push_back(i);
  r.scores.assign(n, 1.0);
  for (std::size_t c = 0; c < k; ++c) {
    const auto s = member_similarity(x, members[c]);
    for (std::size_t m = 0; m < members[c].size(); ++m) r.scores[members[c][m]] = s[m];
  }
  return r;
}

}  // namespace cnatlas::spectral
