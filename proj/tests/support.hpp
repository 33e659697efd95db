#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "cnatlas/core/geometry.hpp"
#include "cnatlas/core/random.hpp"

namespace cnatlas::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cnatlas_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Straight fiber from `a` to `b` with `n` evenly spaced points.
inline Streamline line(std::int64_t id, const Point3& a, const Point3& b, std::size_t n = 10) {
  Streamline s;
  s.id = id;
  for (std::size_t k = 0; k < n; ++k) {
    const double u = static_cast<double>(k) / static_cast<double>(n - 1);
    s.points.push_back(a + (b - a) * u);
  }
  return s;
}

/// Random tractogram whose coordinates are exactly representable in float32.
inline Tractogram random_tractogram(Rng& rng, std::size_t max_fibers = 20, std::size_t max_points = 30) {
  Tractogram t;
  const std::size_t n = rng.uniform_index(max_fibers + 1);
  for (std::size_t i = 0; i < n; ++i) {
    Streamline s;
    s.id = static_cast<std::int64_t>(i);
    const std::size_t p = 2 + rng.uniform_index(max_points - 1);
    Point3 cur{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)};
    for (std::size_t k = 0; k < p; ++k) {
      cur = cur + Point3{rng.uniform(0.5, 2), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      s.points.push_back({static_cast<float>(cur.x), static_cast<float>(cur.y), static_cast<float>(cur.z)});
    }
    t.streamlines.push_back(std::move(s));
  }
  return t;
}

}  // namespace cnatlas::testing
