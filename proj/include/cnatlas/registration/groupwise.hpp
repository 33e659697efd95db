#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cnatlas/core/geometry.hpp"

namespace cnatlas::registration {

enum class Dof { rigid, similarity, affine };

std::string_view dof_name(Dof dof);
Dof parse_dof(std::string_view name);  // throws InvalidConfig

struct RegistrationConfig {
  std::vector<double> sigma_schedule{20.0, 10.0, 5.0, 2.0};  // mm, strictly decreasing
  std::size_t points_per_fiber = 5;
  std::size_t fibers_per_subject = 2000;
  Dof dof = Dof::affine;
  std::size_t max_iters_per_level = 50;  // sweeps
  double convergence_tol = 1e-4;          // relative objective improvement per sweep
  double min_step_mm = 0.05;
  std::uint64_t seed = 0;
  /// Sampled fibers with fewer than `min_neighbors` other sampled fibers of
  /// the same subject within `isolation_radius_mm` are left out of the
  /// objective. 0 disables the filter.
  std::size_t min_neighbors = 0;
  double isolation_radius_mm = 5.0;

  /// Throws InvalidConfig.
  void validate() const;
};

struct TraceEntry {
  std::size_t level = 0;
  double sigma = 0.0;
  std::size_t sweep = 0;
  int subject = -1;    // -1 for gauge renormalization
  int parameter = -1;
  double step_mm = 0.0;
  double before = 0.0;
  double after = 0.0;
  bool gauge = false;
};

struct GroupRegistrationResult {
  std::vector<AffineTransform> transforms;  // subject -> common space
  double final_objective = 0.0;
  std::vector<TraceEntry> trace;
  std::vector<double> level_objectives;  // objective at the end of each level
};

/// Negative log kernel-density cross-likelihood: for each fiber of each
/// subject, -log of the mean exp(-d^2/sigma^2) against every fiber of the
/// other subjects (pointwise-mean distance after transforming both). Fibers
/// must share one point count. Throws EmptySubject / ArityError /
/// PointCountMismatch.
double registration_objective(std::span<const Tractogram> subjects,
                              std::span<const AffineTransform> transforms, double sigma);

/// Coarse-to-fine coordinate-descent groupwise registration. Subjects are
/// length-agnostic here: callers filter and the routine subsamples
/// `fibers_per_subject` per subject and resamples to `points_per_fiber`.
GroupRegistrationResult groupwise_affine_register(std::span<const Tractogram> subjects,
                                                  const RegistrationConfig& cfg);

/// Registers `moving` onto the fixed set `reference` using the same objective
/// with the reference held at identity.
GroupRegistrationResult register_to_reference(const Tractogram& moving, const Tractogram& reference,
                                              const RegistrationConfig& cfg);

std::vector<Tractogram> apply_group_transforms(std::span<const Tractogram> subjects,
                                               const GroupRegistrationResult& result);

/// Pools subjects into one atlas-space tractogram with fresh sequential ids;
/// each fiber's origin records its subject id and original id.
Tractogram concatenate_subjects(std::span<const Tractogram> subjects);

/// Mean of log|det L| over the transforms' linear parts.
double mean_log_determinant(std::span<const AffineTransform> transforms);

}  // namespace cnatlas::registration
