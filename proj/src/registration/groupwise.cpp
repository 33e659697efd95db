#include "cnatlas/registration/groupwise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cnatlas/core/error.hpp"
#include "cnatlas/core/parallel.hpp"
#include "cnatlas/core/random.hpp"
#include "cnatlas/core/streamline_ops.hpp"

namespace cnatlas::registration {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Log-sum-exp accumulator.
struct LogSum {
  double max = kNegInf;
  double sum = 0.0;

  void add(double x) {
    if (x <= max) {
      sum += std::exp(x - max);
    } else {
      sum = sum * std::exp(max - x) + 1.0;
      max = x;
    }
  }
  void merge(const LogSum& o) {
    if (o.max == kNegInf) return;
    if (max == kNegInf) {
      *this = o;
      return;
    }
    if (o.max <= max) {
      sum += o.sum * std::exp(o.max - max);
    } else {
      sum = sum * std::exp(max - o.max) + o.sum;
      max = o.max;
    }
  }
  double value() const { return max == kNegInf ? kNegInf : max + std::log(sum); }
};

/// Subjects as flat point arrays: fiber f of subject s occupies
/// points[s][f*p .. f*p+p).
struct PointSets {
  std::size_t p = 0;
  std::vector<std::vector<Point3>> points;

  std::size_t fibers(std::size_t s) const { return points[s].size() / p; }
  std::span<const Point3> fiber(std::size_t s, std::size_t f) const {
    return std::span<const Point3>(points[s]).subspan(f * p, p);
  }
  std::size_t total_fibers() const {
    std::size_t n = 0;
    for (std::size_t s = 0; s < points.size(); ++s) n += fibers(s);
    return n;
  }
};

std::vector<std::vector<Point3>> drop_isolated(std::vector<std::vector<Point3>> fibers, std::size_t min_neighbors,
                                               double radius) {
  const std::size_t n = fibers.size();
  std::vector<std::uint8_t> keep(n, 0);
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      std::size_t near = 0;
      for (std::size_t j = 0; j < n && near < min_neighbors; ++j) {
        if (j != i && pointwise_mean_distance(fibers[i], fibers[j]) <= radius) ++near;
      }
      keep[i] = near >= min_neighbors;
    }
  });
  std::vector<std::vector<Point3>> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) out.push_back(std::move(fibers[i]));
  }
  return out;
}

PointSets prepare(std::span<const Tractogram> subjects, const RegistrationConfig& cfg) {
  PointSets sets;
  sets.p = cfg.points_per_fiber;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const Tractogram sample = sample_tractogram(subjects[s], cfg.fibers_per_subject, mix_seed(cfg.seed, s));
    std::vector<std::vector<Point3>> fibers;
    for (const auto& f : sample.streamlines) fibers.push_back(resample_points(f.points, sets.p));
    if (cfg.min_neighbors > 0) fibers = drop_isolated(std::move(fibers), cfg.min_neighbors, cfg.isolation_radius_mm);
    if (fibers.empty()) {
      raise(ErrorCode::EmptySubject, "subject '" + subjects[s].subject_id + "' has no usable fibers");
    }
    std::vector<Point3> flat;
    flat.reserve(fibers.size() * sets.p);
    for (const auto& f : fibers) flat.insert(flat.end(), f.begin(), f.end());
    sets.points.push_back(std::move(flat));
  }
  return sets;
}

PointSets transformed(const PointSets& base, std::span<const AffineTransform> xs) {
  PointSets out = base;
  for (std::size_t s = 0; s < out.points.size(); ++s) {
    for (auto& q : out.points[s]) q = xs[s].apply(q);
  }
  return out;
}

double exponent(std::span<const Point3> a, std::span<const Point3> b, double inv_sigma2) {
  const double d = pointwise_mean_distance(a, b);
  return -d * d * inv_sigma2;
}

double full_objective(const PointSets& sets, double sigma) {
  const std::size_t S = sets.points.size();
  const std::size_t total = sets.total_fibers();
  const double inv_sigma2 = 1.0 / (sigma * sigma);
  std::vector<std::pair<std::size_t, std::size_t>> index;
  index.reserve(total);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t f = 0; f < sets.fibers(s); ++f) index.emplace_back(s, f);
  }
  std::vector<double> terms(total, 0.0);
  parallel_for(total, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto [s, f] = index[i];
      const auto fiber = sets.fiber(s, f);
      LogSum acc;
      std::size_t others = 0;
      for (std::size_t o = 0; o < S; ++o) {
        if (o == s) continue;
        for (std::size_t g = 0; g < sets.fibers(o); ++g) acc.add(exponent(fiber, sets.fiber(o, g), inv_sigma2));
        others += sets.fibers(o);
      }
      terms[i] = -(acc.value() - std::log(static_cast<double>(others)));
    }
  });
  return std::accumulate(terms.begin(), terms.end(), 0.0);
}

/// Objective restricted to what changes when only subject `s` moves.
class SubjectEvaluator {
 public:
  SubjectEvaluator(const PointSets& sets, std::size_t s, double sigma)
      : sets_(sets), s_(s), inv_sigma2_(1.0 / (sigma * sigma)) {
    const std::size_t S = sets.points.size();
    for (std::size_t o = 0; o < S; ++o) {
      if (o == s) continue;
      for (std::size_t g = 0; g < sets.fibers(o); ++g) others_.emplace_back(o, g);
    }
    // Contributions to other fibers from subjects other than s stay fixed.
    fixed_.resize(others_.size());
    parallel_for(others_.size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        const auto [o, g] = others_[i];
        const auto fiber = sets_.fiber(o, g);
        LogSum acc;
        for (std::size_t q = 0; q < S; ++q) {
          if (q == o || q == s_) continue;
          for (std::size_t h = 0; h < sets_.fibers(q); ++h) acc.add(exponent(fiber, sets_.fiber(q, h), inv_sigma2_));
        }
        fixed_[i] = acc;
      }
    });
    const std::size_t total = sets.total_fibers();
    log_others_.resize(others_.size());
    for (std::size_t i = 0; i < others_.size(); ++i) {
      log_others_[i] = std::log(static_cast<double>(total - sets.fibers(others_[i].first)));
    }
    log_others_s_ = std::log(static_cast<double>(total - sets.fibers(s)));
  }

  /// Objective with subject s's points replaced by `candidate`.
  double evaluate(const std::vector<Point3>& candidate) const {
    const std::size_t p = sets_.p;
    const std::size_t fs = candidate.size() / p;
    const std::size_t no = others_.size();
    std::vector<double> e(fs * no);
    std::vector<double> row_terms(fs, 0.0);
    parallel_for(fs, [&](std::size_t b, std::size_t end) {
      for (std::size_t f = b; f < end; ++f) {
        const std::span<const Point3> fiber(candidate.data() + f * p, p);
        LogSum acc;
        for (std::size_t i = 0; i < no; ++i) {
          const double x = exponent(fiber, sets_.fiber(others_[i].first, others_[i].second), inv_sigma2_);
          e[f * no + i] = x;
          acc.add(x);
        }
        row_terms[f] = -(acc.value() - log_others_s_);
      }
    });
    std::vector<double> col_terms(no, 0.0);
    parallel_for(no, [&](std::size_t b, std::size_t end) {
      for (std::size_t i = b; i < end; ++i) {
        LogSum acc = fixed_[i];
        for (std::size_t f = 0; f < fs; ++f) acc.add(e[f * no + i]);
        col_terms[i] = -(acc.value() - log_others_[i]);
      }
    });
    return std::accumulate(row_terms.begin(), row_terms.end(), 0.0) +
           std::accumulate(col_terms.begin(), col_terms.end(), 0.0);
  }

 private:
  const PointSets& sets_;
  std::size_t s_;
  double inv_sigma2_;
  std::vector<std::pair<std::size_t, std::size_t>> others_;
  std::vector<LogSum> fixed_;
  std::vector<double> log_others_;
  double log_others_s_ = 0.0;
};

std::size_t parameter_count(Dof dof) {
  switch (dof) {
    case Dof::rigid: return 6;
    case Dof::similarity: return 7;
    case Dof::affine: return 12;
  }
  return 12;
}

Point3 centroid(std::span<const Point3> pts) {
  Point3 c;
  for (const auto& q : pts) c = c + q;
  return pts.empty() ? c : c * (1.0 / static_cast<double>(pts.size()));
}

double rms_radius(std::span<const Point3> pts, const Point3& c) {
  double acc = 0.0;
  for (const auto& q : pts) acc += (q - c).dot(q - c);
  return pts.empty() ? 1.0 : std::max(1.0, std::sqrt(acc / static_cast<double>(pts.size())));
}

/// Small left-composed update for parameter `k` with magnitude `delta_mm`.
AffineTransform perturbation(Dof dof, std::size_t k, double delta_mm, const Point3& c, double radius) {
  if (k < 3) {
    Point3 t;
    (k == 0 ? t.x : k == 1 ? t.y : t.z) = delta_mm;
    return AffineTransform::translation(t);
  }
  const double u = delta_mm / radius;
  if (dof == Dof::affine) {
    AffineTransform lin;
    const int i = static_cast<int>((k - 3) / 3);
    const int j = static_cast<int>((k - 3) % 3);
    lin(i, j) += u;
    return AffineTransform::about(lin, c);
  }
  if (k < 6) {
    Point3 axis;
    (k == 3 ? axis.x : k == 4 ? axis.y : axis.z) = 1.0;
    return AffineTransform::about(AffineTransform::rotation(axis, u), c);
  }
  return AffineTransform::about(AffineTransform::scaling(1.0 + u, 1.0 + u, 1.0 + u), c);
}

void gauge_normalize(std::vector<AffineTransform>& xs, Dof dof, const Point3& center) {
  const double n = static_cast<double>(xs.size());
  if (dof == Dof::affine) {
    std::array<double, 12> mean{};
    for (const auto& x : xs) {
      for (std::size_t i = 0; i < 12; ++i) mean[i] += x.row_major()[i] / n;
    }
    const AffineTransform inv = AffineTransform(mean).inverse();
    for (auto& x : xs) x = inv * x;
  } else {
    Point3 t;
    for (const auto& x : xs) t = t + x.translation_part() * (1.0 / n);
    const AffineTransform shift = AffineTransform::translation(t * -1.0);
    for (auto& x : xs) x = shift * x;
  }
  if (dof != Dof::rigid) {
    const double c = std::exp(-mean_log_determinant(xs) / 3.0);
    const AffineTransform scale = AffineTransform::about(AffineTransform::scaling(c, c, c), center);
    for (auto& x : xs) x = scale * x;
  }
}

GroupRegistrationResult optimize(const PointSets& base, std::vector<AffineTransform> xs,
                                 const std::vector<std::size_t>& movable, bool gauge,
                                 const RegistrationConfig& cfg) {
  GroupRegistrationResult result;
  const std::size_t params = parameter_count(cfg.dof);
  PointSets current = transformed(base, xs);

  for (std::size_t level = 0; level < cfg.sigma_schedule.size(); ++level) {
    const double sigma = cfg.sigma_schedule[level];
    double value = full_objective(current, sigma);
    if (!std::isfinite(value)) {
      raise(ErrorCode::NumericalFailure, "objective is not finite at sigma=" + std::to_string(sigma));
    }
    double step = 0.5 * sigma;
    std::size_t sweep = 0;
    while (step >= cfg.min_step_mm && sweep < cfg.max_iters_per_level) {
      const double before = value;
      for (std::size_t s : movable) {
        const SubjectEvaluator eval(current, s, sigma);
        for (std::size_t k = 0; k < params; ++k) {
          const Point3 c = centroid(current.points[s]);
          const double radius = rms_radius(current.points[s], c);
          for (double sign : {1.0, -1.0}) {
            const AffineTransform dx = perturbation(cfg.dof, k, sign * step, c, radius);
            std::vector<Point3> candidate = current.points[s];
            for (auto& q : candidate) q = dx.apply(q);
            const double v = eval.evaluate(candidate);
            if (!std::isfinite(v)) {
              raise(ErrorCode::NumericalFailure, "objective is not finite during search (sigma=" +
                                                     std::to_string(sigma) + ")");
            }
            if (v < value) {
              result.trace.push_back({level, sigma, sweep, static_cast<int>(s), static_cast<int>(k),
                                      sign * step, value, v, false});
              value = v;
              xs[s] = dx * xs[s];
              current.points[s] = std::move(candidate);
              break;
            }
          }
        }
      }
      ++sweep;
      if (gauge) {
        Point3 center;
        std::size_t count = 0;
        for (const auto& pts : current.points) {
          for (const auto& q : pts) center = center + q;
          count += pts.size();
        }
        center = center * (1.0 / static_cast<double>(std::max<std::size_t>(count, 1)));
        gauge_normalize(xs, cfg.dof, center);
        current = transformed(base, xs);
        const double v = full_objective(current, sigma);
        result.trace.push_back({level, sigma, sweep - 1, -1, -1, 0.0, value, v, true});
        value = v;
      }
      // Measured after renormalization so a sweep the gauge undoes counts as stalled.
      const double improvement = (before - value) / std::max(std::abs(before), 1e-300);
      if (improvement < cfg.convergence_tol) step *= 0.5;
    }
    result.level_objectives.push_back(value);
    result.final_objective = value;
  }
  result.transforms = std::move(xs);
  return result;
}

}  // namespace

std::string_view dof_name(Dof dof) {
  switch (dof) {
    case Dof::rigid: return "rigid";
    case Dof::similarity: return "similarity";
    case Dof::affine: return "affine";
  }
  return "affine";
}

Dof parse_dof(std::string_view name) {
  if (name == "rigid") return Dof::rigid;
  if (name == "similarity") return Dof::similarity;
  if (name == "affine") return Dof::affine;
  raise(ErrorCode::InvalidConfig, "unknown dof '" + std::string(name) + "'");
}

void RegistrationConfig::validate() const {
  if (sigma_schedule.empty()) raise(ErrorCode::InvalidConfig, "sigma_schedule is empty");
  for (std::size_t i = 0; i < sigma_schedule.size(); ++i) {
    if (!(sigma_schedule[i] > 0.0)) raise(ErrorCode::InvalidConfig, "sigma values must be positive");
    if (i > 0 && !(sigma_schedule[i] < sigma_schedule[i - 1])) {
      raise(ErrorCode::InvalidConfig, "sigma_schedule must be strictly decreasing");
    }
  }
  if (fibers_per_subject < 10) raise(ErrorCode::InvalidConfig, "fibers_per_subject must be >= 10");
  if (points_per_fiber < 2) raise(ErrorCode::InvalidConfig, "points_per_fiber must be >= 2");
  if (max_iters_per_level < 1) raise(ErrorCode::InvalidConfig, "max_iters_per_level must be >= 1");
  if (!(convergence_tol >= 0.0)) raise(ErrorCode::InvalidConfig, "convergence_tol must be >= 0");
  if (!(min_step_mm > 0.0)) raise(ErrorCode::InvalidConfig, "min_step_mm must be positive");
  if (!(isolation_radius_mm > 0.0)) raise(ErrorCode::InvalidConfig, "isolation_radius_mm must be positive");
}

double registration_objective(std::span<const Tractogram> subjects,
                              std::span<const AffineTransform> transforms, double sigma) {
  if (subjects.size() < 2) raise(ErrorCode::ArityError, "objective needs at least 2 subjects");
  if (subjects.size() != transforms.size()) raise(ErrorCode::ArityError, "one transform per subject required");
  if (!(sigma > 0.0)) raise(ErrorCode::InvalidArgument, "sigma must be positive");
  PointSets sets;
  for (const auto& t : subjects) {
    if (t.empty()) raise(ErrorCode::EmptySubject, "subject '" + t.subject_id + "' has no fibers");
    std::vector<Point3> flat;
    for (const auto& f : t.streamlines) {
      if (sets.p == 0) sets.p = f.points.size();
      if (f.points.size() != sets.p) {
        raise(ErrorCode::PointCountMismatch, "registration fibers must share one point count");
      }
      flat.insert(flat.end(), f.points.begin(), f.points.end());
    }
    sets.points.push_back(std::move(flat));
  }
  return full_objective(transformed(sets, transforms), sigma);
}

GroupRegistrationResult groupwise_affine_register(std::span<const Tractogram> subjects,
                                                  const RegistrationConfig& cfg) {
  cfg.validate();
  if (subjects.size() < 2) raise(ErrorCode::ArityError, "groupwise registration needs >= 2 subjects");
  const PointSets base = prepare(subjects, cfg);
  std::vector<std::size_t> movable(subjects.size());
  std::iota(movable.begin(), movable.end(), std::size_t{0});
  return optimize(base, std::vector<AffineTransform>(subjects.size()), movable, true, cfg);
}

GroupRegistrationResult register_to_reference(const Tractogram& moving, const Tractogram& reference,
                                              const RegistrationConfig& cfg) {
  cfg.validate();
  const Tractogram pair[2] = {moving, reference};
  const PointSets base = prepare(pair, cfg);
  return optimize(base, std::vector<AffineTransform>(2), {0}, false, cfg);
}

std::vector<Tractogram> apply_group_transforms(std::span<const Tractogram> subjects,
                                               const GroupRegistrationResult& result) {
  if (subjects.size() != result.transforms.size()) {
    raise(ErrorCode::ArityError, "subject count does not match transform count");
  }
  std::vector<Tractogram> out;
  out.reserve(subjects.size());
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    Tractogram t = transform_tractogram(subjects[s], result.transforms[s]);
    t.space = SpaceTag::atlas;
    out.push_back(std::move(t));
  }
  return out;
}

Tractogram concatenate_subjects(std::span<const Tractogram> subjects) {
  Tractogram pooled;
  pooled.subject_id = "pooled";
  pooled.space = SpaceTag::atlas;
  std::int64_t next = 0;
  for (const auto& t : subjects) {
    for (const auto& s : t.streamlines) {
      Streamline f = s;
      f.id = next++;
      if (s.origin.subject.empty()) f.origin = {t.subject_id, s.id};
      pooled.streamlines.push_back(std::move(f));
    }
  }
  return pooled;
}

double mean_log_determinant(std::span<const AffineTransform> transforms) {
  if (transforms.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& x : transforms) acc += std::log(std::abs(x.linear_determinant()));
  return acc / static_cast<double>(transforms.size());
}

}  // namespace cnatlas::registration
