#include "cnatlas/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "cnatlas/core/error.hpp"
#include "cnatlas/core/parallel.hpp"
#include "cnatlas/core/streamline_ops.hpp"

namespace cnatlas::metrics {
namespace {

bool lookup(const std::map<ClusterLabel, bool>& m, ClusterLabel l) {
  const auto it = m.find(l);
  return it != m.end() && it->second;
}

std::string pad(const std::string& s, std::size_t width) {
  // Width counts code points so "±" lines up.
  std::size_t cps = 0;
  for (unsigned char ch : s) cps += (ch & 0xC0) != 0x80;
  return s + std::string(width > cps ? width - cps : 0, ' ');
}

std::string render(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> widths;
  for (const auto& row : cells) {
    widths.resize(std::max(widths.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) {
      std::size_t cps = 0;
      for (unsigned char ch : row[c]) cps += (ch & 0xC0) != 0x80;
      widths[c] = std::max(widths[c], cps);
    }
  }
  std::string out;
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) line += "  ";
      line += c + 1 == row.size() ? row[c] : pad(row[c], widths[c]);
    }
    out += line + "\n";
  }
  return out;
}

}  // namespace

double VisitationMap::weight(std::size_t voxel) const {
  return total == 0 ? 0.0 : static_cast<double>(counts[voxel]) / static_cast<double>(total);
}

std::size_t VisitationMap::support_size() const {
  return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](std::uint32_t c) { return c > 0; }));
}

VoxelGrid grid_for(std::span<const Tractogram> bundles, double voxel_mm, double margin_mm) {
  if (!(voxel_mm > 0.0)) raise(ErrorCode::InvalidArgument, "voxel size must be positive");
  constexpr double inf = std::numeric_limits<double>::infinity();
  Point3 lo{inf, inf, inf};
  Point3 hi{-inf, -inf, -inf};
  for (const auto& b : bundles) {
    for (const auto& s : b.streamlines) {
      for (const auto& p : s.points) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
      }
    }
  }
  if (!lo.finite()) lo = hi = Point3{};
  const Point3 m{margin_mm, margin_mm, margin_mm};
  return VoxelGrid::covering(lo - m, hi + m, voxel_mm);
}

VisitationMap voxelize_bundle(const Tractogram& bundle, const VoxelGrid& grid) {
  VisitationMap map;
  map.grid = grid;
  map.counts.assign(grid.voxel_count(), 0);
  const double step = 0.5 * grid.min_voxel_edge();
  std::vector<std::vector<std::size_t>> touched(bundle.size());
  parallel_for(bundle.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      auto& v = touched[i];
      for (const auto& p : arc_length_samples(bundle.streamlines[i].points, step)) {
        if (const auto idx = grid.voxel_of(p)) v.push_back(*idx);
      }
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
  });
  for (const auto& v : touched) {
    for (std::size_t idx : v) ++map.counts[idx];
    map.total += v.size();
  }
  return map;
}

double wdice(const VisitationMap& a, const VisitationMap& b) {
  if (!a.grid.same_geometry(b.grid) || a.counts.size() != b.counts.size()) {
    raise(ErrorCode::GridMismatch, "visitation maps are on different grids");
  }
  if (a.total == 0 && b.total == 0) return 0.0;
  // Shared-support count mass per map keeps the arithmetic exact for
  // identical and uniform maps.
  std::uint64_t shared_a = 0;
  std::uint64_t shared_b = 0;
  for (std::size_t i = 0; i < a.counts.size(); ++i) {
    if (a.counts[i] > 0 && b.counts[i] > 0) {
      shared_a += a.counts[i];
      shared_b += b.counts[i];
    }
  }
  const double fa = a.total ? static_cast<double>(shared_a) / static_cast<double>(a.total) : 0.0;
  const double fb = b.total ? static_cast<double>(shared_b) / static_cast<double>(b.total) : 0.0;
  const double mass = (a.total ? 1.0 : 0.0) + (b.total ? 1.0 : 0.0);
  return (fa + fb) / mass;
}

Tractogram select_ground_truth(const Tractogram& t, std::span<const MaskVolume> rois, std::span<const MaskVolume> roas) {
  if (rois.empty()) raise(ErrorCode::InvalidConfig, "ground-truth selection needs at least one ROI");
  std::vector<std::uint8_t> keep(t.size(), 0);
  parallel_for(t.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const Streamline& s = t.streamlines[i];
      bool ok = std::all_of(rois.begin(), rois.end(), [&](const MaskVolume& m) { return streamline_passes_mask(s, m); });
      ok = ok && std::none_of(roas.begin(), roas.end(), [&](const MaskVolume& m) { return streamline_passes_mask(s, m); });
      keep[i] = ok;
    }
  });
  Tractogram out;
  out.subject_id = t.subject_id;
  out.space = t.space;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (keep[i]) out.streamlines.push_back(t.streamlines[i]);
  }
  return out;
}

std::string MeanStd::str() const {
  if (n == 0) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f±%.4f", mean, std);
  return buf;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  r.n = values.size();
  if (r.n == 0) return r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(r.n);
  if (r.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(r.n - 1));
  }
  return r;
}

IdentificationReport identification_table(std::span<const SubjectOutcome> outcomes, const TableOptions& options) {
  IdentificationReport rep;
  rep.options = options;
  if (options.stratified) {
    TableRow ok{options.dataset + " Successful subjects", {}, {}};
    TableRow fail{"Unsuccessful subjects", {}, {}};
    for (ClusterLabel l : options.columns) {
      Fraction ok_auto, ok_manual, fail_auto, fail_manual;
      for (const auto& o : outcomes) {
        const bool manual = lookup(o.manual, l);
        const bool automated = lookup(o.automated, l);
        if (manual) {
          ++ok_manual.k;
          ++ok_manual.n;
          ++ok_auto.n;
          ok_auto.k += automated;
        } else {
          ++fail_manual.n;
          ++fail_auto.n;
          fail_auto.k += automated;
        }
      }
      ok.automated[l] = ok_auto;
      ok.manual[l] = ok_manual;
      fail.automated[l] = fail_auto;
      fail.manual[l] = fail_manual;
    }
    rep.rows = {ok, fail};
  } else {
    TableRow all{options.dataset + " (n=" + std::to_string(outcomes.size()) + ")", {}, {}};
    for (ClusterLabel l : options.columns) {
      Fraction a{0, outcomes.size()}, m{0, outcomes.size()};
      for (const auto& o : outcomes) {
        a.k += lookup(o.automated, l);
        m.k += lookup(o.manual, l);
      }
      all.automated[l] = a;
      all.manual[l] = m;
    }
    rep.rows = {all};
  }

  std::map<NerveGroup, std::vector<double>> per_group;
  std::vector<double> subject_means;
  for (const auto& o : outcomes) {
    if (options.inclusion == WdiceInclusion::complete_subjects &&
        !std::all_of(options.columns.begin(), options.columns.end(), [&](ClusterLabel l) { return lookup(o.manual, l); })) {
      continue;
    }
    std::vector<double> mine;
    for (ClusterLabel l : options.columns) {
      const auto it = o.wdice.find(l);
      if (!lookup(o.manual, l) || it == o.wdice.end()) continue;
      per_group[nerve_group(l)].push_back(it->second);
      mine.push_back(it->second);
    }
    if (!mine.empty()) subject_means.push_back(std::accumulate(mine.begin(), mine.end(), 0.0) / static_cast<double>(mine.size()));
  }
  for (NerveGroup g : kNerveGroups) rep.group_wdice[g] = mean_std(per_group[g]);
  rep.overall = mean_std(subject_means);
  return rep;
}

IdentificationReport identification_table(std::span<const apply::IdentificationResult> results,
                                          std::span<const SubjectOutcome> truth, const TableOptions& options) {
  if (results.size() != truth.size()) {
    raise(ErrorCode::ArityError, "identification results (" + std::to_string(results.size()) +
                                     ") and truth entries (" + std::to_string(truth.size()) + ") differ in length");
  }
  std::vector<SubjectOutcome> joined(truth.begin(), truth.end());
  for (std::size_t i = 0; i < results.size(); ++i) {
    joined[i].automated.clear();
    for (const auto& [label, bundle] : results[i].nerves) joined[i].automated[label] = bundle.identified;
  }
  return identification_table(joined, options);
}

std::string IdentificationReport::table1_text() const {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head{"Dataset"};
  for (ClusterLabel l : options.columns) {
    head.push_back(std::string(label_display_name(l)) + " Auto.");
    head.push_back(std::string(label_display_name(l)) + " Manu.");
  }
  cells.push_back(head);
  for (const auto& r : rows) {
    std::vector<std::string> line{r.stratum};
    for (ClusterLabel l : options.columns) {
      line.push_back(r.automated.at(l).str());
      line.push_back(r.manual.at(l).str());
    }
    cells.push_back(line);
  }
  return render(cells);
}

std::string IdentificationReport::table1_csv() const {
  std::string out = "stratum,label,auto,manual\n";
  for (const auto& r : rows) {
    for (ClusterLabel l : options.columns) {
      out += "\"" + r.stratum + "\"," + std::string(label_name(l)) + "," + r.automated.at(l).str() + "," +
             r.manual.at(l).str() + "\n";
    }
  }
  return out;
}

std::string IdentificationReport::table2_text() const {
  std::vector<std::string> head{"Dataset"};
  std::vector<std::string> line{options.dataset};
  for (NerveGroup g : kNerveGroups) {
    head.emplace_back(group_display_name(g));
    line.push_back(group_wdice.at(g).str());
  }
  head.emplace_back("All CNs");
  line.push_back(overall.str());
  return render({head, line});
}

std::string IdentificationReport::table2_csv() const {
  std::string out = "group,mean,std,n\n";
  auto row = [&](const std::string& name, const MeanStd& m) {
    char buf[128];
    std::snprintf(buf, sizeof buf, ",%.4f,%.4f,%zu\n", m.mean, m.std, m.n);
    out += name + (m.n ? std::string(buf) : ",,," + std::to_string(m.n) + "\n");
  };
  for (NerveGroup g : kNerveGroups) row(std::string(group_key(g)), group_wdice.at(g));
  row("all", overall);
  return out;
}

nlohmann::json IdentificationReport::to_json() const {
  nlohmann::json t1 = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json cells = nlohmann::json::object();
    for (ClusterLabel l : options.columns) {
      cells[std::string(label_name(l))] = {{"auto", r.automated.at(l).str()}, {"manual", r.manual.at(l).str()}};
    }
    t1.push_back({{"stratum", r.stratum}, {"cells", cells}});
  }
  nlohmann::json t2 = nlohmann::json::object();
  auto cell = [](const MeanStd& m) {
    return nlohmann::json{{"mean", m.n ? nlohmann::json(m.mean) : nlohmann::json(nullptr)},
                          {"std", m.n ? nlohmann::json(m.std) : nlohmann::json(nullptr)},
                          {"n", m.n},
                          {"text", m.str()}};
  };
  for (NerveGroup g : kNerveGroups) t2[std::string(group_key(g))] = cell(group_wdice.at(g));
  t2["all"] = cell(overall);
  return {{"dataset", options.dataset}, {"identification", t1}, {"wdice", t2}};
}

}  // namespace cnatlas::metrics
