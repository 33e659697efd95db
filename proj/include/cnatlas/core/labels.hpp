#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace cnatlas {

enum class ClusterLabel {
  unlabeled,
  rejected,
  CN_II_D,
  CN_II_N,
  CN_III_L,
  CN_III_R,
  CN_V_L,
  CN_V_R,
  CN_VII_VIII_L,
  CN_VII_VIII_R,
};

inline constexpr std::array<ClusterLabel, 8> kNerveLabels = {
    ClusterLabel::CN_II_D,  ClusterLabel::CN_II_N,      ClusterLabel::CN_III_L,
    ClusterLabel::CN_III_R, ClusterLabel::CN_V_L,       ClusterLabel::CN_V_R,
    ClusterLabel::CN_VII_VIII_L, ClusterLabel::CN_VII_VIII_R};

/// The four nerve groups the tallies are reported in.
enum class NerveGroup { CN_II, CN_III, CN_V, CN_VII_VIII };

inline constexpr std::array<NerveGroup, 4> kNerveGroups = {
    NerveGroup::CN_II, NerveGroup::CN_III, NerveGroup::CN_V, NerveGroup::CN_VII_VIII};

std::string_view label_name(ClusterLabel label);
std::optional<ClusterLabel> parse_label(std::string_view name);

/// Human-readable column name, e.g. "CN II-D", "CN VII/VIII-L".
std::string_view label_display_name(ClusterLabel label);

bool is_nerve(ClusterLabel label);
/// Only meaningful for nerve labels.
NerveGroup nerve_group(ClusterLabel label);
std::string_view group_display_name(NerveGroup group);  // "CN II", "CN VII/VIII"
std::string_view group_key(NerveGroup group);           // "CN_II", "CN_VII_VIII"

}  // namespace cnatlas
