#include "cnatlas/core/labels.hpp"

namespace cnatlas {
namespace {

struct LabelInfo {
  ClusterLabel label;
  std::string_view name;
  std::string_view display;
};

constexpr std::array<LabelInfo, 10> kLabels = {{
    {ClusterLabel::unlabeled, "unlabeled", "unlabeled"},
    {ClusterLabel::rejected, "rejected", "rejected"},
    {ClusterLabel::CN_II_D, "CN_II_D", "CN II-D"},
    {ClusterLabel::CN_II_N, "CN_II_N", "CN II-N"},
    {ClusterLabel::CN_III_L, "CN_III_L", "CN III-L"},
    {ClusterLabel::CN_III_R, "CN_III_R", "CN III-R"},
    {ClusterLabel::CN_V_L, "CN_V_L", "CN V-L"},
    {ClusterLabel::CN_V_R, "CN_V_R", "CN V-R"},
    {ClusterLabel::CN_VII_VIII_L, "CN_VII_VIII_L", "CN VII/VIII-L"},
    {ClusterLabel::CN_VII_VIII_R, "CN_VII_VIII_R", "CN VII/VIII-R"},
}};

}  // namespace

std::string_view label_name(ClusterLabel label) {
  return kLabels[static_cast<std::size_t>(label)].name;
}

std::string_view label_display_name(ClusterLabel label) {
  return kLabels[static_cast<std::size_t>(label)].display;
}

std::optional<ClusterLabel> parse_label(std::string_view name) {
  for (const auto& info : kLabels) {
    if (info.name == name) return info.label;
  }
  return std::nullopt;
}

bool is_nerve(ClusterLabel label) {
  return label != ClusterLabel::unlabeled && label != ClusterLabel::rejected;
}

NerveGroup nerve_group(ClusterLabel label) {
  switch (label) {
    case ClusterLabel::CN_II_D:
    case ClusterLabel::CN_II_N: return NerveGroup::CN_II;
    case ClusterLabel::CN_III_L:
    case ClusterLabel::CN_III_R: return NerveGroup::CN_III;
    case ClusterLabel::CN_V_L:
    case ClusterLabel::CN_V_R: return NerveGroup::CN_V;
    default: return NerveGroup::CN_VII_VIII;
  }
}

std::string_view group_display_name(NerveGroup group) {
  switch (group) {
    case NerveGroup::CN_II: return "CN II";
    case NerveGroup::CN_III: return "CN III";
    case NerveGroup::CN_V: return "CN V";
    case NerveGroup::CN_VII_VIII: return "CN VII/VIII";
  }
  return "";
}

std::string_view group_key(NerveGroup group) {
  switch (group) {
    case NerveGroup::CN_II: return "CN_II";
    case NerveGroup::CN_III: return "CN_III";
    case NerveGroup::CN_V: return "CN_V";
    case NerveGroup::CN_VII_VIII: return "CN_VII_VIII";
  }
  return "";
}

}  // namespace cnatlas
