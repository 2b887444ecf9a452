#pragma once

#include <string>
#include <vector>

#include "tgq/config.hpp"

namespace tgq {

struct GradGroup {
  std::string name;
  std::size_t checked = 0;  // coordinates compared
  double max_rel_error = 0.0;
};

struct GradcheckOptions {
  double h = 1e-5;
  /// Relative error is |a - n| / max(|a|, |n|, floor). Central differences
  /// at h = 1e-5 carry roundoff near eps * |L| / h ~ 1e-10, so the floor sits
  /// a decade above the level where that noise alone would reach 1e-4.
  double floor = 1e-5;
  std::size_t samples_per_tensor = 8;
  std::uint64_t seed = 7;
};

/// Central-difference check of the variant (e) joint loss on a seeded 2-pair
/// batch. Scope is one of all, hqc, gating, regularizer, fusion; anything else
/// raises UsageError. Zero-initialised gate outputs are re-randomised first so
/// the gate hidden layers receive signal.
std::vector<GradGroup> gradcheck(const Config& cfg, const std::string& scope, const GradcheckOptions& opt = {});

/// Desk-sized dimensions that keep a full check well under a minute.
Config gradcheck_config();

}  // namespace tgq
