#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "ram/autodiff.hpp"

namespace ram::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Builds the scalar loss on the given tape. Must be deterministic.
using LossFn = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients with central differences.
///
/// At most `max_coords` coordinates per parameter are probed, chosen with a
/// generator seeded by `seed`. Relative error per coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor); the floor keeps
/// gradients that are zero up to roundoff from dominating.
GradCheckResult grad_check(const LossFn& loss_fn, std::span<Parameter* const> params, double eps,
                           std::uint64_t seed = 0, int max_coords = 256, double floor = 1e-8);

}  // namespace ram::ad
