#include "ram/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace ram::ad {

namespace {

double evaluate(const LossFn& loss_fn) {
  Tape tape(false);
  return loss_fn(tape).scalar();
}

}  // namespace

GradCheckResult grad_check(const LossFn& loss_fn, std::span<Parameter* const> params, double eps,
                           std::uint64_t seed, int max_coords, double floor) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw Error("grad_check: eps outside [1e-6, 1e-3]");
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }

  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (Parameter* p : params) {
    const Eigen::Index n = p->value.size();
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(n));
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    if (n > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(max_coords));
    }
    for (Eigen::Index c : coords) {
      double& x = p->value.data()[c];
      const double saved = x;
      x = saved + eps;
      const double up = evaluate(loss_fn);
      x = saved - eps;
      const double down = evaluate(loss_fn);
      x = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad.data()[c];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.coordinates;
      if (result.worst_index < 0 || rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_parameter = p->name;
        result.worst_index = c;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace ram::ad
