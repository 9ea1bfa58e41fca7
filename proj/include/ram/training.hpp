#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ram/compressor.hpp"
#include "ram/model.hpp"

namespace ram {

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Runtime variants: the full method and the four ablations.
enum class Mode { standard, no_skimming, no_close_reading, ap_skimming, no_contrastive };

inline constexpr std::array<Mode, 5> kAllModes = {Mode::standard, Mode::no_skimming, Mode::no_close_reading,
                                                  Mode::ap_skimming, Mode::no_contrastive};

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);

struct TrainConfig {
  std::vector<double> rate_pool{2, 4, 8, 16, 32};
  double tau = kDefaultTemperature;
  double learning_rate = 1e-3;
  int batch_size = 16;
  int steps = 2000;
  Mode mode = Mode::standard;
  std::uint64_t seed = 1;
  double grad_clip = 1.0;

  void validate() const;
};

/// -(1/|P|) sum_{i in P} log softmax_i(cos(r_q, r_i) / tau). Empty P gives 0.
double contrastive_loss(const RowVector& query_rep, std::span<const RowVector> segment_reps,
                        std::span<const int> positives, double tau = kDefaultTemperature);

/// Same objective on a tape, from precomputed cosines [1 x N]. P must be non-empty.
ad::Var contrastive_loss(ad::Var cosines, std::span<const int> positives, double tau);

/// nll + con; nll alone for Mode::no_contrastive.
double total_loss(double nll, double con, Mode mode);

/// What the decoder actually receives under a mode.
struct MemoryLayout {
  std::vector<int> retained;
  std::vector<int> skimmed;
  bool emit_skims = true;
  SkimWeighting weighting = SkimWeighting::query_guided;
};

MemoryLayout apply_mode(const CompressionPlan& plan, Mode mode);

struct MemoryInputs {
  CompressionPlan plan;  // retained/skimmed rewritten for the mode
  std::vector<RowVector> skim_vectors;
  bool emit_skims = true;
};

/// Applies the mode to a plan and computes the skim vectors it needs.
MemoryInputs apply_mode(const CompressionPlan& plan, const ParallelEncoding& encoding, Mode mode);

struct ExampleForward {
  CompressionPlan plan;  // as selected (before the mode is applied)
  double nll = 0.0;
  double con = 0.0;
  bool has_contrastive = false;
};

struct BatchForward {
  ad::Var loss;  // mean over the batch of nll + con
  std::vector<ExampleForward> examples;
};

/// Full differentiable pipeline for a batch: parallel encoding, selection,
/// hybrid memory, teacher-forced decoding and the joint objective. Selection
/// is computed from the current values unless `frozen_plans` supplies one per
/// example; either way it is a constant of the graph.
BatchForward forward_batch(ad::Tape& tape, const Model& model, std::span<const SegmentedExample* const> batch,
                           std::span<const double> alphas, Mode mode, double tau,
                           std::span<const CompressionPlan> frozen_plans = {});

/// Adam with bias correction.
class Adam {
 public:
  explicit Adam(std::vector<ad::Parameter*> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(double lr);

 private:
  std::vector<ad::Parameter*> params_;
  std::vector<Matrix> m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

struct StepStats {
  int step = 0;
  double loss = 0.0;
  double nll = 0.0;
  double con = 0.0;
  double lr = 0.0;
  std::vector<double> alphas;
  int unlabeled = 0;  // examples without positives (NLL only)
};

class Trainer {
 public:
  Trainer(Model& model, TrainConfig config);

  /// One update on `batch`; alpha is drawn from the pool per example.
  StepStats train_step(std::span<const SegmentedExample* const> batch);

  /// Runs config.steps updates over `data` in seeded shuffled order.
  void fit(std::span<const SegmentedExample> data, const std::function<void(const StepStats&)>& on_step = {});

  /// Hash of the example ids consumed so far, in order.
  std::string data_order_digest() const;
  int steps_done() const { return step_; }

 private:
  Model& model_;
  TrainConfig config_;
  Adam optimizer_;
  std::mt19937_64 alpha_rng_;
  std::mt19937_64 order_rng_;
  int step_ = 0;
  std::uint64_t order_hash_;
};

/// "2:3|4:5|..." over the pool, for the training log.
std::string alpha_histogram(std::span<const double> alphas, std::span<const double> pool);

}  // namespace ram
