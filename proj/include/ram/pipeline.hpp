#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ram/training.hpp"

namespace ram {

struct InferenceOptions {
  double tau = kDefaultTemperature;
  int max_answer_len = 8;
  int workers = 1;
};

/// Encoding, mode-adjusted plan and the memory handed to the decoder.
struct Compression {
  ParallelEncoding encoding;
  CompressionPlan plan;  // as selected
  MemoryInputs inputs;   // after the mode
  HybridMemory memory;
};

Compression compress(const Model& model, const SegmentedExample& example, double alpha, Mode mode = Mode::standard,
                     const InferenceOptions& opts = {});

struct ExampleResult {
  std::vector<int> prediction;  // generated ids, eos included when produced
  Score score;
  double recall = -1.0;  // |P ∩ K| / |P|, or -1 without positives
  int compressed_length = 0;
};

ExampleResult run_example(const Model& model, const SegmentedExample& example, double alpha, Mode mode,
                          const InferenceOptions& opts = {});

struct EvalRow {
  double alpha = 1.0;
  Mode mode = Mode::standard;
  int n = 0;
  double em = 0.0;
  double f1 = 0.0;
  double recall = 0.0;          // over examples with positives
  double achieved_ratio = 0.0;  // L_org / mean L_c (infinite when L_c = 0)
  double lc_mean = 0.0;
  bool extrapolated = false;  // alpha outside the training pool
};

/// One pass over `examples` at a single rate. Examples are spread over
/// opts.workers threads; results are reduced in input order.
EvalRow evaluate(const Model& model, std::span<const SegmentedExample> examples, double alpha, Mode mode,
                 const InferenceOptions& opts = {}, std::span<const double> train_pool = {});

std::string eval_csv_header();
std::string eval_csv_row(const EvalRow& row);

/// Per-segment action/probability record plus the retained text verbatim.
nlohmann::json plan_to_json(const SegmentedExample& example, const Compression& c);

}  // namespace ram
