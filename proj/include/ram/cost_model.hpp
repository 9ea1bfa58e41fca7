#pragma once

#include <span>
#include <string>
#include <vector>

#include "ram/pipeline.hpp"

namespace ram {

/// Shape of one transformer stack, for counting.
struct ModelDims {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 256;
  int vocab = kVocabSize;

  static ModelDims from(const ModelConfig& cfg) { return {cfg.d_model, cfg.n_layers, cfg.n_heads, cfg.d_ff, cfg.vocab}; }
};

// Matrix products count 2*m*n*k; softmax, normalization and activations are
// not counted.

/// Q, K, V, O projections and the MLP for `tokens` rows, one layer.
double projection_flops(double tokens, const ModelDims& m);
/// Scores and weighted values for one block of `len` rows, one layer.
double attention_flops(double len, const ModelDims& m);
/// Segment attention over N blocks of L_seg, one layer.
double segment_attention_flops(int n_segments, int seg_len, const ModelDims& m);
/// Attention over one L_org block, one layer.
double full_attention_flops(int context_length, const ModelDims& m);

/// Parallel encoding: N segments of L_seg and the query, each its own block.
double flops_parallel_encoding(int n_segments, int seg_len, int query_len, const ModelDims& m);
/// Query-guided relevance: one cosine per segment.
double flops_query_attention(int n_segments, const ModelDims& m);
/// Compression stage: parallel encoding plus query-guided relevance.
double flops_compression(int context_length, int seg_len, int query_len, const ModelDims& m);
/// Encoding the whole context as a single sequence (plus the query and the
/// single relevance score), for comparison.
double flops_full_sequence_encoding(int context_length, int query_len, const ModelDims& m);

/// Cost of decoding step i (1-based) with a cache: projections for one new
/// row, attention over a prefix of L_c + L_q + i rows, and the LM head.
double flops_decode_step(int compressed_length, int query_len, int step, const ModelDims& m);
/// Sum of the L_a step costs.
double flops_decoding(int compressed_length, int query_len, int answer_len, const ModelDims& m);

struct FlopsReport {
  int context_length = 0;
  int seg_len = 0;
  int query_len = 0;
  int compressed_length = 0;
  int answer_len = 0;
  double alpha = 1.0;
  ModelDims dims;
  double flops_comp = 0.0;
  double flops_decode_total = 0.0;
  double flops_total = 0.0;
  double baseline_full_context = 0.0;  // decoding the uncompressed context, no compression stage
  double ratio = 0.0;                  // flops_total / baseline_full_context
};

FlopsReport flops_report(int context_length, int seg_len, int query_len, int answer_len, double alpha,
                         const ModelDims& m);

std::string flops_csv_header();
std::string flops_csv_row(const FlopsReport& r);

struct BenchOptions {
  int repetitions = 20;
  int warmup = 3;
  int answer_len = 4;
  double tau = kDefaultTemperature;
};

struct BenchRow {
  std::string method;  // "RAM" or "Original Prompt"
  double alpha = 1.0;
  double lc_mean = 0.0;
  double compression_s = 0.0;  // medians over repetitions, mean over examples
  double decode_s = 0.0;
  double end_to_end_s = 0.0;
  double decode_flops = 0.0;
};

/// Wall-clock latency per rate plus the uncompressed "Original Prompt" row.
/// Decoding runs exactly answer_len greedy steps (eos does not stop it).
std::vector<BenchRow> bench(const Model& model, std::span<const SegmentedExample> examples,
                            std::span<const double> rates, const BenchOptions& opts = {});

std::string bench_csv_header();
std::string bench_csv_row(const BenchRow& r);

/// Spearman rank correlation (average ranks for ties).
double rank_correlation(std::span<const double> x, std::span<const double> y);

}  // namespace ram
