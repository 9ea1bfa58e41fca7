#pragma once

#include <span>
#include <variant>
#include <vector>

#include "ram/data.hpp"
#include "ram/encoder.hpp"

namespace ram {

inline constexpr double kDefaultTemperature = 0.1;

/// Close-read / skim decision for one example. Indices are 0-based and
/// ascending.
struct CompressionPlan {
  RowVector cosines;  // cos(r_q, r_i)
  RowVector probs;    // softmax(cosines / tau)
  double alpha = 1.0;
  int k = 0;
  std::vector<int> retained;
  std::vector<int> skimmed;

  int num_segments() const { return static_cast<int>(probs.size()); }
};

struct Selection {
  std::vector<int> retained;
  std::vector<int> skimmed;
};

/// A close-read segment: its tokens verbatim plus their decoder embeddings.
struct RetainedBlock {
  int segment = 0;
  std::vector<int> tokens;
  Matrix embeddings;  // [L_seg x d]
};

/// A skimmed segment: one aligned vector.
struct SkimEntry {
  int segment = 0;
  RowVector vector;  // [d]
};

using MemoryEntry = std::variant<RetainedBlock, SkimEntry>;

/// Decoder-side compressed context, entries in original segment order.
struct HybridMemory {
  std::vector<MemoryEntry> entries;
  int total_length = 0;  // L_c
  int width = 0;

  /// Entries stacked into [L_c x d].
  Matrix rows() const;
  /// Retained segments' tokens concatenated in order.
  std::vector<int> retained_tokens() const;
};

/// Mean of the token states (r_i, r_q).
RowVector representative(const HiddenStates& states);

/// p_i = softmax_i(cos(r_q, r_i) / tau).
RowVector relevance(const RowVector& query_rep, std::span<const RowVector> segment_reps,
                    double tau = kDefaultTemperature);

/// k = floor(L_org / (alpha * L_seg)), clamped to [0, N].
int budget(int context_length, int seg_len, double alpha);

/// Top-k by probability; ties go to the lower index.
Selection select(const RowVector& probs, int k);

enum class SkimWeighting { query_guided, uniform };

/// c = sum_t w_t h_t with w = softmax_t(cos(h_t, r_q)) at unit temperature
/// (or w_t = 1/L for uniform). Zero-norm token states score cosine -1.
RowVector skim(const Matrix& states, const RowVector& query_rep,
               SkimWeighting weighting = SkimWeighting::query_guided);

/// Representatives, relevance and top-k selection in one step. The budget uses
/// the padded context length N * seg_len.
CompressionPlan make_plan(const ParallelEncoding& encoding, int seg_len, double alpha,
                          double tau = kDefaultTemperature);

/// Builds the hybrid memory. `skim_vectors` holds one vector per entry of
/// plan.skimmed, in order; with emit_skims == false skimmed segments are
/// dropped and skim_vectors may be empty.
HybridMemory assemble(const SegmentedExample& example, const CompressionPlan& plan,
                      std::span<const RowVector> skim_vectors, const Matrix& w_align,
                      const Matrix& decoder_embedding, bool emit_skims = true);

/// L_c = k * L_seg + (N - k).
inline int compressed_length(int n_segments, int seg_len, int k) { return k * seg_len + (n_segments - k); }

}  // namespace ram
