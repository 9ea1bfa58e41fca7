#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "ram/data.hpp"
#include "ram/transformer.hpp"

namespace ram {

/// Bidirectional encoder. Positions restart at 0 in every encoded sequence.
struct EncoderWeights {
  TransformerConfig config;
  ad::Parameter token_embedding;     // [V x d]
  ad::Parameter position_embedding;  // [max_len x d]
  TransformerStack stack;

  EncoderWeights() = default;
  EncoderWeights(const TransformerConfig& cfg, std::mt19937_64& rng);

  std::vector<ad::Parameter*> parameters();
};

/// Last-layer token states [L x d] of one sequence.
struct HiddenStates {
  Matrix states;
  std::string source;

  Eigen::Index length() const { return states.rows(); }
};

/// States of several sequences encoded on one tape; sequence i occupies rows
/// [offsets[i], offsets[i] + lengths[i]).
struct StackedStates {
  ad::Var states;
  std::vector<Eigen::Index> offsets;
  std::vector<int> lengths;

  ad::Var sequence(std::size_t i) const { return ad::slice_rows(states, offsets[i], lengths[i]); }
};

/// Encodes every sequence independently (block-diagonal attention).
StackedStates encode(ad::Tape& tape, const EncoderWeights& weights,
                     std::span<const std::span<const int>> sequences);

HiddenStates encode_sequence(std::span<const int> tokens, const EncoderWeights& weights,
                             std::string source = {});

struct ParallelEncoding {
  HiddenStates query;
  std::vector<HiddenStates> segments;
};

/// Encodes the query and every segment separately. Trailing pad tokens are
/// not encoded, so a padded segment yields fewer rows. With workers > 1 the
/// segments are spread over threads; the result is identical either way.
ParallelEncoding encode_parallel(const SegmentedExample& example, const EncoderWeights& weights,
                                 int workers = 1);

}  // namespace ram
