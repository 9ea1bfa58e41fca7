#pragma once

#include <random>
#include <span>
#include <vector>

#include "ram/compressor.hpp"
#include "ram/transformer.hpp"

namespace ram {

/// Causal decoder with its own word embeddings e(.) and an untied output head.
struct DecoderWeights {
  TransformerConfig config;
  ad::Parameter token_embedding;     // [V x d]
  ad::Parameter position_embedding;  // [max_len x d]
  TransformerStack stack;
  ad::Parameter lm_head;  // [d x V]

  DecoderWeights() = default;
  DecoderWeights(const TransformerConfig& cfg, std::mt19937_64& rng);

  std::vector<ad::Parameter*> parameters();
};

/// One decoder input: memory rows, then the query, then the teacher-forced
/// answer. `targets` are the tokens to predict; the input holds all but the
/// last of them.
struct DecoderSequence {
  ad::Var memory;  // [L_c x d]; may be invalid when L_c == 0
  std::span<const int> query;
  std::span<const int> targets;
};

/// Logits for every target of every sequence, stacked in order
/// ([sum of target lengths x V]). Sequences attend only within themselves.
ad::Var decode_logits(ad::Tape& tape, const DecoderWeights& weights, std::span<const DecoderSequence> sequences);

/// Teacher-forced logits for the answer positions, [L_a x V].
Matrix decode_forward(const HybridMemory& memory, std::span<const int> query, std::span<const int> answer,
                      const DecoderWeights& weights);

/// Mean negative log-likelihood of `answer` under row-wise softmax(logits).
double nll(const Matrix& logits, std::span<const int> answer);

/// Greedy decoding; stops after emitting `eos` or max_len tokens. The eos
/// token, when produced, is included in the output.
std::vector<int> generate(const HybridMemory& memory, std::span<const int> query, const DecoderWeights& weights,
                          int max_len, int eos = kEosId);

}  // namespace ram
