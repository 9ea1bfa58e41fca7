#include "ram/encoder.hpp"

#include <algorithm>
#include <future>
#include <numeric>

namespace ram {

EncoderWeights::EncoderWeights(const TransformerConfig& cfg, std::mt19937_64& rng) : config(cfg) {
  cfg.validate();
  token_embedding = normal_parameter("encoder.token_embedding", cfg.vocab, cfg.d_model, 0.02, rng);
  position_embedding = normal_parameter("encoder.position_embedding", cfg.max_len, cfg.d_model, 0.01, rng);
  stack = TransformerStack("encoder", cfg, rng);
}

std::vector<ad::Parameter*> EncoderWeights::parameters() {
  std::vector<ad::Parameter*> out{&token_embedding, &position_embedding};
  auto ps = stack.parameters();
  out.insert(out.end(), ps.begin(), ps.end());
  return out;
}

StackedStates encode(ad::Tape& tape, const EncoderWeights& weights,
                     std::span<const std::span<const int>> sequences) {
  const TransformerConfig& cfg = weights.config;
  StackedStates out;
  std::vector<int> ids;
  std::vector<int> positions;
  Eigen::Index offset = 0;
  for (std::span<const int> seq : sequences) {
    if (seq.empty()) throw Error("empty sequence");
    if (static_cast<int>(seq.size()) > cfg.max_len) throw Error("sequence too long");
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (seq[i] < 0 || seq[i] >= cfg.vocab) throw Error("bad token id");
      ids.push_back(seq[i]);
      positions.push_back(static_cast<int>(i));
    }
    out.offsets.push_back(offset);
    out.lengths.push_back(static_cast<int>(seq.size()));
    offset += static_cast<Eigen::Index>(seq.size());
  }
  if (ids.empty()) throw Error("empty sequence");
  ad::Var x = ad::gather_rows(tape.param(weights.token_embedding), ids) +
              ad::gather_rows(tape.param(weights.position_embedding), positions);
  out.states = weights.stack.forward(x, out.lengths, /*causal=*/false, cfg.n_heads);
  return out;
}

HiddenStates encode_sequence(std::span<const int> tokens, const EncoderWeights& weights, std::string source) {
  ad::Tape tape(false);
  const std::span<const int> one[] = {tokens};
  StackedStates s = encode(tape, weights, one);
  return HiddenStates{s.states.value(), std::move(source)};
}

ParallelEncoding encode_parallel(const SegmentedExample& example, const EncoderWeights& weights, int workers) {
  const std::size_t n = example.segments.size();
  if (n == 0) throw Error("no segments");
  for (const auto& seg : example.segments) {
    if (seg.size() != example.segments.front().size()) throw Error("ragged segments");
  }

  ParallelEncoding out;
  out.query = encode_sequence(example.query, weights, example.id + "/query");
  out.segments.resize(n);
  auto encode_one = [&](std::size_t i) {
    std::span<const int> tokens = strip_padding(example.segments[i]);
    if (tokens.empty()) throw Error("empty segment");
    out.segments[i] = encode_sequence(tokens, weights, example.id + "/segment" + std::to_string(i));
  };

  const std::size_t n_workers = static_cast<std::size_t>(std::clamp(workers, 1, static_cast<int>(n)));
  if (n_workers == 1) {
    for (std::size_t i = 0; i < n; ++i) encode_one(i);
    return out;
  }
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 0; w < n_workers; ++w) {
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < n; i += n_workers) encode_one(i);
    }));
  }
  for (auto& j : jobs) j.get();
  return out;
}

}  // namespace ram
