#include "ram/decoder.hpp"

#include <algorithm>

namespace ram {

DecoderWeights::DecoderWeights(const TransformerConfig& cfg, std::mt19937_64& rng) : config(cfg) {
  cfg.validate();
  token_embedding = normal_parameter("decoder.token_embedding", cfg.vocab, cfg.d_model, 0.02, rng);
  position_embedding = normal_parameter("decoder.position_embedding", cfg.max_len, cfg.d_model, 0.01, rng);
  stack = TransformerStack("decoder", cfg, rng);
  lm_head = normal_parameter("decoder.lm_head", cfg.d_model, cfg.vocab, 0.02, rng);
}

std::vector<ad::Parameter*> DecoderWeights::parameters() {
  std::vector<ad::Parameter*> out{&token_embedding, &position_embedding};
  auto ps = stack.parameters();
  out.insert(out.end(), ps.begin(), ps.end());
  out.push_back(&lm_head);
  return out;
}

ad::Var decode_logits(ad::Tape& tape, const DecoderWeights& weights, std::span<const DecoderSequence> sequences) {
  const TransformerConfig& cfg = weights.config;
  ad::Var embed = tape.param(weights.token_embedding);
  std::vector<ad::Var> rows;
  std::vector<int> positions;
  std::vector<int> blocks;
  std::vector<int> target_rows;
  int offset = 0;
  for (const DecoderSequence& s : sequences) {
    if (s.targets.empty()) throw Error("empty answer");
    const int mem_len = s.memory.valid() ? static_cast<int>(s.memory.rows()) : 0;
    if (mem_len + static_cast<int>(s.query.size()) == 0) throw Error("decoder needs a memory or a query");
    const int total = mem_len + static_cast<int>(s.query.size() + s.targets.size()) - 1;
    if (total > cfg.max_len) throw Error("context overflow");

    if (mem_len > 0) {
      if (s.memory.cols() != cfg.d_model) throw Error("memory width mismatch");
      rows.push_back(s.memory);
    }
    std::vector<int> ids(s.query.begin(), s.query.end());
    ids.insert(ids.end(), s.targets.begin(), s.targets.end() - 1);
    for (int id : ids) {
      if (id < 0 || id >= cfg.vocab) throw Error("bad token id");
    }
    if (!ids.empty()) rows.push_back(ad::gather_rows(embed, ids));
    for (int p = 0; p < total; ++p) positions.push_back(p);
    blocks.push_back(total);

    const int first = offset + mem_len + static_cast<int>(s.query.size()) - 1;
    for (std::size_t t = 0; t < s.targets.size(); ++t) target_rows.push_back(first + static_cast<int>(t));
    offset += total;
  }

  ad::Var x = ad::vstack(rows) + ad::gather_rows(tape.param(weights.position_embedding), positions);
  ad::Var h = weights.stack.forward(x, blocks, /*causal=*/true, cfg.n_heads);
  return ad::gather_rows(h, target_rows) * tape.param(weights.lm_head);
}

namespace {

Matrix logits_for(const HybridMemory& memory, std::span<const int> query, std::span<const int> targets,
                  const DecoderWeights& weights) {
  ad::Tape tape(false);
  DecoderSequence s;
  if (memory.total_length > 0) s.memory = tape.constant(memory.rows());
  s.query = query;
  s.targets = targets;
  const DecoderSequence one[] = {s};
  return decode_logits(tape, weights, one).value();
}

}  // namespace

Matrix decode_forward(const HybridMemory& memory, std::span<const int> query, std::span<const int> answer,
                      const DecoderWeights& weights) {
  return logits_for(memory, query, answer, weights);
}

double nll(const Matrix& logits, std::span<const int> answer) {
  if (answer.empty()) throw Error("empty answer");
  if (logits.rows() != static_cast<Eigen::Index>(answer.size())) throw Error("logits do not match answer");
  double total = 0.0;
  for (std::size_t t = 0; t < answer.size(); ++t) {
    const auto row = logits.row(static_cast<Eigen::Index>(t));
    if (answer[t] < 0 || answer[t] >= row.size()) throw Error("bad token id");
    total += log_sum_exp(row) - row(answer[t]);
  }
  return total / static_cast<double>(answer.size());
}

std::vector<int> generate(const HybridMemory& memory, std::span<const int> query, const DecoderWeights& weights,
                          int max_len, int eos) {
  std::vector<int> out;
  const int room = weights.config.max_len - memory.total_length - static_cast<int>(query.size()) + 1;
  if (room < 1) throw Error("context overflow");
  max_len = std::min(max_len, room);
  std::vector<int> targets{0};  // last slot is a placeholder for the next token
  for (int step = 0; step < max_len; ++step) {
    const Matrix logits = logits_for(memory, query, targets, weights);
    Eigen::Index next = 0;
    logits.row(logits.rows() - 1).maxCoeff(&next);
    out.push_back(static_cast<int>(next));
    if (next == eos) break;
    targets.back() = static_cast<int>(next);
    targets.push_back(0);
  }
  return out;
}

}  // namespace ram
