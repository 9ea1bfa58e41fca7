#include "ram/compressor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ram {

Matrix HybridMemory::rows() const {
  Matrix out(total_length, width);
  Eigen::Index r = 0;
  for (const MemoryEntry& e : entries) {
    if (const auto* block = std::get_if<RetainedBlock>(&e)) {
      out.middleRows(r, block->embeddings.rows()) = block->embeddings;
      r += block->embeddings.rows();
    } else {
      out.row(r++) = std::get<SkimEntry>(e).vector;
    }
  }
  return out;
}

std::vector<int> HybridMemory::retained_tokens() const {
  std::vector<int> out;
  for (const MemoryEntry& e : entries) {
    if (const auto* block = std::get_if<RetainedBlock>(&e)) {
      out.insert(out.end(), block->tokens.begin(), block->tokens.end());
    }
  }
  return out;
}

RowVector representative(const HiddenStates& states) { return mean_pool(states.states); }

RowVector relevance(const RowVector& query_rep, std::span<const RowVector> segment_reps, double tau) {
  if (segment_reps.empty()) throw Error("no segments");
  if (!(tau > 0.0)) throw Error("invalid temperature");
  if (!(query_rep.norm() > 0.0)) throw Error("degenerate query");
  RowVector cos(static_cast<Eigen::Index>(segment_reps.size()));
  for (std::size_t i = 0; i < segment_reps.size(); ++i) {
    if (!(segment_reps[i].norm() > 0.0)) throw Error("degenerate segment");
    cos(static_cast<Eigen::Index>(i)) = cosine(query_rep, segment_reps[i]);
  }
  return softmax(cos, tau);
}

int budget(int context_length, int seg_len, double alpha) {
  if (!(alpha >= 1.0)) throw Error("invalid rate");
  if (seg_len <= 0 || context_length < 0) throw Error("invalid lengths");
  const int n = (context_length + seg_len - 1) / seg_len;
  const double k = std::floor(static_cast<double>(context_length) / (alpha * seg_len));
  return static_cast<int>(std::clamp(k, 0.0, static_cast<double>(n)));
}

Selection select(const RowVector& probs, int k) {
  const int n = static_cast<int>(probs.size());
  if (k < 0 || k > n) throw Error("invalid budget");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs(a) > probs(b); });
  Selection s;
  s.retained.assign(order.begin(), order.begin() + k);
  s.skimmed.assign(order.begin() + k, order.end());
  std::sort(s.retained.begin(), s.retained.end());
  std::sort(s.skimmed.begin(), s.skimmed.end());
  return s;
}

RowVector skim(const Matrix& states, const RowVector& query_rep, SkimWeighting weighting) {
  const Eigen::Index len = states.rows();
  if (len == 0) throw Error("empty sequence");
  if (weighting == SkimWeighting::uniform) return mean_pool(states);
  if (!(query_rep.norm() > 0.0)) throw Error("degenerate query");
  RowVector scores(len);
  for (Eigen::Index t = 0; t < len; ++t) {
    scores(t) = states.row(t).norm() > 0.0 ? cosine(states.row(t), query_rep) : -1.0;
  }
  const RowVector w = softmax(scores);
  return w * states;
}

CompressionPlan make_plan(const ParallelEncoding& encoding, int seg_len, double alpha, double tau) {
  const RowVector rq = representative(encoding.query);
  std::vector<RowVector> reps;
  reps.reserve(encoding.segments.size());
  for (const HiddenStates& s : encoding.segments) reps.push_back(representative(s));

  CompressionPlan plan;
  plan.alpha = alpha;
  plan.probs = relevance(rq, reps, tau);
  plan.cosines.resize(static_cast<Eigen::Index>(reps.size()));
  for (std::size_t i = 0; i < reps.size(); ++i) plan.cosines(static_cast<Eigen::Index>(i)) = cosine(rq, reps[i]);

  const int n = static_cast<int>(reps.size());
  plan.k = budget(n * seg_len, seg_len, alpha);
  Selection sel = select(plan.probs, plan.k);
  plan.retained = std::move(sel.retained);
  plan.skimmed = std::move(sel.skimmed);
  return plan;
}

HybridMemory assemble(const SegmentedExample& example, const CompressionPlan& plan,
                      std::span<const RowVector> skim_vectors, const Matrix& w_align,
                      const Matrix& decoder_embedding, bool emit_skims) {
  const int n = example.num_segments();
  if (plan.num_segments() != n) throw Error("plan does not match example");
  const Eigen::Index d = decoder_embedding.cols();
  if (w_align.rows() != d || w_align.cols() != d) throw Error("alignment width mismatch");
  if (emit_skims && skim_vectors.size() != plan.skimmed.size()) throw Error("one skim vector per skimmed segment");

  std::vector<int> action(static_cast<std::size_t>(n), -1);  // -1 unset, -2 retained, >=0 skim slot
  for (int i : plan.retained) action[static_cast<std::size_t>(i)] = -2;
  for (std::size_t j = 0; j < plan.skimmed.size(); ++j) {
    const int i = plan.skimmed[j];
    if (action[static_cast<std::size_t>(i)] != -1) throw Error("retained and skimmed sets overlap");
    action[static_cast<std::size_t>(i)] = static_cast<int>(j);
  }

  HybridMemory mem;
  mem.width = static_cast<int>(d);
  for (int i = 0; i < n; ++i) {
    const int a = action[static_cast<std::size_t>(i)];
    if (a == -1) throw Error("plan does not cover every segment");
    if (a == -2) {
      RetainedBlock block;
      block.segment = i;
      block.tokens = example.segments[static_cast<std::size_t>(i)];
      block.embeddings.resize(static_cast<Eigen::Index>(block.tokens.size()), d);
      for (std::size_t t = 0; t < block.tokens.size(); ++t) {
        const int id = block.tokens[t];
        if (id < 0 || id >= decoder_embedding.rows()) throw Error("bad token id");
        block.embeddings.row(static_cast<Eigen::Index>(t)) = decoder_embedding.row(id);
      }
      mem.total_length += static_cast<int>(block.tokens.size());
      mem.entries.emplace_back(std::move(block));
    } else if (emit_skims) {
      const RowVector& c = skim_vectors[static_cast<std::size_t>(a)];
      if (c.size() != d) throw Error("alignment width mismatch");
      // W_align acts on column vectors: (W c)^T = c W^T.
      mem.entries.emplace_back(SkimEntry{i, c * w_align.transpose()});
      mem.total_length += 1;
    }
  }
  return mem;
}

}  // namespace ram
