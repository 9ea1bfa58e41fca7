#include "ram/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <iomanip>
#include <limits>
#include <sstream>

namespace ram {

Compression compress(const Model& model, const SegmentedExample& example, double alpha, Mode mode,
                     const InferenceOptions& opts) {
  Compression c;
  c.encoding = encode_parallel(example, model.encoder, 1);
  c.plan = make_plan(c.encoding, example.segment_length(), alpha, opts.tau);
  c.inputs = apply_mode(c.plan, c.encoding, mode);
  c.memory = assemble(example, c.inputs.plan, c.inputs.skim_vectors, model.w_align.value,
                      model.decoder.token_embedding.value, c.inputs.emit_skims);
  return c;
}

ExampleResult run_example(const Model& model, const SegmentedExample& example, double alpha, Mode mode,
                          const InferenceOptions& opts) {
  const Compression c = compress(model, example, alpha, mode, opts);
  ExampleResult r;
  r.compressed_length = c.memory.total_length;
  r.prediction = generate(c.memory, example.query, model.decoder, opts.max_answer_len);
  r.score = em_f1(Vocab::detokenize(r.prediction), Vocab::detokenize(example.answer));
  if (!example.positives.empty()) {
    int hit = 0;
    for (int p : example.positives) {
      hit += std::binary_search(c.inputs.plan.retained.begin(), c.inputs.plan.retained.end(), p) ? 1 : 0;
    }
    r.recall = static_cast<double>(hit) / static_cast<double>(example.positives.size());
  }
  return r;
}

EvalRow evaluate(const Model& model, std::span<const SegmentedExample> examples, double alpha, Mode mode,
                 const InferenceOptions& opts, std::span<const double> train_pool) {
  if (examples.empty()) throw DataError("empty evaluation set");
  std::vector<ExampleResult> results(examples.size());
  const int workers = std::max(1, std::min<int>(opts.workers, static_cast<int>(examples.size())));
  auto run = [&](int w) {
    for (std::size_t i = static_cast<std::size_t>(w); i < examples.size(); i += static_cast<std::size_t>(workers)) {
      results[i] = run_example(model, examples[i], alpha, mode, opts);
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::future<void>> jobs;
    for (int w = 0; w < workers; ++w) jobs.push_back(std::async(std::launch::async, run, w));
    for (auto& j : jobs) j.get();
  }

  EvalRow row;
  row.alpha = alpha;
  row.mode = mode;
  row.n = static_cast<int>(examples.size());
  int labeled = 0;
  double l_org = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const ExampleResult& r = results[i];
    row.em += r.score.em;
    row.f1 += r.score.f1;
    row.lc_mean += r.compressed_length;
    l_org += examples[i].context_length();
    if (r.recall >= 0.0) {
      row.recall += r.recall;
      ++labeled;
    }
  }
  row.em /= row.n;
  row.f1 /= row.n;
  row.lc_mean /= row.n;
  l_org /= row.n;
  row.recall = labeled > 0 ? row.recall / labeled : 0.0;
  row.achieved_ratio = row.lc_mean > 0.0 ? l_org / row.lc_mean : std::numeric_limits<double>::infinity();
  if (!train_pool.empty()) {
    row.extrapolated = std::find(train_pool.begin(), train_pool.end(), alpha) == train_pool.end();
  }
  return row;
}

std::string eval_csv_header() { return "mode,alpha,n,em,f1,recall,achieved_ratio,lc_mean,extrapolated"; }

std::string eval_csv_row(const EvalRow& row) {
  std::ostringstream out;
  out << to_string(row.mode) << ',' << row.alpha << ',' << row.n << std::fixed << std::setprecision(6) << ','
      << row.em << ',' << row.f1 << ',' << row.recall << ',';
  if (std::isinf(row.achieved_ratio)) {
    out << "inf";
  } else {
    out << row.achieved_ratio;
  }
  out << ',' << row.lc_mean << ',' << (row.extrapolated ? 1 : 0);
  return out.str();
}

nlohmann::json plan_to_json(const SegmentedExample& example, const Compression& c) {
  const CompressionPlan& plan = c.inputs.plan;
  std::vector<std::string> action(static_cast<std::size_t>(plan.num_segments()), "drop");
  for (int i : plan.skimmed) action[static_cast<std::size_t>(i)] = c.inputs.emit_skims ? "skim" : "drop";
  for (int i : plan.retained) action[static_cast<std::size_t>(i)] = "close_read";

  nlohmann::json segs = nlohmann::json::array();
  std::string retained_text;
  for (int i = 0; i < plan.num_segments(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const std::string text = idx < example.segment_texts.size() ? example.segment_texts[idx]
                                                                 : Vocab::detokenize(example.segments[idx]);
    nlohmann::json s = {{"index", i},
                        {"action", action[idx]},
                        {"probability", plan.probs(i)},
                        {"cosine", plan.cosines(i)}};
    if (action[idx] == "close_read") {
      s["text"] = text;
      if (!retained_text.empty()) retained_text += '\n';
      retained_text += text;
    }
    segs.push_back(std::move(s));
  }
  return {{"id", example.id},
          {"alpha", plan.alpha},
          {"k", plan.k},
          {"num_segments", plan.num_segments()},
          {"segment_length", example.segment_length()},
          {"compressed_length", c.memory.total_length},
          {"query", example.query_text},
          {"segments", segs},
          {"retained_text", retained_text}};
}

}  // namespace ram
