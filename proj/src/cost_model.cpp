#include "ram/cost_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace ram {

double projection_flops(double tokens, const ModelDims& m) {
  const double d = m.d_model;
  return 2.0 * tokens * (4.0 * d * d + 2.0 * d * m.d_ff);
}

double attention_flops(double len, const ModelDims& m) { return 4.0 * m.d_model * len * len; }

double segment_attention_flops(int n_segments, int seg_len, const ModelDims& m) {
  return n_segments * attention_flops(seg_len, m);
}

double full_attention_flops(int context_length, const ModelDims& m) { return attention_flops(context_length, m); }

double flops_parallel_encoding(int n_segments, int seg_len, int query_len, const ModelDims& m) {
  if (n_segments < 1 || seg_len < 1 || query_len < 0) throw Error("inconsistent dims");
  const double tokens = static_cast<double>(n_segments) * seg_len + query_len;
  return m.n_layers * (projection_flops(tokens, m) + segment_attention_flops(n_segments, seg_len, m) +
                       attention_flops(query_len, m));
}

double flops_query_attention(int n_segments, const ModelDims& m) { return 6.0 * n_segments * m.d_model; }

double flops_compression(int context_length, int seg_len, int query_len, const ModelDims& m) {
  if (seg_len < 1 || context_length < seg_len || context_length % seg_len != 0) throw Error("inconsistent dims");
  const int n = context_length / seg_len;
  return flops_parallel_encoding(n, seg_len, query_len, m) + flops_query_attention(n, m);
}

double flops_full_sequence_encoding(int context_length, int query_len, const ModelDims& m) {
  if (context_length < 1 || query_len < 0) throw Error("inconsistent dims");
  const double tokens = static_cast<double>(context_length) + query_len;
  return m.n_layers * (projection_flops(tokens, m) + full_attention_flops(context_length, m) +
                       attention_flops(query_len, m)) +
         flops_query_attention(1, m);
}

double flops_decode_step(int compressed_length, int query_len, int step, const ModelDims& m) {
  if (compressed_length < 0 || query_len < 0 || step < 1) throw Error("inconsistent dims");
  const double prefix = static_cast<double>(compressed_length) + query_len + step;
  return m.n_layers * (projection_flops(1.0, m) + 4.0 * m.d_model * prefix) + 2.0 * m.d_model * m.vocab;
}

double flops_decoding(int compressed_length, int query_len, int answer_len, const ModelDims& m) {
  if (answer_len < 1) throw Error("answer length must be >= 1");
  double total = 0.0;
  for (int i = 1; i <= answer_len; ++i) total += flops_decode_step(compressed_length, query_len, i, m);
  return total;
}

FlopsReport flops_report(int context_length, int seg_len, int query_len, int answer_len, double alpha,
                         const ModelDims& m) {
  FlopsReport r;
  r.context_length = context_length;
  r.seg_len = seg_len;
  r.query_len = query_len;
  r.answer_len = answer_len;
  r.alpha = alpha;
  r.dims = m;
  const int n = context_length / seg_len;
  const int k = budget(context_length, seg_len, alpha);
  r.compressed_length = compressed_length(n, seg_len, k);
  r.flops_comp = flops_compression(context_length, seg_len, query_len, m);
  r.flops_decode_total = flops_decoding(r.compressed_length, query_len, answer_len, m);
  r.flops_total = r.flops_comp + r.flops_decode_total;
  r.baseline_full_context = flops_decoding(context_length, query_len, answer_len, m);
  r.ratio = r.flops_total / r.baseline_full_context;
  return r;
}

std::string flops_csv_header() {
  return "alpha,L_org,L_seg,L_q,L_c,L_a,d,n_layers,n_heads,V,flops_comp,flops_decode_total,flops_total,"
         "baseline_full_context,ratio";
}

std::string flops_csv_row(const FlopsReport& r) {
  std::ostringstream out;
  out << r.alpha << ',' << r.context_length << ',' << r.seg_len << ',' << r.query_len << ',' << r.compressed_length
      << ',' << r.answer_len << ',' << r.dims.d_model << ',' << r.dims.n_layers << ',' << r.dims.n_heads << ','
      << r.dims.vocab << std::fixed << std::setprecision(0) << ',' << r.flops_comp << ',' << r.flops_decode_total
      << ',' << r.flops_total << ',' << r.baseline_full_context << std::setprecision(6) << ',' << r.ratio;
  return out.str();
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

HybridMemory original_prompt(const Model& model, const SegmentedExample& ex) {
  CompressionPlan plan;
  plan.probs = RowVector::Constant(ex.num_segments(), 1.0 / ex.num_segments());
  plan.retained.resize(static_cast<std::size_t>(ex.num_segments()));
  std::iota(plan.retained.begin(), plan.retained.end(), 0);
  return assemble(ex, plan, {}, model.w_align.value, model.decoder.token_embedding.value, false);
}

}  // namespace

std::vector<BenchRow> bench(const Model& model, std::span<const SegmentedExample> examples,
                            std::span<const double> rates, const BenchOptions& opts) {
  if (examples.empty()) throw DataError("empty benchmark set");
  if (opts.repetitions < 1 || opts.answer_len < 1) throw Error("invalid benchmark options");
  const ModelDims dims = ModelDims::from(model.config);
  InferenceOptions inf;
  inf.tau = opts.tau;
  std::vector<BenchRow> rows;

  auto measure = [&](BenchRow row, bool original) {
    for (const SegmentedExample& ex : examples) {
      std::vector<double> comp, dec;
      int lc = 0;
      for (int r = 0; r < opts.warmup + opts.repetitions; ++r) {
        auto t0 = Clock::now();
        HybridMemory mem = original ? original_prompt(model, ex) : compress(model, ex, row.alpha, Mode::standard, inf).memory;
        const double tc = original ? 0.0 : seconds_since(t0);
        t0 = Clock::now();
        generate(mem, ex.query, model.decoder, opts.answer_len, /*eos=*/-1);
        const double td = seconds_since(t0);
        lc = mem.total_length;
        if (r >= opts.warmup) {
          comp.push_back(tc);
          dec.push_back(td);
        }
      }
      row.compression_s += median(comp);
      row.decode_s += median(dec);
      row.lc_mean += lc;
      row.decode_flops += flops_decoding(lc, static_cast<int>(ex.query.size()), opts.answer_len, dims);
    }
    const double n = static_cast<double>(examples.size());
    row.compression_s /= n;
    row.decode_s /= n;
    row.lc_mean /= n;
    row.decode_flops /= n;
    row.end_to_end_s = row.compression_s + row.decode_s;
    rows.push_back(row);
  };

  measure(BenchRow{"Original Prompt", 1.0}, true);
  for (double a : rates) measure(BenchRow{"RAM", a}, false);
  return rows;
}

std::string bench_csv_header() {
  return "method,alpha,lc_mean,compression_latency_s,inference_latency_s,end_to_end_latency_s,decode_flops";
}

std::string bench_csv_row(const BenchRow& r) {
  std::ostringstream out;
  out << r.method << ',' << r.alpha << std::fixed << std::setprecision(2) << ',' << r.lc_mean
      << std::setprecision(6) << ',' << r.compression_s << ',' << r.decode_s << ',' << r.end_to_end_s
      << std::setprecision(0) << ',' << r.decode_flops;
  return out.str();
}

double rank_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("rank correlation needs two equal-length series");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = 0.5 * static_cast<double>(i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

}  // namespace ram
