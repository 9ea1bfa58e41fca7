#include "doctest.h"
#include "ram/cost_model.hpp"

using namespace ram;

TEST_CASE("segment attention ratio") {
  const ModelDims m;
  const double ratio = segment_attention_flops(20, 50, m) / full_attention_flops(1000, m);
  CHECK(std::abs(ratio - 0.05) <= 1e-12);
  CHECK(segment_attention_flops(40, 50, m) == 2.0 * segment_attention_flops(20, 50, m));
}

TEST_CASE("one segment is the full sequence") {
  const ModelDims m;
  CHECK(flops_compression(1000, 1000, 8, m) == flops_full_sequence_encoding(1000, 8, m));
  CHECK(flops_compression(1000, 50, 8, m) < flops_full_sequence_encoding(1000, 8, m));
  CHECK_THROWS_AS(flops_compression(1000, 30, 8, m), Error);
}

TEST_CASE("decode flops") {
  const ModelDims m;
  CHECK(flops_decoding(100, 4, 1, m) == flops_decode_step(100, 4, 1, m));
  double prev = 1e300;
  for (double a : {1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
    const FlopsReport r = flops_report(1024, 16, 2, 4, a, m);
    CHECK(r.flops_decode_total < prev);
    prev = r.flops_decode_total;
    CHECK(r.flops_total == r.flops_comp + r.flops_decode_total);
  }
  const FlopsReport one = flops_report(1024, 16, 2, 4, 1.0, m);
  CHECK(one.flops_decode_total == one.baseline_full_context);
}

TEST_CASE("rank correlation") {
  const std::vector<double> x = {1, 2, 3, 4};
  const std::vector<double> y = {10, 20, 25, 100};
  const std::vector<double> z = {4, 3, 2, 1};
  CHECK(rank_correlation(x, y) == doctest::Approx(1.0));
  CHECK(rank_correlation(x, z) == doctest::Approx(-1.0));
}

TEST_CASE("bench shape") {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 32;
  c.decoder_max_len = 160;
  const Model model(c, 1);
  const auto data = make_needle_dataset(2, 1, 8, 16, 1);
  BenchOptions o;
  o.repetitions = 2;
  o.warmup = 0;
  const std::vector<double> rates = {2, 8};
  const auto rows = bench(model, data, rates, o);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].method == "Original Prompt");
  CHECK(rows[0].lc_mean == 128);
  CHECK(rows[1].lc_mean == compressed_length(8, 16, 4));
  CHECK(rows[2].lc_mean == compressed_length(8, 16, 1));
  for (const auto& r : rows) CHECK(r.end_to_end_s == r.compression_s + r.decode_s);
}
