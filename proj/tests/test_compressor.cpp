#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "ram/compressor.hpp"

using namespace ram;

TEST_CASE("representative") {
  Matrix m(2, 2);
  m << 1, 3, 3, 5;
  CHECK(representative({m, ""}) == (RowVector(2) << 2, 4).finished());
  Matrix d(2, 2);
  d << 2, 0, 0, 2;
  CHECK(representative({d, ""}) == (RowVector(2) << 1, 1).finished());

  std::mt19937_64 rng(1);
  const Matrix r = test::random_matrix(50, 8, rng);
  RowVector brute = RowVector::Zero(8);
  for (Eigen::Index i = 0; i < 50; ++i)
    for (Eigen::Index j = 0; j < 8; ++j) brute(j) += r(i, j);
  brute /= 50.0;
  CHECK((representative({r, ""}) - brute).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("relevance") {
  RowVector q(2);
  q << 1, 0;
  std::vector<RowVector> reps = {(RowVector(2) << 2, 0).finished(), (RowVector(2) << 0, 5).finished()};
  const RowVector p = relevance(q, reps, 0.1);
  CHECK(std::abs(p(0) - 0.9999546) < 1e-7);
  CHECK(std::abs(p(1) - 4.54e-5) < 1e-7);
  CHECK(relevance(RowVector(3.0 * q), reps, 0.1) == p);

  std::vector<RowVector> same(4, q);
  const RowVector u = relevance(q, same);
  for (int i = 0; i < 4; ++i) CHECK(u(i) == doctest::Approx(0.25));

  CHECK_THROWS_WITH_AS(relevance(RowVector::Zero(2), reps), "degenerate query", Error);
  reps.push_back(RowVector::Zero(2));
  CHECK_THROWS_WITH_AS(relevance(q, reps), "degenerate segment", Error);
}

TEST_CASE("budget") {
  CHECK(budget(1000, 50, 4) == 5);
  CHECK(budget(1000, 50, 32) == 0);
  CHECK(budget(20000, 50, 2) == 200);
  CHECK(budget(1000, 50, 1) == 20);
  CHECK(budget(128, 16, 4) == 2);
  CHECK_THROWS_WITH_AS(budget(1000, 50, 0.5), "invalid rate", Error);
}

TEST_CASE("select") {
  RowVector p(3);
  p << 0.1, 0.5, 0.4;
  Selection s = select(p, 1);
  CHECK(s.retained == std::vector<int>{1});
  CHECK(s.skimmed == std::vector<int>{0, 2});

  const RowVector u = RowVector::Constant(4, 0.25);
  CHECK(select(u, 2).retained == std::vector<int>{0, 1});
  CHECK(select(u, 4).skimmed.empty());
  CHECK(select(u, 0).retained.empty());
}

TEST_CASE("skim") {
  Matrix h(2, 2);
  h << 1, 0, 0, 1;
  RowVector q(2);
  q << 1, 0;
  const RowVector c = skim(h, q);
  const double w0 = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(std::abs(c(0) - 0.7311) < 1e-4);
  CHECK(std::abs(c(1) - 0.2689) < 1e-4);
  CHECK(std::abs(c(0) - w0) < 1e-15);

  const Matrix constant = RowVector(q).replicate(5, 1);
  CHECK((skim(constant, RowVector::Ones(2)) - q).norm() < 1e-15);

  std::mt19937_64 rng(3);
  const Matrix s = test::random_matrix(50, 8, rng);
  const RowVector r = test::random_row(8, rng);
  std::vector<double> score(50);
  double mx = -1e300;
  for (int t = 0; t < 50; ++t) {
    double dot = 0, nh = 0, nr = 0;
    for (int j = 0; j < 8; ++j) {
      dot += s(t, j) * r(j);
      nh += s(t, j) * s(t, j);
      nr += r(j) * r(j);
    }
    score[t] = dot / std::sqrt(nh * nr);
    mx = std::max(mx, score[t]);
  }
  double z = 0;
  for (double& v : score) z += (v = std::exp(v - mx));
  RowVector brute = RowVector::Zero(8);
  for (int t = 0; t < 50; ++t) brute += (score[t] / z) * s.row(t);
  CHECK((skim(s, r) - brute).cwiseAbs().maxCoeff() < 1e-12);

  CHECK((skim(s, r, SkimWeighting::uniform) - mean_pool(s)).norm() < 1e-15);
}

TEST_CASE("skim gives zero rows cosine -1") {
  Matrix h(2, 2);
  h << 0, 0, 1, 0;
  RowVector q(2);
  q << 1, 0;
  const RowVector c = skim(h, q);
  CHECK(c(0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
}

namespace {

SegmentedExample toy(int n, int len) {
  SegmentedExample ex;
  ex.id = "toy";
  ex.query = {2, 3};
  for (int i = 0; i < n; ++i) {
    std::vector<int> seg;
    for (int t = 0; t < len; ++t) seg.push_back(3 + (i * len + t) % 250);
    ex.segments.push_back(seg);
  }
  ex.answer = {4, kEosId};
  return ex;
}

CompressionPlan plan_with(int n, std::vector<int> retained) {
  CompressionPlan p;
  p.probs = RowVector::Constant(n, 1.0 / n);
  p.cosines = RowVector::Zero(n);
  p.k = static_cast<int>(retained.size());
  for (int i = 0; i < n; ++i) {
    if (std::find(retained.begin(), retained.end(), i) == retained.end()) p.skimmed.push_back(i);
  }
  p.retained = std::move(retained);
  return p;
}

}  // namespace

TEST_CASE("assemble") {
  std::mt19937_64 rng(4);
  const Matrix embed = test::random_matrix(kVocabSize, 6, rng);
  const Matrix w = test::random_matrix(6, 6, rng);

  SUBCASE("lengths") {
    const SegmentedExample ex = toy(20, 50);
    const CompressionPlan p = plan_with(20, {1, 4, 9, 10, 19});
    std::vector<RowVector> sk(15, test::random_row(6, rng));
    const HybridMemory m = assemble(ex, p, sk, w, embed);
    CHECK(m.total_length == 265);
    CHECK(m.total_length == compressed_length(20, 50, 5));
    CHECK(m.rows().rows() == 265);
  }
  SUBCASE("k = N is the full context") {
    const SegmentedExample ex = toy(4, 5);
    const HybridMemory m = assemble(ex, plan_with(4, {0, 1, 2, 3}), {}, w, embed);
    CHECK(m.total_length == 20);
    const Matrix rows = m.rows();
    int r = 0;
    for (const auto& seg : ex.segments)
      for (int t : seg) CHECK(rows.row(r++) == embed.row(t));
  }
  SUBCASE("k = 0 gives one aligned vector per segment") {
    const SegmentedExample ex = toy(8, 4);
    std::vector<RowVector> sk;
    for (int i = 0; i < 8; ++i) sk.push_back(test::random_row(6, rng));
    const HybridMemory m = assemble(ex, plan_with(8, {}), sk, w, embed);
    CHECK(m.total_length == 8);
    const Matrix rows = m.rows();
    for (int i = 0; i < 8; ++i) CHECK((rows.row(i) - (w * sk[i].transpose()).transpose()).norm() < 1e-12);
  }
  SUBCASE("drop skims") {
    const SegmentedExample ex = toy(8, 4);
    const HybridMemory m = assemble(ex, plan_with(8, {2, 5}), {}, w, embed, false);
    CHECK(m.total_length == 8);
    CHECK(m.retained_tokens().size() == 8);
  }
  SUBCASE("width mismatch") {
    const SegmentedExample ex = toy(2, 4);
    CHECK_THROWS_WITH_AS(assemble(ex, plan_with(2, {0, 1}), {}, Matrix::Identity(5, 5), embed),
                         "alignment width mismatch", Error);
  }
}

TEST_CASE("make_plan on a real encoding") {
  std::mt19937_64 rng(5);
  EncoderWeights w({kVocabSize, 16, 1, 2, 64, 32}, rng);
  const SegmentedExample ex = make_needle(5, 8, 16, 1);
  const ParallelEncoding enc = encode_parallel(ex, w);
  const CompressionPlan p = make_plan(enc, 16, 4.0);
  CHECK(p.k == 2);
  CHECK(p.retained.size() == 2);
  CHECK(p.skimmed.size() == 6);
  CHECK(std::abs(p.probs.sum() - 1.0) < 1e-12);
  CHECK(std::is_sorted(p.retained.begin(), p.retained.end()));
  for (int i : p.retained)
    for (int j : p.skimmed) CHECK(p.probs(i) >= p.probs(j));
}
