#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "ram/compressor.hpp"
#include "ram/decoder.hpp"

using namespace ram;

namespace {

DecoderWeights small_decoder(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return DecoderWeights({kVocabSize, 16, 2, 2, 64, 64}, rng);
}

HybridMemory memory_of(const Matrix& rows) {
  HybridMemory m;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) m.entries.emplace_back(SkimEntry{static_cast<int>(i), rows.row(i)});
  m.total_length = static_cast<int>(rows.rows());
  m.width = static_cast<int>(rows.cols());
  return m;
}

}  // namespace

TEST_CASE("nll of uniform logits is ln V") {
  const Matrix logits = Matrix::Zero(3, kVocabSize);
  const std::vector<int> ans = {5, 6, 7};
  CHECK(std::abs(nll(logits, ans) - std::log(256.0)) < 1e-10);
}

TEST_CASE("nll matches a log-sum-exp oracle") {
  std::mt19937_64 rng(1);
  const Matrix logits = test::random_matrix(4, 10, rng, 3.0);
  const std::vector<int> ans = {0, 9, 3, 3};
  double expect = 0.0;
  for (int t = 0; t < 4; ++t) {
    double z = 0.0;
    for (int j = 0; j < 10; ++j) z += std::exp(logits(t, j));
    expect += std::log(z) - logits(t, ans[static_cast<std::size_t>(t)]);
  }
  CHECK(std::abs(nll(logits, ans) - expect / 4.0) < 1e-10);
}

TEST_CASE("nll vanishes with the margin") {
  const std::vector<int> ans = {2};
  double prev = 1e9;
  for (double margin : {1.0, 10.0, 100.0}) {
    Matrix logits = Matrix::Zero(1, 8);
    logits(0, 2) = margin;
    const double l = nll(logits, ans);
    CHECK(l < prev);
    prev = l;
  }
  CHECK(prev < 1e-40);
  CHECK_THROWS_WITH_AS(nll(Matrix::Zero(0, 8), std::vector<int>{}), "empty answer", Error);
}

TEST_CASE("full memory equals plain decoding of the context") {
  const DecoderWeights w = small_decoder(2);
  const std::vector<int> context = {40, 41, 42, 43, 44, 45};
  const std::vector<int> query = {2, 7};
  const std::vector<int> answer = {50, 51, kEosId};

  HybridMemory mem;
  RetainedBlock block{0, context, Matrix(6, 16)};
  for (int t = 0; t < 6; ++t) block.embeddings.row(t) = w.token_embedding.value.row(context[static_cast<std::size_t>(t)]);
  mem.entries.emplace_back(block);
  mem.total_length = 6;
  mem.width = 16;

  std::vector<int> prompt = context;
  prompt.insert(prompt.end(), query.begin(), query.end());
  const Matrix a = decode_forward(mem, query, answer, w);
  const Matrix b = decode_forward(HybridMemory{{}, 0, 16}, prompt, answer, w);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decoder sensitivity and determinism") {
  const DecoderWeights w = small_decoder(3);
  std::mt19937_64 rng(4);
  const Matrix rows = test::random_matrix(3, 16, rng);
  const std::vector<int> query = {2, 9};
  const std::vector<int> answer = {60, kEosId};
  const Matrix a = decode_forward(memory_of(rows), query, answer, w);
  CHECK(decode_forward(memory_of(rows), query, answer, w) == a);
  Matrix other = rows;
  other.row(1) = test::random_row(16, rng);
  CHECK((decode_forward(memory_of(other), query, answer, w) - a).norm() > 1e-6);
}

TEST_CASE("generate") {
  const DecoderWeights w = small_decoder(5);
  std::mt19937_64 rng(6);
  const HybridMemory mem = memory_of(test::random_matrix(4, 16, rng));
  const std::vector<int> query = {2, 5};
  CHECK(generate(mem, query, w, 1).size() == 1);
  const auto a = generate(mem, query, w, 6, -1);
  CHECK(a.size() == 6);
  CHECK(generate(mem, query, w, 6, -1) == a);
  // Capped by the position table.
  CHECK(generate(mem, query, w, 500, -1).size() == 64 - 4 - 2 + 1);
}

TEST_CASE("context overflow") {
  const DecoderWeights w = small_decoder(7);
  std::mt19937_64 rng(8);
  const HybridMemory mem = memory_of(test::random_matrix(70, 16, rng));
  const std::vector<int> query = {2};
  CHECK_THROWS_WITH_AS(decode_forward(mem, query, std::vector<int>{3}, w), "context overflow", Error);
}
