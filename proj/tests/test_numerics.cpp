#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

using namespace ram;

TEST_CASE("softmax sums to one") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const RowVector x = test::random_row(1 + trial % 17, rng, 5.0);
    for (double tau : {0.05, 0.1, 1.0, 3.0}) CHECK(std::abs(softmax(x, tau).sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("softmax at tau 0.1 on (1, 0)") {
  RowVector x(2);
  x << 1.0, 0.0;
  const RowVector p = softmax(x, 0.1);
  const double expect = 1.0 / (1.0 + std::exp(-10.0));
  CHECK(std::abs(p(0) - expect) < 1e-15);
  CHECK(std::abs(p(0) - 0.9999546) < 1e-7);
  CHECK(std::abs(p(1) - 4.54e-5) < 1e-7);
}

TEST_CASE("softmax survives large logits") {
  RowVector x(3);
  x << 1000.0, 999.0, -1000.0;
  const RowVector p = softmax(x);
  CHECK(p.allFinite());
  CHECK(p(0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
}

TEST_CASE("softmax rejects bad temperature") {
  RowVector x = RowVector::Ones(3);
  CHECK_THROWS_WITH_AS(softmax(x, 0.0), "invalid temperature", Error);
  CHECK_THROWS_WITH_AS(softmax(x, -1.0), "invalid temperature", Error);
}

TEST_CASE("cosine") {
  RowVector u(2), v(2);
  u << 1, 0;
  v << 0, 1;
  CHECK(cosine(u, u) == 1.0);
  CHECK(cosine(u, v) == 0.0);
  CHECK(cosine(u, RowVector(-u)) == -1.0);
  CHECK_THROWS_WITH_AS(cosine(u, RowVector::Zero(2)), "degenerate vector", Error);

  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    const RowVector a = test::random_row(8, rng), b = test::random_row(8, rng);
    const double c = cosine(a, b);
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
    CHECK(std::abs(cosine(RowVector(3.5 * a), RowVector(0.01 * b)) - c) < 1e-12);
  }
}

TEST_CASE("mean_pool") {
  Matrix m(2, 2);
  m << 1, 2, 3, 6;
  const RowVector r = mean_pool(m);
  CHECK(r(0) == 2.0);
  CHECK(r(1) == 4.0);
  CHECK_THROWS_WITH_AS(mean_pool(Matrix(0, 3)), "empty sequence", Error);
}

TEST_CASE("numerics work in single precision") {
  Eigen::Matrix<float, 1, Eigen::Dynamic> x(2);
  x << 1.0f, 0.0f;
  const auto p = softmax(x, 0.1f);
  CHECK(p(0) == doctest::Approx(0.9999546f));
}
