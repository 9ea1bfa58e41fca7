#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "ram/grad_check.hpp"
#include "ram/pipeline.hpp"

using namespace ram;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 32;
  c.encoder_max_len = 16;
  c.decoder_max_len = 48;
  return c;
}

std::vector<RowVector> reps_with_cosines(std::vector<double> cos) {
  // r_q = e0; r_i = (c, sqrt(1-c^2), 0) has cosine c.
  std::vector<RowVector> out;
  for (double c : cos) out.push_back((RowVector(3) << c, std::sqrt(1 - c * c), 0).finished());
  return out;
}

const RowVector kQuery = (RowVector(3) << 1, 0, 0).finished();

}  // namespace

TEST_CASE("contrastive loss closed forms") {
  const auto equal = reps_with_cosines({0.3, 0.3, 0.3, 0.3});
  const std::vector<int> one = {2};
  CHECK(std::abs(contrastive_loss(kQuery, equal, one) - std::log(4.0)) < 1e-12);
  CHECK(std::abs(contrastive_loss(kQuery, equal, one, 2.5) - std::log(4.0)) < 1e-12);
  const std::vector<int> all = {0, 1, 2, 3};
  CHECK(std::abs(contrastive_loss(kQuery, equal, all) - std::log(4.0)) < 1e-12);

  const auto peaked = reps_with_cosines({1.0, 0.0, 0.0, 0.0});
  const std::vector<int> first = {0};
  const double oracle = std::log1p(3.0 * std::exp(-10.0));
  CHECK(std::abs(contrastive_loss(kQuery, peaked, first, 0.1) - oracle) < 1e-15);
  CHECK(std::abs(contrastive_loss(kQuery, peaked, first, 0.1) - 1.362e-4) < 1e-7);

  CHECK(contrastive_loss(kQuery, peaked, std::vector<int>{}) == 0.0);
  CHECK_THROWS_WITH_AS(contrastive_loss(kQuery, peaked, std::vector<int>{4}), "invalid positive index", Error);
}

TEST_CASE("contrastive loss is scale invariant and monotone") {
  std::mt19937_64 rng(1);
  std::vector<RowVector> reps;
  for (int i = 0; i < 6; ++i) reps.push_back(test::random_row(5, rng));
  const RowVector q = test::random_row(5, rng);
  const std::vector<int> pos = {1, 4};
  const double base = contrastive_loss(q, reps, pos);
  std::vector<RowVector> scaled;
  for (std::size_t i = 0; i < reps.size(); ++i) scaled.push_back(reps[i] * (0.1 + static_cast<double>(i)));
  CHECK(std::abs(contrastive_loss(RowVector(7.0 * q), scaled, pos) - base) < 1e-12);

  double prev = 1e9;
  for (double c : {-0.5, 0.0, 0.5, 0.9}) {
    auto r = reps_with_cosines({0.2, c, 0.1});
    const double l = contrastive_loss(kQuery, r, std::vector<int>{1});
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("tape contrastive matches the value form") {
  std::mt19937_64 rng(2);
  std::vector<RowVector> reps;
  Matrix b(5, 4);
  for (int i = 0; i < 5; ++i) {
    reps.push_back(test::random_row(4, rng));
    b.row(i) = reps.back();
  }
  const RowVector q = test::random_row(4, rng);
  const std::vector<int> pos = {0, 3};
  ad::Tape t;
  const ad::Var cos = ad::cosine_rows(t.constant(q), t.constant(b));
  CHECK(std::abs(contrastive_loss(cos, pos, 0.1).scalar() - contrastive_loss(q, reps, pos, 0.1)) < 1e-12);
}

TEST_CASE("total loss") {
  CHECK(total_loss(2.0, 0.5, Mode::standard) == 2.5);
  CHECK(total_loss(1.25, 0.0, Mode::standard) == 1.25);
  CHECK(total_loss(2.0, 0.5, Mode::no_contrastive) == 2.0);
}

TEST_CASE("modes") {
  CHECK(parse_mode("default") == Mode::standard);
  for (Mode m : kAllModes) CHECK(parse_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_mode("fast"), Error);

  CompressionPlan p;
  p.probs = RowVector::Constant(8, 0.125);
  p.k = 5;
  p.retained = {0, 1, 2, 3, 4};
  p.skimmed = {5, 6, 7};
  const MemoryLayout ncr = apply_mode(p, Mode::no_close_reading);
  CHECK(ncr.retained.empty());
  CHECK(ncr.skimmed.size() == 8);
  const MemoryLayout ns = apply_mode(p, Mode::no_skimming);
  CHECK_FALSE(ns.emit_skims);
  CHECK(apply_mode(p, Mode::ap_skimming).weighting == SkimWeighting::uniform);
}

TEST_CASE("mode memory lengths") {
  Model model(tiny(), 3);
  model.config.decoder_max_len = 48;
  SUBCASE("no_close_reading gives N vectors") {
    const SegmentedExample ex = make_needle(4, 8, 4, 1, {1, false});
    InferenceOptions o;
    const Compression c = compress(model, ex, 2.0, Mode::no_close_reading, o);
    CHECK(c.memory.total_length == 8);
    CHECK(c.memory.entries.size() == 8);
  }
  SUBCASE("no_skimming keeps k * L_seg") {
    SegmentedExample ex = make_needle(5, 20, 50, 1);
    Model big(ModelConfig{}, 1);
    const Compression c = compress(big, ex, 4.0, Mode::no_skimming);
    CHECK(c.plan.k == 5);
    CHECK(c.memory.total_length == 250);
  }
}

TEST_CASE("ap_skimming equals default on constant states") {
  Matrix h = Matrix::Ones(5, 3);
  const RowVector q = (RowVector(3) << 0.2, 1, -1).finished();
  CHECK((skim(h, q, SkimWeighting::uniform) - skim(h, q)).norm() < 1e-15);
}

TEST_CASE("end-to-end gradient check") {
  Model model(tiny(), 5);
  // Probe at a generic point: at the small-init point many gradients are
  // ~1e-8 and finite differences only resolve their roundoff.
  std::mt19937_64 rng(6);
  for (ad::Parameter* p : model.parameters()) p->value += test::random_matrix(p->value.rows(), p->value.cols(), rng, 0.3);
  auto data = make_needle_dataset(7, 2, 4, 4, 2, {2, false});
  const std::vector<const SegmentedExample*> batch = {&data[0], &data[1]};
  const std::vector<double> alphas = {2.0, 4.0};

  ad::Tape probe(false);
  const BatchForward f0 = forward_batch(probe, model, batch, alphas, Mode::standard, 0.1);
  std::vector<CompressionPlan> plans;
  for (const auto& e : f0.examples) plans.push_back(e.plan);
  CHECK(f0.examples[0].has_contrastive);

  auto loss = [&](ad::Tape& t) { return forward_batch(t, model, batch, alphas, Mode::standard, 0.1, plans).loss; };
  const auto params = model.parameters();
  const auto r = ad::grad_check(loss, params, 1e-4, 11, 24, 1e-6);
  INFO("worst ", r.worst_parameter, " [", r.worst_index, "] analytic ", r.analytic, " numeric ", r.numeric);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("no_contrastive leaves the NLL alone") {
  Model model(tiny(), 8);
  auto data = make_needle_dataset(9, 3, 4, 4, 1, {2, false});
  std::vector<const SegmentedExample*> batch;
  for (const auto& e : data) batch.push_back(&e);
  const std::vector<double> alphas(3, 2.0);
  ad::Tape t;
  const BatchForward f = forward_batch(t, model, batch, alphas, Mode::no_contrastive, 0.1);
  double nll = 0.0;
  for (const auto& e : f.examples) {
    CHECK_FALSE(e.has_contrastive);
    CHECK(e.con == 0.0);
    nll += e.nll;
  }
  CHECK(std::abs(f.loss.scalar() - nll / 3.0) < 1e-15);
}

TEST_CASE("training decreases the loss on a fixed batch") {
  Model model(tiny(), 10);
  TrainConfig cfg;
  cfg.steps = 200;
  cfg.seed = 3;
  Trainer trainer(model, cfg);
  auto data = make_needle_dataset(12, 4, 4, 4, 1, {2, false});
  std::vector<const SegmentedExample*> batch;
  for (const auto& e : data) batch.push_back(&e);
  std::vector<double> losses;
  for (int s = 0; s < 200; ++s) losses.push_back(trainer.train_step(batch).loss);
  const double first = std::accumulate(losses.begin(), losses.begin() + 20, 0.0) / 20;
  const double last = std::accumulate(losses.end() - 20, losses.end(), 0.0) / 20;
  CHECK(last < 0.5 * first);
}

TEST_CASE("training is deterministic") {
  auto data = make_needle_dataset(13, 32, 4, 4, 1, {2, false});
  auto run = [&] {
    Model model(tiny(), 14);
    TrainConfig cfg;
    cfg.steps = 6;
    cfg.batch_size = 4;
    Trainer trainer(model, cfg);
    trainer.fit(data);
    return parameter_digest(model) + trainer.data_order_digest();
  };
  CHECK(run() == run());
}

TEST_CASE("a trained model echoes its answer") {
  Model model(tiny(), 15);
  TrainConfig cfg;
  cfg.steps = 100;
  cfg.learning_rate = 3e-3;
  Trainer trainer(model, cfg);
  const SegmentedExample ex = make_needle(16, 4, 4, 1, {2, false});
  const SegmentedExample* batch[] = {&ex};
  for (int s = 0; s < 100; ++s) trainer.train_step(batch);
  const ExampleResult r = run_example(model, ex, 2.0, Mode::standard);
  CHECK(r.prediction == ex.answer);
  CHECK(r.score.em == 1.0);
}

TEST_CASE("non-finite loss aborts with diagnostics") {
  Model model(tiny(), 17);
  model.decoder.lm_head.value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  Trainer trainer(model, TrainConfig{});
  const SegmentedExample ex = make_needle(18, 4, 4, 1, {2, false});
  const SegmentedExample* batch[] = {&ex};
  CHECK_THROWS_WITH_AS(trainer.train_step(batch), doctest::Contains("step 0, example needle"), NumericalError);
}

TEST_CASE("alpha histogram") {
  const std::vector<double> pool = {2, 4, 8};
  const std::vector<double> drawn = {2, 8, 8, 2, 2};
  CHECK(alpha_histogram(drawn, pool) == "2:3|4:0|8:2");
}

TEST_CASE("alpha 1 is uncompressed decoding") {
  Model model(tiny(), 19);
  const SegmentedExample ex = make_needle(20, 4, 4, 1, {2, false});
  const Compression c = compress(model, ex, 1.0);
  CHECK(c.memory.total_length == ex.context_length());
  std::vector<int> prompt;
  for (const auto& seg : ex.segments) prompt.insert(prompt.end(), seg.begin(), seg.end());
  prompt.insert(prompt.end(), ex.query.begin(), ex.query.end());
  const HybridMemory none{{}, 0, 16};
  CHECK(generate(c.memory, ex.query, model.decoder, 6) == generate(none, prompt, model.decoder, 6));
}

TEST_CASE("evaluation rows") {
  Model model(tiny(), 21);
  const auto data = make_needle_dataset(22, 6, 4, 4, 1, {2, false});
  const std::vector<double> pool = {2, 4};
  InferenceOptions one, three;
  three.workers = 3;
  const EvalRow a = evaluate(model, data, 4.0, Mode::standard, one, pool);
  const EvalRow b = evaluate(model, data, 4.0, Mode::standard, three, pool);
  CHECK(eval_csv_row(a) == eval_csv_row(b));
  CHECK_FALSE(a.extrapolated);
  CHECK(evaluate(model, data, 8.0, Mode::standard, one, pool).extrapolated);
  CHECK(a.lc_mean == compressed_length(4, 4, 1));
  CHECK(a.achieved_ratio == doctest::Approx(16.0 / 7.0));
  const EvalRow dropped = evaluate(model, data, 32.0, Mode::no_skimming, one);
  CHECK(dropped.lc_mean == 0.0);
  CHECK(eval_csv_row(dropped).find(",inf,") != std::string::npos);
}
