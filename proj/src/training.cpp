#include "ram/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "ram/digest.hpp"

namespace ram {

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::standard: return "default";
    case Mode::no_skimming: return "no_skimming";
    case Mode::no_close_reading: return "no_close_reading";
    case Mode::ap_skimming: return "ap_skimming";
    case Mode::no_contrastive: return "no_contrastive";
  }
  return "default";
}

Mode parse_mode(std::string_view name) {
  for (Mode m : kAllModes) {
    if (to_string(m) == name) return m;
  }
  throw Error("invalid mode '" + std::string(name) +
              "' (expected default, no_skimming, no_close_reading, ap_skimming, no_contrastive)");
}

void TrainConfig::validate() const {
  if (rate_pool.empty()) throw Error("rate pool is empty");
  for (double r : rate_pool) {
    if (!(r >= 1.0)) throw Error("invalid rate");
  }
  if (!(tau > 0.0)) throw Error("invalid temperature");
  if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (batch_size < 1 || steps < 0) throw Error("batch size must be >= 1 and steps >= 0");
}

double contrastive_loss(const RowVector& query_rep, std::span<const RowVector> segment_reps,
                        std::span<const int> positives, double tau) {
  if (!(tau > 0.0)) throw Error("invalid temperature");
  const int n = static_cast<int>(segment_reps.size());
  for (int p : positives) {
    if (p < 0 || p >= n) throw Error("invalid positive index");
  }
  if (positives.empty()) return 0.0;
  RowVector logits(n);
  for (int i = 0; i < n; ++i) logits(i) = cosine(query_rep, segment_reps[static_cast<std::size_t>(i)]) / tau;
  const double lse = log_sum_exp(logits);
  double s = 0.0;
  for (int p : positives) s += lse - logits(p);
  return s / static_cast<double>(positives.size());
}

ad::Var contrastive_loss(ad::Var cosines, std::span<const int> positives, double tau) {
  if (positives.empty()) throw Error("contrastive loss needs positives");
  std::vector<std::pair<int, int>> picks;
  for (int p : positives) {
    if (p < 0 || p >= cosines.cols()) throw Error("invalid positive index");
    picks.emplace_back(0, p);
  }
  ad::Var logp = ad::log_softmax_rows(cosines * (1.0 / tau));
  return ad::pick_mean(logp, picks) * -1.0;
}

double total_loss(double nll, double con, Mode mode) { return mode == Mode::no_contrastive ? nll : nll + con; }

MemoryLayout apply_mode(const CompressionPlan& plan, Mode mode) {
  MemoryLayout layout{plan.retained, plan.skimmed, true, SkimWeighting::query_guided};
  switch (mode) {
    case Mode::standard:
    case Mode::no_contrastive:
      break;
    case Mode::no_skimming:
      layout.emit_skims = false;
      break;
    case Mode::no_close_reading:
      layout.retained.clear();
      layout.skimmed.resize(static_cast<std::size_t>(plan.num_segments()));
      std::iota(layout.skimmed.begin(), layout.skimmed.end(), 0);
      break;
    case Mode::ap_skimming:
      layout.weighting = SkimWeighting::uniform;
      break;
  }
  return layout;
}

MemoryInputs apply_mode(const CompressionPlan& plan, const ParallelEncoding& encoding, Mode mode) {
  const MemoryLayout layout = apply_mode(plan, mode);
  MemoryInputs in;
  in.plan = plan;
  in.plan.retained = layout.retained;
  in.plan.skimmed = layout.skimmed;
  in.emit_skims = layout.emit_skims;
  if (layout.emit_skims) {
    const RowVector rq = representative(encoding.query);
    for (int i : layout.skimmed) {
      in.skim_vectors.push_back(skim(encoding.segments[static_cast<std::size_t>(i)].states, rq, layout.weighting));
    }
  }
  return in;
}

BatchForward forward_batch(ad::Tape& tape, const Model& model, std::span<const SegmentedExample* const> batch,
                           std::span<const double> alphas, Mode mode, double tau,
                           std::span<const CompressionPlan> frozen_plans) {
  if (batch.empty()) throw Error("empty batch");
  if (alphas.size() != batch.size()) throw Error("one rate per example");
  if (!frozen_plans.empty() && frozen_plans.size() != batch.size()) throw Error("one frozen plan per example");

  std::vector<std::span<const int>> sequences;
  for (const SegmentedExample* ex : batch) {
    if (ex->segments.empty()) throw Error("no segments");
    sequences.emplace_back(ex->query);
    for (const auto& seg : ex->segments) {
      if (seg.size() != ex->segments.front().size()) throw Error("ragged segments");
      std::span<const int> tokens = strip_padding(seg);
      if (tokens.empty()) throw Error("empty segment");
      sequences.push_back(tokens);
    }
  }
  const StackedStates enc = encode(tape, model.encoder, sequences);

  ad::Var dec_embed = tape.param(model.decoder.token_embedding);
  ad::Var w_align_t = ad::transpose(tape.param(model.w_align));

  BatchForward out;
  std::vector<ad::Var> contrastive_terms;
  std::vector<DecoderSequence> dec_inputs;
  std::size_t seq = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const SegmentedExample& ex = *batch[b];
    const int n = ex.num_segments();
    ad::Var rq = ad::mean_rows(enc.sequence(seq++));
    std::vector<ad::Var> seg_states;
    std::vector<ad::Var> reps;
    for (int i = 0; i < n; ++i) {
      seg_states.push_back(enc.sequence(seq++));
      reps.push_back(ad::mean_rows(seg_states.back()));
    }
    ad::Var cos = ad::cosine_rows(rq, ad::vstack(reps));

    ExampleForward ef;
    if (!frozen_plans.empty()) {
      ef.plan = frozen_plans[b];
      if (ef.plan.num_segments() != n) throw Error("plan does not match example");
    } else {
      ef.plan.alpha = alphas[b];
      ef.plan.cosines = cos.value().row(0);
      ef.plan.probs = softmax(ef.plan.cosines, tau);
      ef.plan.k = budget(ex.context_length(), ex.segment_length(), alphas[b]);
      Selection sel = select(ef.plan.probs, ef.plan.k);
      ef.plan.retained = std::move(sel.retained);
      ef.plan.skimmed = std::move(sel.skimmed);
    }

    if (mode != Mode::no_contrastive && !ex.positives.empty()) {
      ad::Var con = contrastive_loss(cos, ex.positives, tau);
      ef.con = con.scalar();
      ef.has_contrastive = true;
      contrastive_terms.push_back(con);
    }

    const MemoryLayout layout = apply_mode(ef.plan, mode);
    std::vector<char> retained(static_cast<std::size_t>(n), 0);
    for (int i : layout.retained) retained[static_cast<std::size_t>(i)] = 1;
    std::vector<ad::Var> parts;
    for (int i = 0; i < n; ++i) {
      if (retained[static_cast<std::size_t>(i)]) {
        parts.push_back(ad::gather_rows(dec_embed, ex.segments[static_cast<std::size_t>(i)]));
      } else if (layout.emit_skims) {
        const ad::Var& h = seg_states[static_cast<std::size_t>(i)];
        ad::Var c = layout.weighting == SkimWeighting::uniform ? ad::mean_rows(h)
                                                               : ad::softmax_rows(ad::row_cosine(h, rq)) * h;
        parts.push_back(c * w_align_t);
      }
    }
    DecoderSequence ds;
    if (!parts.empty()) ds.memory = ad::vstack(parts);
    ds.query = ex.query;
    ds.targets = ex.answer;
    dec_inputs.push_back(ds);
    out.examples.push_back(std::move(ef));
  }

  ad::Var logp = ad::log_softmax_rows(decode_logits(tape, model.decoder, dec_inputs));
  std::vector<ad::Var> per_example;
  int row = 0;
  std::size_t con_i = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::vector<std::pair<int, int>> picks;
    for (int y : batch[b]->answer) picks.emplace_back(row++, y);
    ad::Var nll = ad::pick_mean(logp, picks) * -1.0;
    out.examples[b].nll = nll.scalar();
    per_example.push_back(out.examples[b].has_contrastive ? nll + contrastive_terms[con_i++] : nll);
  }
  out.loss = ad::sum_scalars(per_example) * (1.0 / static_cast<double>(batch.size()));
  return out;
}

Adam::Adam(std::vector<ad::Parameter*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const ad::Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Parameter& p = *params_[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

Trainer::Trainer(Model& model, TrainConfig config)
    : model_(model),
      config_(std::move(config)),
      optimizer_(model.parameters()),
      alpha_rng_(config_.seed * 0x9e3779b97f4a7c15ULL + 1),
      order_rng_(config_.seed * 0xbf58476d1ce4e5b9ULL + 2),
      order_hash_(1469598103934665603ULL) {
  config_.validate();
}

StepStats Trainer::train_step(std::span<const SegmentedExample* const> batch) {
  StepStats stats;
  stats.step = step_;
  std::uniform_int_distribution<std::size_t> pick(0, config_.rate_pool.size() - 1);
  for (std::size_t i = 0; i < batch.size(); ++i) stats.alphas.push_back(config_.rate_pool[pick(alpha_rng_)]);
  for (const SegmentedExample* ex : batch) order_hash_ = fnv1a64(ex->id + "\n", order_hash_);

  for (ad::Parameter* p : model_.parameters()) p->zero_grad();
  ad::Tape tape;
  BatchForward fwd = forward_batch(tape, model_, batch, stats.alphas, config_.mode, config_.tau);
  stats.loss = fwd.loss.scalar();
  for (std::size_t i = 0; i < fwd.examples.size(); ++i) {
    const ExampleForward& e = fwd.examples[i];
    if (!std::isfinite(e.nll) || !std::isfinite(e.con)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << step_ << ", example " << batch[i]->id << ", alpha "
          << stats.alphas[i];
      throw NumericalError(msg.str());
    }
    stats.nll += e.nll;
    stats.con += e.con;
    if (!e.has_contrastive) ++stats.unlabeled;
  }
  stats.nll /= static_cast<double>(batch.size());
  stats.con /= static_cast<double>(batch.size());
  tape.backward(fwd.loss);

  if (config_.grad_clip > 0.0) {
    double sq = 0.0;
    for (ad::Parameter* p : model_.parameters()) sq += p->grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericalError("non-finite gradient at step " + std::to_string(step_));
    if (norm > config_.grad_clip) {
      for (ad::Parameter* p : model_.parameters()) p->grad *= config_.grad_clip / norm;
    }
  }
  // Linear decay to zero over the configured run.
  const double frac = config_.steps > 0 ? static_cast<double>(step_) / config_.steps : 0.0;
  stats.lr = config_.learning_rate * std::max(0.0, 1.0 - frac);
  optimizer_.step(stats.lr);
  ++step_;
  return stats;
}

void Trainer::fit(std::span<const SegmentedExample> data, const std::function<void(const StepStats&)>& on_step) {
  if (data.empty()) throw DataError("empty training set");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  std::vector<const SegmentedExample*> batch;
  for (int s = 0; s < config_.steps; ++s) {
    batch.clear();
    while (static_cast<int>(batch.size()) < config_.batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng_);
        cursor = 0;
      }
      batch.push_back(&data[order[cursor++]]);
    }
    const StepStats st = train_step(batch);
    if (on_step) on_step(st);
  }
}

std::string Trainer::data_order_digest() const { return hex64(order_hash_); }

std::string alpha_histogram(std::span<const double> alphas, std::span<const double> pool) {
  std::ostringstream out;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto n = std::count(alphas.begin(), alphas.end(), pool[i]);
    if (i) out << '|';
    out << pool[i] << ':' << n;
  }
  return out.str();
}

}  // namespace ram
