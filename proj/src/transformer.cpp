#include "ram/transformer.hpp"

#include <cmath>

namespace ram {

void TransformerConfig::validate() const {
  if (vocab <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 || max_len <= 0) {
    throw Error("transformer config: dimensions must be positive");
  }
  if (d_model % n_heads != 0) throw Error("transformer config: d_model must be divisible by n_heads");
}

ad::Parameter normal_parameter(std::string name, Eigen::Index rows, Eigen::Index cols, double stddev,
                               std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return ad::Parameter(std::move(name), std::move(m));
}

namespace {

ad::Parameter zeros(std::string name, Eigen::Index rows, Eigen::Index cols) {
  return ad::Parameter(std::move(name), Matrix::Zero(rows, cols));
}

ad::Parameter ones(std::string name, Eigen::Index cols) {
  return ad::Parameter(std::move(name), Matrix::Ones(1, cols));
}

}  // namespace

TransformerBlock::TransformerBlock(const std::string& prefix, const TransformerConfig& cfg,
                                   std::mt19937_64& rng) {
  const int d = cfg.d_model;
  constexpr double kStd = 0.02;
  // Residual projections scaled down by depth (GPT-2 style).
  const double proj_std = kStd / std::sqrt(2.0 * cfg.n_layers);
  ln1_gain = ones(prefix + ".ln1.gain", d);
  ln1_bias = zeros(prefix + ".ln1.bias", 1, d);
  w_q = normal_parameter(prefix + ".attn.w_q", d, d, kStd, rng);
  b_q = zeros(prefix + ".attn.b_q", 1, d);
  w_k = normal_parameter(prefix + ".attn.w_k", d, d, kStd, rng);
  b_k = zeros(prefix + ".attn.b_k", 1, d);
  w_v = normal_parameter(prefix + ".attn.w_v", d, d, kStd, rng);
  b_v = zeros(prefix + ".attn.b_v", 1, d);
  w_o = normal_parameter(prefix + ".attn.w_o", d, d, proj_std, rng);
  b_o = zeros(prefix + ".attn.b_o", 1, d);
  ln2_gain = ones(prefix + ".ln2.gain", d);
  ln2_bias = zeros(prefix + ".ln2.bias", 1, d);
  w_fc = normal_parameter(prefix + ".mlp.w_fc", d, cfg.d_ff, kStd, rng);
  b_fc = zeros(prefix + ".mlp.b_fc", 1, cfg.d_ff);
  w_proj = normal_parameter(prefix + ".mlp.w_proj", cfg.d_ff, d, proj_std, rng);
  b_proj = zeros(prefix + ".mlp.b_proj", 1, d);
}

std::vector<ad::Parameter*> TransformerBlock::parameters() {
  return {&ln1_gain, &ln1_bias, &w_q,      &b_q,      &w_k,  &b_k,  &w_v,    &b_v,
          &w_o,      &b_o,      &ln2_gain, &ln2_bias, &w_fc, &b_fc, &w_proj, &b_proj};
}

TransformerStack::TransformerStack(const std::string& prefix, const TransformerConfig& cfg,
                                   std::mt19937_64& rng) {
  cfg.validate();
  blocks.reserve(static_cast<std::size_t>(cfg.n_layers));
  for (int l = 0; l < cfg.n_layers; ++l) {
    blocks.emplace_back(prefix + ".layer" + std::to_string(l), cfg, rng);
  }
  lnf_gain = ones(prefix + ".ln_f.gain", cfg.d_model);
  lnf_bias = zeros(prefix + ".ln_f.bias", 1, cfg.d_model);
}

ad::Var TransformerStack::forward(ad::Var x, std::span<const int> spans, bool causal, int n_heads) const {
  ad::Tape& t = *x.tape();
  for (const TransformerBlock& b : blocks) {
    ad::Var h = ad::layer_norm(x, t.param(b.ln1_gain), t.param(b.ln1_bias));
    ad::Var q = ad::add_row(h * t.param(b.w_q), t.param(b.b_q));
    ad::Var k = ad::add_row(h * t.param(b.w_k), t.param(b.b_k));
    ad::Var v = ad::add_row(h * t.param(b.w_v), t.param(b.b_v));
    ad::Var a = ad::attention(q, k, v, n_heads, spans, causal);
    x = x + ad::add_row(a * t.param(b.w_o), t.param(b.b_o));

    h = ad::layer_norm(x, t.param(b.ln2_gain), t.param(b.ln2_bias));
    h = ad::gelu(ad::add_row(h * t.param(b.w_fc), t.param(b.b_fc)));
    x = x + ad::add_row(h * t.param(b.w_proj), t.param(b.b_proj));
  }
  return ad::layer_norm(x, t.param(lnf_gain), t.param(lnf_bias));
}

std::vector<ad::Parameter*> TransformerStack::parameters() {
  std::vector<ad::Parameter*> out;
  for (TransformerBlock& b : blocks) {
    auto ps = b.parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  out.push_back(&lnf_gain);
  out.push_back(&lnf_bias);
  return out;
}

}  // namespace ram
