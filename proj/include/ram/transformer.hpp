#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ram/autodiff.hpp"

namespace ram {

struct TransformerConfig {
  int vocab = 256;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 256;
  int max_len = 64;

  void validate() const;
};

/// Pre-LN block: x + Attn(LN(x)), then x + MLP(LN(x)).
struct TransformerBlock {
  ad::Parameter ln1_gain, ln1_bias;
  ad::Parameter w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
  ad::Parameter ln2_gain, ln2_bias;
  ad::Parameter w_fc, b_fc, w_proj, b_proj;

  TransformerBlock() = default;
  TransformerBlock(const std::string& prefix, const TransformerConfig& cfg, std::mt19937_64& rng);

  std::vector<ad::Parameter*> parameters();
};

/// Shared stack of blocks plus final layer norm. Linear weights are stored
/// [in x out] and act on row vectors.
struct TransformerStack {
  std::vector<TransformerBlock> blocks;
  ad::Parameter lnf_gain, lnf_bias;

  TransformerStack() = default;
  TransformerStack(const std::string& prefix, const TransformerConfig& cfg, std::mt19937_64& rng);

  /// Runs every block over `x`, whose rows are partitioned into independent
  /// attention blocks, and applies the final layer norm.
  ad::Var forward(ad::Var x, std::span<const int> blocks, bool causal, int n_heads) const;

  std::vector<ad::Parameter*> parameters();
};

/// Gaussian-initialized [rows x cols] parameter.
ad::Parameter normal_parameter(std::string name, Eigen::Index rows, Eigen::Index cols, double stddev,
                               std::mt19937_64& rng);

}  // namespace ram
