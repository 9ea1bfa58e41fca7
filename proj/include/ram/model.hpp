#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "ram/decoder.hpp"
#include "ram/encoder.hpp"

namespace ram {

struct ModelConfig {
  int vocab = kVocabSize;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 256;
  int encoder_max_len = 64;
  int decoder_max_len = 160;

  TransformerConfig encoder() const { return {vocab, d_model, n_layers, n_heads, d_ff, encoder_max_len}; }
  TransformerConfig decoder() const { return {vocab, d_model, n_layers, n_heads, d_ff, decoder_max_len}; }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Encoder, decoder and the alignment matrix W_align [d x d] that maps skim
/// vectors into the decoder embedding space.
struct Model {
  ModelConfig config;
  EncoderWeights encoder;
  DecoderWeights decoder;
  ad::Parameter w_align;

  Model(const ModelConfig& cfg, std::uint64_t seed);

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  std::size_t num_parameters() const;
};

/// Binary checkpoint: magic, header length, JSON header (config, meta, tensor
/// table), then every tensor as little-endian float64 in row-major order.
void save_checkpoint(const Model& model, const std::filesystem::path& path, const nlohmann::json& meta = {});

struct Checkpoint {
  Model model;
  nlohmann::json meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Fingerprint of every parameter value.
std::string parameter_digest(const Model& model);

}  // namespace ram
