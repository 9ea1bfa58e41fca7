#include "ram/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "ram/digest.hpp"

namespace ram {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'R', 'A', 'M', 'C', 'K', 'P', 'T', '1'};

}  // namespace

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab", vocab},       {"d_model", d_model},
          {"n_layers", n_layers}, {"n_heads", n_heads},
          {"d_ff", d_ff},         {"encoder_max_len", encoder_max_len},
          {"decoder_max_len", decoder_max_len}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab = j.at("vocab").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.encoder_max_len = j.at("encoder_max_len").get<int>();
  c.decoder_max_len = j.at("decoder_max_len").get<int>();
  return c;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
  std::mt19937_64 rng(seed);
  encoder = EncoderWeights(cfg.encoder(), rng);
  decoder = DecoderWeights(cfg.decoder(), rng);
  w_align = ad::Parameter("w_align", Matrix::Identity(cfg.d_model, cfg.d_model));
}

std::vector<ad::Parameter*> Model::parameters() {
  std::vector<ad::Parameter*> out = encoder.parameters();
  auto dec = decoder.parameters();
  out.insert(out.end(), dec.begin(), dec.end());
  out.push_back(&w_align);
  return out;
}

std::vector<const ad::Parameter*> Model::parameters() const {
  auto ps = const_cast<Model*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::size_t Model::num_parameters() const {
  std::size_t n = 0;
  for (const ad::Parameter* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path, const nlohmann::json& meta) {
  nlohmann::json header;
  header["config"] = model.config.to_json();
  header["meta"] = meta.is_null() ? nlohmann::json::object() : meta;
  nlohmann::json table = nlohmann::json::array();
  for (const ad::Parameter* p : model.parameters()) {
    table.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  }
  header["tensors"] = table;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const ad::Parameter* p : model.parameters()) {
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p->value.size())));
  }
  if (!out) throw DataError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  char magic[sizeof kMagic];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0 || len > (1u << 26)) {
    throw DataError("malformed checkpoint " + path.string());
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));

  nlohmann::json header;
  ModelConfig cfg;
  try {
    header = nlohmann::json::parse(text);
    cfg = ModelConfig::from_json(header.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  }

  Checkpoint ck{Model(cfg, 0), header.value("meta", nlohmann::json::object())};
  std::map<std::string, ad::Parameter*> by_name;
  for (ad::Parameter* p : ck.model.parameters()) by_name[p->name] = p;
  const auto& table = header.at("tensors");
  if (table.size() != by_name.size()) throw DataError("checkpoint tensor count mismatch");
  for (const auto& entry : table) {
    auto it = by_name.find(entry.at("name").get<std::string>());
    if (it == by_name.end()) throw DataError("unknown tensor in checkpoint");
    ad::Parameter* p = it->second;
    if (entry.at("rows").get<Eigen::Index>() != p->value.rows() ||
        entry.at("cols").get<Eigen::Index>() != p->value.cols()) {
      throw DataError("tensor shape mismatch for " + p->name);
    }
    in.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p->value.size())));
    if (!in) throw DataError("truncated checkpoint " + path.string());
    p->zero_grad();
  }
  return ck;
}

std::string parameter_digest(const Model& model) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const ad::Parameter* p : model.parameters()) {
    h = fnv1a64(p->name, h);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(p->value.data()),
                                 sizeof(double) * static_cast<std::size_t>(p->value.size())),
                h);
  }
  return hex64(h);
}

}  // namespace ram
