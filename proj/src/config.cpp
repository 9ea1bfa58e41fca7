#include "ram/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "ram/digest.hpp"

namespace ram {

namespace {

enum class Kind { integer, real, boolean, text, reals };

struct KeySpec {
  const char* key;
  const char* value;
  Kind kind;
};

constexpr KeySpec kKeys[] = {
    {"seed", "1", Kind::integer},
    {"model.d_model", "64", Kind::integer},
    {"model.n_layers", "2", Kind::integer},
    {"model.n_heads", "4", Kind::integer},
    {"model.d_ff", "256", Kind::integer},
    {"model.encoder_max_len", "64", Kind::integer},
    {"model.decoder_max_len", "160", Kind::integer},
    {"data.train_path", "", Kind::text},
    {"data.eval_path", "", Kind::text},
    {"data.train_size", "20000", Kind::integer},
    {"data.eval_size", "500", Kind::integer},
    {"data.n_segments", "8", Kind::integer},
    {"data.seg_len", "16", Kind::integer},
    {"data.n_facts", "1", Kind::integer},
    {"data.answer_len", "3", Kind::integer},
    {"data.answer_only_positives", "false", Kind::boolean},
    {"train.steps", "1500", Kind::integer},
    {"train.batch_size", "16", Kind::integer},
    {"train.lr", "0.001", Kind::real},
    {"train.tau", "0.1", Kind::real},
    {"train.rate_pool", "2,4,8,16,32", Kind::reals},
    {"train.mode", "default", Kind::text},
    {"train.grad_clip", "1", Kind::real},
    {"train.log_every", "1", Kind::integer},
    {"eval.rates", "2,4,8,16,32", Kind::reals},
    {"eval.max_answer_len", "8", Kind::integer},
    {"eval.workers", "1", Kind::integer},
    {"ablate.alpha", "8", Kind::real},
    {"bench.n_segments", "64", Kind::integer},
    {"bench.seg_len", "16", Kind::integer},
    {"bench.examples", "2", Kind::integer},
    {"bench.repetitions", "20", Kind::integer},
    {"bench.warmup", "3", Kind::integer},
    {"bench.answer_len", "4", Kind::integer},
    {"bench.rates", "2,4,8,16,32", Kind::reals},
};

const KeySpec* find_key(std::string_view key) {
  for (const KeySpec& k : kKeys) {
    if (key == k.key) return &k;
  }
  return nullptr;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_int(std::string_view s, long long& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && !s.empty();
}

bool parse_real(std::string_view s, double& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && !s.empty();
}

bool parse_bool(std::string_view s, bool& out) {
  if (s == "true" || s == "1") return out = true, true;
  if (s == "false" || s == "0") return out = false, true;
  return false;
}

}  // namespace

std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string_view item = trim(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start));
    double v = 0.0;
    if (!parse_real(item, v)) throw ConfigError("invalid number '" + std::string(item) + "' in list");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

Config::Config() {
  for (const KeySpec& k : kKeys) values_.emplace(k.key, k.value);
}

std::vector<std::string> Config::keys() {
  std::vector<std::string> out;
  for (const KeySpec& k : kKeys) out.emplace_back(k.key);
  return out;
}

void Config::set(std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  const KeySpec* spec = find_key(key);
  if (spec == nullptr) {
    std::string msg = "unknown config key '" + std::string(key) + "'; valid keys:";
    for (const KeySpec& k : kKeys) msg += std::string(" ") + k.key;
    throw ConfigError(msg);
  }
  bool ok = true;
  long long i = 0;
  double r = 0.0;
  bool b = false;
  switch (spec->kind) {
    case Kind::integer: ok = parse_int(value, i); break;
    case Kind::real: ok = parse_real(value, r); break;
    case Kind::boolean: ok = parse_bool(value, b); break;
    case Kind::reals: parse_double_list(value); break;
    case Kind::text: break;
  }
  if (!ok) throw ConfigError("invalid value '" + std::string(value) + "' for " + spec->key);
  values_.insert_or_assign(std::string(key), std::string(value));
}

void Config::set_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    try {
      set_assignment(t);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

const std::string& Config::get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

int Config::get_int(std::string_view key) const {
  long long v = 0;
  if (!parse_int(get(key), v)) throw ConfigError("not an integer: " + std::string(key));
  return static_cast<int>(v);
}

double Config::get_double(std::string_view key) const {
  double v = 0.0;
  if (!parse_real(get(key), v)) throw ConfigError("not a number: " + std::string(key));
  return v;
}

bool Config::get_bool(std::string_view key) const {
  bool v = false;
  if (!parse_bool(get(key), v)) throw ConfigError("not a boolean: " + std::string(key));
  return v;
}

std::vector<double> Config::get_doubles(std::string_view key) const { return parse_double_list(get(key)); }

std::string Config::serialize() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << '=' << v << '\n';
  return out.str();
}

std::string Config::digest() const { return hex64(fnv1a64(serialize())); }

}  // namespace ram
