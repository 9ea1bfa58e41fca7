#include "ram/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "ram/digest.hpp"

namespace ram {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::optional<int> parse_suffix(std::string_view atom, char prefix, int limit) {
  if (atom.size() < 2 || atom[0] != prefix) return std::nullopt;
  int v = 0;
  for (char c : atom.substr(1)) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    v = v * 10 + (c - '0');
    if (v >= limit) return std::nullopt;
  }
  if (atom.size() > 2 && atom[1] == '0') return std::nullopt;
  return v;
}

}  // namespace

int Vocab::token_id(std::string_view atom) {
  if (atom == "<pad>") return kPadId;
  if (atom == "<eos>") return kEosId;
  if (atom == "find") return kFindId;
  if (auto k = parse_suffix(atom, 'k', kNumKeys)) return key(*k);
  for (int slot = 0; slot < kValueSlots; ++slot) {
    if (auto v = parse_suffix(atom, static_cast<char>('a' + slot), kNumValues)) return value(slot, *v);
  }
  if (auto w = parse_suffix(atom, 'w', kNumDistractors)) return distractor(*w);
  constexpr int kFirstFree = kFindId + 1;
  return kFirstFree + static_cast<int>(fnv1a64(atom) % static_cast<std::uint64_t>(kVocabSize - kFirstFree));
}

std::string Vocab::atom(int id) {
  if (id < 0 || id >= kVocabSize) throw Error("bad token id");
  if (id == kPadId) return "<pad>";
  if (id == kEosId) return "<eos>";
  if (id == kFindId) return "find";
  if (id < kFirstValue) return "k" + std::to_string(id - kFirstKey);
  if (id < kFirstDistractor) {
    const int slot = (id - kFirstValue) / kNumValues;
    return std::string(1, static_cast<char>('a' + slot)) + std::to_string((id - kFirstValue) % kNumValues);
  }
  return "w" + std::to_string(id - kFirstDistractor);
}

std::vector<int> Vocab::tokenize(std::string_view text) {
  std::vector<int> ids;
  std::istringstream in{std::string(text)};
  std::string atom;
  while (in >> atom) ids.push_back(token_id(atom));
  return ids;
}

std::string Vocab::detokenize(std::span<const int> ids) {
  std::string out;
  for (int id : ids) {
    if (id == kEosId) break;
    if (id == kPadId) continue;
    if (!out.empty()) out += ' ';
    out += atom(id);
  }
  return out;
}

void SegmentedExample::validate(int vocab) const {
  if (segments.empty()) throw DataError("example " + id + ": no segments");
  const std::size_t len = segments.front().size();
  if (len == 0) throw DataError("example " + id + ": empty segment");
  auto check_ids = [&](std::span<const int> ids) {
    for (int t : ids) {
      if (t < 0 || t >= vocab) throw DataError("example " + id + ": bad token id");
    }
  };
  for (const auto& s : segments) {
    if (s.size() != len) throw DataError("example " + id + ": ragged segments");
    check_ids(s);
  }
  check_ids(query);
  check_ids(answer);
  for (int p : positives) {
    if (p < 0 || p >= num_segments()) throw DataError("example " + id + ": positive index out of range");
  }
}

std::span<const int> strip_padding(std::span<const int> tokens) {
  std::size_t n = tokens.size();
  while (n > 0 && tokens[n - 1] == kPadId) --n;
  return tokens.first(n);
}

std::vector<std::vector<int>> segment_document(std::span<const int> tokens, int seg_len) {
  if (seg_len <= 0) throw Error("invalid segment length");
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < tokens.size(); i += static_cast<std::size_t>(seg_len)) {
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(seg_len), tokens.size() - i);
    std::vector<int> seg(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                         tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
    seg.resize(static_cast<std::size_t>(seg_len), kPadId);
    out.push_back(std::move(seg));
  }
  return out;
}

SegmentedExample make_needle(std::uint64_t seed, int n_segments, int seg_len, int n_facts,
                             const NeedleOptions& opts) {
  if (n_segments < 1) throw Error("needle: need at least one segment");
  if (n_facts < 1 || n_facts > n_segments) throw Error("needle: n_facts must be in [1, N]");
  if (opts.answer_len < 1 || opts.answer_len > Vocab::kValueSlots) throw Error("needle: bad answer length");
  if (seg_len < 1 + opts.answer_len) throw Error("needle: segment too short for a fact");
  if (n_facts + 1 > Vocab::kNumKeys) throw Error("needle: too many facts");

  std::mt19937_64 rng(splitmix(seed));
  auto uniform = [&rng](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };

  SegmentedExample ex;
  ex.id = "needle-" + std::to_string(seed);
  ex.segments.assign(static_cast<std::size_t>(n_segments), std::vector<int>(static_cast<std::size_t>(seg_len)));
  for (auto& seg : ex.segments) {
    for (int& t : seg) t = Vocab::distractor(uniform(Vocab::kNumDistractors));
  }

  std::vector<int> seg_order(static_cast<std::size_t>(n_segments));
  std::iota(seg_order.begin(), seg_order.end(), 0);
  std::shuffle(seg_order.begin(), seg_order.end(), rng);
  std::vector<int> keys(Vocab::kNumKeys);
  std::iota(keys.begin(), keys.end(), 0);
  std::shuffle(keys.begin(), keys.end(), rng);

  auto plant = [&](int seg, const std::vector<int>& fact) {
    const int offset = uniform(seg_len - static_cast<int>(fact.size()) + 1);
    std::copy(fact.begin(), fact.end(), ex.segments[static_cast<std::size_t>(seg)].begin() + offset);
  };
  auto random_values = [&] {
    std::vector<int> v;
    for (int s = 0; s < opts.answer_len; ++s) v.push_back(Vocab::value(s, uniform(Vocab::kNumValues)));
    return v;
  };

  const int query_key = Vocab::key(keys[0]);
  std::vector<int> values = random_values();
  std::vector<int> answer_fact{query_key};
  int next_key = 1;
  if (n_facts == 1) {
    answer_fact.insert(answer_fact.end(), values.begin(), values.end());
    plant(seg_order[0], answer_fact);
    ex.positives = {seg_order[0]};
  } else {
    const int bridge = Vocab::key(keys[next_key++]);
    plant(seg_order[0], {query_key, bridge});
    std::vector<int> fact{bridge};
    fact.insert(fact.end(), values.begin(), values.end());
    plant(seg_order[1], fact);
    ex.positives = opts.answer_only_positives ? std::vector<int>{seg_order[1]}
                                              : std::vector<int>{seg_order[0], seg_order[1]};
    for (int f = 2; f < n_facts; ++f) {
      std::vector<int> other{Vocab::key(keys[next_key++])};
      std::vector<int> vals;
      auto shares = [&] {
        for (std::size_t s = 0; s < vals.size(); ++s) {
          if (vals[s] == values[s]) return true;
        }
        return false;
      };
      do {
        vals = random_values();
      } while (shares());
      other.insert(other.end(), vals.begin(), vals.end());
      plant(seg_order[static_cast<std::size_t>(f)], other);
    }
  }
  std::sort(ex.positives.begin(), ex.positives.end());

  ex.query = {kFindId, query_key};
  ex.answer = values;
  ex.answer.push_back(kEosId);
  ex.query_text = Vocab::detokenize(ex.query);
  ex.answer_text = Vocab::detokenize(ex.answer);
  for (const auto& seg : ex.segments) ex.segment_texts.push_back(Vocab::detokenize(seg));
  return ex;
}

std::vector<SegmentedExample> make_needle_dataset(std::uint64_t seed, int count, int n_segments,
                                                  int seg_len, int n_facts, const NeedleOptions& opts) {
  std::vector<SegmentedExample> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = splitmix(seed ^ (0x5bd1e995ULL * static_cast<std::uint64_t>(i + 1)));
    SegmentedExample ex = make_needle(s, n_segments, seg_len, n_facts, opts);
    ex.id = "needle-" + std::to_string(seed) + "-" + std::to_string(i);
    out.push_back(std::move(ex));
  }
  return out;
}

SegmentLabels positions_to_segments(std::span<const std::pair<int, int>> spans, int seg_len, int doc_len) {
  if (seg_len <= 0) throw Error("invalid segment length");
  SegmentLabels labels;
  if (spans.empty()) {
    labels.flagged = true;
    return labels;
  }
  std::set<int> hit;
  for (const auto& [first, last] : spans) {
    if (first < 0 || last < first || last >= doc_len) throw Error("span out of document bounds");
    for (int s = first / seg_len; s <= last / seg_len; ++s) hit.insert(s);
  }
  labels.positives.assign(hit.begin(), hit.end());
  return labels;
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
    } else if (std::ispunct(c)) {
      continue;
    } else {
      if (pending_space) out += ' ';
      pending_space = false;
      out += static_cast<char>(std::tolower(c));
    }
  }
  return out;
}

Score em_f1(std::string_view prediction, std::string_view reference) {
  const std::string ref = normalize_answer(reference);
  if (ref.empty()) throw Error("empty reference");
  const std::string pred = normalize_answer(prediction);
  if (pred.empty()) return {};

  auto split = [](const std::string& s) {
    std::map<std::string, int> bag;
    std::istringstream in(s);
    std::string w;
    int n = 0;
    while (in >> w) {
      ++bag[w];
      ++n;
    }
    return std::pair{bag, n};
  };
  const auto [pbag, pn] = split(pred);
  const auto [rbag, rn] = split(ref);
  int common = 0;
  for (const auto& [w, c] : pbag) {
    if (auto it = rbag.find(w); it != rbag.end()) common += std::min(c, it->second);
  }
  Score s;
  s.em = pred == ref ? 1.0 : 0.0;
  if (common > 0) {
    const double precision = static_cast<double>(common) / pn;
    const double recall = static_cast<double>(common) / rn;
    s.f1 = 2.0 * precision * recall / (precision + recall);
  }
  return s;
}

std::string to_jsonl_line(const SegmentedExample& ex) {
  nlohmann::json j;
  j["id"] = ex.id;
  j["query"] = ex.query;
  j["segments"] = ex.segments;
  j["answer"] = ex.answer;
  j["positives"] = ex.positives;
  j["query_text"] = ex.query_text;
  j["segment_texts"] = ex.segment_texts;
  j["answer_text"] = ex.answer_text;
  return j.dump();
}

SegmentedExample from_jsonl_line(std::string_view line) {
  SegmentedExample ex;
  try {
    const nlohmann::json j = nlohmann::json::parse(line);
    ex.id = j.at("id").get<std::string>();
    ex.query = j.at("query").get<std::vector<int>>();
    ex.segments = j.at("segments").get<std::vector<std::vector<int>>>();
    ex.answer = j.at("answer").get<std::vector<int>>();
    ex.positives = j.value("positives", std::vector<int>{});
    ex.query_text = j.value("query_text", std::string{});
    ex.segment_texts = j.value("segment_texts", std::vector<std::string>{});
    ex.answer_text = j.value("answer_text", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed example: ") + e.what());
  }
  ex.validate();
  return ex;
}

void write_jsonl(const std::filesystem::path& path, std::span<const SegmentedExample> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& ex : examples) out << to_jsonl_line(ex) << '\n';
}

std::vector<SegmentedExample> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<SegmentedExample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(from_jsonl_line(line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ram
