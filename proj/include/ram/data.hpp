#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ram/numerics.hpp"

namespace ram {

/// Raised for malformed datasets and inputs (as opposed to contract misuse).
class DataError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kVocabSize = 256;
inline constexpr int kPadId = 0;
inline constexpr int kEosId = 1;
inline constexpr int kFindId = 2;

/// Fixed word-level vocabulary. The synthetic task's atoms ("k3", "a17",
/// "w90", ...) have fixed ids; any other whitespace-delimited atom is hashed
/// into the non-reserved range.
class Vocab {
 public:
  static constexpr int kNumKeys = 32;
  static constexpr int kNumValues = 32;
  static constexpr int kValueSlots = 3;
  static constexpr int kFirstKey = 3;
  static constexpr int kFirstValue = kFirstKey + kNumKeys;
  static constexpr int kFirstDistractor = kFirstValue + kValueSlots * kNumValues;
  static constexpr int kNumDistractors = kVocabSize - kFirstDistractor;

  static int key(int i) { return kFirstKey + i; }
  static int value(int slot, int i) { return kFirstValue + slot * kNumValues + i; }
  static int distractor(int i) { return kFirstDistractor + i; }
  static bool is_value(int id) { return id >= kFirstValue && id < kFirstDistractor; }

  static int token_id(std::string_view atom);
  static std::string atom(int id);

  static std::vector<int> tokenize(std::string_view text);
  /// Joins atoms with single spaces; pad is skipped, eos ends the text.
  static std::string detokenize(std::span<const int> ids);
};

/// One query, N equal-length segments, the answer and the positive segments.
/// Segment indices are 0-based.
struct SegmentedExample {
  std::string id;
  std::vector<int> query;
  std::vector<std::vector<int>> segments;
  std::vector<int> answer;
  std::vector<int> positives;
  std::string query_text;
  std::vector<std::string> segment_texts;
  std::string answer_text;

  int num_segments() const { return static_cast<int>(segments.size()); }
  int segment_length() const { return segments.empty() ? 0 : static_cast<int>(segments.front().size()); }
  /// N * L_seg; the padded context length used by the budget rule.
  int context_length() const { return num_segments() * segment_length(); }

  /// Throws DataError when an invariant is broken.
  void validate(int vocab = kVocabSize) const;
};

/// Tokens without trailing pad.
std::span<const int> strip_padding(std::span<const int> tokens);

/// Splits a token stream into L_seg-sized chunks, right-padding the last.
std::vector<std::vector<int>> segment_document(std::span<const int> tokens, int seg_len);

struct NeedleOptions {
  int answer_len = 3;
  /// For multi-hop examples, mark only the answer-bearing segment positive
  /// (the bridge segment is positive by default).
  bool answer_only_positives = false;
};

/// Key-value retrieval example. One fact `key v1..vA` (n_facts == 1) or a
/// two-hop chain `kq kb` + `kb v1..vA` plus n_facts-2 distractor facts.
SegmentedExample make_needle(std::uint64_t seed, int n_segments, int seg_len, int n_facts,
                             const NeedleOptions& opts = {});

std::vector<SegmentedExample> make_needle_dataset(std::uint64_t seed, int count, int n_segments,
                                                  int seg_len, int n_facts, const NeedleOptions& opts = {});

struct SegmentLabels {
  std::vector<int> positives;
  bool flagged = false;  // no spans given
};

/// Maps inclusive token spans [first, last] of a document of `doc_len` tokens
/// to the set of segments they overlap.
SegmentLabels positions_to_segments(std::span<const std::pair<int, int>> spans, int seg_len, int doc_len);

struct Score {
  double em = 0.0;
  double f1 = 0.0;
};

/// Lowercase, strip punctuation, collapse whitespace.
std::string normalize_answer(std::string_view text);
Score em_f1(std::string_view prediction, std::string_view reference);

std::string to_jsonl_line(const SegmentedExample& ex);
SegmentedExample from_jsonl_line(std::string_view line);
void write_jsonl(const std::filesystem::path& path, std::span<const SegmentedExample> examples);
std::vector<SegmentedExample> read_jsonl(const std::filesystem::path& path);

}  // namespace ram
