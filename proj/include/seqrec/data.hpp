#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace seqrec::data {

using Token = std::uint32_t;

inline constexpr Token kPadToken = 0;

// Items get dense ids 1..|V|; PAD is 0, MASK is |V|+1 and UID is |V|+2.
class Vocabulary {
 public:
  // Returns the existing token when the item is already known.
  Token add(std::string_view item_id);

  std::optional<Token> find(std::string_view item_id) const;
  Token token_of(std::string_view item_id) const;
  const std::string& item_of(Token token) const;

  std::size_t item_count() const { return items_.size(); }
  std::size_t token_count() const { return items_.size() + 3; }
  Token pad_token() const { return kPadToken; }
  Token mask_token() const { return static_cast<Token>(items_.size() + 1); }
  Token uid_token() const { return static_cast<Token>(items_.size() + 2); }
  bool is_item(Token t) const { return t >= 1 && t <= items_.size(); }

  // FNV-1a over the serialised (item_id, token) table.
  std::uint64_t digest() const;

  // items()[t - 1] is the external id of token t.
  const std::vector<std::string>& items() const { return items_; }

 private:
  std::vector<std::string> items_;
  std::unordered_map<std::string, Token> index_;
};

struct RawInteraction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;
};

// Leave-one-out split: the last action is the test item, the one before it
// validation, everything earlier is training data.
struct SplitMarkers {
  std::size_t train_length = 0;
  std::size_t validation_index = 0;
  std::size_t test_index = 0;
};

SplitMarkers split_leave_one_out(std::span<const Token> tokens);

struct UserSequence {
  std::size_t user_index = 0;
  std::string user_id;
  std::vector<Token> tokens;  // chronological
  SplitMarkers split;

  std::span<const Token> train() const { return {tokens.data(), split.train_length}; }
  Token validation() const { return tokens[split.validation_index]; }
  Token test() const { return tokens[split.test_index]; }
  // Input used when scoring the test item: train prefix plus validation item.
  std::span<const Token> eval_context() const { return {tokens.data(), split.test_index}; }
};

struct DatasetStats {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_actions = 0;
  double avg_length = 0.0;

  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

struct Dataset {
  Vocabulary vocab;
  std::vector<UserSequence> users;  // ordered by user_index
  DatasetStats stats;
};

struct PreprocessOptions {
  std::size_t min_interactions = 5;
};

DatasetStats compute_stats(const std::vector<UserSequence>& users, std::size_t num_items);

// Implicit-feedback collapse, per-user chronological ordering (ties keep input
// order), and iterative pruning until every user and item has at least
// `min_interactions` actions.
Dataset preprocess(std::span<const RawInteraction> raw, const PreprocessOptions& options = {});

// [UID] + most recent N-1 tokens, right-padded with PAD to length N.
std::vector<Token> truncate_window(std::span<const Token> tokens, std::size_t max_len, Token uid);

// ---- file formats -----------------------------------------------------------

// `user_id \t item_id \t timestamp` per line; blank lines are skipped.
std::vector<RawInteraction> read_raw_interactions(std::istream& in);
std::vector<RawInteraction> read_raw_interactions(const std::filesystem::path& path);

inline constexpr const char* kSequencesFile = "sequences.txt";
inline constexpr const char* kVocabularyFile = "vocab.tsv";
inline constexpr const char* kUsersFile = "users.tsv";
inline constexpr const char* kStatsFile = "stats.txt";

void write_stats(std::ostream& out, const DatasetStats& stats);
void write_processed(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_processed(const std::filesystem::path& dir);

}  // namespace seqrec::data
