#include <algorithm>
#include <numeric>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "seqrec/data.hpp"
#include "seqrec/errors.hpp"

namespace seqrec::data {

Token Vocabulary::add(std::string_view item_id) {
  if (auto hit = find(item_id)) return *hit;
  items_.emplace_back(item_id);
  const auto token = static_cast<Token>(items_.size());
  index_.emplace(items_.back(), token);
  return token;
}

std::optional<Token> Vocabulary::find(std::string_view item_id) const {
  auto it = index_.find(std::string(item_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Token Vocabulary::token_of(std::string_view item_id) const {
  if (auto hit = find(item_id)) return *hit;
  throw VocabularyError("unknown item id '" + std::string(item_id) + "'");
}

const std::string& Vocabulary::item_of(Token token) const {
  if (!is_item(token)) {
    throw VocabularyError("token " + std::to_string(token) + " is not an item (|V| = " +
                          std::to_string(items_.size()) + ")");
  }
  return items_[token - 1];
}

std::uint64_t Vocabulary::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view bytes) {
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t i = 0; i < items_.size(); ++i) {
    feed(items_[i]);
    feed("\t");
    feed(std::to_string(i + 1));
    feed("\n");
  }
  return h;
}

SplitMarkers split_leave_one_out(std::span<const Token> tokens) {
  if (tokens.size() < 3) {
    throw SplitError("leave-one-out split needs at least 3 actions, got " +
                     std::to_string(tokens.size()));
  }
  const std::size_t n = tokens.size();
  return SplitMarkers{n - 2, n - 2, n - 1};
}

DatasetStats compute_stats(const std::vector<UserSequence>& users, std::size_t num_items) {
  DatasetStats stats;
  stats.num_users = users.size();
  stats.num_items = num_items;
  for (const auto& u : users) stats.num_actions += u.tokens.size();
  stats.avg_length = stats.num_users == 0 ? 0.0
                                          : static_cast<double>(stats.num_actions) /
                                                static_cast<double>(stats.num_users);
  return stats;
}

std::vector<Token> truncate_window(std::span<const Token> tokens, std::size_t max_len, Token uid) {
  if (max_len < 3) throw ContractError("max sequence length must be at least 3");
  const std::size_t keep = std::min(tokens.size(), max_len - 1);
  std::vector<Token> out;
  out.reserve(max_len);
  out.push_back(uid);
  out.insert(out.end(), tokens.end() - static_cast<std::ptrdiff_t>(keep), tokens.end());
  out.resize(max_len, kPadToken);
  return out;
}

namespace {

struct RowKey {
  std::string_view user;
  std::string_view item;
  std::int64_t timestamp;
  bool operator==(const RowKey&) const = default;
};

struct RowKeyHash {
  std::size_t operator()(const RowKey& k) const {
    const std::size_t a = std::hash<std::string_view>{}(k.user);
    const std::size_t b = std::hash<std::string_view>{}(k.item);
    const std::size_t c = std::hash<std::int64_t>{}(k.timestamp);
    return a ^ (b * 0x9e3779b97f4a7c15ULL) ^ (c * 0xbf58476d1ce4e5b9ULL);
  }
};

}  // namespace

Dataset preprocess(std::span<const RawInteraction> raw, const PreprocessOptions& options) {
  if (raw.empty()) throw DatasetError("no interactions supplied");

  // Collapse to implicit feedback: one event per distinct (user, item, timestamp).
  std::vector<std::size_t> rows;
  rows.reserve(raw.size());
  {
    std::unordered_set<RowKey, RowKeyHash> seen;
    seen.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i].timestamp < 0) {
        throw DatasetError("negative timestamp for user '" + raw[i].user_id + "'");
      }
      if (seen.insert(RowKey{raw[i].user_id, raw[i].item_id, raw[i].timestamp}).second) {
        rows.push_back(i);
      }
    }
  }

  // Prune until both sides satisfy the threshold.
  for (;;) {
    std::unordered_map<std::string_view, std::size_t> user_count, item_count;
    for (std::size_t i : rows) {
      ++user_count[raw[i].user_id];
      ++item_count[raw[i].item_id];
    }
    std::vector<std::size_t> kept;
    kept.reserve(rows.size());
    for (std::size_t i : rows) {
      if (user_count[raw[i].user_id] >= options.min_interactions &&
          item_count[raw[i].item_id] >= options.min_interactions) {
        kept.push_back(i);
      }
    }
    if (kept.size() == rows.size()) break;
    rows = std::move(kept);
  }
  if (rows.empty()) {
    throw DatasetError("dataset degenerate: no user/item survives the minimum of " +
                       std::to_string(options.min_interactions) + " interactions");
  }

  // Group by user in order of first appearance.
  std::unordered_map<std::string_view, std::size_t> user_slot;
  std::vector<std::vector<std::size_t>> per_user;
  for (std::size_t i : rows) {
    auto [it, inserted] = user_slot.try_emplace(raw[i].user_id, per_user.size());
    if (inserted) per_user.emplace_back();
    per_user[it->second].push_back(i);
  }

  Dataset out;
  out.users.reserve(per_user.size());
  for (std::size_t u = 0; u < per_user.size(); ++u) {
    auto& events = per_user[u];
    std::stable_sort(events.begin(), events.end(), [&raw](std::size_t a, std::size_t b) {
      return raw[a].timestamp < raw[b].timestamp;
    });
    UserSequence seq;
    seq.user_index = u;
    seq.user_id = raw[events.front()].user_id;
    seq.tokens.reserve(events.size());
    for (std::size_t i : events) seq.tokens.push_back(out.vocab.add(raw[i].item_id));
    seq.split = split_leave_one_out(seq.tokens);
    out.users.push_back(std::move(seq));
  }
  out.stats = compute_stats(out.users, out.vocab.item_count());
  return out;
}

}  // namespace seqrec::data
