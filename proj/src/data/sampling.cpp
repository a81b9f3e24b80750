#include "seqrec/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>

#include "seqrec/errors.hpp"

namespace seqrec::data {

const char* to_string(SampleKind kind) {
  switch (kind) {
    case SampleKind::MaskMatching: return "mask+matching";
    case SampleKind::LastMask: return "last-mask";
    case SampleKind::MatchingOnly: return "matching";
  }
  return "?";
}

std::vector<Token> sample_negatives(std::span<const Token> history, std::size_t item_count,
                                    std::size_t n, Rng& rng) {
  std::vector<Token> seen(history.begin(), history.end());
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  std::erase_if(seen, [item_count](Token t) { return t < 1 || t > item_count; });

  const std::size_t pool = item_count - seen.size();
  if (pool < n) {
    throw SamplingError("need " + std::to_string(n) + " negatives but only " + std::to_string(pool) +
                        " non-interacted items exist");
  }
  std::vector<Token> out;
  out.reserve(n);
  if (n == 0) return out;

  auto interacted = [&seen](Token t) { return std::binary_search(seen.begin(), seen.end(), t); };

  if (pool <= 4 * n) {
    // Dense case: enumerate the pool and take a partial Fisher-Yates prefix.
    std::vector<Token> candidates;
    candidates.reserve(pool);
    for (Token t = 1; t <= item_count; ++t) {
      if (!interacted(t)) candidates.push_back(t);
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
      std::swap(candidates[i], candidates[pick(rng)]);
      out.push_back(candidates[i]);
    }
    return out;
  }

  std::uniform_int_distribution<Token> draw(1, static_cast<Token>(item_count));
  std::unordered_set<Token> taken;
  while (out.size() < n) {
    const Token t = draw(rng);
    if (interacted(t) || !taken.insert(t).second) continue;
    out.push_back(t);
  }
  return out;
}

std::size_t mask_anchor_count(double rho, std::size_t real_length) {
  if (real_length == 0) return 0;
  // tolerance keeps exact products like 0.6 * 5 from rounding up
  const auto wanted = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(real_length) - 1e-9));
  return std::clamp<std::size_t>(wanted, 1, real_length);
}

std::vector<MaskedPosition> apply_mask(std::vector<Token>& window,
                                       std::span<const std::size_t> anchors, Token mask_token) {
  std::vector<bool> masked(window.size(), false);
  for (std::size_t anchor : anchors) {
    const Token label = window[anchor];
    std::size_t lo = anchor, hi = anchor;
    while (lo > 1 && window[lo - 1] == label) --lo;
    while (hi + 1 < window.size() && window[hi + 1] == label) ++hi;
    for (std::size_t p = lo; p <= hi; ++p) masked[p] = true;
  }
  std::vector<MaskedPosition> out;
  for (std::size_t p = 0; p < window.size(); ++p) {
    if (!masked[p]) continue;
    out.push_back({p, window[p]});
  }
  for (const auto& m : out) window[m.position] = mask_token;
  return out;
}

namespace {

std::size_t real_length(const std::vector<Token>& window) {
  std::size_t n = 0;
  for (std::size_t p = 1; p < window.size() && window[p] != kPadToken; ++p) ++n;
  return n;
}

}  // namespace

std::vector<TrainingSample> generate_training_samples(const UserSequence& seq,
                                                      const Vocabulary& vocab,
                                                      const SampleConfig& config, Rng& rng) {
  const std::span<const Token> train = seq.train();
  if (train.empty()) throw ContractError("user " + seq.user_id + " has an empty train prefix");
  const Token uid = vocab.uid_token();
  const Token mask = vocab.mask_token();

  const std::vector<Token> window = truncate_window(train, config.max_len, uid);
  const Token positive = train.back();
  // With hiding enabled the positive is removed from the encoder input, unless
  // that would leave the window empty.
  const bool hide = config.hide_matching_positive && train.size() >= 2;
  const std::vector<Token> matching_window =
      hide ? truncate_window(train.first(train.size() - 1), config.max_len, uid) : window;

  auto matching_part = [&]() {
    return MatchingPart{positive, sample_negatives(seq.tokens, vocab.item_count(),
                                                   config.num_negatives, rng)};
  };

  std::vector<TrainingSample> out;
  out.reserve(config.mix.mask_matching + config.mix.last_mask + config.mix.matching_only);

  for (std::size_t k = 0; k < config.mix.mask_matching; ++k) {
    TrainingSample s;
    s.kind = SampleKind::MaskMatching;
    s.input = matching_window;
    const std::size_t len = real_length(s.input);
    std::vector<std::size_t> positions(len);
    std::iota(positions.begin(), positions.end(), 1);
    const std::size_t anchors = mask_anchor_count(config.rho, len);
    for (std::size_t i = 0; i < anchors; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, len - 1);
      std::swap(positions[i], positions[pick(rng)]);
    }
    s.masked = apply_mask(s.input, std::span(positions).first(anchors), mask);
    s.matching = matching_part();
    out.push_back(std::move(s));
  }
  for (std::size_t k = 0; k < config.mix.last_mask; ++k) {
    TrainingSample s;
    s.kind = SampleKind::LastMask;
    s.input = window;
    const std::size_t last[] = {real_length(s.input)};
    s.masked = apply_mask(s.input, last, mask);
    out.push_back(std::move(s));
  }
  for (std::size_t k = 0; k < config.mix.matching_only; ++k) {
    TrainingSample s;
    s.kind = SampleKind::MatchingOnly;
    s.input = matching_window;
    s.matching = matching_part();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace seqrec::data
