#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "seqrec/data.hpp"
#include "seqrec/random.hpp"

namespace seqrec::data {

enum class SampleKind { MaskMatching, LastMask, MatchingOnly };

const char* to_string(SampleKind kind);

struct MaskedPosition {
  std::size_t position = 0;
  Token label = 0;
  bool operator==(const MaskedPosition&) const = default;
};

struct MatchingPart {
  Token positive = 0;
  std::vector<Token> negatives;
};

struct TrainingSample {
  SampleKind kind = SampleKind::MaskMatching;
  std::vector<Token> input;  // length N, input[0] == UID
  std::vector<MaskedPosition> masked;
  std::optional<MatchingPart> matching;
};

// Number of samples of each kind emitted per user per epoch.
struct SampleMix {
  std::size_t mask_matching = 1;
  std::size_t last_mask = 1;
  std::size_t matching_only = 1;
};

struct SampleConfig {
  double rho = 0.6;
  std::size_t num_negatives = 10;
  std::size_t max_len = 50;
  SampleMix mix;
  // Drop the matching positive from the encoder input of matching samples.
  bool hide_matching_positive = false;
};

// Uniform draw without replacement from items 1..item_count absent from `history`.
std::vector<Token> sample_negatives(std::span<const Token> history, std::size_t item_count,
                                    std::size_t n, Rng& rng);

// Masking anchors: max(1, ceil(rho * len)) distinct positions in 1..len.
std::size_t mask_anchor_count(double rho, std::size_t real_length);

// Masks the given anchor positions of `window` and every position in the same
// run of consecutive identical items. Returns the masked positions, sorted.
std::vector<MaskedPosition> apply_mask(std::vector<Token>& window,
                                       std::span<const std::size_t> anchors, Token mask_token);

// Samples from the train prefix of one user, in kind order
// MaskMatching..., LastMask..., MatchingOnly...
std::vector<TrainingSample> generate_training_samples(const UserSequence& seq,
                                                      const Vocabulary& vocab,
                                                      const SampleConfig& config, Rng& rng);

}  // namespace seqrec::data
