#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seqrec/autodiff.hpp"
#include "seqrec/data.hpp"
#include "seqrec/random.hpp"
#include "seqrec/sampling.hpp"

namespace seqrec::model {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;
using data::Token;

struct ModelConfig {
  std::size_t hidden = 32;        // d
  std::size_t layers = 2;         // L
  std::size_t heads = 2;          // h
  std::size_t max_len = 50;       // N, including the [UID] slot
  double rho = 0.6;
  std::size_t num_negatives = 10; // n
  double dropout = 0.1;
  double matching_scale = 10.0;   // c
  bool use_position_embedding = true;
  bool use_matching_task = true;
  bool hide_matching_positive = false;
  std::size_t ffn_multiplier = 4;

  void validate() const;
  data::SampleConfig sample_config(data::SampleMix mix = {}) const;
};

// Weight matrices take L2 regularisation; biases and layer-norm parameters do not.
enum class ParamKind { Weight, Bias, NormGain, NormShift };

struct LayerParameters {
  Tensor query, key, value, output;  // d x d
  Tensor ffn_in;                     // d x (ffn_multiplier * d)
  Tensor ffn_out;                    // (ffn_multiplier * d) x d
  Tensor attn_norm_gain, attn_norm_shift;
  Tensor ffn_norm_gain, ffn_norm_shift;

  friend bool operator==(const LayerParameters&, const LayerParameters&) = default;
};

struct ModelParameters {
  Tensor item_embedding;      // (|V| + 3) x d; row 0 is PAD and stays zero
  Tensor position_embedding;  // N x d
  std::vector<LayerParameters> layers;
  Tensor final_norm_gain, final_norm_shift;
  Tensor output_bias;         // |V|, mask head only

  std::size_t item_count() const { return item_embedding.rows() - 3; }
  std::size_t hidden() const { return item_embedding.cols(); }

  // Visits every tensor in a fixed order (the checkpoint and optimizer order).
  void for_each(const std::function<void(const std::string&, Tensor&, ParamKind)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&, ParamKind)>& fn) const;
  std::size_t tensor_count() const;

  friend bool operator==(const ModelParameters&, const ModelParameters&) = default;
};

// Truncated normal on [-0.02, 0.02] for weights; zero biases and shifts; unit gains.
ModelParameters init_params(const ModelConfig& config, std::size_t item_count, Rng& rng);

// Learnable scalars, excluding the frozen PAD row.
std::size_t parameter_count(const ModelParameters& params);

// Parameters bound as leaves of one tape.
struct LayerVars {
  Var query, key, value, output, ffn_in, ffn_out;
  Var attn_norm_gain, attn_norm_shift, ffn_norm_gain, ffn_norm_shift;
};

struct ParamVars {
  Var item_embedding;
  Var position_embedding;
  std::vector<LayerVars> layers;
  Var final_norm_gain, final_norm_shift;
  Var output_bias;
  std::size_t item_count = 0;

  // Leaves in ModelParameters::for_each order.
  std::vector<Var> leaves() const;
  Var& leaf(std::size_t index);
};

ParamVars bind(Tape& tape, const ModelParameters& params, bool requires_grad);

// Train mode enables dropout, drawn from `rng`.
struct ForwardMode {
  bool train = false;
  Rng* rng = nullptr;

  static ForwardMode eval() { return {}; }
  static ForwardMode training(Rng& rng) { return {true, &rng}; }
};

Var embed_input(Tape& tape, std::span<const Token> tokens, const ParamVars& params,
                const ModelConfig& config, ForwardMode mode);

// Pre-norm block g(x) = x + Dropout(sublayer(LayerNorm(x))) around attention,
// then around the feed-forward network. `pad_mask[i]` marks PAD positions.
Var transformer_layer(Var x, const LayerVars& layer, const std::vector<bool>& pad_mask,
                      const ModelConfig& config, ForwardMode mode);

// Embedding, L layers, final LayerNorm: H^L as [N x d].
Var encode(Tape& tape, std::span<const Token> tokens, const ParamVars& params,
           const ModelConfig& config, ForwardMode mode);

std::vector<bool> pad_mask_of(std::span<const Token> tokens);

// Mask-head logits over real items for each row of `hidden` ([m x d] -> [m x |V|]).
// Column j scores token j + 1.
Var mask_logits(Var hidden, const ParamVars& params);
Var mask_probabilities(Var hidden, const ParamVars& params);

struct MatchingScores {
  Var positive;
  Var negative;  // mean dot product over the negatives
};

MatchingScores matching_scores(Var user_hidden, Token positive, std::span<const Token> negatives,
                               const ParamVars& params);

// Mean negative log-likelihood over masked positions.
Var mask_loss(Var encoded, std::span<const data::MaskedPosition> masked, const ParamVars& params);

// -(log sigma(c * pos) + log(1 - sigma(c * neg)))
Var matching_loss(Var score_pos, Var score_neg, double scale);

struct LossTerms {
  Var total;
  std::optional<Var> mask;
  std::optional<Var> matching;
};

// nullopt when the sample carries no active term (MatchingOnly with the
// matching task disabled).
std::optional<LossTerms> total_loss(Tape& tape, const data::TrainingSample& sample,
                                    const ParamVars& params, const ModelConfig& config,
                                    ForwardMode mode);

}  // namespace seqrec::model
