#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include "seqrec/errors.hpp"
#include "seqrec/model.hpp"

namespace seqrec::model {

namespace nm = seqrec::numerics;

namespace {

Rng& dropout_rng(ForwardMode mode) {
  static thread_local Rng unused;
  if (mode.train && mode.rng == nullptr) throw ContractError("train mode requires an rng");
  return mode.rng != nullptr ? *mode.rng : unused;
}

Var apply_dropout(Var x, const ModelConfig& config, ForwardMode mode) {
  return nm::dropout(x, config.dropout, mode.train, dropout_rng(mode));
}

}  // namespace

std::vector<bool> pad_mask_of(std::span<const Token> tokens) {
  std::vector<bool> mask(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) mask[i] = tokens[i] == data::kPadToken;
  return mask;
}

Var embed_input(Tape& /*tape*/, std::span<const Token> tokens, const ParamVars& params,
                const ModelConfig& config, ForwardMode mode) {
  const std::size_t vocab_rows = params.item_embedding.value().rows();
  const Token uid = static_cast<Token>(params.item_count + 2);
  if (tokens.empty() || tokens.front() != uid) {
    throw ContractError("encoder input must start with the [UID] token");
  }
  if (tokens.size() > params.position_embedding.value().rows()) {
    throw ContractError("input of length " + std::to_string(tokens.size()) + " exceeds max_len " +
                        std::to_string(params.position_embedding.value().rows()));
  }
  std::vector<std::size_t> rows(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= vocab_rows) {
      throw VocabularyError("token id " + std::to_string(tokens[i]) + " out of range (" +
                            std::to_string(vocab_rows) + " embedding rows)");
    }
    rows[i] = tokens[i];
  }
  Var e = nm::gather_rows(params.item_embedding, rows);
  if (config.use_position_embedding) {
    std::vector<std::size_t> positions(tokens.size());
    std::iota(positions.begin(), positions.end(), 0);
    e = nm::add(e, nm::gather_rows(params.position_embedding, positions));
  }
  return apply_dropout(e, config, mode);
}

Var transformer_layer(Var x, const LayerVars& layer, const std::vector<bool>& pad_mask,
                      const ModelConfig& config, ForwardMode mode) {
  Tape& tape = *x.tape;
  const std::size_t n = x.value().rows();
  const std::size_t d = x.value().cols();
  const std::size_t head_dim = d / config.heads;
  if (pad_mask.size() != n) throw DimensionError("pad mask length differs from sequence length");

  std::optional<Var> score_mask;
  if (std::find(pad_mask.begin(), pad_mask.end(), true) != pad_mask.end()) {
    Tensor m({n, n}, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (pad_mask[j]) m.at(i, j) = -std::numeric_limits<double>::infinity();
    score_mask = tape.leaf(std::move(m));
  }

  // attention sublayer
  const Var normed = nm::layer_norm(x, layer.attn_norm_gain, layer.attn_norm_shift,
                                    nm::kLayerNormEpsilon);
  const Var q = nm::matmul(normed, layer.query);
  const Var k = nm::matmul(normed, layer.key);
  const Var v = nm::matmul(normed, layer.value);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> heads;
  heads.reserve(config.heads);
  for (std::size_t h = 0; h < config.heads; ++h) {
    const std::size_t off = h * head_dim;
    Var scores = nm::scale(nm::matmul_transposed(nm::slice_cols(q, off, head_dim),
                                                 nm::slice_cols(k, off, head_dim)),
                           inv_sqrt);
    if (score_mask) scores = nm::add(scores, *score_mask);
    const Var weights = nm::softmax(scores, 1);
    heads.push_back(nm::matmul(weights, nm::slice_cols(v, off, head_dim)));
  }
  const Var context = heads.size() == 1 ? heads.front() : nm::concat_cols(heads);
  const Var attended = nm::matmul(context, layer.output);
  const Var x1 = nm::add(x, apply_dropout(attended, config, mode));

  // feed-forward sublayer
  const Var normed2 = nm::layer_norm(x1, layer.ffn_norm_gain, layer.ffn_norm_shift,
                                     nm::kLayerNormEpsilon);
  const Var ff = nm::matmul(nm::gelu(nm::matmul(normed2, layer.ffn_in)), layer.ffn_out);
  return nm::add(x1, apply_dropout(ff, config, mode));
}

Var encode(Tape& tape, std::span<const Token> tokens, const ParamVars& params,
           const ModelConfig& config, ForwardMode mode) {
  Var x = embed_input(tape, tokens, params, config, mode);
  const std::vector<bool> pad = pad_mask_of(tokens);
  for (const LayerVars& layer : params.layers) x = transformer_layer(x, layer, pad, config, mode);
  return nm::layer_norm(x, params.final_norm_gain, params.final_norm_shift, nm::kLayerNormEpsilon);
}

}  // namespace seqrec::model
