#include <string>

#include "seqrec/errors.hpp"
#include "seqrec/model.hpp"

namespace seqrec::model {

namespace nm = seqrec::numerics;

Var mask_logits(Var hidden, const ParamVars& params) {
  // The tied projection reuses item rows 1..|V|; reserved tokens never get a logit.
  const Var scores = nm::matmul_transposed_rows(hidden, params.item_embedding, 1, params.item_count);
  return nm::add_row_vector(scores, params.output_bias);
}

Var mask_probabilities(Var hidden, const ParamVars& params) {
  return nm::softmax(mask_logits(hidden, params), 1);
}

MatchingScores matching_scores(Var user_hidden, Token positive, std::span<const Token> negatives,
                               const ParamVars& params) {
  if (negatives.empty()) throw ContractError("matching scores need at least one negative item");
  const std::size_t rows = params.item_embedding.value().rows();
  auto check = [rows](Token t) {
    if (t >= rows) throw VocabularyError("token id " + std::to_string(t) + " out of range");
    return static_cast<std::size_t>(t);
  };
  const std::size_t pos_row[] = {check(positive)};
  std::vector<std::size_t> neg_rows;
  neg_rows.reserve(negatives.size());
  for (Token t : negatives) neg_rows.push_back(check(t));

  const Var pos = nm::sum(nm::matmul_transposed(user_hidden, nm::gather_rows(params.item_embedding, pos_row)));
  const Var neg = nm::mean(nm::matmul_transposed(user_hidden, nm::gather_rows(params.item_embedding, neg_rows)));
  return {pos, neg};
}

Var mask_loss(Var encoded, std::span<const data::MaskedPosition> masked, const ParamVars& params) {
  if (masked.empty()) throw ContractError("mask loss needs at least one masked position");
  std::vector<std::size_t> positions, labels;
  positions.reserve(masked.size());
  labels.reserve(masked.size());
  for (const auto& m : masked) {
    if (m.label < 1 || m.label > params.item_count) {
      throw VocabularyError("mask label " + std::to_string(m.label) + " is not a real item");
    }
    positions.push_back(m.position);
    labels.push_back(m.label - 1);
  }
  const Var hidden = nm::gather_rows(encoded, positions);
  const Var log_probs = nm::log_softmax(mask_logits(hidden, params), 1);
  return nm::neg(nm::mean(nm::pick(log_probs, labels)));
}

Var matching_loss(Var score_pos, Var score_neg, double scale) {
  // log(1 - sigma(z)) == log sigma(-z)
  const Var pos_term = nm::log_sigmoid(nm::scale(score_pos, scale));
  const Var neg_term = nm::log_sigmoid(nm::scale(score_neg, -scale));
  return nm::neg(nm::add(pos_term, neg_term));
}

std::optional<LossTerms> total_loss(Tape& tape, const data::TrainingSample& sample,
                                    const ParamVars& params, const ModelConfig& config,
                                    ForwardMode mode) {
  const bool with_mask = sample.kind != data::SampleKind::MatchingOnly;
  const bool with_matching =
      config.use_matching_task && sample.kind != data::SampleKind::LastMask && sample.matching;
  if (!with_mask && !with_matching) return std::nullopt;

  // Trailing PAD slots never influence real positions, so they are not encoded.
  std::span<const Token> live(sample.input);
  while (live.size() > 1 && live.back() == data::kPadToken) live = live.first(live.size() - 1);
  const Var encoded = encode(tape, live, params, config, mode);
  LossTerms terms;
  if (with_mask) terms.mask = mask_loss(encoded, sample.masked, params);
  if (with_matching) {
    const std::size_t uid_row[] = {0};
    const auto scores = matching_scores(nm::gather_rows(encoded, uid_row), sample.matching->positive,
                                        sample.matching->negatives, params);
    terms.matching = matching_loss(scores.positive, scores.negative, config.matching_scale);
  }
  if (terms.mask && terms.matching) {
    terms.total = nm::add(*terms.mask, *terms.matching);
  } else {
    terms.total = terms.mask ? *terms.mask : *terms.matching;
  }
  return terms;
}

}  // namespace seqrec::model
