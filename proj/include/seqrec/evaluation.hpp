#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "seqrec/data.hpp"
#include "seqrec/model.hpp"
#include "seqrec/random.hpp"

namespace seqrec::evaluation {

using data::Token;
using model::ModelConfig;
using model::ModelParameters;
using numerics::Tensor;

struct EvalConfig {
  std::size_t k = 10;
  std::size_t num_negatives = 100;
  std::uint64_t eval_seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

// Test: context is train + validation, truth is the test item.
// Validation: context is the train prefix, truth is the validation item.
enum class EvalTarget { Validation, Test };

// [UID] + most recent N-2 context items + [MASK].
std::vector<Token> eval_input(const data::UserSequence& seq, const data::Vocabulary& vocab,
                              std::size_t max_len, EvalTarget target);

// Ground truth first, then the sampled negatives.
struct CandidateScores {
  std::vector<Token> candidates;
  std::vector<double> scores;
};

std::vector<Token> draw_candidates(const data::UserSequence& seq, std::size_t item_count,
                                   const EvalConfig& config, EvalTarget target, Rng& rng);

CandidateScores score_candidates(const data::UserSequence& seq, const data::Vocabulary& vocab,
                                 const ModelParameters& params, const ModelConfig& model_config,
                                 const EvalConfig& eval_config, Rng& rng,
                                 EvalTarget target = EvalTarget::Test);

// 1-based rank of scores[0]; ties are broken against the ground truth.
std::size_t rank_of_truth(std::span<const double> scores);

struct UserMetrics {
  double hr = 0.0;
  double ndcg = 0.0;
  double mrr = 0.0;
};

UserMetrics compute_metrics(std::size_t rank, std::size_t k);

struct RankingMetrics {
  std::size_t k = 10;
  double hr_at_k = 0.0;
  double ndcg_at_k = 0.0;
  double mrr = 0.0;
  std::size_t num_users = 0;
};

RankingMetrics aggregate(std::span<const UserMetrics> per_user, std::size_t k);

// Per-user negatives are seeded by (eval_seed, user index, target), so the
// result does not depend on the thread count.
RankingMetrics evaluate(const data::Dataset& dataset, const ModelParameters& params,
                        const ModelConfig& model_config, const EvalConfig& eval_config,
                        EvalTarget target = EvalTarget::Test);

// Same candidates and tie rule; score = interaction count over train prefixes.
RankingMetrics pop_baseline(const data::Dataset& dataset, const EvalConfig& eval_config,
                            EvalTarget target = EvalTarget::Test);

// Mean over users of the Pearson correlation between final hidden vectors at
// positions 0..positions-1 (position 0 is [UID]).
Tensor correlation_matrix(const data::Dataset& dataset, const ModelParameters& params,
                          const ModelConfig& model_config, std::size_t positions = 11);

double pearson(std::span<const double> a, std::span<const double> b);

void write_metrics_report(std::ostream& out, const RankingMetrics& metrics, std::string_view label);
void write_correlation(std::ostream& out, const Tensor& matrix);

}  // namespace seqrec::evaluation
