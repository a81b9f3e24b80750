#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>
#include <thread>

#include "seqrec/errors.hpp"
#include "seqrec/evaluation.hpp"
#include "seqrec/sampling.hpp"

namespace seqrec::evaluation {

namespace nm = seqrec::numerics;

void EvalConfig::validate() const {
  if (k == 0) throw ConfigError("k must be at least 1");
  if (num_negatives == 0) throw ConfigError("num_negatives must be at least 1");
}

namespace {

std::span<const Token> context_of(const data::UserSequence& seq, EvalTarget target) {
  return target == EvalTarget::Test ? seq.eval_context() : seq.train();
}

Token truth_of(const data::UserSequence& seq, EvalTarget target) {
  return target == EvalTarget::Test ? seq.test() : seq.validation();
}

// Runs `per_user(u)` for every user, split into contiguous chunks across threads.
template <typename Fn>
void for_each_user(std::size_t users, std::size_t threads, Fn&& per_user) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(users, 1));
  if (threads == 1) {
    for (std::size_t u = 0; u < users; ++u) per_user(u);
    return;
  }
  const std::size_t chunk = (users + threads - 1) / threads;
  std::vector<std::jthread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0, b = 0; b < users; ++t, b += chunk) {
    pool.emplace_back([&, t, b] {
      try {
        for (std::size_t u = b; u < std::min(users, b + chunk); ++u) per_user(u);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  pool.clear();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::vector<Token> eval_input(const data::UserSequence& seq, const data::Vocabulary& vocab,
                              std::size_t max_len, EvalTarget target) {
  if (max_len < 3) throw ContractError("max_len must be at least 3");
  const std::span<const Token> context = context_of(seq, target);
  const std::size_t keep = std::min(context.size(), max_len - 2);
  std::vector<Token> input;
  input.reserve(keep + 2);
  input.push_back(vocab.uid_token());
  input.insert(input.end(), context.end() - static_cast<std::ptrdiff_t>(keep), context.end());
  input.push_back(vocab.mask_token());
  return input;
}

std::vector<Token> draw_candidates(const data::UserSequence& seq, std::size_t item_count,
                                   const EvalConfig& config, EvalTarget target, Rng& rng) {
  std::vector<Token> candidates{truth_of(seq, target)};
  try {
    const auto negatives = data::sample_negatives(seq.tokens, item_count, config.num_negatives, rng);
    candidates.insert(candidates.end(), negatives.begin(), negatives.end());
  } catch (const SamplingError& e) {
    throw SamplingError("candidate pool too small for user " + seq.user_id + ": " + e.what());
  }
  return candidates;
}

CandidateScores score_candidates(const data::UserSequence& seq, const data::Vocabulary& vocab,
                                 const ModelParameters& params, const ModelConfig& model_config,
                                 const EvalConfig& eval_config, Rng& rng, EvalTarget target) {
  CandidateScores out;
  out.candidates = draw_candidates(seq, vocab.item_count(), eval_config, target, rng);
  const std::vector<Token> input = eval_input(seq, vocab, model_config.max_len, target);

  nm::Tape tape;
  const model::ParamVars vars = model::bind(tape, params, false);
  const nm::Var encoded = model::encode(tape, input, vars, model_config, model::ForwardMode::eval());
  const auto hidden = encoded.value().row(input.size() - 1);

  out.scores.reserve(out.candidates.size());
  for (Token c : out.candidates) {
    const auto row = params.item_embedding.row(c);
    double s = params.output_bias[c - 1];
    for (std::size_t j = 0; j < hidden.size(); ++j) s += hidden[j] * row[j];
    out.scores.push_back(s);
  }
  return out;
}

std::size_t rank_of_truth(std::span<const double> scores) {
  if (scores.empty()) throw ContractError("rank_of_truth on an empty candidate list");
  std::size_t ahead = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] >= scores[0]) ++ahead;
  }
  return ahead + 1;
}

UserMetrics compute_metrics(std::size_t rank, std::size_t k) {
  if (rank == 0) throw ContractError("rank is 1-based");
  UserMetrics m;
  m.mrr = 1.0 / static_cast<double>(rank);
  if (rank <= k) {
    m.hr = 1.0;
    m.ndcg = 1.0 / std::log2(static_cast<double>(rank) + 1.0);
  }
  return m;
}

RankingMetrics aggregate(std::span<const UserMetrics> per_user, std::size_t k) {
  RankingMetrics out;
  out.k = k;
  out.num_users = per_user.size();
  if (per_user.empty()) return out;
  for (const auto& m : per_user) {
    out.hr_at_k += m.hr;
    out.ndcg_at_k += m.ndcg;
    out.mrr += m.mrr;
  }
  const double n = static_cast<double>(per_user.size());
  out.hr_at_k /= n;
  out.ndcg_at_k /= n;
  out.mrr /= n;
  return out;
}

RankingMetrics evaluate(const data::Dataset& dataset, const ModelParameters& params,
                        const ModelConfig& model_config, const EvalConfig& eval_config,
                        EvalTarget target) {
  eval_config.validate();
  std::vector<UserMetrics> per_user(dataset.users.size());
  for_each_user(dataset.users.size(), eval_config.threads, [&](std::size_t u) {
    const auto& seq = dataset.users[u];
    Rng rng = make_rng(eval_config.eval_seed, {seq.user_index, static_cast<std::uint64_t>(target)});
    const CandidateScores cs =
        score_candidates(seq, dataset.vocab, params, model_config, eval_config, rng, target);
    per_user[u] = compute_metrics(rank_of_truth(cs.scores), eval_config.k);
  });
  return aggregate(per_user, eval_config.k);
}

RankingMetrics pop_baseline(const data::Dataset& dataset, const EvalConfig& eval_config,
                            EvalTarget target) {
  eval_config.validate();
  std::vector<double> popularity(dataset.vocab.item_count() + 1, 0.0);
  for (const auto& seq : dataset.users) {
    for (Token t : seq.train()) popularity[t] += 1.0;
  }
  std::vector<UserMetrics> per_user(dataset.users.size());
  for_each_user(dataset.users.size(), eval_config.threads, [&](std::size_t u) {
    const auto& seq = dataset.users[u];
    Rng rng = make_rng(eval_config.eval_seed, {seq.user_index, static_cast<std::uint64_t>(target)});
    const auto candidates = draw_candidates(seq, dataset.vocab.item_count(), eval_config, target, rng);
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (Token c : candidates) scores.push_back(popularity[c]);
    per_user[u] = compute_metrics(rank_of_truth(scores), eval_config.k);
  });
  return aggregate(per_user, eval_config.k);
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw DimensionError("pearson: vectors differ in length");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

Tensor correlation_matrix(const data::Dataset& dataset, const ModelParameters& params,
                          const ModelConfig& model_config, std::size_t positions) {
  if (positions < 2 || positions > model_config.max_len) {
    throw ContractError("positions must lie in [2, max_len]");
  }
  Tensor sum({positions, positions}, 0.0);
  std::size_t qualifying = 0;
  for (const auto& seq : dataset.users) {
    const auto context = seq.eval_context();
    if (context.size() < positions - 1) continue;
    const auto input = data::truncate_window(context, model_config.max_len, dataset.vocab.uid_token());
    nm::Tape tape;
    const auto vars = model::bind(tape, params, false);
    const std::span<const Token> live(input.data(), std::min(input.size(), context.size() + 1));
    const nm::Var h = model::encode(tape, live, vars, model_config, model::ForwardMode::eval());
    for (std::size_t i = 0; i < positions; ++i) {
      sum.at(i, i) += 1.0;
      for (std::size_t j = i + 1; j < positions; ++j) {
        const double r = pearson(h.value().row(i), h.value().row(j));
        sum.at(i, j) += r;
        sum.at(j, i) += r;
      }
    }
    ++qualifying;
  }
  if (qualifying < 2) {
    throw DatasetError("correlation matrix needs at least 2 users with " + std::to_string(positions - 1) +
                       " items, found " + std::to_string(qualifying));
  }
  for (double& v : sum.data()) v /= static_cast<double>(qualifying);
  return sum;
}

void write_metrics_report(std::ostream& out, const RankingMetrics& m, std::string_view label) {
  const auto k = std::to_string(m.k);
  out << "# " << label << " (" << m.num_users << " users)\n";
  out << std::left << std::setw(12) << "metric" << "value\n";
  out << std::fixed << std::setprecision(6);
  out << std::setw(12) << ("HR@" + k) << m.hr_at_k << '\n';
  out << std::setw(12) << ("NDCG@" + k) << m.ndcg_at_k << '\n';
  out << std::setw(12) << "MRR" << m.mrr << '\n';
  out << std::setprecision(17) << std::defaultfloat;
  out << "hr@" << k << "=" << m.hr_at_k << '\n';
  out << "ndcg@" << k << "=" << m.ndcg_at_k << '\n';
  out << "mrr=" << m.mrr << '\n';
  out << "users=" << m.num_users << '\n';
  out << std::setprecision(6) << std::right;
}

void write_correlation(std::ostream& out, const Tensor& matrix) {
  const std::size_t n = matrix.rows();
  out << "position";
  for (std::size_t j = 0; j < n; ++j) out << '\t' << j;
  out << '\n' << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < n; ++i) {
    out << i;
    for (std::size_t j = 0; j < n; ++j) out << '\t' << matrix.at(i, j);
    out << '\n';
  }
  out << std::defaultfloat;
}

}  // namespace seqrec::evaluation
