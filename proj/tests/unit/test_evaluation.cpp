#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "../support/corpora.hpp"
#include "../support/oracles.hpp"
#include "seqrec/errors.hpp"
#include "seqrec/evaluation.hpp"

using namespace seqrec;
using namespace seqrec::evaluation;

namespace {

data::Dataset manual_dataset(std::size_t items, std::vector<std::vector<Token>> sequences) {
  data::Dataset ds;
  ds.vocab = testing::numbered_vocabulary(items);
  for (std::size_t u = 0; u < sequences.size(); ++u) ds.users.push_back(testing::make_user(u, std::move(sequences[u])));
  ds.stats = data::compute_stats(ds.users, items);
  return ds;
}

ModelConfig small_model() {
  ModelConfig c;
  c.hidden = 16;
  c.max_len = 8;
  c.dropout = 0.0;
  return c;
}

ModelParameters random_params(const ModelConfig& c, std::size_t items, std::uint64_t seed) {
  Rng rng(seed);
  ModelParameters p = model::init_params(c, items, rng);
  std::normal_distribution<double> n(0.0, 0.5);
  p.for_each([&](const std::string&, Tensor& t, model::ParamKind kind) {
    if (kind == model::ParamKind::Weight || kind == model::ParamKind::Bias)
      for (double& v : t.data()) v = n(rng);
  });
  std::fill_n(p.item_embedding.data().begin(), c.hidden, 0.0);
  return p;
}

}  // namespace

TEST_CASE("compute_metrics hand values") {
  const UserMetrics r1 = compute_metrics(1, 10);
  CHECK(r1.hr == 1.0);
  CHECK(r1.ndcg == 1.0);
  CHECK(r1.mrr == 1.0);
  const UserMetrics r2 = compute_metrics(2, 10);
  CHECK(r2.hr == 1.0);
  CHECK(std::abs(r2.ndcg - 0.630930) < 1e-6);
  CHECK(r2.mrr == 0.5);
  const UserMetrics r11 = compute_metrics(11, 10);
  CHECK(r11.hr == 0.0);
  CHECK(r11.ndcg == 0.0);
  CHECK(std::abs(r11.mrr - 0.090909) < 1e-6);
  CHECK_THROWS_AS(compute_metrics(0, 10), ContractError);
}

TEST_CASE("rank with all scores tied is the last position") {
  const std::vector<double> flat(101, 0.25);
  const std::size_t rank = rank_of_truth(flat);
  CHECK(rank == 101);
  const UserMetrics m = compute_metrics(rank, 10);
  CHECK(m.hr == 0.0);
  CHECK(m.mrr == 1.0 / 101.0);
}

TEST_CASE("harness agrees with a brute-force sort on 1000 score vectors") {
  std::mt19937_64 rng(123);
  std::size_t rank_mismatches = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng() % 150;
    std::vector<double> scores(n);
    // coarse integer scores on half the trials force ties
    const bool coarse = trial % 2 == 0;
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& s : scores) s = coarse ? static_cast<double>(rng() % 7) : gauss(rng);
    const std::size_t k = 1 + rng() % 20;
    const std::size_t rank = rank_of_truth(scores);
    rank_mismatches += rank != oracle::sorted_rank(scores);
    const UserMetrics got = compute_metrics(rank, k);
    const oracle::Metrics want = oracle::metrics_from_sorted(scores, k);
    worst = std::max({worst, std::abs(got.hr - want.hr), std::abs(got.ndcg - want.ndcg), std::abs(got.mrr - want.mrr)});
  }
  CHECK(rank_mismatches == 0);
  CHECK(worst <= 1e-12);
}

TEST_CASE("raising the ground-truth score never worsens a metric") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> scores(30);
    for (double& s : scores) s = gauss(rng);
    UserMetrics prev = compute_metrics(rank_of_truth(scores), 10);
    for (int step = 0; step < 10; ++step) {
      scores[0] += std::abs(gauss(rng));
      const UserMetrics now = compute_metrics(rank_of_truth(scores), 10);
      CHECK(now.hr >= prev.hr);
      CHECK(now.ndcg >= prev.ndcg);
      CHECK(now.mrr >= prev.mrr);
      CHECK((now.ndcg == 0.0) == (now.hr == 0.0));
      prev = now;
    }
  }
}

TEST_CASE("eval input and candidates") {
  const std::size_t items = 200;
  std::vector<Token> tokens;
  for (Token t = 1; t <= 12; ++t) tokens.push_back(t * 3);
  const data::Dataset ds = manual_dataset(items, {tokens});
  const auto& user = ds.users[0];

  const auto input = eval_input(user, ds.vocab, 8, EvalTarget::Test);
  CHECK(input.size() == 8);
  CHECK(input.front() == ds.vocab.uid_token());
  CHECK(input.back() == ds.vocab.mask_token());
  // most recent N-2 items of train + validation
  CHECK(std::vector<Token>(input.begin() + 1, input.end() - 1) == std::vector<Token>{18, 21, 24, 27, 30, 33});

  const auto val_input = eval_input(user, ds.vocab, 8, EvalTarget::Validation);
  CHECK(val_input[6] == 30);

  const auto short_user = testing::make_user(1, {4, 5, 6, 7, 8});
  const auto short_input = eval_input(short_user, ds.vocab, 8, EvalTarget::Test);
  CHECK(short_input == std::vector<Token>{ds.vocab.uid_token(), 4, 5, 6, 7, ds.vocab.mask_token()});

  const EvalConfig cfg;
  Rng rng(1);
  const auto candidates = draw_candidates(user, items, cfg, EvalTarget::Test, rng);
  CHECK(candidates.size() == 101);
  CHECK(candidates.front() == user.test());
  const std::set<Token> history(user.tokens.begin(), user.tokens.end());
  for (std::size_t i = 1; i < candidates.size(); ++i) CHECK_FALSE(history.contains(candidates[i]));

  const data::Dataset tiny = manual_dataset(20, {tokens});
  Rng rng2(1);
  CHECK_THROWS_AS(draw_candidates(tiny.users[0], 20, cfg, EvalTarget::Test, rng2), SamplingError);
}

TEST_CASE("scores are mask-head logits at the trailing MASK") {
  const ModelConfig c = small_model();
  const std::size_t items = 150;
  const ModelParameters p = random_params(c, items, 1);
  const data::Dataset ds = manual_dataset(items, {{5, 9, 13, 2, 7, 40}});
  const EvalConfig cfg;
  Rng rng(3);
  const CandidateScores cs = score_candidates(ds.users[0], ds.vocab, p, c, cfg, rng);
  REQUIRE(cs.scores.size() == 101);

  numerics::Tape tape;
  const auto vars = model::bind(tape, p, false);
  const auto input = eval_input(ds.users[0], ds.vocab, c.max_len, EvalTarget::Test);
  const auto h = model::encode(tape, input, vars, c, model::ForwardMode::eval());
  const std::size_t last[] = {input.size() - 1};
  const Tensor logits = model::mask_logits(numerics::gather_rows(h, last), vars).value();
  for (std::size_t i = 0; i < cs.candidates.size(); ++i) {
    CHECK(std::abs(cs.scores[i] - logits[cs.candidates[i] - 1]) < 1e-12);
  }
}

TEST_CASE("evaluate: single user, determinism, threads and no mutation") {
  const ModelConfig c = small_model();
  const std::size_t items = 150;
  const ModelParameters p = random_params(c, items, 2);
  const ModelParameters snapshot = p;

  const data::Dataset one = manual_dataset(items, {{5, 9, 13, 2, 7, 40}});
  EvalConfig cfg;
  cfg.eval_seed = 4;
  const RankingMetrics m = evaluate(one, p, c, cfg);
  Rng rng = make_rng(cfg.eval_seed, {0, static_cast<std::uint64_t>(EvalTarget::Test)});
  const auto cs = score_candidates(one.users[0], one.vocab, p, c, cfg, rng);
  const UserMetrics um = compute_metrics(rank_of_truth(cs.scores), 10);
  CHECK(m.num_users == 1);
  CHECK(m.hr_at_k == um.hr);
  CHECK(m.ndcg_at_k == um.ndcg);
  CHECK(m.mrr == um.mrr);

  const data::Dataset many = data::preprocess(testing::clustered_corpus(200, 60, 5, 1));
  const ModelParameters q = random_params(c, many.vocab.item_count(), 3);
  cfg.num_negatives = 20;
  const RankingMetrics a = evaluate(many, q, c, cfg);
  const RankingMetrics b = evaluate(many, q, c, cfg);
  cfg.threads = 3;
  const RankingMetrics t = evaluate(many, q, c, cfg);
  CHECK(a.mrr == b.mrr);
  CHECK(a.hr_at_k == t.hr_at_k);
  CHECK(a.ndcg_at_k == t.ndcg_at_k);
  CHECK(a.mrr == t.mrr);
  CHECK(a.mrr <= 1.0);
  CHECK(a.hr_at_k >= 0.0);
  CHECK(a.hr_at_k <= 1.0);
  CHECK(p == snapshot);
}

TEST_CASE("POP baseline on a hand-counted toy corpus") {
  // train prefixes: A [1,2,1,3], B [1,2,5], E [3,5,6]
  // popularity: 1 -> 3, 2 -> 2, 3 -> 2, 5 -> 2, 6 -> 1, others 0
  // A: truth 4 (0) vs {5:2, 7:0, 8:0} -> rank 4
  // B: truth 4 (0) vs {3:2, 7:0, 8:0} -> rank 4
  // E: truth 1 (3) vs {2:2, 4:0, 8:0} -> rank 1 (most popular candidate)
  const data::Dataset ds = manual_dataset(8, {{1, 2, 1, 3, 6, 4}, {1, 2, 5, 6, 4}, {3, 5, 6, 7, 1}});
  EvalConfig cfg;
  cfg.k = 2;
  cfg.num_negatives = 3;  // the whole pool, so the draw cannot matter
  const RankingMetrics m = pop_baseline(ds, cfg);
  CHECK(m.num_users == 3);
  CHECK(std::abs(m.mrr - (0.25 + 0.25 + 1.0) / 3.0) < 1e-15);
  CHECK(std::abs(m.hr_at_k - 1.0 / 3.0) < 1e-15);
  CHECK(std::abs(m.ndcg_at_k - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("correlation matrix properties") {
  const ModelConfig c = [] {
    ModelConfig m = small_model();
    m.max_len = 12;
    return m;
  }();
  const data::Dataset ds = data::preprocess(testing::cyclic_corpus(60, 50, 14));
  const ModelParameters p = random_params(c, ds.vocab.item_count(), 4);
  const Tensor r = correlation_matrix(ds, p, c, 11);
  REQUIRE(r.shape() == numerics::Shape{11, 11});
  for (std::size_t i = 0; i < 11; ++i) {
    CHECK(std::abs(r.at(i, i) - 1.0) < 1e-9);
    for (std::size_t j = 0; j < 11; ++j) {
      CHECK(std::abs(r.at(i, j) - r.at(j, i)) < 1e-9);
      CHECK(std::abs(r.at(i, j)) <= 1.0);
    }
  }

  const std::vector<double> v{0.3, -1.2, 2.0, 0.7};
  std::vector<double> scaled;
  for (double x : v) scaled.push_back(2.5 * x + 1.0);
  CHECK(std::abs(pearson(v, v) - 1.0) < 1e-12);
  CHECK(std::abs(pearson(v, scaled) - 1.0) < 1e-12);
  const std::vector<double> flat{1.0, 1.0, 1.0, 1.0};
  CHECK(pearson(v, flat) == 0.0);

  const data::Dataset short_ds = manual_dataset(20, {{1, 2, 3, 4, 5}, {6, 7, 8, 9, 10}});
  CHECK_THROWS_AS(correlation_matrix(short_ds, random_params(c, 20, 5), c, 11), DatasetError);
}

TEST_CASE("metrics report carries the key-value block") {
  RankingMetrics m;
  m.hr_at_k = 0.5;
  m.ndcg_at_k = 0.25;
  m.mrr = 0.125;
  m.num_users = 8;
  std::ostringstream out;
  write_metrics_report(out, m, "model");
  const std::string text = out.str();
  CHECK(text.find("metric") != std::string::npos);
  CHECK(text.find("hr@10=0.5\n") != std::string::npos);
  CHECK(text.find("ndcg@10=0.25\n") != std::string::npos);
  CHECK(text.find("mrr=0.125\n") != std::string::npos);

  std::ostringstream grid;
  write_correlation(grid, Tensor::matrix(2, 2, {1.0, 0.5, 0.5, 1.0}));
  CHECK(grid.str() == "position\t0\t1\n0\t1.000000\t0.500000\n1\t0.500000\t1.000000\n");
}
