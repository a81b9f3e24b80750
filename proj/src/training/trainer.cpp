#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "seqrec/errors.hpp"
#include "seqrec/random.hpp"
#include "seqrec/training.hpp"

namespace seqrec::training {

namespace nm = seqrec::numerics;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  if (!(l2 >= 0.0)) throw ConfigError("l2 coefficient must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (mix.mask_matching + mix.last_mask + mix.matching_only == 0) {
    throw ConfigError("sample mix must contain at least one sample kind");
  }
}

OptimizerState OptimizerState::for_params(const ModelParameters& params) {
  OptimizerState s;
  params.for_each([&s](const std::string&, const Tensor& t, model::ParamKind) {
    s.first_moment.push_back(Tensor::zeros_like(t));
    s.second_moment.push_back(Tensor::zeros_like(t));
  });
  return s;
}

void adam_step(ModelParameters& params, std::vector<Tensor> grads, OptimizerState& state,
               const TrainConfig& config) {
  if (grads.size() != params.tensor_count() || state.first_moment.size() != grads.size()) {
    throw ContractError("adam_step: gradient/state count does not match the parameter set");
  }
  std::size_t index = 0;
  params.for_each([&](const std::string& name, Tensor& theta, model::ParamKind) {
    const Tensor& g = grads[index++];
    if (g.shape() != theta.shape()) {
      throw DimensionError("adam_step: gradient for " + name + " has shape " + nm::to_string(g.shape()));
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericError("non-finite gradient in parameter group '" + name + "' at element " +
                           std::to_string(i) + " (step " + std::to_string(state.step + 1) + ")");
      }
    }
  });

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  index = 0;
  params.for_each([&](const std::string&, Tensor& theta, model::ParamKind kind) {
    Tensor& g = grads[index];
    Tensor& m = state.first_moment[index];
    Tensor& v = state.second_moment[index];
    ++index;
    const bool decay = kind == model::ParamKind::Weight && config.l2 > 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = decay ? g[i] + config.l2 * theta[i] : g[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  });
  // PAD row stays frozen at zero.
  std::fill_n(params.item_embedding.data().begin(), params.hidden(), 0.0);
}

std::vector<data::TrainingSample> epoch_samples(const data::Dataset& dataset,
                                                const ModelConfig& model_config,
                                                const TrainConfig& train_config, std::size_t epoch) {
  const data::SampleConfig sample_config = model_config.sample_config(train_config.mix);
  const std::size_t users = dataset.users.size();
  std::vector<std::vector<data::TrainingSample>> per_user(users);

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t u = begin; u < end; ++u) {
      const auto& seq = dataset.users[u];
      Rng rng = make_rng(train_config.global_seed, {seq.user_index, epoch, 1});
      per_user[u] = data::generate_training_samples(seq, dataset.vocab, sample_config, rng);
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(train_config.threads, 1, std::max<std::size_t>(users, 1));
  if (threads == 1) {
    work(0, users);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (users + threads - 1) / threads;
    for (std::size_t b = 0; b < users; b += chunk) pool.emplace_back(work, b, std::min(users, b + chunk));
  }

  std::vector<data::TrainingSample> samples;
  for (auto& list : per_user) {
    for (auto& s : list) samples.push_back(std::move(s));
  }
  Rng shuffle_rng = make_rng(train_config.global_seed, {epoch, 2});
  std::shuffle(samples.begin(), samples.end(), shuffle_rng);
  return samples;
}

BatchLoss batch_gradients(std::span<const data::TrainingSample> batch, const ModelParameters& params,
                          const ModelConfig& config, std::uint64_t dropout_seed,
                          std::vector<Tensor>& grads_out) {
  if (batch.empty()) throw ContractError("empty batch");
  nm::Tape tape;
  const model::ParamVars vars = model::bind(tape, params, true);
  Rng rng(dropout_seed);
  const model::ForwardMode mode =
      config.dropout > 0.0 ? model::ForwardMode::training(rng) : model::ForwardMode::eval();

  BatchLoss out;
  std::optional<nm::Var> total;
  for (const auto& sample : batch) {
    auto terms = model::total_loss(tape, sample, vars, config, mode);
    if (!terms) continue;
    if (terms->mask) {
      out.mask_sum += terms->mask->value().item();
      ++out.mask_terms;
    }
    if (terms->matching) {
      out.matching_sum += terms->matching->value().item();
      ++out.matching_terms;
    }
    total = total ? nm::add(*total, terms->total) : terms->total;
  }

  grads_out.clear();
  if (!total) {
    params.for_each([&grads_out](const std::string&, const Tensor& t, model::ParamKind) {
      grads_out.push_back(Tensor::zeros_like(t));
    });
    return out;
  }
  const nm::Var loss = nm::scale(*total, 1.0 / static_cast<double>(batch.size()));
  out.total = loss.value().item();
  const std::vector<nm::Var> leaves = vars.leaves();
  nm::Gradients grads = tape.backward(loss);
  grads_out.reserve(leaves.size());
  for (const nm::Var& leaf : leaves) grads_out.push_back(grads[leaf]);
  std::fill_n(grads_out.front().data().begin(), params.hidden(), 0.0);
  return out;
}

EpochStats train_epoch(const data::Dataset& dataset, ModelParameters& params, OptimizerState& state,
                       const ModelConfig& model_config, const TrainConfig& train_config,
                       std::size_t epoch) {
  model_config.validate();
  train_config.validate();
  if (dataset.users.empty()) throw ContractError("train_epoch on an empty dataset");

  const std::vector<data::TrainingSample> samples =
      epoch_samples(dataset, model_config, train_config, epoch);

  EpochStats stats;
  stats.epoch = epoch;
  stats.num_samples = samples.size();
  for (const auto& s : samples) ++stats.kind_counts[static_cast<std::size_t>(s.kind)];

  double mask_sum = 0.0, matching_sum = 0.0, total_sum = 0.0;
  std::size_t mask_terms = 0, matching_terms = 0;
  std::vector<Tensor> grads;
  for (std::size_t begin = 0, batch = 0; begin < samples.size(); begin += train_config.batch_size, ++batch) {
    const std::size_t count = std::min(train_config.batch_size, samples.size() - begin);
    const BatchLoss loss = batch_gradients(std::span(samples).subspan(begin, count), params, model_config,
                                           derive_seed(train_config.global_seed, {epoch, batch, 3}), grads);
    adam_step(params, std::move(grads), state, train_config);
    mask_sum += loss.mask_sum;
    matching_sum += loss.matching_sum;
    mask_terms += loss.mask_terms;
    matching_terms += loss.matching_terms;
    total_sum += loss.total;
    ++stats.num_batches;
  }
  stats.mean_mask_loss = mask_terms ? mask_sum / static_cast<double>(mask_terms) : 0.0;
  stats.mean_matching_loss = matching_terms ? matching_sum / static_cast<double>(matching_terms) : 0.0;
  stats.mean_total_loss = stats.num_batches ? total_sum / static_cast<double>(stats.num_batches) : 0.0;
  return stats;
}

}  // namespace seqrec::training
