#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "seqrec/data.hpp"
#include "seqrec/model.hpp"
#include "seqrec/sampling.hpp"

namespace seqrec::training {

using model::ModelConfig;
using model::ModelParameters;
using numerics::Tensor;

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double l2 = 0.0;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t global_seed = 0;
  data::SampleMix mix;
  std::size_t threads = 1;

  void validate() const;
};

struct OptimizerState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  static OptimizerState for_params(const ModelParameters& params);
  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

// One bias-corrected Adam update. `grads` follows ModelParameters::for_each
// order; l2 * theta is added to the gradient of every weight matrix first.
void adam_step(ModelParameters& params, std::vector<Tensor> grads, OptimizerState& state,
               const TrainConfig& config);

// Fresh masks and negatives for every user, then a seeded shuffle. Depends only
// on (global_seed, user, epoch).
std::vector<data::TrainingSample> epoch_samples(const data::Dataset& dataset,
                                                const ModelConfig& model_config,
                                                const TrainConfig& train_config, std::size_t epoch);

struct BatchLoss {
  double total = 0.0;
  double mask_sum = 0.0;
  double matching_sum = 0.0;
  std::size_t mask_terms = 0;
  std::size_t matching_terms = 0;
};

// Mean total loss over the batch and its gradient in for_each order. The PAD
// embedding row gets a zero gradient.
BatchLoss batch_gradients(std::span<const data::TrainingSample> batch, const ModelParameters& params,
                          const ModelConfig& config, std::uint64_t dropout_seed,
                          std::vector<Tensor>& grads_out);

struct EpochStats {
  std::size_t epoch = 0;
  double mean_mask_loss = 0.0;
  double mean_matching_loss = 0.0;
  double mean_total_loss = 0.0;  // mean of per-batch mean losses
  std::size_t num_samples = 0;
  std::size_t num_batches = 0;
  std::array<std::size_t, 3> kind_counts{};  // indexed by SampleKind

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

EpochStats train_epoch(const data::Dataset& dataset, ModelParameters& params, OptimizerState& state,
                       const ModelConfig& model_config, const TrainConfig& train_config,
                       std::size_t epoch);

// ---- checkpoints --------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'S', 'E', 'Q', 'R', 'E', 'C', 'K', 'P'};

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  ModelParameters params;
  OptimizerState optimizer;
  std::size_t epochs_completed = 0;
  std::uint64_t vocab_digest = 0;
};

// Layout: magic, u32 version, u64 length + `key = value` text block, u64 array
// count, then per array: u32 name length, name, u32 rank, u64 extents, f64 data.
// All integers and floats little-endian.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_vocab_digest = std::nullopt);

std::uint64_t file_digest(const std::filesystem::path& path);

}  // namespace seqrec::training
