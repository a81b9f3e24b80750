#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqrec/errors.hpp"
#include "seqrec/evaluation.hpp"
#include "seqrec/model.hpp"
#include "seqrec/settings.hpp"
#include "seqrec/training.hpp"

namespace seqrec::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct RunConfig {
  model::ModelConfig model;
  training::TrainConfig train;
  evaluation::EvalConfig eval;
  std::filesystem::path raw_path;
  std::filesystem::path data_dir;
  std::filesystem::path checkpoint_path;
  std::filesystem::path out_dir;
  std::size_t eval_every = 0;  // validation evaluation period in epochs; 0 disables
  std::size_t positions = 11;  // correlation matrix size
  std::size_t min_interactions = 5;
  std::size_t threads = 1;
  bool rho_given = false;
};

// Returns false for keys no config section recognises.
bool apply_setting(RunConfig& config, std::string_view key, std::string_view value);
Settings resolved_settings(const RunConfig& config);

// argv without the program name, e.g. {"train", "--config", "run.cfg"}.
int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace seqrec::cli
