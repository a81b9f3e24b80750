#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "seqrec/cli.hpp"
#include "seqrec/data.hpp"
#include "seqrec/errors.hpp"
#include "seqrec/evaluation.hpp"
#include "seqrec/random.hpp"

namespace seqrec::cli {

namespace fs = std::filesystem;

bool apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
  if (key == "threads") {
    c.threads = parse_size(key, value);
    c.train.threads = c.threads;
    c.eval.threads = c.threads;
    return true;
  }
  if (seqrec::apply_setting(c.model, key, value)) {
    if (key == "rho") c.rho_given = true;
    return true;
  }
  if (seqrec::apply_setting(c.train, key, value)) return true;
  if (key == "k") c.eval.k = parse_size(key, value);
  else if (key == "num_negatives") c.eval.num_negatives = parse_size(key, value);
  else if (key == "eval_seed") c.eval.eval_seed = parse_u64(key, value);
  else if (key == "raw") c.raw_path = std::string(value);
  else if (key == "data") c.data_dir = std::string(value);
  else if (key == "checkpoint") c.checkpoint_path = std::string(value);
  else if (key == "out") c.out_dir = std::string(value);
  else if (key == "eval_every") c.eval_every = parse_size(key, value);
  else if (key == "positions") c.positions = parse_size(key, value);
  else if (key == "min_interactions") c.min_interactions = parse_size(key, value);
  else return false;
  return true;
}

Settings resolved_settings(const RunConfig& c) {
  Settings s;
  append_settings(s, c.model);
  append_settings(s, c.train);
  s.emplace_back("k", std::to_string(c.eval.k));
  s.emplace_back("num_negatives", std::to_string(c.eval.num_negatives));
  s.emplace_back("eval_seed", std::to_string(c.eval.eval_seed));
  s.emplace_back("eval_every", std::to_string(c.eval_every));
  s.emplace_back("positions", std::to_string(c.positions));
  s.emplace_back("min_interactions", std::to_string(c.min_interactions));
  s.emplace_back("raw", c.raw_path.string());
  s.emplace_back("data", c.data_dir.string());
  s.emplace_back("checkpoint", c.checkpoint_path.string());
  s.emplace_back("out", c.out_dir.string());
  return s;
}

namespace {

enum class Command { Prep, Train, Eval, Analyze };

const char* name_of(Command c) {
  switch (c) {
    case Command::Prep: return "prep";
    case Command::Train: return "train";
    case Command::Eval: return "eval";
    case Command::Analyze: return "analyze";
  }
  return "?";
}

struct Flags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads, d, layers, heads, max_len, n_neg, epochs, batch_size, eval_every;
  std::optional<double> rho, learning_rate, dropout, l2;
  std::optional<std::string> checkpoint, out, raw, data;
  bool no_position_embedding = false;
  bool no_matching_task = false;
  std::vector<std::string> overrides;
};

void add_flags(CLI::App& app, Flags& f) {
  app.add_option("--config", f.config, "Config file of 'key = value' lines");
  app.add_option("--seed", f.seed, "Global seed");
  app.add_option("--threads", f.threads, "Worker threads for sampling and evaluation");
  app.add_option("--d", f.d, "Hidden size");
  app.add_option("--layers", f.layers, "Transformer layers");
  app.add_option("--heads", f.heads, "Attention heads");
  app.add_option("--max-len", f.max_len, "Maximum input length including [UID]");
  app.add_option("--rho", f.rho, "Mask proportion");
  app.add_option("--n-neg", f.n_neg, "Matching negatives per sample");
  app.add_flag("--no-position-embedding", f.no_position_embedding, "Disable the position embedding");
  app.add_flag("--no-matching-task", f.no_matching_task, "Train on the mask task only");
  app.add_option("--checkpoint", f.checkpoint, "Checkpoint to read (eval/analyze) or resume from (train)");
  app.add_option("--out", f.out, "Output directory");
  app.add_option("--raw", f.raw, "Raw interaction file (prep)");
  app.add_option("--data", f.data, "Processed dataset directory");
  app.add_option("--epochs", f.epochs, "Total number of epochs");
  app.add_option("--batch-size", f.batch_size, "Mini-batch size");
  app.add_option("--learning-rate", f.learning_rate, "Adam learning rate");
  app.add_option("--dropout", f.dropout, "Dropout rate");
  app.add_option("--l2", f.l2, "L2 coefficient on weight matrices");
  app.add_option("--eval-every", f.eval_every, "Validation evaluation period in epochs");
  app.add_option("--set", f.overrides, "Override any config key: --set key=value");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T>
void set_if(const std::optional<T>& flag, RunConfig& c, std::string_view key, std::string text) {
  if (flag) {
    if (!apply_setting(c, key, text)) throw UsageError("internal: unmapped key " + std::string(key));
  }
}

RunConfig resolve(const Flags& f) {
  RunConfig c;
  try {
    if (f.config) {
      for (const auto& [k, v] : parse_settings(read_file(*f.config))) {
        if (!apply_setting(c, k, v)) throw UsageError("unknown config key '" + k + "' in " + *f.config);
      }
    }
    set_if(f.seed, c, "seed", f.seed ? std::to_string(*f.seed) : "");
    set_if(f.threads, c, "threads", f.threads ? std::to_string(*f.threads) : "");
    set_if(f.d, c, "d", f.d ? std::to_string(*f.d) : "");
    set_if(f.layers, c, "layers", f.layers ? std::to_string(*f.layers) : "");
    set_if(f.heads, c, "heads", f.heads ? std::to_string(*f.heads) : "");
    set_if(f.max_len, c, "max_len", f.max_len ? std::to_string(*f.max_len) : "");
    set_if(f.n_neg, c, "n_neg", f.n_neg ? std::to_string(*f.n_neg) : "");
    set_if(f.epochs, c, "epochs", f.epochs ? std::to_string(*f.epochs) : "");
    set_if(f.batch_size, c, "batch_size", f.batch_size ? std::to_string(*f.batch_size) : "");
    set_if(f.eval_every, c, "eval_every", f.eval_every ? std::to_string(*f.eval_every) : "");
    set_if(f.rho, c, "rho", f.rho ? format_double(*f.rho) : "");
    set_if(f.learning_rate, c, "learning_rate", f.learning_rate ? format_double(*f.learning_rate) : "");
    set_if(f.dropout, c, "dropout", f.dropout ? format_double(*f.dropout) : "");
    set_if(f.l2, c, "l2", f.l2 ? format_double(*f.l2) : "");
    set_if(f.checkpoint, c, "checkpoint", f.checkpoint.value_or(""));
    set_if(f.out, c, "out", f.out.value_or(""));
    set_if(f.raw, c, "raw", f.raw.value_or(""));
    set_if(f.data, c, "data", f.data.value_or(""));
    if (f.no_position_embedding) c.model.use_position_embedding = false;
    if (f.no_matching_task) c.model.use_matching_task = false;
    for (const auto& kv : f.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      if (!apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1))) {
        throw UsageError("unknown config key '" + kv.substr(0, eq) + "'");
      }
    }
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  return c;
}

void require_path(const fs::path& p, const char* what, bool must_exist) {
  if (p.empty()) throw UsageError(std::string("missing required ") + what);
  if (must_exist && !fs::exists(p)) throw UsageError(std::string(what) + " not found: " + p.string());
}

void validate(Command cmd, const RunConfig& c) {
  require_path(c.out_dir, "--out", false);
  try {
    switch (cmd) {
      case Command::Prep:
        require_path(c.raw_path, "--raw", true);
        if (c.min_interactions == 0) throw UsageError("min_interactions must be positive");
        break;
      case Command::Train:
        require_path(c.data_dir, "--data", true);
        if (!c.checkpoint_path.empty()) require_path(c.checkpoint_path, "--checkpoint", true);
        if (!c.rho_given && c.checkpoint_path.empty()) {
          throw UsageError("train requires rho (config key 'rho' or --rho)");
        }
        c.model.validate();
        c.train.validate();
        c.eval.validate();
        break;
      case Command::Eval:
        require_path(c.data_dir, "--data", true);
        require_path(c.checkpoint_path, "--checkpoint", true);
        c.eval.validate();
        break;
      case Command::Analyze:
        require_path(c.data_dir, "--data", true);
        require_path(c.checkpoint_path, "--checkpoint", true);
        break;
    }
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void write_manifest(Command cmd, const RunConfig& c, std::span<const std::string> args) {
  auto out = open_out(c.out_dir / "manifest.txt");
  out << "# resolved configuration for `seqrec";
  for (const auto& a : args) out << ' ' << a;
  out << "`\n";
  out << "command = " << name_of(cmd) << '\n';
  out << to_text(resolved_settings(c));
}

std::string metrics_line(const evaluation::RankingMetrics& m) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << "HR@" << m.k << "=" << m.hr_at_k << " NDCG@" << m.k << "="
    << m.ndcg_at_k << " MRR=" << m.mrr;
  return s.str();
}

int cmd_prep(const RunConfig& c, std::span<const std::string> args, std::ostream& out) {
  write_manifest(Command::Prep, c, args);
  const auto raw = data::read_raw_interactions(c.raw_path);
  const data::Dataset ds = data::preprocess(raw, {c.min_interactions});
  data::write_processed(ds, c.out_dir);
  data::write_stats(out, ds.stats);
  return kExitOk;
}

int cmd_train(RunConfig c, std::span<const std::string> args, std::ostream& out) {
  const data::Dataset ds = data::load_processed(c.data_dir);
  training::Checkpoint ck;
  if (!c.checkpoint_path.empty()) {
    ck = training::load_checkpoint(c.checkpoint_path, ds.vocab.digest());
    // a resumed run keeps its stored configuration; only the epoch target and threads change
    const std::size_t epochs = c.train.epochs;
    c.model = ck.model;
    c.train = ck.train;
    c.train.epochs = epochs;
    c.train.threads = c.threads;
  } else {
    ck.model = c.model;
    ck.train = c.train;
    Rng init_rng = make_rng(c.train.global_seed, {0x1417});
    ck.params = model::init_params(c.model, ds.vocab.item_count(), init_rng);
    ck.optimizer = training::OptimizerState::for_params(ck.params);
    ck.vocab_digest = ds.vocab.digest();
  }
  ck.train = c.train;
  write_manifest(Command::Train, c, args);
  const fs::path ck_path = c.out_dir / "checkpoint.bin";
  auto log = open_out(c.out_dir / "train_log.txt");

  evaluation::EvalConfig val_cfg = c.eval;
  for (std::size_t epoch = ck.epochs_completed; epoch < c.train.epochs; ++epoch) {
    const auto stats = training::train_epoch(ds, ck.params, ck.optimizer, c.model, c.train, epoch);
    ck.epochs_completed = epoch + 1;
    std::ostringstream line;
    line << std::setprecision(6) << "epoch " << epoch + 1 << " loss=" << stats.mean_total_loss
         << " mask=" << stats.mean_mask_loss << " matching=" << stats.mean_matching_loss;
    if (c.eval_every > 0 && ck.epochs_completed % c.eval_every == 0) {
      const auto m = evaluation::evaluate(ds, ck.params, c.model, val_cfg, evaluation::EvalTarget::Validation);
      line << " val " << metrics_line(m);
      training::save_checkpoint(ck_path, ck);
    }
    log << line.str() << '\n';
    out << line.str() << '\n';
  }
  training::save_checkpoint(ck_path, ck);
  out << "checkpoint " << ck_path.string() << " digest " << std::hex << training::file_digest(ck_path)
      << std::dec << '\n';
  return kExitOk;
}

int cmd_eval(RunConfig c, std::span<const std::string> args, std::ostream& out) {
  const data::Dataset ds = data::load_processed(c.data_dir);
  const auto ck = training::load_checkpoint(c.checkpoint_path, ds.vocab.digest());
  c.model = ck.model;
  c.train = ck.train;
  write_manifest(Command::Eval, c, args);
  const auto model_metrics = evaluation::evaluate(ds, ck.params, ck.model, c.eval);
  const auto pop_metrics = evaluation::pop_baseline(ds, c.eval);
  auto report = open_out(c.out_dir / "metrics.txt");
  for (std::ostream* s : {static_cast<std::ostream*>(&report), &out}) {
    evaluation::write_metrics_report(*s, model_metrics, "model");
    *s << '\n';
    evaluation::write_metrics_report(*s, pop_metrics, "pop");
  }
  return kExitOk;
}

int cmd_analyze(RunConfig c, std::span<const std::string> args, std::ostream& out) {
  const data::Dataset ds = data::load_processed(c.data_dir);
  const auto ck = training::load_checkpoint(c.checkpoint_path, ds.vocab.digest());
  c.model = ck.model;
  c.train = ck.train;
  write_manifest(Command::Analyze, c, args);
  const auto matrix = evaluation::correlation_matrix(ds, ck.params, ck.model, c.positions);
  auto file = open_out(c.out_dir / "correlation.txt");
  evaluation::write_correlation(file, matrix);
  evaluation::write_correlation(out, matrix);
  return kExitOk;
}

}  // namespace

int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sequential recommendation with a bidirectional encoder", "seqrec"};
  app.require_subcommand(1, 1);
  Flags flags;
  add_flags(app, flags);
  std::optional<Command> chosen;
  const std::pair<Command, const char*> commands[] = {
      {Command::Prep, "Preprocess raw interactions into sequences"},
      {Command::Train, "Train a model"},
      {Command::Eval, "Evaluate a checkpoint on the test split"},
      {Command::Analyze, "Export the hidden-state correlation matrix"}};
  for (const auto& [cmd, help] : commands) {
    auto* sub = app.add_subcommand(name_of(cmd), help);
    sub->fallthrough();
    sub->callback([&chosen, cmd = cmd] { chosen = cmd; });
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    RunConfig config = resolve(flags);
    validate(*chosen, config);
    fs::create_directories(config.out_dir);
    switch (*chosen) {
      case Command::Prep: return cmd_prep(config, args, out);
      case Command::Train: return cmd_train(config, args, out);
      case Command::Eval: return cmd_eval(config, args, out);
      case Command::Analyze: return cmd_analyze(config, args, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace seqrec::cli
