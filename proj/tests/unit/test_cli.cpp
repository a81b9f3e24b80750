#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "../support/corpora.hpp"
#include "seqrec/cli.hpp"

namespace fs = std::filesystem;
using namespace seqrec;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_command(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Scratch {
 public:
  explicit Scratch(const std::string& name) : root_(fs::temp_directory_path() / ("seqrec_cli_" + name)) {
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  ~Scratch() { fs::remove_all(root_); }
  fs::path operator/(const std::string& p) const { return root_ / p; }

 private:
  fs::path root_;
};

void write_tsv(const fs::path& path, const std::vector<data::RawInteraction>& rows) {
  std::ofstream out(path);
  for (const auto& r : rows) out << r.user_id << '\t' << r.item_id << '\t' << r.timestamp << '\n';
}

std::string last_line_with(const std::string& text, const std::string& needle) {
  std::istringstream in(text);
  std::string line, found;
  while (std::getline(in, line))
    if (line.find(needle) != std::string::npos) found = line;
  return found;
}

void prepare_cyclic(const Scratch& s) {
  write_tsv(s / "raw.tsv", testing::cyclic_corpus(40, 50, 10));
  const Result prep = run({"prep", "--raw", (s / "raw.tsv").string(), "--out", (s / "data").string()});
  REQUIRE(prep.code == cli::kExitOk);
}

std::vector<std::string> small_train(const Scratch& s, const std::string& out, const std::string& epochs = "2") {
  return {"train", "--data", (s / "data").string(), "--out", (s / out).string(), "--rho", "0.3",
          "--d", "8", "--layers", "1", "--heads", "2", "--max-len", "8", "--n-neg", "3",
          "--epochs", epochs, "--batch-size", "16", "--seed", "11"};
}

}  // namespace

TEST_CASE("prep writes the processed dataset, stats and manifest") {
  Scratch s("prep");
  const Result r = run({"prep", "--raw", SEQREC_FIXTURE_DIR "/toy_interactions.tsv", "--out", (s / "out").string()});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(r.out == "num_users\t5\nnum_items\t5\nnum_actions\t25\navg_length\t5.00\n");
  CHECK(slurp(s / "out/stats.txt") == r.out);
  CHECK(fs::exists(s / "out/sequences.txt"));
  CHECK(fs::exists(s / "out/vocab.tsv"));
  CHECK(fs::exists(s / "out/users.tsv"));
  const std::string manifest = slurp(s / "out/manifest.txt");
  CHECK(manifest.find("command = prep") != std::string::npos);
  CHECK(manifest.find("min_interactions = 5") != std::string::npos);
  CHECK(manifest.find("\nd = 32\n") != std::string::npos);
}

TEST_CASE("usage errors exit with code 2") {
  Scratch s("usage");
  CHECK(run({"prep", "--bogus", "--out", (s / "o").string()}).code == cli::kExitUsage);
  CHECK(run({"prep", "--raw", (s / "missing.tsv").string(), "--out", (s / "o").string()}).code == cli::kExitUsage);
  CHECK(run({"prep", "--raw", SEQREC_FIXTURE_DIR "/toy_interactions.tsv"}).code == cli::kExitUsage);
  CHECK(run({}).code == cli::kExitUsage);

  {
    std::ofstream cfg(s / "bad.cfg");
    cfg << "d = 16\nthis line has no equals sign\n";
  }
  const Result bad_cfg = run({"prep", "--config", (s / "bad.cfg").string(), "--raw",
                              SEQREC_FIXTURE_DIR "/toy_interactions.tsv", "--out", (s / "o").string()});
  CHECK(bad_cfg.code == cli::kExitUsage);
  CHECK_FALSE(bad_cfg.err.empty());

  CHECK(run({"prep", "--set", "no_such_key=1", "--raw", SEQREC_FIXTURE_DIR "/toy_interactions.tsv", "--out",
             (s / "o").string()})
            .code == cli::kExitUsage);

  prepare_cyclic(s);
  CHECK(run({"eval", "--data", (s / "data").string(), "--out", (s / "e").string()}).code == cli::kExitUsage);
  CHECK(run({"eval", "--data", (s / "data").string(), "--checkpoint", (s / "nope.bin").string(), "--out",
             (s / "e").string()})
            .code == cli::kExitUsage);
  CHECK(run({"train", "--data", (s / "data").string(), "--out", (s / "t").string()}).code == cli::kExitUsage);
  CHECK(run({"train", "--data", (s / "data").string(), "--out", (s / "t").string(), "--rho", "1.5"}).code ==
        cli::kExitUsage);
}

TEST_CASE("settings precedence: defaults < config < flags < --set") {
  cli::RunConfig c;
  CHECK(cli::apply_setting(c, "d", "24"));
  CHECK(c.model.hidden == 24);
  CHECK(cli::apply_setting(c, "threads", "3"));
  CHECK(c.train.threads == 3);
  CHECK(c.eval.threads == 3);
  CHECK_FALSE(cli::apply_setting(c, "not_a_key", "1"));

  Scratch s("precedence");
  {
    std::ofstream cfg(s / "run.cfg");
    cfg << "# comment\nd = 24\nmax_len = 12\nnum_negatives = 20\n";
  }
  const Result r = run({"prep", "--config", (s / "run.cfg").string(), "--max-len", "10", "--set", "num_negatives=7",
                        "--raw", SEQREC_FIXTURE_DIR "/toy_interactions.tsv", "--out", (s / "o").string()});
  REQUIRE(r.code == cli::kExitOk);
  const std::string manifest = slurp(s / "o/manifest.txt");
  CHECK(manifest.find("\nd = 24\n") != std::string::npos);
  CHECK(manifest.find("max_len = 10\n") != std::string::npos);
  CHECK(manifest.find("num_negatives = 7\n") != std::string::npos);
}

TEST_CASE("train is deterministic and eval/analyze write their reports") {
  Scratch s("train");
  prepare_cyclic(s);

  const Result a = run(small_train(s, "a"));
  REQUIRE(a.code == cli::kExitOk);
  const Result b = run(small_train(s, "b"));
  REQUIRE(b.code == cli::kExitOk);
  CHECK(slurp(s / "a/checkpoint.bin") == slurp(s / "b/checkpoint.bin"));
  const std::string digest_a = last_line_with(a.out, "digest");
  const std::string digest_b = last_line_with(b.out, "digest");
  CHECK(digest_a.substr(digest_a.find("digest")) == digest_b.substr(digest_b.find("digest")));
  CHECK(a.out.find("epoch 2 loss=") != std::string::npos);
  CHECK(slurp(s / "a/train_log.txt").find("epoch 1 loss=") != std::string::npos);

  auto resumed = small_train(s, "c", "3");
  resumed.push_back("--checkpoint");
  resumed.push_back((s / "a/checkpoint.bin").string());
  const Result c = run(resumed);
  REQUIRE(c.code == cli::kExitOk);
  CHECK(c.out.find("epoch 3 loss=") != std::string::npos);
  CHECK(c.out.find("epoch 1 loss=") == std::string::npos);

  const Result e = run({"eval", "--data", (s / "data").string(), "--checkpoint", (s / "a/checkpoint.bin").string(),
                        "--set", "num_negatives=20", "--out", (s / "eval").string()});
  REQUIRE(e.code == cli::kExitOk);
  const std::string metrics = slurp(s / "eval/metrics.txt");
  CHECK(metrics.find("# model (40 users)") != std::string::npos);
  CHECK(metrics.find("# pop (40 users)") != std::string::npos);
  CHECK(metrics.find("hr@10=") != std::string::npos);
  CHECK(metrics.find("mrr=") != std::string::npos);
  const std::string eval_manifest = slurp(s / "eval/manifest.txt");
  CHECK(eval_manifest.find("\nd = 8\n") != std::string::npos);
  CHECK(eval_manifest.find("\nrho = 0.3\n") != std::string::npos);
  CHECK(eval_manifest.find("\nnum_negatives = 20\n") != std::string::npos);

  const Result z = run({"analyze", "--data", (s / "data").string(), "--checkpoint", (s / "a/checkpoint.bin").string(),
                        "--set", "positions=4", "--out", (s / "an").string()});
  REQUIRE(z.code == cli::kExitOk);
  const std::string grid = slurp(s / "an/correlation.txt");
  CHECK(grid.rfind("position\t0\t1\t2\t3\n", 0) == 0);
  CHECK(std::count(grid.begin(), grid.end(), '\n') == 5);
}
