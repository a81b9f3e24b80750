#include "seqrec/settings.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "seqrec/errors.hpp"

namespace seqrec {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view text, const char* expected) {
  throw ConfigError("invalid value '" + std::string(text) + "' for '" + std::string(key) +
                    "' (expected " + expected + ")");
}

template <typename T>
T parse_integer(std::string_view key, std::string_view text) {
  text = trim(text);
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) bad_value(key, text, "an integer");
  return v;
}

std::string format_mix(const data::SampleMix& mix) {
  return std::to_string(mix.mask_matching) + ":" + std::to_string(mix.last_mask) + ":" +
         std::to_string(mix.matching_only);
}

data::SampleMix parse_mix(std::string_view key, std::string_view text) {
  text = trim(text);
  const auto a = text.find(':');
  const auto b = a == std::string_view::npos ? a : text.find(':', a + 1);
  if (b == std::string_view::npos) bad_value(key, text, "a ratio like 1:1:1");
  data::SampleMix mix;
  mix.mask_matching = parse_size(key, text.substr(0, a));
  mix.last_mask = parse_size(key, text.substr(a + 1, b - a - 1));
  mix.matching_only = parse_size(key, text.substr(b + 1));
  if (mix.mask_matching + mix.last_mask + mix.matching_only == 0) {
    bad_value(key, text, "at least one non-zero share");
  }
  return mix;
}

std::string bool_text(bool v) { return v ? "true" : "false"; }

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view key, std::string_view text) {
  text = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) bad_value(key, text, "a number");
  return v;
}

std::size_t parse_size(std::string_view key, std::string_view text) {
  return parse_integer<std::size_t>(key, text);
}

std::uint64_t parse_u64(std::string_view key, std::string_view text) {
  return parse_integer<std::uint64_t>(key, text);
}

bool parse_bool(std::string_view key, std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  bad_value(key, text, "true/false");
}

void append_settings(Settings& out, const model::ModelConfig& c) {
  out.emplace_back("d", std::to_string(c.hidden));
  out.emplace_back("layers", std::to_string(c.layers));
  out.emplace_back("heads", std::to_string(c.heads));
  out.emplace_back("max_len", std::to_string(c.max_len));
  out.emplace_back("rho", format_double(c.rho));
  out.emplace_back("n_neg", std::to_string(c.num_negatives));
  out.emplace_back("dropout", format_double(c.dropout));
  out.emplace_back("matching_scale", format_double(c.matching_scale));
  out.emplace_back("use_position_embedding", bool_text(c.use_position_embedding));
  out.emplace_back("use_matching_task", bool_text(c.use_matching_task));
  out.emplace_back("hide_matching_positive", bool_text(c.hide_matching_positive));
  out.emplace_back("ffn_multiplier", std::to_string(c.ffn_multiplier));
}

void append_settings(Settings& out, const training::TrainConfig& c) {
  out.emplace_back("learning_rate", format_double(c.learning_rate));
  out.emplace_back("beta1", format_double(c.beta1));
  out.emplace_back("beta2", format_double(c.beta2));
  out.emplace_back("adam_epsilon", format_double(c.epsilon));
  out.emplace_back("l2", format_double(c.l2));
  out.emplace_back("batch_size", std::to_string(c.batch_size));
  out.emplace_back("epochs", std::to_string(c.epochs));
  out.emplace_back("seed", std::to_string(c.global_seed));
  out.emplace_back("sample_mix", format_mix(c.mix));
  out.emplace_back("threads", std::to_string(c.threads));
}

bool apply_setting(model::ModelConfig& c, std::string_view key, std::string_view value) {
  if (key == "d") c.hidden = parse_size(key, value);
  else if (key == "layers") c.layers = parse_size(key, value);
  else if (key == "heads") c.heads = parse_size(key, value);
  else if (key == "max_len") c.max_len = parse_size(key, value);
  else if (key == "rho") c.rho = parse_double(key, value);
  else if (key == "n_neg") c.num_negatives = parse_size(key, value);
  else if (key == "dropout") c.dropout = parse_double(key, value);
  else if (key == "matching_scale") c.matching_scale = parse_double(key, value);
  else if (key == "use_position_embedding") c.use_position_embedding = parse_bool(key, value);
  else if (key == "use_matching_task") c.use_matching_task = parse_bool(key, value);
  else if (key == "hide_matching_positive") c.hide_matching_positive = parse_bool(key, value);
  else if (key == "ffn_multiplier") c.ffn_multiplier = parse_size(key, value);
  else return false;
  return true;
}

bool apply_setting(training::TrainConfig& c, std::string_view key, std::string_view value) {
  if (key == "learning_rate") c.learning_rate = parse_double(key, value);
  else if (key == "beta1") c.beta1 = parse_double(key, value);
  else if (key == "beta2") c.beta2 = parse_double(key, value);
  else if (key == "adam_epsilon") c.epsilon = parse_double(key, value);
  else if (key == "l2") c.l2 = parse_double(key, value);
  else if (key == "batch_size") c.batch_size = parse_size(key, value);
  else if (key == "epochs") c.epochs = parse_size(key, value);
  else if (key == "seed") c.global_seed = parse_u64(key, value);
  else if (key == "sample_mix") c.mix = parse_mix(key, value);
  else if (key == "threads") c.threads = parse_size(key, value);
  else return false;
  return true;
}

std::string to_text(const Settings& settings) {
  std::string out;
  for (const auto& [k, v] : settings) out += k + " = " + v + "\n";
  return out;
}

Settings parse_settings(std::string_view text) {
  Settings out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

}  // namespace seqrec
