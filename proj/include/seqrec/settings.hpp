#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "seqrec/model.hpp"
#include "seqrec/training.hpp"

namespace seqrec {

// Ordered `key = value` pairs. Doubles are written with 17 significant digits
// so they parse back to the same bits.
using Settings = std::vector<std::pair<std::string, std::string>>;

std::string format_double(double value);
double parse_double(std::string_view key, std::string_view text);
std::size_t parse_size(std::string_view key, std::string_view text);
std::uint64_t parse_u64(std::string_view key, std::string_view text);
bool parse_bool(std::string_view key, std::string_view text);

void append_settings(Settings& out, const model::ModelConfig& config);
void append_settings(Settings& out, const training::TrainConfig& config);

// Returns false when the key does not belong to the config; throws
// ConfigError on malformed values.
bool apply_setting(model::ModelConfig& config, std::string_view key, std::string_view value);
bool apply_setting(training::TrainConfig& config, std::string_view key, std::string_view value);

std::string to_text(const Settings& settings);
// Parses `key = value` lines; `#` starts a comment.
Settings parse_settings(std::string_view text);

}  // namespace seqrec
