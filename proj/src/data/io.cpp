#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "seqrec/data.hpp"
#include "seqrec/errors.hpp"

namespace seqrec::data {

namespace fs = std::filesystem;

namespace {

template <typename T>
T parse_number(std::string_view text, const std::string& where) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw DatasetError(where + ": cannot parse '" + std::string(text) + "' as a number");
  }
  return value;
}

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<RawInteraction> read_raw_interactions(std::istream& in) {
  std::vector<RawInteraction> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim_cr(line);
    if (view.empty()) continue;
    const auto first = view.find('\t');
    const auto second = first == std::string_view::npos ? first : view.find('\t', first + 1);
    if (second == std::string_view::npos || view.find('\t', second + 1) != std::string_view::npos) {
      throw DatasetError("line " + std::to_string(line_no) +
                         ": expected 'user_id<TAB>item_id<TAB>timestamp'");
    }
    RawInteraction row;
    row.user_id = std::string(view.substr(0, first));
    row.item_id = std::string(view.substr(first + 1, second - first - 1));
    row.timestamp = parse_number<std::int64_t>(view.substr(second + 1), "line " + std::to_string(line_no));
    if (row.timestamp < 0) throw DatasetError("line " + std::to_string(line_no) + ": negative timestamp");
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<RawInteraction> read_raw_interactions(const fs::path& path) {
  auto in = open_input(path);
  return read_raw_interactions(in);
}

void write_stats(std::ostream& out, const DatasetStats& stats) {
  out << "num_users\t" << stats.num_users << '\n'
      << "num_items\t" << stats.num_items << '\n'
      << "num_actions\t" << stats.num_actions << '\n'
      << "avg_length\t" << std::fixed << std::setprecision(2) << stats.avg_length << '\n';
  out << std::defaultfloat;
}

void write_processed(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir);
  {
    auto out = open_output(dir / kSequencesFile);
    for (const auto& u : dataset.users) {
      out << u.user_index;
      for (Token t : u.tokens) out << ' ' << t;
      out << '\n';
    }
  }
  {
    auto out = open_output(dir / kVocabularyFile);
    const auto& items = dataset.vocab.items();
    for (std::size_t i = 0; i < items.size(); ++i) out << items[i] << '\t' << (i + 1) << '\n';
  }
  {
    auto out = open_output(dir / kUsersFile);
    for (const auto& u : dataset.users) out << u.user_id << '\t' << u.user_index << '\n';
  }
  {
    auto out = open_output(dir / kStatsFile);
    write_stats(out, dataset.stats);
  }
}

Dataset load_processed(const fs::path& dir) {
  Dataset ds;
  {
    auto in = open_input(dir / kVocabularyFile);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string_view view = trim_cr(line);
      if (view.empty()) continue;
      const auto tab = view.rfind('\t');
      if (tab == std::string_view::npos) {
        throw DatasetError(std::string(kVocabularyFile) + " line " + std::to_string(line_no) +
                           ": expected 'item_id<TAB>token_id'");
      }
      const auto token = parse_number<Token>(view.substr(tab + 1), kVocabularyFile);
      if (ds.vocab.add(view.substr(0, tab)) != token) {
        throw DatasetError(std::string(kVocabularyFile) + " line " + std::to_string(line_no) +
                           ": token ids must be dense and in order");
      }
    }
  }
  std::vector<std::string> user_ids;
  if (fs::exists(dir / kUsersFile)) {
    auto in = open_input(dir / kUsersFile);
    std::string line;
    while (std::getline(in, line)) {
      const std::string_view view = trim_cr(line);
      if (view.empty()) continue;
      user_ids.emplace_back(view.substr(0, view.rfind('\t')));
    }
  }
  {
    auto in = open_input(dir / kSequencesFile);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::istringstream fields{std::string(trim_cr(line))};
      UserSequence seq;
      if (!(fields >> seq.user_index)) continue;
      if (seq.user_index != ds.users.size()) {
        throw DatasetError(std::string(kSequencesFile) + " line " + std::to_string(line_no) +
                           ": user indices must be consecutive from 0");
      }
      Token t = 0;
      while (fields >> t) {
        if (!ds.vocab.is_item(t)) {
          throw VocabularyError(std::string(kSequencesFile) + " line " + std::to_string(line_no) +
                                ": token " + std::to_string(t) + " is not in the vocabulary");
        }
        seq.tokens.push_back(t);
      }
      seq.user_id = seq.user_index < user_ids.size() ? user_ids[seq.user_index]
                                                     : std::to_string(seq.user_index);
      seq.split = split_leave_one_out(seq.tokens);
      ds.users.push_back(std::move(seq));
    }
  }
  if (ds.users.empty()) throw DatasetError("dataset degenerate: no sequences in " + dir.string());
  ds.stats = compute_stats(ds.users, ds.vocab.item_count());
  return ds;
}

}  // namespace seqrec::data
