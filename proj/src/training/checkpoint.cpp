#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "seqrec/errors.hpp"
#include "seqrec/settings.hpp"
#include "seqrec/training.hpp"

namespace seqrec::training {

namespace fs = std::filesystem;

namespace {

template <typename T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
}

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    value = to_little_endian(value);
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

  void array(const std::string& name, const Tensor& t) {
    put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    bytes(name);
    put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t extent : t.shape()) put<std::uint64_t>(extent);
    if constexpr (std::endian::native == std::endian::little) {
      out_.write(reinterpret_cast<const char*>(t.data().data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)));
    } else {
      for (double v : t.data()) put(v);
    }
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  template <typename T>
  T get() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) fail("truncated file");
    return to_little_endian(value);
  }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) fail("truncated file");
    return s;
  }

  std::pair<std::string, Tensor> array() {
    const auto name_len = get<std::uint32_t>();
    if (name_len > 4096) fail("implausible array name length");
    std::string name = bytes(name_len);
    const auto rank = get<std::uint32_t>();
    if (rank > 8) fail("implausible rank for array " + name);
    numerics::Shape shape(rank);
    for (auto& extent : shape) extent = get<std::uint64_t>();
    Tensor t(shape);
    if constexpr (std::endian::native == std::endian::little) {
      in_.read(reinterpret_cast<char*>(t.data().data()),
               static_cast<std::streamsize>(t.size() * sizeof(double)));
      if (!in_) fail("truncated data for array " + name);
    } else {
      for (double& v : t.data()) v = get<double>();
    }
    return {std::move(name), std::move(t)};
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError(source_ + ": " + what);
  }

 private:
  std::istream& in_;
  std::string source_;
};

std::string lookup(const Settings& s, std::string_view key, const Reader& reader) {
  for (const auto& [k, v] : s) {
    if (k == key) return v;
  }
  reader.fail("missing config key '" + std::string(key) + "'");
}

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  Settings settings;
  append_settings(settings, ck.model);
  append_settings(settings, ck.train);
  settings.emplace_back("item_count", std::to_string(ck.params.item_count()));
  settings.emplace_back("epochs_completed", std::to_string(ck.epochs_completed));
  settings.emplace_back("optimizer_step", std::to_string(ck.optimizer.step));
  settings.emplace_back("vocab_digest", std::to_string(ck.vocab_digest));
  const std::string text = to_text(settings);

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    Writer w(out);
    w.bytes(std::string_view(kCheckpointMagic, sizeof kCheckpointMagic));
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint64_t>(text.size());
    w.bytes(text);

    std::vector<std::pair<std::string, const Tensor*>> arrays;
    ck.params.for_each([&arrays](const std::string& name, const Tensor& t, model::ParamKind) {
      arrays.emplace_back(name, &t);
    });
    const std::size_t n = arrays.size();
    if (ck.optimizer.first_moment.size() != n || ck.optimizer.second_moment.size() != n) {
      throw CheckpointError("optimizer state does not match the parameter set");
    }
    for (std::size_t i = 0; i < n; ++i) {
      arrays.emplace_back("adam.m." + arrays[i].first, &ck.optimizer.first_moment[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      arrays.emplace_back("adam.v." + arrays[i].first, &ck.optimizer.second_moment[i]);
    }
    w.put<std::uint64_t>(arrays.size());
    for (const auto& [name, t] : arrays) w.array(name, *t);
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path, std::optional<std::uint64_t> expected_vocab_digest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());

  if (r.bytes(sizeof kCheckpointMagic) != std::string_view(kCheckpointMagic, sizeof kCheckpointMagic)) {
    r.fail("not a checkpoint file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version) + " (expected " +
           std::to_string(kCheckpointVersion) + ")");
  }
  const auto text_len = r.get<std::uint64_t>();
  if (text_len > (1u << 20)) r.fail("implausible config block length");
  const Settings settings = parse_settings(r.bytes(text_len));

  Checkpoint ck;
  for (const auto& [k, v] : settings) {
    if (apply_setting(ck.model, k, v) || apply_setting(ck.train, k, v)) continue;
    if (k == "item_count" || k == "epochs_completed" || k == "optimizer_step" || k == "vocab_digest") continue;
    r.fail("unknown config key '" + k + "'");
  }
  ck.epochs_completed = parse_size("epochs_completed", lookup(settings, "epochs_completed", r));
  ck.optimizer.step = parse_u64("optimizer_step", lookup(settings, "optimizer_step", r));
  ck.vocab_digest = parse_u64("vocab_digest", lookup(settings, "vocab_digest", r));
  const std::size_t item_count = parse_size("item_count", lookup(settings, "item_count", r));
  if (expected_vocab_digest && *expected_vocab_digest != ck.vocab_digest) {
    r.fail("vocabulary digest mismatch: checkpoint has " + std::to_string(ck.vocab_digest) +
           ", dataset has " + std::to_string(*expected_vocab_digest));
  }

  const auto count = r.get<std::uint64_t>();
  ck.params.layers.resize(ck.model.layers);
  std::vector<std::pair<std::string, Tensor*>> slots;
  ck.params.for_each([&slots](const std::string& name, Tensor& t, model::ParamKind) {
    slots.emplace_back(name, &t);
  });
  const std::size_t n = slots.size();
  if (count != 3 * n) r.fail("expected " + std::to_string(3 * n) + " arrays, found " + std::to_string(count));
  ck.optimizer.first_moment.resize(n);
  ck.optimizer.second_moment.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    slots.emplace_back("adam.m." + slots[i].first, &ck.optimizer.first_moment[i]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    slots.emplace_back("adam.v." + slots[i].first, &ck.optimizer.second_moment[i]);
  }
  for (auto& [name, target] : slots) {
    auto [read_name, tensor] = r.array();
    if (read_name != name) r.fail("expected array '" + name + "', found '" + read_name + "'");
    *target = std::move(tensor);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (ck.optimizer.first_moment[i].shape() != slots[i].second->shape() ||
        ck.optimizer.second_moment[i].shape() != slots[i].second->shape()) {
      r.fail("optimizer moment shape differs for " + slots[i].first);
    }
  }
  if (ck.params.item_count() != item_count || ck.params.hidden() != ck.model.hidden) {
    r.fail("embedding table shape disagrees with the stored config");
  }
  return ck;
}

std::uint64_t file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
    h ^= static_cast<unsigned char>(*it);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace seqrec::training
