#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "orthoview/config.hpp"
#include "orthoview/dataset.hpp"
#include "orthoview/nn/optim.hpp"

// Checkpoint layout, all integers little-endian:
//   "OVCKPT\0\0"  u32 version
//   u64 n + n bytes of JSON metadata (model config and run info)
//   u64 count, then per tensor: u64 name length, name, u64 size, size doubles
//   u8 has_optimizer; if set: u64 step, u64 count, then per tensor m and v
//   as (u64 size, size doubles) pairs

namespace orthoview {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::array<char, 8> kCheckpointMagic{'O', 'V', 'C', 'K', 'P', 'T', '\0', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nn::ModelConfig config;
  nn::StateDict state;
  std::optional<nn::AdamState> optimizer;
  Json info = Json::object();  // free-form run details (epoch, lr, seed, ...)
};

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw CheckpointError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_doubles(std::ostream& out, const std::vector<double>& xs) {
  put_u64(out, xs.size());
  for (double x : xs) put_u64(out, std::bit_cast<std::uint64_t>(x));
}

inline std::vector<double> get_doubles(std::istream& in) {
  const std::uint64_t n = get_u64(in);
  if (n > (1ull << 32)) throw CheckpointError("checkpoint: implausible tensor size");
  std::vector<double> xs(n);
  for (auto& x : xs) x = std::bit_cast<double>(get_u64(in));
  return xs;
}

inline std::string get_string(std::istream& in) {
  const std::uint64_t n = get_u64(in);
  if (n > (1ull << 30)) throw CheckpointError("checkpoint: implausible string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw CheckpointError("checkpoint: truncated file");
  return s;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((kCheckpointVersion >> (8 * i)) & 0xff));
  Json meta = {{"model", to_json(ck.config)}, {"info", ck.info}};
  const std::string text = meta.dump();
  detail::put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  detail::put_u64(out, ck.state.size());
  for (const auto& [name, values] : ck.state) {
    detail::put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_doubles(out, values);
  }
  out.put(ck.optimizer ? 1 : 0);
  if (ck.optimizer) {
    detail::put_u64(out, ck.optimizer->step);
    detail::put_u64(out, ck.optimizer->m.size());
    for (std::size_t i = 0; i < ck.optimizer->m.size(); ++i) {
      detail::put_doubles(out, ck.optimizer->m[i]);
      detail::put_doubles(out, ck.optimizer->v[i]);
    }
  }
}

inline Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic)
    throw CheckpointError("checkpoint: bad magic, not a checkpoint file");
  unsigned char vb[4];
  if (!in.read(reinterpret_cast<char*>(vb), 4)) throw CheckpointError("checkpoint: truncated file");
  const std::uint32_t version = vb[0] | (vb[1] << 8) | (vb[2] << 16) | (static_cast<std::uint32_t>(vb[3]) << 24);
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ck;
  Json meta;
  try {
    meta = Json::parse(detail::get_string(in));
  } catch (const Json::parse_error& e) {
    throw CheckpointError(std::string("checkpoint: corrupt metadata: ") + e.what());
  }
  from_json(meta.at("model"), ck.config, "checkpoint.model");
  ck.info = meta.value("info", Json::object());
  const std::uint64_t count = detail::get_u64(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = detail::get_string(in);
    ck.state[std::move(name)] = detail::get_doubles(in);
  }
  const int has_opt = in.get();
  if (has_opt == std::char_traits<char>::eof()) throw CheckpointError("checkpoint: truncated file");
  if (has_opt) {
    nn::AdamState st;
    st.step = detail::get_u64(in);
    const std::uint64_t n = detail::get_u64(in);
    for (std::uint64_t i = 0; i < n; ++i) {
      st.m.push_back(detail::get_doubles(in));
      st.v.push_back(detail::get_doubles(in));
    }
    ck.optimizer = std::move(st);
  }
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_atomically(path, [&](std::ostream& out) { write_checkpoint(out, ck); }, true);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

// Loads the weights into `model`; the stored model config must match exactly.
inline void restore(nn::Classifier& model, const Checkpoint& ck) {
  if (!(model.config() == ck.config))
    throw CheckpointError("checkpoint: model config mismatch (checkpoint " + to_json(ck.config).dump() + ", model " +
                          to_json(model.config()).dump() + ")");
  try {
    model.params().load_state(ck.state);
  } catch (const std::runtime_error& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace orthoview
