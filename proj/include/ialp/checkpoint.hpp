#pragma once

// Portable binary checkpoints.
//
// Layout (all integers little-endian):
//   magic            8 bytes  "IALPCKPT"
//   format_version   u32
//   config_len       u32, then config snapshot bytes ("key=value\n" lines)
//   rng_len          u32, then generator state text
//   tensor_count     u32
//   per tensor:      u32 name_len, name, u32 rank, rank x u64 extents,
//                    product(extents) x f32 values

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ialp/agent.hpp"
#include "ialp/environment.hpp"

namespace ialp {

inline constexpr char kCheckpointMagic[8] = {'I', 'A', 'L', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public Error {
 public:
  enum class Kind { io, version_mismatch, truncated, shape_mismatch };
  CheckpointError(Kind kind, const std::string& message)
      : Error(kind_name(kind), message), reason_(kind) {}
  Kind reason() const noexcept { return reason_; }

  static std::string kind_name(Kind k) {
    switch (k) {
      case Kind::io: return "checkpoint_io";
      case Kind::version_mismatch: return "checkpoint_version";
      case Kind::truncated: return "checkpoint_truncated";
      case Kind::shape_mismatch: return "checkpoint_shape";
    }
    return "checkpoint";
  }

 private:
  Kind reason_;
};

struct CheckpointData {
  std::map<std::string, std::string> config;
  std::string rng_state;
  ParamSet tensors;
};

namespace detail {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::make_unsigned_t<T>>(v) >> (8 * i)) & 0xFF));
  }
}

inline void put_bytes(std::string& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string get_bytes() { return get_string(get<std::uint32_t>()); }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint ends unexpectedly");
    }
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const CheckpointData& data) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  std::string cfg;
  for (const auto& [k, v] : data.config) cfg += k + "=" + v + "\n";
  detail::put_bytes(out, cfg);
  detail::put_bytes(out, data.rng_state);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.tensors.size()));
  for (const auto& [name, p] : data.tensors) {
    detail::put_bytes(out, name);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.shape.size()));
    for (auto e : p.value.shape) detail::put_le<std::uint64_t>(out, e);
    for (Real v : p.value.data) {
      detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

inline CheckpointData decode_checkpoint(std::string bytes) {
  detail::Reader in(std::move(bytes));
  const std::string magic = [&] {
    try {
      return in.get_string(sizeof kCheckpointMagic);
    } catch (const CheckpointError&) {
      throw CheckpointError(CheckpointError::Kind::version_mismatch, "not a checkpoint file");
    }
  }();
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw CheckpointError(CheckpointError::Kind::version_mismatch, "bad checkpoint header");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::version_mismatch,
                          "checkpoint format version " + std::to_string(version) +
                              ", expected " + std::to_string(kCheckpointVersion));
  }
  CheckpointData data;
  std::istringstream cfg(in.get_bytes());
  for (std::string line; std::getline(cfg, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    data.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  data.rng_state = in.get_bytes();
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = in.get_bytes();
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) throw CheckpointError(CheckpointError::Kind::shape_mismatch, "rank too large");
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(in.get<std::uint64_t>());
    Tensor tensor(shape);
    for (Real& v : tensor.data) v = std::bit_cast<float>(in.get<std::uint32_t>());
    data.tensors.add(name, std::move(tensor));
  }
  if (!in.at_end()) {
    throw CheckpointError(CheckpointError::Kind::truncated, "trailing bytes after tensors");
  }
  return data;
}

inline void write_checkpoint(const CheckpointData& data, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(data);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

namespace detail {

inline std::string get_key(const CheckpointData& d, const std::string& key) {
  auto it = d.config.find(key);
  if (it == d.config.end()) {
    throw CheckpointError(CheckpointError::Kind::shape_mismatch, "checkpoint lacks '" + key + "'");
  }
  return it->second;
}

inline void expect_shapes(const ParamSet& expected, const ParamSet& got) {
  for (const auto& [name, p] : expected) {
    if (!got.contains(name)) {
      throw CheckpointError(CheckpointError::Kind::shape_mismatch, "missing tensor '" + name + "'");
    }
    if (got.value(name).shape != p.value.shape) {
      throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                            "tensor '" + name + "' has unexpected shape");
    }
  }
  if (got.size() != expected.size()) {
    throw CheckpointError(CheckpointError::Kind::shape_mismatch, "unexpected extra tensors");
  }
}

inline std::string format_real(Real v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

inline void save_checkpoint(const AgentBundle& bundle, const std::filesystem::path& path,
                            const std::string& rng_state = {},
                            std::map<std::string, std::string> extra = {}) {
  CheckpointData d;
  d.config = std::move(extra);
  d.config["kind"] = "agent";
  d.config["embed_dim"] = std::to_string(bundle.config.encoder.embed_dim);
  d.config["max_seq_len"] = std::to_string(bundle.config.encoder.max_seq_len);
  d.config["num_items"] = std::to_string(bundle.config.encoder.num_items);
  d.config["gamma"] = detail::format_real(bundle.config.gamma);
  d.rng_state = rng_state;
  for (const auto& [name, p] : bundle.params) d.tensors.add(name, p.value);
  write_checkpoint(d, path);
}

struct LoadedAgent {
  AgentBundle bundle;
  std::map<std::string, std::string> config;
  std::string rng_state;
};

inline LoadedAgent load_checkpoint(const std::filesystem::path& path) {
  CheckpointData d = read_checkpoint(path);
  if (detail::get_key(d, "kind") != "agent") {
    throw CheckpointError(CheckpointError::Kind::shape_mismatch, "checkpoint is not an agent");
  }
  AgentConfig cfg;
  try {
    cfg.encoder.embed_dim = std::stoul(detail::get_key(d, "embed_dim"));
    cfg.encoder.max_seq_len = std::stoul(detail::get_key(d, "max_seq_len"));
    cfg.encoder.num_items = std::stoul(detail::get_key(d, "num_items"));
    cfg.gamma = std::stod(detail::get_key(d, "gamma"));
  } catch (const std::logic_error&) {
    throw CheckpointError(CheckpointError::Kind::shape_mismatch, "malformed agent config");
  }
  LoadedAgent out;
  out.bundle = AgentBundle::create(cfg, 0);
  detail::expect_shapes(out.bundle.params, d.tensors);
  for (auto& [name, p] : out.bundle.params) p.value = d.tensors.value(name);
  out.config = std::move(d.config);
  out.rng_state = std::move(d.rng_state);
  return out;
}

inline void save_reward_model(const RewardModel& m, const std::filesystem::path& path) {
  CheckpointData d;
  d.config["kind"] = "reward_model";
  d.config["model"] = to_string(m.kind);
  d.config["r_max"] = detail::format_real(m.r_max);
  d.config["num_items"] = std::to_string(m.num_items);
  if (m.kind == RewardModelKind::sequential) {
    d.config["embed_dim"] = std::to_string(m.encoder.embed_dim);
    d.config["max_seq_len"] = std::to_string(m.encoder.max_seq_len);
  } else {
    std::string users;
    for (const auto& [user, row] : m.user_rows) users += std::to_string(user) + " ";
    d.config["users"] = users;
  }
  for (const auto& [name, p] : m.params) d.tensors.add(name, p.value);
  write_checkpoint(d, path);
}

inline RewardModel load_reward_model(const std::filesystem::path& path) {
  CheckpointData d = read_checkpoint(path);
  if (detail::get_key(d, "kind") != "reward_model") {
    throw CheckpointError(CheckpointError::Kind::shape_mismatch, "checkpoint is not a reward model");
  }
  RewardModel m;
  m.kind = parse_reward_model_kind(detail::get_key(d, "model"));
  m.r_max = std::stod(detail::get_key(d, "r_max"));
  m.num_items = std::stoul(detail::get_key(d, "num_items"));
  if (m.kind == RewardModelKind::sequential) {
    m.encoder = {std::stoul(detail::get_key(d, "embed_dim")),
                 std::stoul(detail::get_key(d, "max_seq_len")), m.num_items};
  } else {
    std::istringstream users(detail::get_key(d, "users"));
    UserId u = 0;
    std::size_t row = 0;
    while (users >> u) m.user_rows[u] = row++;
  }
  m.params = std::move(d.tensors);
  return m;
}

}  // namespace ialp
