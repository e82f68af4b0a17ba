#pragma once

// Flat `key = value` configuration with [section] headers. Every key has a
// default; unknown keys are rejected by name.

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "ialp/environment.hpp"
#include "ialp/oracle_http.hpp"
#include "ialp/training.hpp"

namespace ialp {

struct DataSettings {
  std::string source = "synthetic";  // synthetic | files
  std::string catalog_path;
  std::string interactions_path;
  std::string truth_path;  // synthetic latents, needed by the synthetic oracle on file data
  std::size_t num_users = 200;
  std::size_t num_items = 40;
  std::size_t seq_len = 8;
  std::size_t latent_dim = 4;
  Real noise = 0.1;
  Real train_fraction = 0.8;
};

struct OracleSettings {
  std::string kind = "synthetic";  // synthetic | llm
  Real threshold = 0.0;
  std::string base_url;
  std::string model;
  std::size_t retry_limit = 3;
  std::size_t timeout_ms = 30000;
  std::size_t max_history = 10;
  std::string replay;  // fixture to answer from instead of the network
  std::string record;  // fixture to append live answers to
  PromptSpec prompt;
};

struct RunSettings {
  std::string run_id = "run";
  std::uint64_t seed = 0;
  std::string out = "results";
  std::string scheme = "ap";
  std::string strategy = "categorical";
  Real epsilon = 0.1;
  std::string method = "a2c";
  std::string checkpoint;
  std::size_t eval_episodes = 100;
  std::size_t episodes_per_epoch = 50;
  std::size_t workers = 1;
};

struct ExperimentConfig {
  RunSettings run;
  DataSettings data;
  RewardModelKind reward_model = RewardModelKind::matrix_factorization;
  RewardModelHyperparams rm;
  EnvConfig env;
  std::size_t embed_dim = 16;
  std::size_t max_seq_len = 10;
  TrainConfig train;
  OracleSettings oracle;

  AgentConfig agent_config() const {
    AgentConfig a;
    a.encoder = {embed_dim, max_seq_len, data.num_items};
    a.gamma = train.gamma;
    return a;
  }

  ExplorationStrategy strategy() const { return ExplorationStrategy::parse(run.strategy, run.epsilon); }
  Scheme scheme() const {
    if (run.scheme == "ft") return Scheme::ft;
    if (run.scheme == "ap") return Scheme::ap;
    throw ConfigError("unknown scheme '" + run.scheme + "'");
  }

  void validate() const {
    env.validate();
    train.validate();
    agent_config().validate();
    (void)strategy();
    (void)scheme();
    if (data.source != "synthetic" && data.source != "files") {
      throw ConfigError("data.source must be synthetic or files");
    }
    if (oracle.kind != "synthetic" && oracle.kind != "llm") {
      throw ConfigError("oracle.kind must be synthetic or llm");
    }
    if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) {
      throw ConfigError("data.train_fraction must lie in (0, 1)");
    }
    if (run.eval_episodes == 0) throw ConfigError("run.eval_episodes must be >= 1");
    if (run.episodes_per_epoch == 0) throw ConfigError("run.episodes_per_epoch must be >= 1");
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (!in || !(in >> std::ws).eof()) {
    throw ConfigError("config key '" + key + "' has invalid value '" + text + "'");
  }
  if constexpr (std::is_unsigned_v<T>) {
    if (text.find('-') != std::string::npos) {
      throw ConfigError("config key '" + key + "' must be non-negative");
    }
  }
  return v;
}

inline std::string show(Real v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

// Key table binding "section.key" names to fields of one ExperimentConfig.
class ConfigBinding {
 public:
  explicit ConfigBinding(ExperimentConfig& c) {
    str("run.run_id", c.run.run_id);
    u64("run.seed", c.run.seed);
    str("run.out", c.run.out);
    str("run.scheme", c.run.scheme);
    str("run.strategy", c.run.strategy);
    real("run.epsilon", c.run.epsilon);
    str("run.method", c.run.method);
    str("run.checkpoint", c.run.checkpoint);
    size("run.eval_episodes", c.run.eval_episodes);
    size("run.episodes_per_epoch", c.run.episodes_per_epoch);
    size("run.workers", c.run.workers);

    str("data.source", c.data.source);
    str("data.catalog", c.data.catalog_path);
    str("data.interactions", c.data.interactions_path);
    str("data.truth", c.data.truth_path);
    size("data.num_users", c.data.num_users);
    size("data.num_items", c.data.num_items);
    size("data.seq_len", c.data.seq_len);
    size("data.latent_dim", c.data.latent_dim);
    real("data.noise", c.data.noise);
    real("data.train_fraction", c.data.train_fraction);

    bind("reward_model.model", [&c](const std::string& v) { c.reward_model = parse_reward_model_kind(v); },
         [&c] { return to_string(c.reward_model); });
    size("reward_model.dim", c.rm.dim);
    size("reward_model.epochs", c.rm.epochs);
    real("reward_model.lr", c.rm.lr);
    real("reward_model.reg", c.rm.reg);
    size("reward_model.negatives", c.rm.negatives);
    size("reward_model.max_seq_len", c.rm.max_seq_len);

    size("env.max_steps", c.env.max_steps);
    real("env.quit_threshold", c.env.quit_threshold);
    bind("env.r_max", [&c](const std::string& v) {
      c.env.r_max = detail::parse_number<Real>("env.r_max", v);
      c.rm.r_max = c.env.r_max;
    }, [&c] { return detail::show(c.env.r_max); });

    size("agent.embed_dim", c.embed_dim);
    size("agent.max_seq_len", c.max_seq_len);

    size("train.pretrain_epochs", c.train.pretrain_epochs);
    size("train.pretrain_horizon", c.train.pretrain_horizon);
    size("train.online_steps", c.train.online_steps);
    size("train.batch_size", c.train.batch_size);
    size("train.buffer_capacity", c.train.buffer_capacity);
    real("train.gamma", c.train.gamma);
    real("train.lr", c.train.lr);
    real("train.pretrain_lr", c.train.pretrain_lr);
    real("train.momentum", c.train.momentum);
    real("train.grad_clip", c.train.grad_clip);
    size("train.k", c.train.k);
    bind("train.candidate_sampling", [&c](const std::string& v) {
      if (v == "topk") c.train.candidate_sampling = CandidateSampling::topk;
      else if (v == "categorical") c.train.candidate_sampling = CandidateSampling::categorical;
      else throw ConfigError("train.candidate_sampling must be topk or categorical");
    }, [&c] { return std::string(c.train.candidate_sampling == CandidateSampling::topk ? "topk" : "categorical"); });
    real("train.alpha_init", c.train.alpha_init);
    size("train.alpha_anneal_steps", c.train.alpha_anneal_steps);
    real("train.dqn_epsilon", c.train.dqn_epsilon);
    size("train.target_update_every", c.train.target_update_every);
    size("train.curve_window", c.train.curve_window);

    str("oracle.kind", c.oracle.kind);
    real("oracle.threshold", c.oracle.threshold);
    str("oracle.base_url", c.oracle.base_url);
    str("oracle.model", c.oracle.model);
    size("oracle.retry_limit", c.oracle.retry_limit);
    size("oracle.timeout_ms", c.oracle.timeout_ms);
    size("oracle.max_history", c.oracle.max_history);
    str("oracle.replay", c.oracle.replay);
    str("oracle.record", c.oracle.record);
    str("oracle.scenario", c.oracle.prompt.scenario);
    str("oracle.item_noun", c.oracle.prompt.item_noun);
    str("oracle.behavior", c.oracle.prompt.behavior);
    bind("oracle.attributes", [&c](const std::string& v) {
      c.oracle.prompt.attribute_names.clear();
      std::istringstream in(v);
      for (std::string a; std::getline(in, a, ',');) {
        if (!detail::trim(a).empty()) c.oracle.prompt.attribute_names.push_back(detail::trim(a));
      }
    }, [&c] {
      std::string s;
      for (const auto& a : c.oracle.prompt.attribute_names) s += (s.empty() ? "" : ",") + a;
      return s;
    });
  }

  void set(const std::string& key, const std::string& value) {
    auto it = keys_.find(key);
    if (it == keys_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.first(value);
  }

  bool has(const std::string& key) const { return keys_.count(key) > 0; }

  // Every key with its current value, grouped by section.
  std::string dump() const {
    std::string out, section;
    for (const auto& [key, fns] : keys_) {
      const auto dot = key.find('.');
      const std::string s = key.substr(0, dot);
      if (s != section) {
        out += (out.empty() ? "" : "\n") + ("[" + s + "]\n");
        section = s;
      }
      out += key.substr(dot + 1) + " = " + fns.second() + "\n";
    }
    return out;
  }

 private:
  using Setter = std::function<void(const std::string&)>;
  using Getter = std::function<std::string()>;

  void bind(const std::string& key, Setter set, Getter get) {
    keys_[key] = {std::move(set), std::move(get)};
  }
  void str(const std::string& key, std::string& field) {
    bind(key, [&field](const std::string& v) { field = v; }, [&field] { return field; });
  }
  void real(const std::string& key, Real& field) {
    bind(key, [key, &field](const std::string& v) { field = detail::parse_number<Real>(key, v); },
         [&field] { return detail::show(field); });
  }
  void size(const std::string& key, std::size_t& field) {
    bind(key, [key, &field](const std::string& v) { field = detail::parse_number<std::size_t>(key, v); },
         [&field] { return std::to_string(field); });
  }
  void u64(const std::string& key, std::uint64_t& field) {
    bind(key, [key, &field](const std::string& v) { field = detail::parse_number<std::uint64_t>(key, v); },
         [&field] { return std::to_string(field); });
  }

  std::map<std::string, std::pair<Setter, Getter>> keys_;
};

inline void apply_config_text(ExperimentConfig& cfg, std::istream& in) {
  ConfigBinding binding(cfg);
  std::string section, line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": bad section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    if (!binding.has(full)) throw ConfigError("unknown config key '" + key + "'");
    binding.set(full, value);
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  ExperimentConfig cfg;
  apply_config_text(cfg, in);
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  apply_config_text(cfg, in);
  return cfg;
}

inline std::string dump_config(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  return ConfigBinding(copy).dump();
}

}  // namespace ialp
