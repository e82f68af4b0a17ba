#pragma once

// Experiment pipelines behind the command line: data generation, reward
// model fitting, pre-training, online runs, baselines, evaluation and the
// rq1..rq4 presets. Results land in <out>/<run_id>-seed<seed>.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "ialp/checkpoint.hpp"
#include "ialp/config.hpp"
#include "ialp/data.hpp"
#include "ialp/metrics.hpp"
#include "ialp/oracle_http.hpp"
#include "ialp/training.hpp"

namespace ialp {

namespace fs = std::filesystem;

// Seed streams shared by every pipeline.
namespace streams {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kSplit = 2;
inline constexpr std::uint64_t kRewardModel = 3;
inline constexpr std::uint64_t kEnv = 4;
inline constexpr std::uint64_t kAgentInit = 5;
inline constexpr std::uint64_t kPretrain = 6;
inline constexpr std::uint64_t kOnline = 7;
inline constexpr std::uint64_t kEval = 8;
}  // namespace streams

inline nlohmann::json truth_to_json(const SyntheticGroundTruth& t) {
  return {{"latent_dim", t.latent_dim}, {"user_latents", t.user_latents},
          {"item_latents", t.item_latents}};
}

inline SyntheticGroundTruth truth_from_json(const nlohmann::json& j) {
  SyntheticGroundTruth t;
  t.latent_dim = j.at("latent_dim").get<std::size_t>();
  t.user_latents = j.at("user_latents").get<std::vector<std::vector<Real>>>();
  t.item_latents = j.at("item_latents").get<std::vector<std::vector<Real>>>();
  return t;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline fs::path run_directory(const ExperimentConfig& cfg) {
  return fs::path(cfg.run.out) / (cfg.run.run_id + "-seed" + std::to_string(cfg.run.seed));
}

// Data, reward model and the train/test environments of one run.
struct World {
  std::shared_ptr<const ItemCatalog> catalog;
  InteractionLog log;
  InteractionLog train_log;
  InteractionLog test_log;
  std::shared_ptr<const SyntheticGroundTruth> truth;
  std::shared_ptr<const RewardModel> model;
  std::vector<Real> fit_loss;
  std::unique_ptr<Environment> train_env;
  std::unique_ptr<Environment> test_env;
};

inline World load_data(ExperimentConfig& cfg) {
  World w;
  const std::uint64_t seed = cfg.run.seed;
  if (cfg.data.source == "synthetic") {
    auto ds = generate_synthetic(cfg.data.num_users, cfg.data.num_items, cfg.data.seq_len,
                                 cfg.data.latent_dim, derive_seed(seed, streams::kData),
                                 cfg.data.noise);
    w.catalog = std::make_shared<const ItemCatalog>(std::move(ds.catalog));
    w.log = std::move(ds.log);
    w.truth = std::make_shared<const SyntheticGroundTruth>(std::move(ds.truth));
  } else {
    if (cfg.data.catalog_path.empty() || cfg.data.interactions_path.empty()) {
      throw ConfigError("data.source = files needs data.catalog and data.interactions");
    }
    w.catalog = std::make_shared<const ItemCatalog>(load_catalog(cfg.data.catalog_path));
    cfg.data.num_items = w.catalog->num_items();
    w.log = load_interactions(cfg.data.interactions_path, *w.catalog);
    if (!cfg.data.truth_path.empty()) {
      w.truth = std::make_shared<const SyntheticGroundTruth>(
          truth_from_json(nlohmann::json::parse(read_text(cfg.data.truth_path))));
    }
  }
  auto [train, test] = split_log(w.log, cfg.data.train_fraction, derive_seed(seed, streams::kSplit));
  w.train_log = std::move(train);
  w.test_log = std::move(test);
  return w;
}

// The reward model is fitted on the whole log; the split only decides which
// sequences seed the train and test environments.
inline World build_world(ExperimentConfig& cfg, const RewardModel* fitted = nullptr) {
  cfg.validate();
  World w = load_data(cfg);
  if (fitted) {
    w.model = std::make_shared<const RewardModel>(*fitted);
  } else {
    RewardModelHyperparams hp = cfg.rm;
    hp.r_max = cfg.env.r_max;
    auto fit = fit_reward_model(w.log, cfg.data.num_items, cfg.reward_model, hp,
                                derive_seed(cfg.run.seed, streams::kRewardModel));
    w.fit_loss = std::move(fit.epoch_loss);
    w.model = std::make_shared<const RewardModel>(std::move(fit.model));
  }
  EnvConfig ec = cfg.env;
  ec.seed = derive_seed(cfg.run.seed, streams::kEnv);
  w.train_env = std::make_unique<Environment>(w.model, w.train_log, ec);
  w.test_env = std::make_unique<Environment>(w.model, w.test_log, ec);
  return w;
}

// Owns whatever the oracle needs to stay alive.
struct OracleHandle {
  std::unique_ptr<PreferenceOracle> oracle;
  LlmOracle* llm = nullptr;
};

inline OracleHandle make_oracle(const ExperimentConfig& cfg, const World& w) {
  OracleHandle h;
  if (cfg.oracle.kind == "synthetic") {
    if (!w.truth) throw ConfigError("synthetic oracle needs synthetic data or data.truth");
    h.oracle = std::make_unique<SyntheticOracle>(w.truth, cfg.oracle.threshold);
    return h;
  }
  std::shared_ptr<ResponseSource> source;
  if (!cfg.oracle.replay.empty()) {
    source = std::make_shared<ReplaySource>(cfg.oracle.replay);
  } else {
    if (cfg.oracle.base_url.empty()) throw ConfigError("oracle.base_url is required for llm mode");
    RemoteEndpoint ep;
    ep.base_url = cfg.oracle.base_url;
    ep.model = cfg.oracle.model;
    ep.retry_limit = cfg.oracle.retry_limit;
    ep.timeout = std::chrono::milliseconds(cfg.oracle.timeout_ms);
    source = std::make_shared<HttpChatClient>(ep);
  }
  if (!cfg.oracle.record.empty()) source = std::make_shared<RecordingSource>(source, cfg.oracle.record);
  PromptSpec spec = cfg.oracle.prompt;
  spec.k = cfg.train.k;
  auto llm = std::make_unique<LlmOracle>(w.catalog, spec, source, cfg.oracle.max_history);
  h.llm = llm.get();
  h.oracle = std::move(llm);
  return h;
}

inline AgentBundle initial_agent(const ExperimentConfig& cfg) {
  return AgentBundle::create(cfg.agent_config(), derive_seed(cfg.run.seed, streams::kAgentInit));
}

inline TrainConfig train_config(const ExperimentConfig& cfg, std::uint64_t stream) {
  TrainConfig t = cfg.train;
  t.seed = derive_seed(cfg.run.seed, stream);
  return t;
}

inline nlohmann::json record_json(const EpisodeRecord& e) {
  return {{"episode_index", e.episode_index}, {"global_step", e.global_step},
          {"return_R", e.return_R},           {"length_Len", e.length_Len},
          {"avg_reward", e.avg_reward}};
}

inline void write_curve(const fs::path& path, std::span<const EpisodeRecord> episodes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  for (const auto& e : episodes) out << record_json(e).dump() << '\n';
}

inline Evaluation evaluate_policy(const ExperimentConfig& cfg, const World& w,
                                  const GreedyPolicy& policy) {
  return evaluate(policy, *w.test_env, cfg.run.eval_episodes,
                  derive_seed(cfg.run.seed, streams::kEval), cfg.run.workers);
}

inline GreedyPolicy actor_policy(const AgentBundle& agent) {
  auto snapshot = std::make_shared<const AgentBundle>(agent);
  return [snapshot](std::span<const ItemId> h) {
    return static_cast<ItemId>(argmax(action_distribution(snapshot->encode(h), *snapshot)));
  };
}

// One method's online run with test evaluations at chosen step counts.
struct MethodRun {
  std::string name;
  std::string strategy;
  std::vector<std::size_t> eval_steps;
  std::vector<Metrics> evals;
  LearningCurve curve;
  AgentBundle agent;
  double wall_seconds = 0.0;
};

inline MethodRun run_method(const std::string& name, Method method, const AgentBundle& init,
                            const ExperimentConfig& cfg, const World& w,
                            const ExplorationStrategy& strategy, std::vector<std::size_t> eval_steps,
                            PreferenceOracle* oracle = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  MethodRun r;
  r.name = name;
  r.strategy = strategy.name();
  std::sort(eval_steps.begin(), eval_steps.end());
  r.eval_steps = eval_steps;
  OnlineRunner runner(method, init, *w.train_env, train_config(cfg, streams::kOnline), strategy,
                      oracle);
  for (std::size_t s : eval_steps) {
    runner.run_until(s);
    r.evals.push_back(evaluate_policy(cfg, w, runner.greedy_policy()).metrics);
  }
  r.curve = runner.curve();
  r.agent = runner.learner();
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// Frozen agent: evaluated only.
inline MethodRun frozen_run(const std::string& name, const AgentBundle& agent,
                            const ExperimentConfig& cfg, const World& w) {
  MethodRun r;
  r.name = name;
  r.strategy = "greedy";
  r.eval_steps = {0};
  r.evals = {evaluate_policy(cfg, w, actor_policy(agent)).metrics};
  r.agent = agent;
  return r;
}

// Mean smoothed return over the last `tail` fraction of environment steps.
inline Real final_return(const LearningCurve& c, Real tail = 0.1) {
  if (c.smoothed.empty()) return 0.0;
  const Real cutoff = (1.0 - tail) * static_cast<Real>(c.smoothed.back().global_step);
  Real sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : c.smoothed) {
    if (static_cast<Real>(p.global_step) >= cutoff) {
      sum += p.mean_return;
      ++n;
    }
  }
  return sum / static_cast<Real>(n);
}

// First step at which the smoothed curve reaches `fraction` of final_return.
inline std::optional<std::size_t> steps_to_fraction(const LearningCurve& c, Real fraction) {
  if (c.smoothed.empty()) return std::nullopt;
  const Real target = fraction * final_return(c);
  if (!(target > 0.0)) return std::nullopt;
  for (const auto& p : c.smoothed) {
    if (p.mean_return >= target) return p.global_step;
  }
  return std::nullopt;
}

inline std::string format_metric(Real v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << v;
  return os.str();
}

// Tab-separated table: one row per run, one R/Len/R_avg triple per
// evaluation point labelled by `labels`.
inline std::string summary_table(const std::vector<MethodRun>& runs,
                                 const std::vector<std::string>& labels, std::uint64_t seed) {
  std::string out = "method\tstrategy\tseed";
  for (const auto& l : labels) out += "\tR" + l + "\tLen" + l + "\tR_avg" + l;
  out += "\tepisodes\tsteps_to_90\twall_seconds\n";
  for (const auto& r : runs) {
    out += r.name + "\t" + r.strategy + "\t" + std::to_string(seed);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (i < r.evals.size()) {
        out += "\t" + format_metric(r.evals[i].R) + "\t" + format_metric(r.evals[i].Len) + "\t" +
               format_metric(r.evals[i].R_avg);
      } else {
        out += "\t-\t-\t-";
      }
    }
    const auto s90 = steps_to_fraction(r.curve, 0.9);
    out += "\t" + std::to_string(r.curve.episodes.size()) + "\t" +
           (s90 ? std::to_string(*s90) : std::string("-")) + "\t" + format_metric(r.wall_seconds) +
           "\n";
  }
  return out;
}

struct RunOutput {
  fs::path dir;
  std::vector<MethodRun> runs;
  std::vector<std::string> files;
};

inline fs::path prepare_run_dir(const ExperimentConfig& cfg) {
  const fs::path dir = run_directory(cfg);
  fs::create_directories(dir);
  write_text(dir / "config.full", dump_config(cfg));
  return dir;
}

inline void write_runs(RunOutput& out, const std::vector<std::string>& labels,
                       const ExperimentConfig& cfg) {
  for (const auto& r : out.runs) {
    if (r.curve.episodes.empty()) continue;
    const std::string file = "curve_" + r.name + "_" + r.strategy + ".jsonl";
    write_curve(out.dir / file, r.curve.episodes);
    out.files.push_back(file);
  }
  write_text(out.dir / "summary.tsv", summary_table(out.runs, labels, cfg.run.seed));
  out.files.push_back("summary.tsv");
}

// --- pipelines -------------------------------------------------------------

inline RunOutput gen_data(ExperimentConfig cfg) {
  cfg.validate();
  if (cfg.data.source != "synthetic") throw ConfigError("gen-data needs data.source = synthetic");
  RunOutput out{prepare_run_dir(cfg), {}, {}};
  World w = load_data(cfg);
  write_catalog(*w.catalog, out.dir / "catalog.csv");
  write_interactions(w.log, out.dir / "interactions.csv");
  write_text(out.dir / "truth.json", truth_to_json(*w.truth).dump() + "\n");
  out.files = {"catalog.csv", "interactions.csv", "truth.json"};
  return out;
}

inline RunOutput fit_env(ExperimentConfig cfg) {
  World w = build_world(cfg);
  RunOutput out{prepare_run_dir(cfg), {}, {}};
  save_reward_model(*w.model, out.dir / "reward_model.ckpt");
  std::string log;
  for (std::size_t e = 0; e < w.fit_loss.size(); ++e) {
    log += nlohmann::json{{"epoch", e}, {"loss", w.fit_loss[e]}}.dump() + "\n";
  }
  write_text(out.dir / "reward_model.jsonl", log);
  out.files = {"reward_model.ckpt", "reward_model.jsonl"};
  return out;
}

namespace detail {

inline nlohmann::json transition_json(const Transition& t) {
  return {{"s", t.state_items}, {"a", t.action}, {"r", t.reward}, {"n", t.next_items}, {"d", t.done}};
}

inline Transition transition_from_json(const nlohmann::json& j) {
  return {j.at("s").get<ItemSequence>(), j.at("a").get<ItemId>(), j.at("r").get<Real>(),
          j.at("n").get<ItemSequence>(), j.at("d").get<bool>()};
}

inline std::string rng_text(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng rng_from_text(const std::string& text) {
  Rng rng;
  std::istringstream is(text);
  is >> rng;
  if (!is) throw CheckpointError(CheckpointError::Kind::shape_mismatch, "bad generator state");
  return rng;
}

}  // namespace detail

// Pre-trains iALP, checkpointing after every epoch. A run directory holding
// a partial pre-training resumes from its last completed epoch.
inline AgentBundle pretrain_pipeline(const ExperimentConfig& cfg, const World& w,
                                     const fs::path& dir) {
  OracleHandle oracle = make_oracle(cfg, w);
  AgentBundle agent = initial_agent(cfg);
  const TrainConfig tc = train_config(cfg, streams::kPretrain);
  Pretrainer trainer(agent, *oracle.oracle, tc, &w.train_log);

  const fs::path state = dir / "pretrain_state.ckpt";
  const fs::path buffer_file = dir / "pretrain_buffer.jsonl";
  const fs::path log_file = dir / "pretrain.jsonl";
  std::vector<std::string> log_lines;
  if (!fs::exists(state)) write_text(buffer_file, "");
  if (fs::exists(state)) {
    auto loaded = load_checkpoint(state);
    const std::size_t epoch = std::stoul(detail::get_key(CheckpointData{loaded.config, {}, {}}, "epoch"));
    detail::expect_shapes(agent.params, loaded.bundle.params);
    agent.params = loaded.bundle.params;
    trainer.restore(epoch, detail::rng_from_text(loaded.rng_state));
    // Lines past the last completed epoch belong to an interrupted epoch.
    std::istringstream buf(read_text(buffer_file));
    std::string kept;
    std::size_t n = 0;
    for (std::string line; n < epoch * tc.pretrain_horizon && std::getline(buf, line); ++n) {
      trainer.buffer().push(detail::transition_from_json(nlohmann::json::parse(line)));
      kept += line + "\n";
    }
    write_text(buffer_file, kept);
    std::istringstream lg(fs::exists(log_file) ? read_text(log_file) : "");
    for (std::string line; std::getline(lg, line) && log_lines.size() < epoch;) log_lines.push_back(line);
  }

  while (trainer.epoch() < cfg.train.pretrain_epochs) {
    const auto st = trainer.run_epoch();
    log_lines.push_back(nlohmann::json{{"epoch", st.epoch},
                                       {"mean_oracle_reward", st.mean_oracle_reward},
                                       {"mean_actor_loss", st.mean_actor_loss},
                                       {"mean_critic_loss", st.mean_critic_loss},
                                       {"updates", st.updates}}
                            .dump());
    std::string lines;
    for (const auto& l : log_lines) lines += l + "\n";
    write_text(log_file, lines);
    // The buffer file is an append-only transition log; replaying it through
    // the FIFO rebuilds the buffer.
    std::ofstream buf(buffer_file, std::ios::binary | std::ios::app);
    const auto& contents = trainer.buffer().contents();
    const std::size_t fresh = std::min(contents.size(), tc.pretrain_horizon);
    for (std::size_t i = contents.size() - fresh; i < contents.size(); ++i) {
      buf << detail::transition_json(contents[i]).dump() << '\n';
    }
    buf.close();
    save_checkpoint(agent, state, detail::rng_text(trainer.rng()),
                    {{"epoch", std::to_string(trainer.epoch())}});
  }
  save_checkpoint(agent, dir / "ialp.ckpt");
  if (oracle.llm && oracle.llm->parse_failures > 0) {
    write_text(dir / "oracle_stats.json",
               nlohmann::json{{"parse_failures", oracle.llm->parse_failures}}.dump() + "\n");
  }
  return agent;
}

inline RunOutput pretrain(ExperimentConfig cfg) {
  World w = build_world(cfg);
  RunOutput out{prepare_run_dir(cfg), {}, {}};
  pretrain_pipeline(cfg, w, out.dir);
  out.files = {"pretrain.jsonl", "pretrain_state.ckpt", "ialp.ckpt"};
  return out;
}

// Pre-trained agent from run.checkpoint, an earlier ialp.ckpt in the run
// directory, or a fresh pre-training.
inline AgentBundle obtain_pretrained(const ExperimentConfig& cfg, const World& w, const fs::path& dir) {
  fs::path ckpt = cfg.run.checkpoint;
  if (ckpt.empty() && fs::exists(dir / "ialp.ckpt")) ckpt = dir / "ialp.ckpt";
  if (ckpt.empty()) return pretrain_pipeline(cfg, w, dir);
  auto loaded = load_checkpoint(ckpt);
  if (loaded.bundle.config.num_items() != cfg.data.num_items) {
    throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                          "checkpoint item count does not match the data");
  }
  loaded.bundle.config.gamma = cfg.train.gamma;
  return loaded.bundle;
}

inline std::vector<std::size_t> epoch_steps(const ExperimentConfig& cfg, std::size_t epochs) {
  const std::size_t per_epoch = cfg.env.max_steps * cfg.run.episodes_per_epoch;
  std::vector<std::size_t> s;
  for (std::size_t e = 0; e <= epochs; ++e) s.push_back(e * per_epoch);
  return s;
}

inline RunOutput online(ExperimentConfig cfg) {
  World w = build_world(cfg);
  RunOutput out{prepare_run_dir(cfg), {}, {}};
  const AgentBundle pre = obtain_pretrained(cfg, w, out.dir);
  const Method m = cfg.scheme() == Scheme::ft ? Method::ialp_ft : Method::ialp_ap;
  out.runs.push_back(run_method(to_string(m), m, pre, cfg, w, cfg.strategy(),
                                {0, cfg.train.online_steps}));
  save_checkpoint(out.runs.back().agent, out.dir / "agent.ckpt");
  write_runs(out, {"@start", "@final"}, cfg);
  out.files.push_back("agent.ckpt");
  return out;
}

inline RunOutput baseline(ExperimentConfig cfg) {
  World w = build_world(cfg);
  RunOutput out{prepare_run_dir(cfg), {}, {}};
  const Method m = parse_method(cfg.run.method);
  OracleHandle oracle;
  if (m == Method::llm_online) oracle = make_oracle(cfg, w);
  out.runs.push_back(run_method(to_string(m), m, initial_agent(cfg), cfg, w, cfg.strategy(),
                                {0, cfg.train.online_steps}, oracle.oracle.get()));
  save_checkpoint(out.runs.back().agent, out.dir / "agent.ckpt");
  write_runs(out, {"@start", "@final"}, cfg);
  out.files.push_back("agent.ckpt");
  return out;
}

inline RunOutput eval(ExperimentConfig cfg) {
  World w = build_world(cfg);
  RunOutput out{prepare_run_dir(cfg), {}, {}};
  fs::path ckpt = cfg.run.checkpoint.empty() ? out.dir / "agent.ckpt" : fs::path(cfg.run.checkpoint);
  const auto loaded = load_checkpoint(ckpt);
  out.runs.push_back(frozen_run("checkpoint", loaded.bundle, cfg, w));
  write_runs(out, {"@eval"}, cfg);
  return out;
}

// Initial performance: R/Len/R_avg after 0, 1 and 2 epochs for the scratch
// baselines and iALP.
inline RunOutput rq1(ExperimentConfig cfg) {
  World w = build_world(cfg);
  RunOutput out{prepare_run_dir(cfg), {}, {}};
  const AgentBundle pre = obtain_pretrained(cfg, w, out.dir);
  const auto steps = epoch_steps(cfg, 2);
  const auto strat = cfg.strategy();
  for (Method m : {Method::dqn, Method::pg, Method::a2c}) {
    out.runs.push_back(run_method(to_string(m), m, initial_agent(cfg), cfg, w, strat, steps));
  }
  const Method ialp = cfg.scheme() == Scheme::ft ? Method::ialp_ft : Method::ialp_ap;
  out.runs.push_back(run_method("ialp", ialp, pre, cfg, w, strat, steps));
  write_runs(out, {"@0", "@1", "@2"}, cfg);
  return out;
}

// Long-term performance: frozen iALP, both adaptation schemes and the
// scratch baselines over the full online budget.
inline RunOutput rq2(ExperimentConfig cfg) {
  World w = build_world(cfg);
  RunOutput out{prepare_run_dir(cfg), {}, {}};
  const AgentBundle pre = obtain_pretrained(cfg, w, out.dir);
  const std::vector<std::size_t> steps{0, cfg.train.online_steps};
  const auto strat = cfg.strategy();
  out.runs.push_back(frozen_run("ialp", pre, cfg, w));
  for (Method m : {Method::dqn, Method::pg, Method::a2c}) {
    out.runs.push_back(run_method(to_string(m), m, initial_agent(cfg), cfg, w, strat, steps));
  }
  out.runs.push_back(run_method("ialp_ft", Method::ialp_ft, pre, cfg, w, strat, steps));
  out.runs.push_back(run_method("ialp_ap", Method::ialp_ap, pre, cfg, w, strat, steps));
  write_runs(out, {"@start", "@final"}, cfg);
  return out;
}

// LLM-guided online learning versus A-iALP.
inline RunOutput rq3(ExperimentConfig cfg) {
  World w = build_world(cfg);
  RunOutput out{prepare_run_dir(cfg), {}, {}};
  const AgentBundle pre = obtain_pretrained(cfg, w, out.dir);
  OracleHandle oracle = make_oracle(cfg, w);
  const std::vector<std::size_t> steps{0, cfg.train.online_steps};
  const auto strat = cfg.strategy();
  out.runs.push_back(run_method("llm_online", Method::llm_online, initial_agent(cfg), cfg, w,
                                strat, steps, oracle.oracle.get()));
  out.runs.push_back(run_method("ialp_ap", Method::ialp_ap, pre, cfg, w, strat, steps));
  write_runs(out, {"@start", "@final"}, cfg);
  return out;
}

// Exploration strategies: A2C and A-iALP_ap under each strategy.
inline RunOutput rq4(ExperimentConfig cfg) {
  World w = build_world(cfg);
  RunOutput out{prepare_run_dir(cfg), {}, {}};
  const AgentBundle pre = obtain_pretrained(cfg, w, out.dir);
  const std::vector<std::size_t> steps{0, cfg.train.online_steps};
  for (const auto& strat : {ExplorationStrategy::greedy(),
                            ExplorationStrategy::epsilon_greedy(cfg.run.epsilon),
                            ExplorationStrategy::categorical()}) {
    out.runs.push_back(run_method("a2c", Method::a2c, initial_agent(cfg), cfg, w, strat, steps));
    out.runs.push_back(run_method("ialp_ap", Method::ialp_ap, pre, cfg, w, strat, steps));
  }
  write_runs(out, {"@start", "@final"}, cfg);
  return out;
}

inline RunOutput run_pipeline(const std::string& name, const ExperimentConfig& cfg) {
  if (name == "gen-data") return gen_data(cfg);
  if (name == "fit-env") return fit_env(cfg);
  if (name == "pretrain") return pretrain(cfg);
  if (name == "online") return online(cfg);
  if (name == "baseline") return baseline(cfg);
  if (name == "eval") return eval(cfg);
  if (name == "rq1") return rq1(cfg);
  if (name == "rq2") return rq2(cfg);
  if (name == "rq3") return rq3(cfg);
  if (name == "rq4") return rq4(cfg);
  throw ConfigError("unknown pipeline '" + name + "'");
}

}  // namespace ialp
