#include <iostream>
#include <utility>

#include "CLI11.hpp"
#include "ialp/experiment.hpp"

namespace {

std::string error_kind(const std::exception& e) {
  if (auto* err = dynamic_cast<const ialp::Error*>(&e)) return err->kind();
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return "json";
  return "internal";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iALP experiment harness"};
  app.require_subcommand(1);

  std::string config_path, out, oracle, scheme, strategy;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "config file (key = value with [sections])");
  app.add_option("--seed", seed, "run seed");
  app.add_option("--out", out, "output root directory");
  app.add_option("--oracle", oracle, "preference oracle")->check(CLI::IsMember({"synthetic", "llm"}));
  app.add_option("--scheme", scheme, "online adaptation scheme")->check(CLI::IsMember({"ft", "ap"}));
  app.add_option("--strategy", strategy, "exploration strategy")
      ->check(CLI::IsMember({"greedy", "egreedy", "categorical"}));

  const std::pair<const char*, const char*> commands[] = {
      {"gen-data", "write a synthetic catalog, interaction log and latents"},
      {"fit-env", "fit the reward model and save it"},
      {"pretrain", "pretrain the agent against the preference oracle"},
      {"online", "adapt a pretrained agent online (--scheme)"},
      {"baseline", "train run.method from scratch"},
      {"eval", "evaluate run.checkpoint on the test environment"},
      {"rq1", "R@0/@1/@2 of iALP against DQN, PG and A2C"},
      {"rq2", "frozen iALP, baselines, ft and ap over a full run"},
      {"rq3", "LLM acting online against A-iALP_ap"},
      {"rq4", "A2C and A-iALP_ap under each exploration strategy"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cout << nlohmann::json{{"error", "usage"}, {"message", e.what()}}.dump() << std::endl;
    return 2;
  }

  try {
    ialp::ExperimentConfig cfg = config_path.empty() ? ialp::ExperimentConfig{} : ialp::load_config(config_path);
    if (seed) cfg.run.seed = *seed;
    if (!out.empty()) cfg.run.out = out;
    if (!oracle.empty()) cfg.oracle.kind = oracle;
    if (!scheme.empty()) cfg.run.scheme = scheme;
    if (!strategy.empty()) cfg.run.strategy = strategy;

    const std::string pipeline = app.get_subcommands().front()->get_name();
    const auto result = ialp::run_pipeline(pipeline, cfg);
    nlohmann::json report{{"pipeline", pipeline}, {"dir", result.dir.string()}, {"files", result.files}};
    std::cout << report.dump() << std::endl;
    return 0;
  } catch (const std::exception& e) {
    std::cout << nlohmann::json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << std::endl;
    return 1;
  }
}
