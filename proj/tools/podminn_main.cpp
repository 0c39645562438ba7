// Pipeline driver: every stage is a subcommand reading and writing the
// documented files under the config's out_dir, so runs are resumable and
// reruns with the same config and seed reproduce every artifact bitwise.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <string>

#include <CLI11.hpp>

#include "podminn/io.hpp"
#include "podminn/pipeline.hpp"

namespace {

struct StageArgs {
  std::string config_path;
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"POD-MINN pipeline: parametrized Poisson benchmarks, POD basis "
               "extraction, mesh-informed coefficient regression, closure "
               "correction and error evaluation"};
  app.require_subcommand(1);

  struct Stage {
    const char* name;
    const char* description;
    void (*run)(const podminn::RunConfig&);
  };
  const Stage stages[] = {
      {"snapshots", "sample parameters and solve the full-order model", podminn::cmd_snapshots},
      {"pod", "compute the reduced basis from the training columns", podminn::cmd_pod},
      {"train-rb", "train the coefficient network per basis size", podminn::cmd_train_rb},
      {"train-closure", "train the additive closure network per basis size",
       podminn::cmd_train_closure},
      {"eval", "write the test-set error table", podminn::cmd_eval},
      {"curves", "write the per-n_rb sweep table with singular values", podminn::cmd_curves},
  };

  StageArgs args;
  for (const Stage& stage : stages) {
    CLI::App* sub = app.add_subcommand(stage.name, stage.description);
    sub->add_option("--config", args.config_path, "path to the key=value run config")
        ->required();
    sub->add_option("--seed", args.seed_override, "override the config seed");
    sub->callback([&args, sub, run = stage.run]() {
      args.has_seed_override = sub->count("--seed") > 0;
      podminn::RunConfig cfg = podminn::parse_run_config(args.config_path);
      if (args.has_seed_override) cfg.seed = args.seed_override;
      run(cfg);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "podminn: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
