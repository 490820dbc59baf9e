#include "bgaug/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <string>

#include <CLI11.hpp>

#include "bgaug/errors.hpp"
#include "bgaug/experiment.hpp"
#include "bgaug/io_util.hpp"

namespace bgaug {

namespace {

int env_workers() {
  const char* v = std::getenv("BGAUG_WORKERS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) {
    throw ConfigError(std::string("BGAUG_WORKERS: invalid value '") + v +
                      "'");
  }
  return static_cast<int>(n);
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int workers = 0;  // 0 = unset
};

void add_common(CLI::App* cmd, CommonArgs& a, bool config_required) {
  auto* c = cmd->add_option("--config", a.config_path,
                            "experiment config JSON path");
  if (config_required) c->required();
  cmd->add_option("--out", a.out_dir, "output directory");
  cmd->add_option("--seed", a.seed, "master seed override (nonzero)")
      ->each([&a](const std::string&) { a.seed_given = true; });
  cmd->add_option("--workers", a.workers, "worker thread count");
}

// resolved config + effective output dir + worker count
struct LoadedRun {
  ExperimentConfig cfg;
  std::string out;
  int workers = 1;
};

LoadedRun load_run(const CommonArgs& a) {
  LoadedRun run;
  run.cfg = experiment_config_from_json(read_file_text(a.config_path));
  if (a.seed_given) run.cfg.seed = a.seed;
  apply_master_seed(run.cfg);
  run.out = a.out_dir.empty() ? run.cfg.output_dir : a.out_dir;
  const int env = env_workers();
  run.workers = a.workers > 0 ? a.workers : (env > 0 ? env : 1);
  if (run.workers < 1) throw ConfigError("--workers: must be >= 1");
  validate(run.cfg);
  return run;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"background-augmentation experiment driver"};
  app.require_subcommand(1);

  CommonArgs gen_args, cache_args, train_args, probe_args, splits_args,
      attack_args, ablation_args, sweep_args;
  std::string objective = "contrastive";
  std::string report_dir;

  add_common(app.add_subcommand("gen-data",
                                "generate the synthetic dataset to disk"),
             gen_args, true);
  add_common(app.add_subcommand(
                 "build-cache", "build the mask/tiled-background cache"),
             cache_args, true);
  auto* train_cmd =
      app.add_subcommand("train", "train an encoder and write a run dir");
  add_common(train_cmd, train_args, true);
  train_cmd->add_option("--objective", objective, "contrastive|supervised")
      ->check(CLI::IsMember({"contrastive", "supervised"}));
  add_common(app.add_subcommand("probe",
                                "fit the linear probe to a trained run"),
             probe_args, true);
  add_common(app.add_subcommand("eval-splits",
                                "evaluate challenge-split accuracy"),
             splits_args, true);
  add_common(app.add_subcommand("attack", "run the configured attacks"),
             attack_args, true);
  add_common(app.add_subcommand("ablation",
                                "train and evaluate component rows a-e"),
             ablation_args, true);
  add_common(app.add_subcommand("mask-noise-sweep",
                                "train across the mask-corruption grid"),
             sweep_args, true);
  auto* report_cmd = app.add_subcommand(
      "report", "aggregate JSONL run records into CSV tables");
  report_cmd->add_option("--out", report_dir, "directory holding run records")
      ->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }

  try {
    if (app.got_subcommand("gen-data")) {
      const LoadedRun run = load_run(gen_args);
      run_gen_data(run.cfg, run.out);
    } else if (app.got_subcommand("build-cache")) {
      const LoadedRun run = load_run(cache_args);
      run_build_cache(run.cfg, run.out, run.workers);
    } else if (app.got_subcommand("train")) {
      const LoadedRun run = load_run(train_args);
      const TrainOutcome outcome =
          run_train(run.cfg, run.out, run.workers, objective == "supervised");
      std::printf("trained: %s (final loss %.6f)\n",
                  outcome.checkpoint_dir.c_str(), outcome.final_loss);
      if (outcome.clean_test_accuracy >= 0) {
        std::printf("clean test accuracy: %.4f\n",
                    outcome.clean_test_accuracy);
      }
    } else if (app.got_subcommand("probe")) {
      const LoadedRun run = load_run(probe_args);
      const ProbeResult probe = run_probe(run.cfg, run.out);
      std::printf("probe: converged=%d iters=%d loss=%.6f\n",
                  probe.converged ? 1 : 0, probe.iters, probe.final_loss);
    } else if (app.got_subcommand("eval-splits")) {
      const LoadedRun run = load_run(splits_args);
      for (const SplitAccuracy& a : run_eval_splits(run.cfg, run.out)) {
        std::printf("%-12s %.4f (n=%d)\n", a.name.c_str(), a.accuracy, a.n);
      }
    } else if (app.got_subcommand("attack")) {
      const LoadedRun run = load_run(attack_args);
      for (const AttackOutcome& o : run_attack(run.cfg, run.out)) {
        std::printf(
            "%s eps=%.6f clean=%.4f attacked=%.4f\n",
            o.attack.kind == AttackConfig::Kind::kFgsm ? "fgsm" : "pgd",
            o.attack.epsilon, o.result.clean_accuracy,
            o.result.attacked_accuracy);
      }
    } else if (app.got_subcommand("ablation")) {
      const LoadedRun run = load_run(ablation_args);
      for (const AblationRow& r : run_ablation(run.cfg, run.out,
                                               run.workers)) {
        std::printf("row %s: clean_test=%.4f\n", r.row.c_str(), r.clean_test);
      }
    } else if (app.got_subcommand("mask-noise-sweep")) {
      const LoadedRun run = load_run(sweep_args);
      run_mask_noise_sweep(run.cfg, run.out, run.workers);
    } else if (app.got_subcommand("report")) {
      return run_report(report_dir);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const IntegrityError& e) {
    std::fprintf(stderr, "integrity error: %s\n", e.what());
    return 4;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}

}  // namespace bgaug
