#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bgaug/evalkit.hpp"
#include "bgaug/learner.hpp"
#include "bgaug/synthgen.hpp"

namespace bgaug {

// What to measure after training: which challenge splits, which attacks,
// probe fitting parameters, and the mask-corruption grid for the sweep.
struct EvalConfig {
  std::vector<std::string> splits{"Original",   "Only-FG",    "Only-BG-B",
                                  "Only-BG-T",  "Mixed-Same", "Mixed-Rand",
                                  "Mixed-Next"};
  std::vector<AttackConfig> attacks;  // default set by default_attacks()
  ProbeConfig probe;
  std::vector<double> sweep_rotations{0, 5, 10, 15, 20, 25};  // degrees
  std::vector<double> sweep_shears{0, 5, 10, 15, 20, 25};     // degrees
  std::vector<double> sweep_translations{0, 0.05, 0.10, 0.15,
                                         0.20};  // of fg size
  std::vector<double> sweep_hflips{0.5};         // probability
};

// fgsm at epsilon = {2,4,8,16}/255
std::vector<AttackConfig> default_attacks();

// One experiment = one JSON document. A nonzero master seed overrides both
// synth.seed and train.seed so a single flag pins the whole pipeline.
struct ExperimentConfig {
  int schema_version = 1;
  SynthConfig synth;
  TrainConfig train;  // includes aug + encoder
  EvalConfig eval;
  std::string output_dir = "runs";
  std::uint64_t seed = 0;
};

// Serialized layout: schema_version, synth, aug, train (without aug), eval,
// output_dir, seed. Unknown keys anywhere are ConfigError, named.
std::string experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const std::string& text);

void validate(const ExperimentConfig& cfg);

// pushes a nonzero cfg.seed into synth.seed and train.seed
void apply_master_seed(ExperimentConfig& cfg);

// Every run directory gets config.json (effective config snapshot) and
// inputs.json (seed plus content hash of the config and the generated
// dataset bytes), enough to re-execute bit-identically.
void write_run_preamble(const std::string& run_dir,
                        const ExperimentConfig& cfg,
                        const GeneratedData& data);

// generates the dataset and saves train/ and test/ under out_dir
void run_gen_data(const ExperimentConfig& cfg, const std::string& out_dir);

// builds the mask/tiled-background cache for the train split under
// out_dir/cache
void run_build_cache(const ExperimentConfig& cfg, const std::string& out_dir,
                     int workers);

struct TrainOutcome {
  std::string checkpoint_dir;
  std::string metrics_path;
  double final_loss = 0.0;            // mean loss over the last epoch
  double clean_test_accuracy = -1.0;  // supervised objective only
};

// trains (contrastive or supervised), writing metrics.jsonl, checkpoint/,
// config.json and inputs.json into run_dir
TrainOutcome run_train(const ExperimentConfig& cfg, const std::string& run_dir,
                       int workers, bool supervised);

// fits the linear probe to the checkpoint in run_dir; writes probe.json
ProbeResult run_probe(const ExperimentConfig& cfg, const std::string& run_dir);

// evaluates the configured challenge splits; writes splits.jsonl/splits.csv
std::vector<SplitAccuracy> run_eval_splits(const ExperimentConfig& cfg,
                                           const std::string& run_dir);

struct AttackOutcome {
  AttackConfig attack;
  RobustResult result;
};

// runs every configured attack on the test set; writes
// attacks.jsonl/attacks.csv
std::vector<AttackOutcome> run_attack(const ExperimentConfig& cfg,
                                      const std::string& run_dir);

// Component ablation from one config: five rows trained end to end.
//   a: no background augmentation
//   b: augmentation in the query view only
//   c: augmentation in the key view only
//   d: augmentation in both views
//   e: both views plus matched negatives (the configured p_neg)
// Rows a-d force p_neg = 0. Each row trains, probes and evaluates splits;
// out_dir/ablation.jsonl holds exactly one record per row.
struct AblationRow {
  std::string row;  // "a".."e"
  TrainOutcome train;
  double clean_test = 0.0;
  std::vector<SplitAccuracy> splits;
};
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg,
                                      const std::string& out_dir,
                                      int workers);

// Trains once per corruption grid point (rotation/shear/translation/hflip
// levels from EvalConfig) and records split accuracies per point in
// out_dir/sweep.jsonl.
void run_mask_noise_sweep(const ExperimentConfig& cfg,
                          const std::string& out_dir, int workers);

// Aggregates every *.jsonl record under dir (recursively, sorted paths)
// into CSV tables next to them: report_runs.csv, report_splits.csv,
// report_attacks.csv, report_ablation.csv, report_sweep.csv. Emits only
// tables that have records; warns and returns 0 when there are none.
int run_report(const std::string& dir);

}  // namespace bgaug
