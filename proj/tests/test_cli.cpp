#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bgaug/cli.hpp"
#include "bgaug/errors.hpp"
#include "bgaug/experiment.hpp"
#include "bgaug/io_util.hpp"

using namespace bgaug;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string temp_dir(const char* name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir.string();
}

ExperimentConfig tiny_experiment() {
  ExperimentConfig cfg;
  cfg.synth.image_size = 16;
  cfg.synth.n_train = 48;
  cfg.synth.n_test = 24;
  cfg.synth.seed = 3;
  cfg.train.batch_size = 8;
  cfg.train.epochs = 1;
  cfg.train.queue_size = 16;
  cfg.train.seed = 3;
  cfg.train.encoder.c1 = 8;
  cfg.train.encoder.c2 = 8;
  cfg.train.encoder.c3 = 16;
  cfg.train.encoder.hidden_dim = 16;
  cfg.train.encoder.embed_dim = 8;
  cfg.train.aug.mode = AugMode::kBgSwaps;
  cfg.train.aug.p_pos = 0.3;
  cfg.train.aug.p_neg = 0.3;
  AttackConfig fgsm;
  fgsm.epsilon = 8.0 / 255.0;
  cfg.eval.attacks = {fgsm};
  cfg.eval.sweep_rotations = {10};
  cfg.eval.sweep_shears.clear();
  cfg.eval.sweep_translations.clear();
  cfg.eval.sweep_hflips.clear();
  return cfg;
}

std::string write_config(const ExperimentConfig& cfg, const char* name) {
  const std::string path =
      (fs::temp_directory_path() / name).string();
  write_file_text(path, experiment_config_to_json(cfg));
  return path;
}

std::vector<json> read_jsonl(const std::string& path) {
  const std::string text = read_file_text(path);
  std::vector<json> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    if (end > pos) out.push_back(json::parse(text.substr(pos, end - pos)));
    pos = end + 1;
  }
  return out;
}

bool same_bytes(const std::string& a, const std::string& b) {
  return read_file_bytes(a) == read_file_bytes(b);
}

}  // namespace

TEST_CASE("experiment config round trips and rejects unknown keys") {
  ExperimentConfig cfg = tiny_experiment();
  const std::string text = experiment_config_to_json(cfg);
  const ExperimentConfig back = experiment_config_from_json(text);
  CHECK(experiment_config_to_json(back) == text);
  CHECK(back.train.aug.mode == AugMode::kBgSwaps);
  CHECK(back.eval.attacks.size() == 1);
  CHECK(back.synth.n_train == 48);

  auto expect_named_error = [](const std::string& doc, const char* needle) {
    try {
      experiment_config_from_json(doc);
      FAIL_CHECK("expected ConfigError for ", needle);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect_named_error(R"({"bogus": 1})", "bogus");
  expect_named_error(R"({"eval": {"attacc": []}})", "attacc");
  expect_named_error(R"({"eval": {"attacks": [{"epsilons": 0.1}]}})",
                     "epsilons");
  expect_named_error(R"({"synth": {"n_trains": 5}})", "n_trains");
  expect_named_error(R"({"train": {"aug": {}}})", "aug");
  expect_named_error(R"({"eval": {"splits": ["Mixed-Up"]}})", "Mixed-Up");
  CHECK_THROWS_AS(experiment_config_from_json(R"({"schema_version": 2})"),
                  ConfigError);
  CHECK_THROWS_AS(experiment_config_from_json("not json"), ConfigError);

  // nonzero master seed pins both generators
  cfg.seed = 99;
  apply_master_seed(cfg);
  CHECK(cfg.synth.seed == 99);
  CHECK(cfg.train.seed == 99);
}

TEST_CASE("gen-data is deterministic in the seed") {
  const std::string cfg_path = write_config(tiny_experiment(), "cli_gen.json");
  const std::string a = temp_dir("bgaug_cli_gen_a");
  const std::string b = temp_dir("bgaug_cli_gen_b");
  const std::string c = temp_dir("bgaug_cli_gen_c");
  CHECK(cli_main({"gen-data", "--config", cfg_path, "--out", a, "--seed",
                  "7"}) == 0);
  CHECK(cli_main({"gen-data", "--config", cfg_path, "--out", b, "--seed",
                  "7"}) == 0);
  CHECK(cli_main({"gen-data", "--config", cfg_path, "--out", c, "--seed",
                  "8"}) == 0);
  for (const char* split : {"train", "test"}) {
    for (const char* file :
         {"manifest.json", "images.bin", "masks.bin", "tiled.bin"}) {
      const std::string rel = std::string("/") + split + "/" + file;
      CHECK(same_bytes(a + rel, b + rel));
    }
  }
  CHECK_FALSE(same_bytes(a + "/train/images.bin", c + "/train/images.bin"));
}

TEST_CASE("train writes a complete run directory") {
  ExperimentConfig cfg = tiny_experiment();
  const std::string cfg_path = write_config(cfg, "cli_train.json");
  const std::string out = temp_dir("bgaug_cli_train");
  CHECK(cli_main({"train", "--config", cfg_path, "--out", out}) == 0);
  CHECK(fs::exists(out + "/config.json"));
  CHECK(fs::exists(out + "/inputs.json"));
  CHECK(fs::exists(out + "/checkpoint/manifest.json"));
  CHECK(fs::exists(out + "/checkpoint/params.bin"));

  // one metrics record per optimizer step, drop-last batching
  const std::vector<json> steps = read_jsonl(out + "/metrics.jsonl");
  CHECK(int(steps.size()) ==
        cfg.synth.n_train / cfg.train.batch_size * cfg.train.epochs);
  for (const json& s : steps) {
    CHECK(s.contains("loss"));
    CHECK(s["neg_min"].get<int>() == cfg.train.queue_size + 1);
  }

  // the snapshot in the run dir re-parses to the effective config
  const ExperimentConfig snap =
      experiment_config_from_json(read_file_text(out + "/config.json"));
  CHECK(snap.train.seed == cfg.train.seed);
  const json inputs = json::parse(read_file_text(out + "/inputs.json"));
  CHECK(inputs.contains("content_hash"));

  // downstream evaluation runs off the same directory
  CHECK(cli_main({"probe", "--config", cfg_path, "--out", out}) == 0);
  CHECK(fs::exists(out + "/probe.json"));
  CHECK(cli_main({"eval-splits", "--config", cfg_path, "--out", out}) == 0);
  CHECK(read_jsonl(out + "/splits.jsonl").size() == 7);
  CHECK(cli_main({"attack", "--config", cfg_path, "--out", out}) == 0);
  const std::vector<json> attacks = read_jsonl(out + "/attacks.jsonl");
  CHECK(attacks.size() == 1);
  CHECK(attacks[0]["kind"] == "fgsm");
}

TEST_CASE("worker count changes neither checkpoints nor metrics") {
  ExperimentConfig cfg = tiny_experiment();
  const std::string cfg_path = write_config(cfg, "cli_workers.json");
  const std::string one = temp_dir("bgaug_cli_w1");
  const std::string four = temp_dir("bgaug_cli_w4");
  CHECK(cli_main({"train", "--config", cfg_path, "--out", one, "--workers",
                  "1"}) == 0);
  CHECK(cli_main({"train", "--config", cfg_path, "--out", four, "--workers",
                  "4"}) == 0);
  CHECK(same_bytes(one + "/metrics.jsonl", four + "/metrics.jsonl"));
  CHECK(same_bytes(one + "/checkpoint/params.bin",
                   four + "/checkpoint/params.bin"));
  CHECK(same_bytes(one + "/checkpoint/manifest.json",
                   four + "/checkpoint/manifest.json"));
  CHECK(same_bytes(one + "/config.json", four + "/config.json"));

  // the environment default kicks in when no flag is given
  const std::string env = temp_dir("bgaug_cli_wenv");
  setenv("BGAUG_WORKERS", "3", 1);
  CHECK(cli_main({"train", "--config", cfg_path, "--out", env}) == 0);
  CHECK(same_bytes(one + "/checkpoint/params.bin",
                   env + "/checkpoint/params.bin"));
  setenv("BGAUG_WORKERS", "banana", 1);
  CHECK(cli_main({"train", "--config", cfg_path, "--out", env}) == 2);
  unsetenv("BGAUG_WORKERS");
}

TEST_CASE("supervised objective trains and reports its own accuracy") {
  ExperimentConfig cfg = tiny_experiment();
  cfg.train.aug.mode = AugMode::kBgRm;
  const std::string cfg_path = write_config(cfg, "cli_sup.json");
  const std::string out = temp_dir("bgaug_cli_sup");
  CHECK(cli_main({"train", "--config", cfg_path, "--out", out, "--objective",
                  "supervised"}) == 0);
  CHECK(fs::exists(out + "/checkpoint/manifest.json"));
  // evaluation accepts the supervised checkpoint kind too
  CHECK(cli_main({"probe", "--config", cfg_path, "--out", out}) == 0);
  CHECK(cli_main({"train", "--config", cfg_path, "--out", out, "--objective",
                  "reinforcement"}) == 2);
}

TEST_CASE("ablation emits exactly five labeled rows") {
  ExperimentConfig cfg = tiny_experiment();
  const std::string cfg_path = write_config(cfg, "cli_abl.json");
  const std::string out = temp_dir("bgaug_cli_abl");
  CHECK(cli_main({"ablation", "--config", cfg_path, "--out", out}) == 0);
  const std::vector<json> rows = read_jsonl(out + "/ablation.jsonl");
  REQUIRE(rows.size() == 5);
  const char* labels[5] = {"a", "b", "c", "d", "e"};
  for (int i = 0; i < 5; ++i) {
    CHECK(rows[i]["row"] == labels[i]);
    CHECK(rows[i]["splits"].size() == 7);
  }
  CHECK(rows[0]["mode"] == "none");
  CHECK(rows[0]["p_neg"] == 0.0);
  CHECK(rows[3]["p_neg"] == 0.0);
  CHECK(rows[4]["mode"] == "bg_swaps");
  CHECK(rows[4]["p_neg"] == 0.3);
  for (const char* row : labels) {
    CHECK(fs::exists(out + "/rows/" + row + "/checkpoint/params.bin"));
  }
}

TEST_CASE("mask-noise sweep covers the configured grid") {
  ExperimentConfig cfg = tiny_experiment();
  cfg.eval.sweep_rotations = {0, 10};
  cfg.eval.sweep_translations = {0.1};
  const std::string cfg_path = write_config(cfg, "cli_sweep.json");
  const std::string out = temp_dir("bgaug_cli_sweep");
  CHECK(cli_main({"mask-noise-sweep", "--config", cfg_path, "--out", out}) ==
        0);
  const std::vector<json> points = read_jsonl(out + "/sweep.jsonl");
  REQUIRE(points.size() == 3);
  CHECK(points[0]["kind"] == "rotation");
  CHECK(points[0]["level"] == 0.0);
  CHECK(points[1]["level"] == 10.0);
  CHECK(points[2]["kind"] == "translation");
}

TEST_CASE("report aggregates run records and tolerates empty directories") {
  const std::string empty = temp_dir("bgaug_cli_report_empty");
  fs::create_directories(empty);
  CHECK(cli_main({"report", "--out", empty}) == 0);
  CHECK_FALSE(fs::exists(empty + "/report_runs.csv"));

  ExperimentConfig cfg = tiny_experiment();
  const std::string cfg_path = write_config(cfg, "cli_report.json");
  const std::string out = temp_dir("bgaug_cli_report");
  CHECK(cli_main({"train", "--config", cfg_path, "--out", out}) == 0);
  CHECK(cli_main({"eval-splits", "--config", cfg_path, "--out", out}) == 0);
  CHECK(cli_main({"attack", "--config", cfg_path, "--out", out}) == 0);
  CHECK(cli_main({"report", "--out", out}) == 0);
  CHECK(fs::exists(out + "/report_runs.csv"));
  CHECK(fs::exists(out + "/report_splits.csv"));
  CHECK(fs::exists(out + "/report_attacks.csv"));
  const std::string splits_csv = read_file_text(out + "/report_splits.csv");
  CHECK(splits_csv.find("Mixed-Rand") != std::string::npos);

  // aggregation is a pure function of the records
  CHECK(cli_main({"report", "--out", out}) == 0);
  const std::string again = read_file_text(out + "/report_splits.csv");
  CHECK(again == splits_csv);
}

TEST_CASE("cli maps error classes onto exit codes") {
  const std::string bad = (fs::temp_directory_path() / "cli_bad.json").string();
  write_file_text(bad, R"({"bogus_key": 1})");
  CHECK(cli_main({"train", "--config", bad, "--out",
                  temp_dir("bgaug_cli_err")}) == 2);
  const std::string cfg_path = write_config(tiny_experiment(),
                                            "cli_codes.json");
  CHECK(cli_main({"probe", "--config", cfg_path, "--out",
                  temp_dir("bgaug_cli_nockpt")}) == 4);
  CHECK(cli_main({"train"}) == 2);               // missing required --config
  CHECK(cli_main({"no-such-command"}) == 2);
  CHECK(cli_main({"train", "--config", "/nonexistent/path.json", "--out",
                  temp_dir("bgaug_cli_nocfg")}) == 4);
}
