#include "bgaug/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "bgaug/cachestore.hpp"
#include "bgaug/dataset.hpp"
#include "bgaug/errors.hpp"
#include "bgaug/io_util.hpp"

namespace bgaug {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kSplitNames[7] = {"Original",   "Only-FG",    "Only-BG-B",
                              "Only-BG-T",  "Mixed-Same", "Mixed-Rand",
                              "Mixed-Next"};

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) {
      throw ConfigError(std::string(where) + ": unknown key '" + it.key() +
                        "'");
    }
  }
}

json attack_to_json_obj(const AttackConfig& a) {
  return json{{"kind", a.kind == AttackConfig::Kind::kFgsm ? "fgsm" : "pgd"},
              {"epsilon", a.epsilon},
              {"pgd_steps", a.pgd_steps},
              {"pgd_rel_step", a.pgd_rel_step}};
}

AttackConfig attack_from_json_obj(const json& j) {
  reject_unknown(j, {"kind", "epsilon", "pgd_steps", "pgd_rel_step"},
                 "eval.attacks");
  AttackConfig a;
  const std::string kind = j.value("kind", "fgsm");
  if (kind == "fgsm") {
    a.kind = AttackConfig::Kind::kFgsm;
  } else if (kind == "pgd") {
    a.kind = AttackConfig::Kind::kPgd;
  } else {
    throw ConfigError("eval.attacks: unknown kind '" + kind + "'");
  }
  a.epsilon = j.value("epsilon", a.epsilon);
  a.pgd_steps = j.value("pgd_steps", a.pgd_steps);
  a.pgd_rel_step = j.value("pgd_rel_step", a.pgd_rel_step);
  return a;
}

json eval_to_json_obj(const EvalConfig& e) {
  json attacks = json::array();
  for (const AttackConfig& a : e.attacks) attacks.push_back(attack_to_json_obj(a));
  return json{{"splits", e.splits},
              {"attacks", attacks},
              {"probe", json{{"lr", e.probe.lr},
                             {"max_iters", e.probe.max_iters},
                             {"grad_tol", e.probe.grad_tol}}},
              {"sweep_rotations", e.sweep_rotations},
              {"sweep_shears", e.sweep_shears},
              {"sweep_translations", e.sweep_translations},
              {"sweep_hflips", e.sweep_hflips}};
}

EvalConfig eval_from_json_obj(const json& j) {
  reject_unknown(j,
                 {"splits", "attacks", "probe", "sweep_rotations",
                  "sweep_shears", "sweep_translations", "sweep_hflips"},
                 "eval");
  EvalConfig e;
  if (j.contains("splits")) {
    e.splits = j["splits"].get<std::vector<std::string>>();
  }
  if (j.contains("attacks")) {
    e.attacks.clear();
    for (const json& a : j["attacks"]) {
      e.attacks.push_back(attack_from_json_obj(a));
    }
  } else {
    e.attacks = default_attacks();
  }
  if (j.contains("probe")) {
    const json& p = j["probe"];
    reject_unknown(p, {"lr", "max_iters", "grad_tol"}, "eval.probe");
    e.probe.lr = p.value("lr", e.probe.lr);
    e.probe.max_iters = p.value("max_iters", e.probe.max_iters);
    e.probe.grad_tol = p.value("grad_tol", e.probe.grad_tol);
  }
  if (j.contains("sweep_rotations")) {
    e.sweep_rotations = j["sweep_rotations"].get<std::vector<double>>();
  }
  if (j.contains("sweep_shears")) {
    e.sweep_shears = j["sweep_shears"].get<std::vector<double>>();
  }
  if (j.contains("sweep_translations")) {
    e.sweep_translations = j["sweep_translations"].get<std::vector<double>>();
  }
  if (j.contains("sweep_hflips")) {
    e.sweep_hflips = j["sweep_hflips"].get<std::vector<double>>();
  }
  return e;
}

std::string num(double v) { return json(v).dump(); }

void append_line(std::string& buf, const json& j) {
  buf += j.dump();
  buf += '\n';
}

double supervised_clean_accuracy(const SupervisedModel& model,
                                 const Dataset& data) {
  if (data.samples.empty()) return 0.0;
  const int dim = model.enc.cfg.embed_dim;
  int hits = 0;
  for (const Sample& s : data.samples) {
    const std::vector<float> emb = encode(model.enc, s.image);
    int arg = 0;
    float best = -1e30f;
    for (int c = 0; c < model.n_classes; ++c) {
      float acc = model.head_b[c];
      for (int d = 0; d < dim; ++d) {
        acc += model.head_w[static_cast<std::size_t>(c) * dim + d] * emb[d];
      }
      if (acc > best) {
        best = acc;
        arg = c;
      }
    }
    if (arg == s.fg_class) ++hits;
  }
  return static_cast<double>(hits) / data.samples.size();
}

// accepts either checkpoint kind; evaluation only needs the encoder
Encoder<float> load_eval_encoder(const std::string& run_dir) {
  const std::string dir = run_dir + "/checkpoint";
  try {
    return load_checkpoint(dir).query;
  } catch (const IntegrityError& first) {
    try {
      return load_supervised_checkpoint(dir).enc;
    } catch (const IntegrityError&) {
      throw IntegrityError(std::string("no usable checkpoint: ") +
                           first.what());
    }
  }
}

TrainOutcome train_on_data(const ExperimentConfig& cfg,
                           const GeneratedData& data,
                           const std::string& run_dir, int workers,
                           bool supervised) {
  TrainConfig tc = cfg.train;
  tc.workers = workers;
  write_run_preamble(run_dir, cfg, data);

  std::string lines;
  std::vector<StepStats> log;
  std::uint64_t final_epoch = 0;
  TrainOutcome out;
  out.checkpoint_dir = run_dir + "/checkpoint";
  out.metrics_path = run_dir + "/metrics.jsonl";

  if (supervised) {
    SupervisedRun run = train_supervised(data.train, tc);
    log = run.log;
    final_epoch = tc.epochs;
    save_supervised_checkpoint(run.model, tc, final_epoch,
                               out.checkpoint_dir);
    out.clean_test_accuracy = supervised_clean_accuracy(run.model, data.test);
  } else {
    ContrastiveRun run = train_contrastive(data.train, tc);
    log = run.log;
    final_epoch = tc.epochs;
    save_checkpoint(run.state, tc, final_epoch, out.checkpoint_dir);
  }

  double last_sum = 0.0;
  int last_n = 0;
  for (const StepStats& s : log) {
    append_line(lines, json{{"step", s.step},
                            {"epoch", s.epoch},
                            {"loss", s.loss},
                            {"contrast_acc", s.contrast_acc},
                            {"batch", s.batch},
                            {"neg_min", s.neg_min},
                            {"neg_max", s.neg_max},
                            {"matched_used", s.matched_used},
                            {"param_norm", s.param_norm}});
    if (!log.empty() && s.epoch == log.back().epoch) {
      last_sum += s.loss;
      ++last_n;
    }
  }
  write_file_text(out.metrics_path, lines);
  out.final_loss = last_n ? last_sum / last_n : 0.0;
  return out;
}

ProbeResult fit_probe(const ExperimentConfig& cfg, const Encoder<float>& enc,
                      const GeneratedData& data) {
  return train_probe_on(enc, data.train, cfg.eval.probe);
}

std::vector<SplitAccuracy> eval_configured_splits(const ExperimentConfig& cfg,
                                                  const Encoder<float>& enc,
                                                  const ProbeResult& probe,
                                                  const GeneratedData& data) {
  const std::vector<ChallengeSplit> all =
      gen_challenge_splits(data.test, cfg.synth.seed);
  std::vector<ChallengeSplit> wanted;
  for (const ChallengeSplit& s : all) {
    if (std::find(cfg.eval.splits.begin(), cfg.eval.splits.end(), s.name) !=
        cfg.eval.splits.end()) {
      wanted.push_back(s);
    }
  }
  return eval_splits(enc, probe, wanted);
}

json splits_to_json(const std::vector<SplitAccuracy>& accs) {
  json m = json::object();
  for (const SplitAccuracy& a : accs) m[a.name] = a.accuracy;
  return m;
}

}  // namespace

std::vector<AttackConfig> default_attacks() {
  std::vector<AttackConfig> out;
  for (double k : {2.0, 4.0, 8.0, 16.0}) {
    AttackConfig a;
    a.kind = AttackConfig::Kind::kFgsm;
    a.epsilon = k / 255.0;
    out.push_back(a);
  }
  return out;
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  json train = json::parse(train_config_to_json(cfg.train));
  const json aug = train["aug"];
  train.erase("aug");
  const json doc{{"schema_version", cfg.schema_version},
                 {"synth", json::parse(synth_config_to_json(cfg.synth))},
                 {"aug", aug},
                 {"train", train},
                 {"eval", eval_to_json_obj(cfg.eval)},
                 {"output_dir", cfg.output_dir},
                 {"seed", cfg.seed}};
  return doc.dump(2);
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: invalid JSON: ") +
                      e.what());
  }
  reject_unknown(j,
                 {"schema_version", "synth", "aug", "train", "eval",
                  "output_dir", "seed"},
                 "experiment");
  ExperimentConfig cfg;
  cfg.schema_version = j.value("schema_version", 1);
  if (cfg.schema_version != 1) {
    throw ConfigError("experiment config: unsupported schema_version " +
                      std::to_string(cfg.schema_version));
  }
  if (j.contains("synth")) {
    cfg.synth = synth_config_from_json(j["synth"].dump());
  }
  if (j.contains("train")) {
    if (j["train"].contains("aug")) {
      throw ConfigError(
          "experiment config: background augmentation belongs under the "
          "top-level 'aug' key, not train.aug");
    }
    cfg.train = train_config_from_json(j["train"].dump());
  }
  if (j.contains("aug")) {
    cfg.train.aug = aug_config_from_json(j["aug"].dump());
  }
  if (j.contains("eval")) {
    cfg.eval = eval_from_json_obj(j["eval"]);
  } else {
    cfg.eval.attacks = default_attacks();
  }
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  cfg.seed = j.value("seed", cfg.seed);
  validate(cfg);
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.schema_version != 1) {
    throw ConfigError("experiment config: unsupported schema_version");
  }
  if (cfg.synth.n_fg_classes < 1 || cfg.synth.n_bg_classes < 1 ||
      cfg.synth.image_size < 8 || cfg.synth.n_train < 0 ||
      cfg.synth.n_test < 0 || cfg.synth.correlation < 0.0 ||
      cfg.synth.correlation > 1.0) {
    throw ConfigError("experiment config: synth values out of range");
  }
  validate(cfg.train);
  for (const AttackConfig& a : cfg.eval.attacks) validate(a);
  for (const std::string& s : cfg.eval.splits) {
    bool ok = false;
    for (const char* k : kSplitNames) ok = ok || s == k;
    if (!ok) throw ConfigError("eval.splits: unknown split '" + s + "'");
  }
  if (cfg.eval.probe.lr <= 0 || cfg.eval.probe.max_iters < 0 ||
      cfg.eval.probe.grad_tol <= 0) {
    throw ConfigError("eval.probe: values out of range");
  }
  for (double v : cfg.eval.sweep_rotations) {
    if (v < 0) throw ConfigError("eval.sweep_rotations: negative level");
  }
  for (double v : cfg.eval.sweep_shears) {
    if (v < 0) throw ConfigError("eval.sweep_shears: negative level");
  }
  for (double v : cfg.eval.sweep_translations) {
    if (v < 0 || v > 1) {
      throw ConfigError("eval.sweep_translations: level outside [0,1]");
    }
  }
  for (double v : cfg.eval.sweep_hflips) {
    if (v < 0 || v > 1) {
      throw ConfigError("eval.sweep_hflips: level outside [0,1]");
    }
  }
}

void apply_master_seed(ExperimentConfig& cfg) {
  if (cfg.seed == 0) return;
  cfg.synth.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
}

void write_run_preamble(const std::string& run_dir,
                        const ExperimentConfig& cfg,
                        const GeneratedData& data) {
  fs::create_directories(run_dir);
  const std::string snapshot = experiment_config_to_json(cfg);
  write_file_text(run_dir + "/config.json", snapshot);
  std::uint64_t h = fnv1a64(snapshot.data(), snapshot.size());
  const std::uint64_t ht = dataset_hash(data.train);
  const std::uint64_t he = dataset_hash(data.test);
  h = fnv1a64(&ht, sizeof ht, h);
  h = fnv1a64(&he, sizeof he, h);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(h));
  const json inputs{{"seed", cfg.train.seed},
                    {"synth_seed", cfg.synth.seed},
                    {"content_hash", hex}};
  write_file_text(run_dir + "/inputs.json", inputs.dump(2) + "\n");
}

void run_gen_data(const ExperimentConfig& cfg, const std::string& out_dir) {
  const GeneratedData data = gen_dataset(cfg.synth);
  fs::create_directories(out_dir);
  const std::string sj = synth_config_to_json(cfg.synth);
  save_dataset(data.train, out_dir + "/train", sj);
  save_dataset(data.test, out_dir + "/test", sj);
}

void run_build_cache(const ExperimentConfig& cfg, const std::string& out_dir,
                     int workers) {
  const GeneratedData data = gen_dataset(cfg.synth);
  fs::create_directories(out_dir);
  build_cache(data.train, out_dir + "/cache", workers);
}

TrainOutcome run_train(const ExperimentConfig& cfg, const std::string& run_dir,
                       int workers, bool supervised) {
  const GeneratedData data = gen_dataset(cfg.synth);
  return train_on_data(cfg, data, run_dir, workers, supervised);
}

ProbeResult run_probe(const ExperimentConfig& cfg,
                      const std::string& run_dir) {
  const Encoder<float> enc = load_eval_encoder(run_dir);
  const GeneratedData data = gen_dataset(cfg.synth);
  const ProbeResult probe = fit_probe(cfg, enc, data);
  const json doc{{"dim", probe.dim},
                 {"n_classes", probe.n_classes},
                 {"converged", probe.converged},
                 {"iters", probe.iters},
                 {"final_loss", probe.final_loss},
                 {"clean_train_accuracy",
                  dataset_accuracy(enc, probe, data.train)},
                 {"clean_test_accuracy",
                  dataset_accuracy(enc, probe, data.test)},
                 {"w", probe.w},
                 {"b", probe.b}};
  write_file_text(run_dir + "/probe.json", doc.dump(2) + "\n");
  return probe;
}

std::vector<SplitAccuracy> run_eval_splits(const ExperimentConfig& cfg,
                                           const std::string& run_dir) {
  const Encoder<float> enc = load_eval_encoder(run_dir);
  const GeneratedData data = gen_dataset(cfg.synth);
  const ProbeResult probe = fit_probe(cfg, enc, data);
  const std::vector<SplitAccuracy> accs =
      eval_configured_splits(cfg, enc, probe, data);

  std::string lines;
  std::string csv = "split,accuracy,n\n";
  for (const SplitAccuracy& a : accs) {
    append_line(lines,
                json{{"split", a.name}, {"accuracy", a.accuracy}, {"n", a.n}});
    csv += a.name + "," + num(a.accuracy) + "," + std::to_string(a.n) + "\n";
  }
  write_file_text(run_dir + "/splits.jsonl", lines);
  write_file_text(run_dir + "/splits.csv", csv);
  return accs;
}

std::vector<AttackOutcome> run_attack(const ExperimentConfig& cfg,
                                      const std::string& run_dir) {
  const Encoder<float> enc = load_eval_encoder(run_dir);
  const GeneratedData data = gen_dataset(cfg.synth);
  const ProbeResult probe = fit_probe(cfg, enc, data);
  std::vector<Image> images;
  std::vector<int> labels;
  for (const Sample& s : data.test.samples) {
    images.push_back(s.image);
    labels.push_back(s.fg_class);
  }

  std::vector<AttackOutcome> out;
  std::string lines;
  std::string csv =
      "kind,epsilon,clean_accuracy,attacked_accuracy,clean_mean_loss,"
      "attacked_mean_loss,n\n";
  for (const AttackConfig& a : cfg.eval.attacks) {
    const RobustResult r = robust_accuracy(enc, probe, images, labels, a);
    out.push_back({a, r});
    const char* kind = a.kind == AttackConfig::Kind::kFgsm ? "fgsm" : "pgd";
    append_line(lines, json{{"kind", kind},
                            {"epsilon", a.epsilon},
                            {"pgd_steps", a.pgd_steps},
                            {"pgd_rel_step", a.pgd_rel_step},
                            {"clean_accuracy", r.clean_accuracy},
                            {"attacked_accuracy", r.attacked_accuracy},
                            {"clean_mean_loss", r.clean_mean_loss},
                            {"attacked_mean_loss", r.attacked_mean_loss},
                            {"n", r.n}});
    csv += std::string(kind) + "," + num(a.epsilon) + "," +
           num(r.clean_accuracy) + "," + num(r.attacked_accuracy) + "," +
           num(r.clean_mean_loss) + "," + num(r.attacked_mean_loss) + "," +
           std::to_string(r.n) + "\n";
  }
  write_file_text(run_dir + "/attacks.jsonl", lines);
  write_file_text(run_dir + "/attacks.csv", csv);
  return out;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg,
                                      const std::string& out_dir,
                                      int workers) {
  const GeneratedData data = gen_dataset(cfg.synth);
  write_run_preamble(out_dir, cfg, data);

  struct RowSpec {
    const char* label;
    bool none;
    bool in_query;
    bool in_key;
    bool matched;
  };
  const RowSpec rows[5] = {{"a", true, false, false, false},
                           {"b", false, true, false, false},
                           {"c", false, false, true, false},
                           {"d", false, true, true, false},
                           {"e", false, true, true, true}};

  std::vector<AblationRow> out;
  std::string lines;
  for (const RowSpec& spec : rows) {
    ExperimentConfig row_cfg = cfg;
    AugConfig& aug = row_cfg.train.aug;
    if (spec.none) aug.mode = AugMode::kNone;
    aug.aug_in_query = spec.in_query;
    aug.aug_in_key = spec.in_key;
    if (!spec.matched) aug.p_neg = 0.0;

    const std::string row_dir =
        out_dir + "/rows/" + spec.label;
    AblationRow row;
    row.row = spec.label;
    row.train = train_on_data(row_cfg, data, row_dir, workers, false);

    const Encoder<float> enc = load_eval_encoder(row_dir);
    const ProbeResult probe = fit_probe(row_cfg, enc, data);
    row.clean_test = dataset_accuracy(enc, probe, data.test);
    row.splits = eval_configured_splits(row_cfg, enc, probe, data);
    out.push_back(row);

    const json mode = json::parse(aug_config_to_json(aug))["mode"];
    append_line(lines,
                json{{"row", spec.label},
                     {"mode", mode},
                     {"aug_in_query", aug.aug_in_query},
                     {"aug_in_key", aug.aug_in_key},
                     {"p_neg", aug.p_neg},
                     {"final_loss", row.train.final_loss},
                     {"clean_test", row.clean_test},
                     {"splits", splits_to_json(row.splits)}});
  }
  write_file_text(out_dir + "/ablation.jsonl", lines);
  return out;
}

void run_mask_noise_sweep(const ExperimentConfig& cfg,
                          const std::string& out_dir, int workers) {
  const GeneratedData data = gen_dataset(cfg.synth);
  write_run_preamble(out_dir, cfg, data);

  struct Point {
    const char* kind;
    double level;
  };
  std::vector<Point> grid;
  for (double v : cfg.eval.sweep_rotations) grid.push_back({"rotation", v});
  for (double v : cfg.eval.sweep_shears) grid.push_back({"shear", v});
  for (double v : cfg.eval.sweep_translations) {
    grid.push_back({"translation", v});
  }
  for (double v : cfg.eval.sweep_hflips) grid.push_back({"hflip", v});

  std::string lines;
  for (const Point& p : grid) {
    ExperimentConfig point_cfg = cfg;
    MaskCorruption c{};
    if (std::string(p.kind) == "rotation") c.max_rotation_deg = p.level;
    if (std::string(p.kind) == "shear") c.max_shear_deg = p.level;
    if (std::string(p.kind) == "translation") c.max_translation = p.level;
    if (std::string(p.kind) == "hflip") c.hflip_prob = p.level;
    point_cfg.train.aug.corruption = c;

    const std::string point_dir =
        out_dir + "/points/" + p.kind + "_" + num(p.level);
    const TrainOutcome trained =
        train_on_data(point_cfg, data, point_dir, workers, false);
    const Encoder<float> enc = load_eval_encoder(point_dir);
    const ProbeResult probe = fit_probe(point_cfg, enc, data);
    const std::vector<SplitAccuracy> accs =
        eval_configured_splits(point_cfg, enc, probe, data);

    append_line(lines, json{{"kind", p.kind},
                            {"level", p.level},
                            {"final_loss", trained.final_loss},
                            {"clean_test",
                             dataset_accuracy(enc, probe, data.test)},
                            {"splits", splits_to_json(accs)}});
  }
  write_file_text(out_dir + "/sweep.jsonl", lines);
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string split_columns_header() {
  std::string h;
  for (const char* k : kSplitNames) h += std::string(",") + k;
  return h;
}

std::string split_columns_row(const json& splits) {
  std::string r;
  for (const char* k : kSplitNames) {
    r += ",";
    if (splits.is_object() && splits.contains(k)) {
      r += json(splits[k]).dump();
    }
  }
  return r;
}

}  // namespace

int run_report(const std::string& dir) {
  if (!fs::exists(dir)) {
    std::fprintf(stderr, "warning: no run records under %s\n", dir.c_str());
    return 0;
  }
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());

  std::string runs_csv = "file,steps,final_epoch,mean_last_epoch_loss\n";
  std::string splits_csv = "file,split,accuracy,n\n";
  std::string attacks_csv =
      "file,kind,epsilon,clean_accuracy,attacked_accuracy,clean_mean_loss,"
      "attacked_mean_loss,n\n";
  std::string ablation_csv =
      "file,row,mode,aug_in_query,aug_in_key,p_neg,clean_test" +
      split_columns_header() + "\n";
  std::string sweep_csv =
      "file,kind,level,clean_test" + split_columns_header() + "\n";
  int n_runs = 0, n_splits = 0, n_attacks = 0, n_ablation = 0, n_sweep = 0;

  for (const std::string& path : files) {
    const std::string rel = fs::relative(path, dir).string();
    const std::string text = read_file_text(path);
    std::size_t pos = 0;
    // per-file training-step aggregation
    std::uint64_t last_epoch = 0;
    double epoch_sum = 0.0;
    int epoch_n = 0, steps = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      const std::string line = text.substr(pos, end - pos);
      pos = end + 1;
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded()) {
        throw IntegrityError("report: malformed JSONL line in " + path);
      }
      if (j.contains("row")) {
        ablation_csv += csv_escape(rel) + "," +
                        j.value("row", std::string()) + "," +
                        j.value("mode", std::string()) + "," +
                        json(j.value("aug_in_query", false)).dump() + "," +
                        json(j.value("aug_in_key", false)).dump() + "," +
                        json(j.value("p_neg", 0.0)).dump() + "," +
                        json(j.value("clean_test", 0.0)).dump() +
                        split_columns_row(j.value("splits", json())) + "\n";
        ++n_ablation;
      } else if (j.contains("level")) {
        sweep_csv += csv_escape(rel) + "," +
                     j.value("kind", std::string()) + "," +
                     json(j.value("level", 0.0)).dump() + "," +
                     json(j.value("clean_test", 0.0)).dump() +
                     split_columns_row(j.value("splits", json())) + "\n";
        ++n_sweep;
      } else if (j.contains("epsilon")) {
        attacks_csv += csv_escape(rel) + "," +
                       j.value("kind", std::string()) + "," +
                       json(j.value("epsilon", 0.0)).dump() + "," +
                       json(j.value("clean_accuracy", 0.0)).dump() + "," +
                       json(j.value("attacked_accuracy", 0.0)).dump() + "," +
                       json(j.value("clean_mean_loss", 0.0)).dump() + "," +
                       json(j.value("attacked_mean_loss", 0.0)).dump() + "," +
                       std::to_string(j.value("n", 0)) + "\n";
        ++n_attacks;
      } else if (j.contains("split")) {
        splits_csv += csv_escape(rel) + "," +
                      j.value("split", std::string()) + "," +
                      json(j.value("accuracy", 0.0)).dump() + "," +
                      std::to_string(j.value("n", 0)) + "\n";
        ++n_splits;
      } else if (j.contains("step")) {
        const std::uint64_t e = j.value("epoch", std::uint64_t{0});
        if (steps == 0 || e != last_epoch) {
          last_epoch = e;
          epoch_sum = 0.0;
          epoch_n = 0;
        }
        epoch_sum += j.value("loss", 0.0);
        ++epoch_n;
        ++steps;
      }
    }
    if (steps > 0) {
      runs_csv += csv_escape(rel) + "," + std::to_string(steps) + "," +
                  std::to_string(last_epoch) + "," +
                  num(epoch_n ? epoch_sum / epoch_n : 0.0) + "\n";
      ++n_runs;
    }
  }

  const int total = n_runs + n_splits + n_attacks + n_ablation + n_sweep;
  if (total == 0) {
    std::fprintf(stderr, "warning: no run records under %s\n", dir.c_str());
    return 0;
  }
  if (n_runs) write_file_text(dir + "/report_runs.csv", runs_csv);
  if (n_splits) write_file_text(dir + "/report_splits.csv", splits_csv);
  if (n_attacks) write_file_text(dir + "/report_attacks.csv", attacks_csv);
  if (n_ablation) {
    write_file_text(dir + "/report_ablation.csv", ablation_csv);
  }
  if (n_sweep) write_file_text(dir + "/report_sweep.csv", sweep_csv);
  return 0;
}

}  // namespace bgaug
