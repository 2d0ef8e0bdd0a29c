// euap: one binary driving the whole pipeline — victim training, edge
// probes, perturbation crafting, and the evaluation harnesses. Every
// subcommand writes its outputs plus a config snapshot and the hashes of all
// input artifacts into a single run directory; rerunning with the same flags
// reproduces the outputs byte for byte.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "eua/attacks.hpp"
#include "eua/data.hpp"
#include "eua/evaluation.hpp"
#include "eua/network.hpp"
#include "eua/probes.hpp"
#include "eua/serialize.hpp"
#include "eua/split_runtime.hpp"
#include "eua/tensor.hpp"

namespace fs = std::filesystem;
using namespace eua;

namespace {

// Flag mistakes CLI11 cannot catch on its own (conditionally required
// options, cross-flag consistency). Mapped to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Accepts "10/255" style fractions as well as plain decimals.
float parse_fraction(const std::string& text) {
  const auto number = [](const std::string& s) -> double {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (s.empty() || used != s.size())
      throw std::invalid_argument("'" + s + "' is not a number");
    return v;
  };
  const std::size_t slash = text.find('/');
  double v = 0.0;
  if (slash == std::string::npos) {
    v = number(text);
  } else {
    const double den = number(text.substr(slash + 1));
    if (den == 0.0) throw std::invalid_argument("division by zero in '" + text + "'");
    v = number(text.substr(0, slash)) / den;
  }
  if (!std::isfinite(v) || v < 0.0)
    throw std::invalid_argument("'" + text + "' must be a nonnegative number");
  return static_cast<float>(v);
}

const CLI::Validator FractionValue(
    [](std::string& s) -> std::string {
      try {
        parse_fraction(s);
      } catch (const std::exception& e) {
        return std::string(e.what());
      }
      return {};
    },
    "FRACTION");

// ---------------------------------------------------------------------------
// shared option bundles

struct DataOpts {
  std::string source = "synthetic";  // synthetic | idx | ckpt
  int classes = 10;
  int per_class = 250;
  std::vector<int> shape = {1, 28, 28};
  std::uint64_t seed = 1;
  std::string idx_images;
  std::string idx_labels;
  std::string dataset_path;
};

void add_data_flags(CLI::App* cmd, DataOpts& d) {
  cmd->add_option("--data", d.source, "Dataset source")
      ->check(CLI::IsMember({"synthetic", "idx", "ckpt"}))
      ->capture_default_str();
  cmd->add_option("--classes", d.classes, "Synthetic class count")
      ->capture_default_str();
  cmd->add_option("--per-class", d.per_class, "Synthetic samples per class")
      ->capture_default_str();
  cmd->add_option("--shape", d.shape, "Synthetic sample shape C,H,W")
      ->expected(3)
      ->delimiter(',');
  cmd->add_option("--data-seed", d.seed, "Synthetic generator seed")
      ->capture_default_str();
  cmd->add_option("--idx-images", d.idx_images, "IDX image file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--idx-labels", d.idx_labels, "IDX label file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--dataset", d.dataset_path, "Dataset container file")
      ->check(CLI::ExistingFile);
}

Dataset load_data(const DataOpts& d) {
  if (d.source == "idx") {
    if (d.idx_images.empty() || d.idx_labels.empty())
      throw UsageError("--data idx requires --idx-images and --idx-labels");
    return load_idx(d.idx_images, d.idx_labels);
  }
  if (d.source == "ckpt") {
    if (d.dataset_path.empty()) throw UsageError("--data ckpt requires --dataset");
    return load_dataset(d.dataset_path);
  }
  if (d.shape.size() != 3) throw UsageError("--shape needs exactly C,H,W");
  return generate_synthetic(d.classes, d.per_class,
                            {d.shape[0], d.shape[1], d.shape[2]}, d.seed);
}

Json data_config(const DataOpts& d) {
  Json j;
  j["source"] = d.source;
  if (d.source == "synthetic") {
    j["classes"] = d.classes;
    j["per_class"] = d.per_class;
    j["shape"] = d.shape;
    j["seed"] = d.seed;
  } else if (d.source == "idx") {
    j["idx_images"] = d.idx_images;
    j["idx_labels"] = d.idx_labels;
  } else {
    j["dataset"] = d.dataset_path;
  }
  return j;
}

struct SplitOpts {
  int target = 0;
  int n_target = 50;
  int n_other = 500;
  int n_opt = 500;
  int n_test = 1000;
  std::uint64_t seed = 11;
  bool opt_excludes_target = false;
};

void add_split_flags(CLI::App* cmd, SplitOpts& s) {
  cmd->add_option("--target", s.target, "Attacker's target class")
      ->capture_default_str();
  cmd->add_option("--n-target", s.n_target, "Target-class samples in d_t")
      ->capture_default_str();
  cmd->add_option("--n-other", s.n_other, "Non-target samples in d_o")
      ->capture_default_str();
  cmd->add_option("--n-opt", s.n_opt, "Optimization samples in d_opt")
      ->capture_default_str();
  cmd->add_option("--n-test", s.n_test, "Held-out test samples")
      ->capture_default_str();
  cmd->add_option("--split-seed", s.seed, "Split shuffling seed")
      ->capture_default_str();
  cmd->add_flag("--opt-excludes-target", s.opt_excludes_target,
                "Draw d_opt from non-target classes only");
}

AttackSplits make_splits(const Dataset& pool, const SplitOpts& s) {
  if (s.target < 0) throw UsageError("--target must be >= 0");
  return make_attack_splits(pool, s.target, s.n_target, s.n_other, s.n_opt,
                            s.n_test, s.seed, s.opt_excludes_target);
}

Json split_config(const SplitOpts& s) {
  Json j;
  j["target"] = s.target;
  j["n_target"] = s.n_target;
  j["n_other"] = s.n_other;
  j["n_opt"] = s.n_opt;
  j["n_test"] = s.n_test;
  j["seed"] = s.seed;
  j["opt_excludes_target"] = s.opt_excludes_target;
  return j;
}

// ---------------------------------------------------------------------------
// run directory plumbing

struct RunDir {
  fs::path root;
  Json inputs = Json::object();

  RunDir(const std::string& out, const Json& config) : root(out) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw IoError(out + ": cannot create run directory: " + ec.message());
    write_file((root / "config.json").string(), config.dump(2) + "\n");
  }

  std::string path(const char* name) const { return (root / name).string(); }

  void note_input(const std::string& file) {
    inputs[file] = hex64(fnv1a64_file(file));
  }

  // inputs.json maps every consumed artifact path to its content hash.
  void finish() const {
    write_file((root / "inputs.json").string(), inputs.dump(2) + "\n");
  }
};

void note_data_inputs(RunDir& rd, const DataOpts& d) {
  if (d.source == "idx") {
    rd.note_input(d.idx_images);
    rd.note_input(d.idx_labels);
  } else if (d.source == "ckpt") {
    rd.note_input(d.dataset_path);
  }
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  DataOpts data;
  std::string arch = "smallconv4";
  int epochs = 10;
  float lr = 1e-3f;
  int batch = 100;
  int val_per_class = 50;
  std::uint64_t seed = 7;
  std::string out;
};

// Last `per_class` samples of every class become the validation slice.
std::pair<Dataset, Dataset> carve_validation(const Dataset& d, int per_class) {
  if (per_class <= 0) return {d, Dataset{}};
  std::vector<int> count(static_cast<std::size_t>(d.class_count), 0);
  for (int l : d.labels) ++count[static_cast<std::size_t>(l)];
  for (int c = 0; c < d.class_count; ++c)
    if (count[static_cast<std::size_t>(c)] <= per_class)
      throw ShapeError("validation carve: class " + std::to_string(c) + " has " +
                       std::to_string(count[static_cast<std::size_t>(c)]) +
                       " samples, needs more than " + std::to_string(per_class));
  std::vector<int> keep = count;
  for (int& k : keep) k -= per_class;
  std::vector<int> seen(static_cast<std::size_t>(d.class_count), 0);
  std::vector<int> train_idx, val_idx;
  for (int i = 0; i < d.size(); ++i) {
    const auto c = static_cast<std::size_t>(d.labels[static_cast<std::size_t>(i)]);
    (seen[c]++ < keep[c] ? train_idx : val_idx).push_back(i);
  }
  return {gather(d, train_idx), gather(d, val_idx)};
}

int run_train(const TrainOpts& o) {
  Json config;
  config["command"] = "train";
  config["arch"] = o.arch;
  config["data"] = data_config(o.data);
  config["epochs"] = o.epochs;
  config["lr"] = static_cast<double>(o.lr);
  config["batch"] = o.batch;
  config["val_per_class"] = o.val_per_class;
  config["seed"] = o.seed;
  RunDir rd(o.out, config);
  note_data_inputs(rd, o.data);

  const Dataset full = load_data(o.data);
  auto [train_set, val_set] = carve_validation(full, o.val_per_class);
  std::printf("training %s on %d samples (%d held out)\n", o.arch.c_str(),
              train_set.size(), val_set.size());

  Model m = init_model(build_model(o.arch, full.class_count, full.sample_shape()),
                       o.seed);
  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.lr = o.lr;
  tc.batch = o.batch;
  tc.seed = o.seed;
  const TrainHistory h = train_victim(m, train_set, val_set, tc);
  for (std::size_t e = 0; e < h.train_loss.size(); ++e)
    std::printf("epoch %2zu/%d  loss %.4f  val %.2f%%\n", e + 1, o.epochs,
                h.train_loss[e], h.val_accuracy[e]);

  Json extra;
  extra["seed"] = o.seed;
  save_model(rd.path("model.ckpt"), m, extra);

  Json metrics;
  metrics["train_loss"] = h.train_loss;
  metrics["val_accuracy"] = h.val_accuracy;
  metrics["final_val_accuracy"] = h.val_accuracy.empty() ? 0.0 : h.val_accuracy.back();
  write_file(rd.path("metrics.json"), metrics.dump(2) + "\n");

  std::printf("saved %s\n", rd.path("model.ckpt").c_str());
  rd.finish();
  return 0;
}

// ---------------------------------------------------------------------------
// probes

struct ProbesOpts {
  std::string model;
  DataOpts data;
  SplitOpts split;
  int depth = 4;
  int epochs = 50;
  float lr = 1e-3f;
  int batch = 100;
  bool no_pos_weight = false;
  std::uint64_t seed = 7;
  std::vector<int> sweep_nt;
  std::vector<int> sweep_no;
  std::string out;
};

int run_probes(const ProbesOpts& o) {
  Json config;
  config["command"] = "probes";
  config["model"] = o.model;
  config["depth"] = o.depth;
  config["data"] = data_config(o.data);
  config["split"] = split_config(o.split);
  config["epochs"] = o.epochs;
  config["lr"] = static_cast<double>(o.lr);
  config["batch"] = o.batch;
  config["pos_weight"] = !o.no_pos_weight;
  config["seed"] = o.seed;
  if (!o.sweep_nt.empty()) {
    config["sweep_nt"] = o.sweep_nt;
    config["sweep_no"] = o.sweep_no;
  }
  RunDir rd(o.out, config);
  rd.note_input(o.model);
  note_data_inputs(rd, o.data);

  const Model m = load_model(o.model);
  const Dataset pool = load_data(o.data);
  ProbeTrainConfig pc;
  pc.epochs = o.epochs;
  pc.lr = o.lr;
  pc.batch = o.batch;
  pc.seed = o.seed;
  pc.use_pos_weight = !o.no_pos_weight;

  if (!o.sweep_nt.empty()) {
    const std::vector<int> nos =
        o.sweep_no.empty() ? std::vector<int>{o.split.n_other} : o.sweep_no;
    const std::string csv =
        probe_sample_sweep(m, pool, o.split.target, o.depth, o.sweep_nt, nos,
                           o.split.n_test, o.seed, pc);
    write_file(rd.path("probe_sweep.csv"), csv);
    std::fputs(csv.c_str(), stdout);
    std::printf("saved %s\n", rd.path("probe_sweep.csv").c_str());
  } else {
    const AttackSplits splits = make_splits(pool, o.split);
    auto [edge, cloud] = split_model(m, o.depth);
    (void)cloud;
    const ProbeSet ps = train_probes(edge, splits, pc);
    for (const auto& [layer, met] : ps.metrics)
      std::printf("layer %2d  final bce %.4f  heldout acc %.2f%%\n", layer,
                  met.final_bce, met.heldout_accuracy);
    save_probes(rd.path("probes.ckpt"), ps);
    std::printf("saved %s\n", rd.path("probes.ckpt").c_str());
  }
  rd.finish();
  return 0;
}

// ---------------------------------------------------------------------------
// attack

struct AttackOpts {
  std::string method;
  std::string model;
  std::string probes;
  DataOpts data;
  SplitOpts split;
  int depth = 4;
  std::string eps = "10/255";
  std::string alpha = "2/255";
  int epochs = 20;
  int batch = 100;
  bool no_norm = false;
  bool single_layer = false;
  bool unlabeled = false;
  bool pixmap = false;
  std::uint64_t seed = 7;
  std::string out;
};

int run_attack(const AttackOpts& o) {
  Json config;
  config["command"] = "attack";
  config["method"] = o.method;
  config["model"] = o.model;
  if (!o.probes.empty()) config["probes"] = o.probes;
  config["depth"] = o.depth;
  config["data"] = data_config(o.data);
  config["split"] = split_config(o.split);
  config["epsilon"] = static_cast<double>(parse_fraction(o.eps));
  config["alpha"] = static_cast<double>(parse_fraction(o.alpha));
  config["epochs"] = o.epochs;
  config["batch"] = o.batch;
  config["norm"] = !o.no_norm;
  config["multi_layer"] = !o.single_layer;
  config["unlabeled"] = o.unlabeled;
  config["seed"] = o.seed;
  RunDir rd(o.out, config);
  rd.note_input(o.model);
  note_data_inputs(rd, o.data);

  const Model m = load_model(o.model);
  const Dataset pool = load_data(o.data);
  const AttackSplits splits = make_splits(pool, o.split);
  Dataset d_opt = splits.d_opt;
  if (o.unlabeled) d_opt.labels.clear();

  AttackConfig cfg;
  cfg.epsilon = parse_fraction(o.eps);
  cfg.alpha = parse_fraction(o.alpha);
  cfg.epochs = o.epochs;
  cfg.batch = o.batch;
  cfg.flags.norm = !o.no_norm;
  cfg.flags.multi_layer = !o.single_layer;
  cfg.seed = o.seed;
  if (cfg.epsilon == 0.0f)
    std::fprintf(stderr, "warning: eps = 0, the perturbation stays all-zero\n");

  Perturbation p;
  if (o.method == "edge-only") {
    if (o.probes.empty()) throw UsageError("--method edge-only requires --probes");
    rd.note_input(o.probes);
    const ProbeSet ps = load_probes(o.probes);
    if (ps.target_class != splits.target_class)
      std::fprintf(stderr,
                   "warning: probes were trained for target %d, splits use %d\n",
                   ps.target_class, splits.target_class);
    auto [edge, cloud] = split_model(m, o.depth);
    (void)cloud;
    const std::vector<int>& want = edge.config().edge_layers;
    for (int l : cfg.flags.multi_layer ? want
                                       : std::vector<int>{want.back()})
      if (!ps.probes.count(l))
        throw ShapeError("probes checkpoint has no probe for edge layer " +
                         std::to_string(l) +
                         "; was it trained at a different depth?");
    p = edge_only_uap(edge, ps, d_opt, ps.target_class, cfg);
  } else {
    const UapMode mode =
        o.method == "uap-targeted" ? UapMode::Targeted : UapMode::Untargeted;
    p = classic_uap(m, d_opt, cfg, mode,
                    mode == UapMode::Targeted ? splits.target_class : -1);
  }

  std::printf("%s: %d steps, score %.4f -> %.4f\n", p.method.c_str(),
              p.iterations, p.score_trace.front(), p.score_trace.back());
  save_perturbation(rd.path("uap.ckpt"), p);
  std::printf("saved %s\n", rd.path("uap.ckpt").c_str());
  if (o.pixmap) {
    const char* name = p.delta.dim(0) == 3 ? "uap.ppm" : "uap.pgm";
    dump_perturbation_pixmap(rd.path(name), p);
    std::printf("saved %s\n", rd.path(name).c_str());
  }
  rd.finish();
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
  std::string model;
  std::string delta = "none";
  DataOpts data;
  SplitOpts split;
  int depth = 4;
  std::string out;
};

int run_eval(const EvalOpts& o) {
  Json config;
  config["command"] = "eval";
  config["model"] = o.model;
  config["delta"] = o.delta;
  config["depth"] = o.depth;
  config["data"] = data_config(o.data);
  config["split"] = split_config(o.split);
  RunDir rd(o.out, config);
  rd.note_input(o.model);
  note_data_inputs(rd, o.data);

  const Model m = load_model(o.model);
  const Dataset pool = load_data(o.data);
  const AttackSplits splits = make_splits(pool, o.split);
  auto [edge, cloud] = split_model(m, o.depth);

  Perturbation p;
  const Perturbation* pp = nullptr;
  if (o.delta != "none") {
    if (!fs::exists(o.delta))
      throw UsageError("--delta file does not exist: " + o.delta);
    rd.note_input(o.delta);
    p = load_perturbation(o.delta);
    pp = &p;
  }

  const EvalReport r = evaluate(edge, cloud, splits.test, pp, o.split.target);
  write_file(rd.path("report.json"), report_json(r));

  std::printf("clean accuracy    %.2f%%\n", r.clean_accuracy);
  std::printf("attacked accuracy %.2f%%\n", r.attacked_accuracy);
  std::printf("target success    %.2f%%\n", r.target_success_rate);
  std::printf("top predictions  ");
  const std::size_t show = std::min<std::size_t>(3, r.top_k_histogram.size());
  for (std::size_t i = 0; i < show; ++i)
    std::printf(" class %d x%d", r.top_k_histogram[i].first,
                r.top_k_histogram[i].second);
  std::printf("\n%d samples in %.1fs\n", r.test_count, r.runtime_seconds);
  std::printf("saved %s\n", rd.path("report.json").c_str());
  rd.finish();
  return 0;
}

// ---------------------------------------------------------------------------
// grid / sweep

struct HarnessOpts {
  std::string model;
  DataOpts data;
  SplitOpts split;
  std::vector<std::string> eps = {"10/255", "16/255", "24/255"};  // sweep only
  std::string eps_single = "10/255";                              // grid only
  std::string alpha = "2/255";
  int epochs = 20;
  int batch = 100;
  int probe_epochs = 50;
  float probe_lr = 1e-3f;
  int probe_batch = 100;
  bool no_pos_weight = false;
  std::uint64_t seed = 7;
  std::string out;
};

AttackConfig harness_attack_config(const HarnessOpts& o, float epsilon) {
  AttackConfig cfg;
  cfg.epsilon = epsilon;
  cfg.alpha = parse_fraction(o.alpha);
  cfg.epochs = o.epochs;
  cfg.batch = o.batch;
  cfg.seed = o.seed;
  return cfg;
}

ProbeTrainConfig harness_probe_config(const HarnessOpts& o) {
  ProbeTrainConfig pc;
  pc.epochs = o.probe_epochs;
  pc.lr = o.probe_lr;
  pc.batch = o.probe_batch;
  pc.use_pos_weight = !o.no_pos_weight;
  return pc;
}

int run_grid(const HarnessOpts& o) {
  Json config;
  config["command"] = "grid";
  config["model"] = o.model;
  config["data"] = data_config(o.data);
  config["split"] = split_config(o.split);
  config["epsilon"] = static_cast<double>(parse_fraction(o.eps_single));
  config["alpha"] = static_cast<double>(parse_fraction(o.alpha));
  config["epochs"] = o.epochs;
  config["batch"] = o.batch;
  config["probe_epochs"] = o.probe_epochs;
  config["probe_lr"] = static_cast<double>(o.probe_lr);
  config["probe_batch"] = o.probe_batch;
  config["pos_weight"] = !o.no_pos_weight;
  config["seed"] = o.seed;
  RunDir rd(o.out, config);
  rd.note_input(o.model);
  note_data_inputs(rd, o.data);

  const Model m = load_model(o.model);
  const AttackSplits splits = make_splits(load_data(o.data), o.split);
  const std::string csv =
      run_ablation_grid(m, splits, harness_attack_config(o, parse_fraction(o.eps_single)),
                        o.seed, harness_probe_config(o));
  write_file(rd.path("grid.csv"), csv);
  std::fputs(csv.c_str(), stdout);
  std::printf("saved %s\n", rd.path("grid.csv").c_str());
  rd.finish();
  return 0;
}

int run_sweep(const HarnessOpts& o) {
  std::vector<float> epsilons;
  Json eps_json = Json::array();
  for (const std::string& e : o.eps) {
    epsilons.push_back(parse_fraction(e));
    eps_json.push_back(static_cast<double>(epsilons.back()));
  }

  Json config;
  config["command"] = "sweep";
  config["model"] = o.model;
  config["data"] = data_config(o.data);
  config["split"] = split_config(o.split);
  config["epsilons"] = eps_json;
  config["alpha"] = static_cast<double>(parse_fraction(o.alpha));
  config["epochs"] = o.epochs;
  config["batch"] = o.batch;
  config["probe_epochs"] = o.probe_epochs;
  config["probe_lr"] = static_cast<double>(o.probe_lr);
  config["probe_batch"] = o.probe_batch;
  config["pos_weight"] = !o.no_pos_weight;
  config["seed"] = o.seed;
  RunDir rd(o.out, config);
  rd.note_input(o.model);
  note_data_inputs(rd, o.data);

  const Model m = load_model(o.model);
  const AttackSplits splits = make_splits(load_data(o.data), o.split);
  const std::string csv = run_epsilon_sweep(
      m, splits, epsilons, harness_attack_config(o, epsilons.front()), o.seed,
      harness_probe_config(o));
  write_file(rd.path("sweep.csv"), csv);
  std::fputs(csv.c_str(), stdout);
  std::printf("saved %s\n", rd.path("sweep.csv").c_str());
  rd.finish();
  return 0;
}

// ---------------------------------------------------------------------------
// export-features

struct ExportOpts {
  std::string model;
  DataOpts data;
  SplitOpts split;
  int depth = 4;
  std::vector<std::string> deltas;
  int sample = 0;
  std::string out;
};

int run_export(const ExportOpts& o) {
  Json config;
  config["command"] = "export-features";
  config["model"] = o.model;
  config["depth"] = o.depth;
  config["data"] = data_config(o.data);
  config["split"] = split_config(o.split);
  config["deltas"] = o.deltas;
  config["sample"] = o.sample;
  RunDir rd(o.out, config);
  rd.note_input(o.model);
  note_data_inputs(rd, o.data);

  const Model m = load_model(o.model);
  const AttackSplits splits = make_splits(load_data(o.data), o.split);
  auto [edge, cloud] = split_model(m, o.depth);
  (void)cloud;

  std::vector<Perturbation> variants;
  for (const std::string& path : o.deltas) {
    if (!fs::exists(path))
      throw UsageError("--delta file does not exist: " + path);
    rd.note_input(path);
    variants.push_back(load_perturbation(path));
  }

  export_features(edge, edge.config().edge_layers, splits.test, variants,
                  variants.empty() ? -1 : o.sample, rd.path("features.ckpt"));
  std::printf("saved %s (%d samples + %zu variants)\n",
              rd.path("features.ckpt").c_str(), splits.test.size(),
              variants.size());
  rd.finish();
  return 0;
}

// ---------------------------------------------------------------------------
// wiring

void add_common(CLI::App* cmd, std::string& model, DataOpts& data,
                SplitOpts& split, std::string& out) {
  cmd->add_option("--model", model, "Victim checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  add_data_flags(cmd, data);
  add_split_flags(cmd, split);
  cmd->add_option("--out", out, "Run directory")->required();
}

void add_probe_hyper(CLI::App* cmd, HarnessOpts& o) {
  cmd->add_option("--probe-epochs", o.probe_epochs, "Probe training epochs")
      ->capture_default_str();
  cmd->add_option("--probe-lr", o.probe_lr, "Probe learning rate")
      ->capture_default_str();
  cmd->add_option("--probe-batch", o.probe_batch, "Probe batch size")
      ->capture_default_str();
  cmd->add_flag("--no-pos-weight", o.no_pos_weight,
                "Disable the |d_o|/|d_t| positive-class weight");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Split-inference simulator and edge-only universal perturbation toolkit"};
  app.require_subcommand(1);
  const CLI::Range depth_range(1, 4);

  TrainOpts train_o;
  CLI::App* c_train =
      app.add_subcommand("train", "Train a victim model and write a checkpoint");
  add_data_flags(c_train, train_o.data);
  c_train->add_option("--arch", train_o.arch, "Backbone architecture")
      ->check(CLI::IsMember({"smallconv4", "smallres4"}))
      ->capture_default_str();
  c_train->add_option("--epochs", train_o.epochs, "Training epochs")
      ->capture_default_str();
  c_train->add_option("--lr", train_o.lr, "Learning rate")->capture_default_str();
  c_train->add_option("--batch", train_o.batch, "Batch size")->capture_default_str();
  c_train->add_option("--val-per-class", train_o.val_per_class,
                      "Held-out validation samples per class")
      ->capture_default_str();
  c_train->add_option("--seed", train_o.seed, "Init and shuffle seed")
      ->capture_default_str();
  c_train->add_option("--out", train_o.out, "Run directory")->required();

  ProbesOpts probes_o;
  CLI::App* c_probes =
      app.add_subcommand("probes", "Train per-layer binary probes on edge features");
  add_common(c_probes, probes_o.model, probes_o.data, probes_o.split, probes_o.out);
  c_probes->add_option("--depth", probes_o.depth, "Split depth (1-4)")
      ->check(depth_range)
      ->capture_default_str();
  c_probes->add_option("--epochs", probes_o.epochs, "Probe training epochs")
      ->capture_default_str();
  c_probes->add_option("--lr", probes_o.lr, "Probe learning rate")
      ->capture_default_str();
  c_probes->add_option("--batch", probes_o.batch, "Probe batch size")
      ->capture_default_str();
  c_probes->add_flag("--no-pos-weight", probes_o.no_pos_weight,
                     "Disable the |d_o|/|d_t| positive-class weight");
  c_probes->add_option("--seed", probes_o.seed, "Probe init and shuffle seed")
      ->capture_default_str();
  c_probes->add_option("--sweep-nt", probes_o.sweep_nt,
                       "Sweep |d_t| over these counts instead of one training")
      ->delimiter(',');
  c_probes->add_option("--sweep-no", probes_o.sweep_no,
                       "Sweep |d_o| over these counts (with --sweep-nt)")
      ->delimiter(',');

  AttackOpts attack_o;
  CLI::App* c_attack =
      app.add_subcommand("attack", "Craft a universal perturbation");
  c_attack->add_option("--method", attack_o.method, "Attack method")
      ->required()
      ->check(CLI::IsMember({"edge-only", "uap-targeted", "uap-untargeted"}));
  add_common(c_attack, attack_o.model, attack_o.data, attack_o.split, attack_o.out);
  c_attack->add_option("--probes", attack_o.probes, "Probe checkpoint (edge-only)")
      ->check(CLI::ExistingFile);
  c_attack->add_option("--depth", attack_o.depth, "Split depth (1-4)")
      ->check(depth_range)
      ->capture_default_str();
  c_attack->add_option("--eps", attack_o.eps, "L-inf budget, fraction or decimal")
      ->check(FractionValue)
      ->capture_default_str();
  c_attack->add_option("--alpha", attack_o.alpha, "Step size, fraction or decimal")
      ->check(FractionValue)
      ->capture_default_str();
  c_attack->add_option("--epochs", attack_o.epochs, "Passes over d_opt")
      ->capture_default_str();
  c_attack->add_option("--batch", attack_o.batch, "Batch size")
      ->capture_default_str();
  c_attack->add_flag("--no-norm", attack_o.no_norm,
                     "Skip per-layer l2 gradient normalization");
  c_attack->add_flag("--single-layer", attack_o.single_layer,
                     "Use only the split-point probe, not all edge layers");
  c_attack->add_flag("--unlabeled", attack_o.unlabeled,
                     "Strip labels from d_opt (the edge-only attacker's view)");
  c_attack->add_flag("--pixmap", attack_o.pixmap,
                     "Also dump the perturbation as a PGM/PPM image");
  c_attack->add_option("--seed", attack_o.seed, "Shuffle seed")
      ->capture_default_str();

  EvalOpts eval_o;
  CLI::App* c_eval = app.add_subcommand(
      "eval", "Measure clean/attacked accuracy and target success rate");
  add_common(c_eval, eval_o.model, eval_o.data, eval_o.split, eval_o.out);
  c_eval->add_option("--delta", eval_o.delta,
                     "Perturbation file, or 'none' for the clean baseline")
      ->capture_default_str();
  c_eval->add_option("--depth", eval_o.depth, "Split depth (1-4)")
      ->check(depth_range)
      ->capture_default_str();

  HarnessOpts grid_o;
  CLI::App* c_grid = app.add_subcommand(
      "grid", "2x2x4 ablation over norm, multi-layer and depth");
  add_common(c_grid, grid_o.model, grid_o.data, grid_o.split, grid_o.out);
  c_grid->add_option("--eps", grid_o.eps_single, "L-inf budget")
      ->check(FractionValue)
      ->capture_default_str();
  c_grid->add_option("--alpha", grid_o.alpha, "Step size")
      ->check(FractionValue)
      ->capture_default_str();
  c_grid->add_option("--epochs", grid_o.epochs, "Attack epochs")
      ->capture_default_str();
  c_grid->add_option("--batch", grid_o.batch, "Attack batch size")
      ->capture_default_str();
  add_probe_hyper(c_grid, grid_o);
  c_grid->add_option("--seed", grid_o.seed, "Base seed for all cells")
      ->capture_default_str();

  HarnessOpts sweep_o;
  CLI::App* c_sweep = app.add_subcommand(
      "sweep", "Attacked accuracy across an epsilon list, per depth");
  add_common(c_sweep, sweep_o.model, sweep_o.data, sweep_o.split, sweep_o.out);
  c_sweep->add_option("--eps", sweep_o.eps, "Ascending epsilon list")
      ->delimiter(',')
      ->check(FractionValue)
      ->capture_default_str();
  c_sweep->add_option("--alpha", sweep_o.alpha, "Step size")
      ->check(FractionValue)
      ->capture_default_str();
  c_sweep->add_option("--epochs", sweep_o.epochs, "Attack epochs")
      ->capture_default_str();
  c_sweep->add_option("--batch", sweep_o.batch, "Attack batch size")
      ->capture_default_str();
  add_probe_hyper(c_sweep, sweep_o);
  c_sweep->add_option("--seed", sweep_o.seed, "Base seed for all cells")
      ->capture_default_str();

  ExportOpts export_o;
  CLI::App* c_export = app.add_subcommand(
      "export-features", "Dump per-layer feature matrices for offline analysis");
  add_common(c_export, export_o.model, export_o.data, export_o.split, export_o.out);
  c_export->add_option("--depth", export_o.depth, "Split depth (1-4)")
      ->check(depth_range)
      ->capture_default_str();
  c_export->add_option("--delta", export_o.deltas,
                       "Perturbation files whose variants to append")
      ->delimiter(',');
  c_export->add_option("--sample", export_o.sample,
                       "Test sample index perturbed by each --delta")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c_train) return run_train(train_o);
    if (*c_probes) return run_probes(probes_o);
    if (*c_attack) return run_attack(attack_o);
    if (*c_eval) return run_eval(eval_o);
    if (*c_grid) return run_grid(grid_o);
    if (*c_sweep) return run_sweep(sweep_o);
    if (*c_export) return run_export(export_o);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
