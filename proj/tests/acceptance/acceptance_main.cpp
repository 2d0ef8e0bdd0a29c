// Acceptance harness: runs the full desk-scale scenario end to end and
// prints one pass/fail line per criterion. Exit code 0 only when every
// criterion holds.
//
// Scenario: synthetic 10-class corpus, smallconv4 victim (200/class train,
// 50/class validation), a disjoint attacker pool split into d_t=50, d_o=500,
// d_opt=500 (unlabeled), test=1000, target class 0. Attack-side results that
// depend on optimization randomness are taken as the median of three seeds.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "eua/attacks.hpp"
#include "eua/data.hpp"
#include "eua/evaluation.hpp"
#include "eua/network.hpp"
#include "eua/probes.hpp"
#include "eua/serialize.hpp"
#include "eua/split_runtime.hpp"
#include "eua/tensor.hpp"
#include "util/gradcheck.hpp"

using namespace eua;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// ---------------------------------------------------------------------------
// bookkeeping

struct CheckResult {
  int id = 0;
  const char* name = "";
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

std::vector<CheckResult> g_results;

void record(int id, const char* name, bool pass, std::string detail,
            double seconds) {
  g_results.push_back({id, name, pass, std::move(detail), seconds});
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

double median3(std::array<double, 3> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

std::string out_path(const char* name) {
  fs::create_directories("acceptance_out");
  return (fs::path("acceptance_out") / name).string();
}

void progress(const std::string& msg) {
  std::printf("[run] %s\n", msg.c_str());
  std::fflush(stdout);
}

// ---------------------------------------------------------------------------
// scenario constants

constexpr int kClasses = 10;
constexpr int kPerClass = 250;  // 200 train + 50 validation per class
const Shape kSampleShape = {1, 28, 28};
constexpr std::uint64_t kVictimDataSeed = 1;
constexpr std::uint64_t kAttackDataSeed = 2;
constexpr std::uint64_t kVictimSeed = 7;
constexpr std::uint64_t kSplitSeed = 11;
const std::array<std::uint64_t, 3> kSeeds = {101, 202, 303};
const std::array<float, 2> kEpsilons = {10.0f / 255.0f, 16.0f / 255.0f};

ProbeTrainConfig probe_config(std::uint64_t attack_seed, int depth) {
  ProbeTrainConfig pc;
  pc.epochs = 50;
  pc.lr = 1e-3f;
  pc.batch = 100;
  pc.seed = Rng::derive(attack_seed, 9000 + static_cast<std::uint64_t>(depth));
  return pc;
}

AttackConfig attack_config(float epsilon, std::uint64_t seed) {
  AttackConfig cfg;
  cfg.epsilon = epsilon;
  cfg.alpha = 2.0f / 255.0f;
  cfg.epochs = 20;
  cfg.batch = 100;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

int main() {
  const Clock::time_point t_start = Clock::now();

  // -------------------------------------------------------------------------
  // 1. gradient oracle
  {
    const Clock::time_point t0 = Clock::now();
    double worst = 0.0;
    std::string broken;
    try {
      for (const testutil::CompositeNet& net : testutil::composite_nets(5)) {
        const double err =
            testutil::check_grads(net.inputs, net.net, net.input_grad_indices);
        worst = std::max(worst, err);
      }
    } catch (const std::exception& e) {
      broken = e.what();
    }
    const double secs = seconds_since(t0);
    const bool ok = broken.empty() && worst < testutil::kGradRelTol && secs < 60.0;
    record(1, "gradient oracle", ok,
           broken.empty()
               ? "max relative error " + fmt("%.2e", worst) + " (tol 1e-3)"
               : broken,
           secs);
  }

  // -------------------------------------------------------------------------
  // shared scenario state, built incrementally; a failed stage marks every
  // dependent criterion failed rather than aborting the run
  Model victim;
  bool have_victim = false;
  AttackSplits splits;
  bool have_splits = false;
  std::map<int, std::pair<EdgeNode, CloudNode>> nodes;  // by depth
  std::string stage_error;

  // -------------------------------------------------------------------------
  // 3. victim quality (trained first; criterion 2 reuses the trained model)
  {
    const Clock::time_point t0 = Clock::now();
    try {
      progress("generating corpora and training the victim (10 epochs)");
      const Dataset pool =
          generate_synthetic(kClasses, kPerClass, kSampleShape, kVictimDataSeed);
      std::vector<int> tr, va;
      for (int c = 0; c < kClasses; ++c)
        for (int i = 0; i < kPerClass; ++i)
          (i < 200 ? tr : va).push_back(c * kPerClass + i);
      const Dataset train_set = gather(pool, tr);
      const Dataset val_set = gather(pool, va);

      victim = init_model(build_model("smallconv4", kClasses, kSampleShape),
                          kVictimSeed);
      TrainConfig tc;
      tc.epochs = 10;
      tc.lr = 1e-3f;
      tc.batch = 100;
      tc.seed = kVictimSeed;
      const TrainHistory h = train_victim(victim, train_set, val_set, tc);
      have_victim = true;

      const double final_val = h.val_accuracy.back();
      record(3, "victim quality", final_val >= 95.0,
             "held-out accuracy " + fmt("%.2f", final_val) + "% after 10 epochs",
             seconds_since(t0));
    } catch (const std::exception& e) {
      stage_error = e.what();
      record(3, "victim quality", false, stage_error, seconds_since(t0));
    }
  }

  // -------------------------------------------------------------------------
  // 2. split transparency
  {
    const Clock::time_point t0 = Clock::now();
    if (!have_victim) {
      record(2, "split transparency", false, "victim unavailable: " + stage_error,
             0.0);
    } else {
      try {
        Rng rng(42);
        const Tensor batch =
            testutil::random_tensor({16, 1, 28, 28}, rng, 0.0f, 1.0f);
        const Tensor mono =
            run_layers(victim, batch,
                       0, static_cast<int>(victim.spec.layers.size()));
        bool bitwise = true;
        for (int depth = 1; depth <= 4; ++depth) {
          auto pair = split_model(victim, depth);
          QueueChannel ch;
          const Tensor remote = remote_infer(pair.first, pair.second, batch, ch);
          if (!(remote == mono)) bitwise = false;
          nodes.emplace(depth, split_model(victim, depth));
        }

        // frames survive the wire bit for bit, and tampering is detected
        bool frames_ok = true;
        for (std::uint32_t seq = 0; seq < 4; ++seq) {
          const Tensor h = testutil::random_tensor({2, 3, 5, 7}, rng, -2.0f, 2.0f);
          const std::string wire = encode_frame(h, seq);
          const Frame back = decode_frame(wire);
          if (!(back.features == h) || back.seq != seq) frames_ok = false;
          std::string bad = wire;
          bad[bad.size() - 6] ^= 0x20;
          try {
            decode_frame(bad);
            frames_ok = false;  // corruption slipped through
          } catch (const CrcMismatchError&) {
          }
        }
        record(2, "split transparency", bitwise && frames_ok,
               std::string(bitwise ? "logits bitwise-equal at depths 1-4"
                                   : "logit mismatch") +
                   (frames_ok ? "; frames CRC-checked" : "; frame check failed"),
               seconds_since(t0));
      } catch (const std::exception& e) {
        record(2, "split transparency", false, e.what(), seconds_since(t0));
      }
    }
  }

  // -------------------------------------------------------------------------
  // attacker-side data
  if (have_victim) {
    try {
      const Dataset pool =
          generate_synthetic(kClasses, kPerClass, kSampleShape, kAttackDataSeed);
      splits = make_attack_splits(pool, /*target=*/0, /*n_t=*/50, /*n_o=*/500,
                                  /*n_opt=*/500, /*n_test=*/1000, kSplitSeed);
      have_splits = true;
    } catch (const std::exception& e) {
      stage_error = e.what();
    }
  }

  // the attacker's optimization set carries no labels
  Dataset d_opt_u;
  if (have_splits) {
    d_opt_u = splits.d_opt;
    d_opt_u.labels.clear();
  }

  // -------------------------------------------------------------------------
  // 4. probe quality, plus the probe cache for the attack phase
  std::map<std::pair<int, std::uint64_t>, ProbeSet> probe_cache;  // (depth, seed)
  {
    const Clock::time_point t0 = Clock::now();
    if (!have_splits) {
      record(4, "probe quality", false, "scenario unavailable: " + stage_error,
             0.0);
    } else {
      try {
        for (int depth = 1; depth <= 4; ++depth)
          for (std::uint64_t s : kSeeds) {
            progress("training probes, depth " + std::to_string(depth) +
                     ", seed " + std::to_string(s));
            probe_cache.emplace(std::make_pair(depth, s),
                                train_probes(nodes.at(depth).first, splits,
                                             probe_config(s, depth)));
          }
        const double acc4 = probe_cache.at({4, kSeeds[0]})
                                .metrics.at(12)
                                .heldout_accuracy;
        const double acc1 = probe_cache.at({1, kSeeds[0]})
                                .metrics.at(3)
                                .heldout_accuracy;
        record(4, "probe quality", acc4 >= 90.0 && acc1 >= 70.0,
               "held-out accuracy " + fmt("%.2f", acc4) + "% at depth 4 (need 90), " +
                   fmt("%.2f", acc1) + "% at depth 1 (need 70)",
               seconds_since(t0));
      } catch (const std::exception& e) {
        stage_error = e.what();
        record(4, "probe quality", false, stage_error, seconds_since(t0));
      }
    }
  }

  // -------------------------------------------------------------------------
  // attack phase: edge-only at every depth and both budgets, plus the
  // classic targeted baseline and the random-sign control, three seeds each
  using Key = std::tuple<int, int, int>;  // (depth, eps index, seed index)
  std::map<Key, Perturbation> attacks;
  std::map<Key, EvalReport> reports;
  std::array<Perturbation, 3> classic;
  std::array<EvalReport, 3> classic_rep;
  std::array<Perturbation, 3> control;
  std::array<EvalReport, 3> control_rep;
  bool have_attacks = false;

  if (have_splits && !probe_cache.empty()) {
    try {
      for (int si = 0; si < 3; ++si) {
        const std::uint64_t s = kSeeds[static_cast<std::size_t>(si)];
        for (int depth = 1; depth <= 4; ++depth) {
          auto& [edge, cloud] = nodes.at(depth);
          const ProbeSet& ps = probe_cache.at({depth, s});
          for (int ei = 0; ei < 2; ++ei) {
            const Clock::time_point t0 = Clock::now();
            const AttackConfig cfg =
                attack_config(kEpsilons[static_cast<std::size_t>(ei)], s);
            Perturbation p = edge_only_uap(edge, ps, d_opt_u, 0, cfg);
            reports[{depth, ei, si}] = evaluate(edge, cloud, splits.test, &p);
            attacks[{depth, ei, si}] = std::move(p);
            progress("edge-only attack depth " + std::to_string(depth) +
                     " eps " + std::to_string(ei == 0 ? 10 : 16) + "/255 seed " +
                     std::to_string(s) + " (" + fmt("%.1f", seconds_since(t0)) +
                     "s)");
          }
        }

        const AttackConfig cfg16 = attack_config(kEpsilons[1], s);
        const Clock::time_point t0 = Clock::now();
        classic[static_cast<std::size_t>(si)] =
            classic_uap(victim, d_opt_u, cfg16, UapMode::Targeted, 0);
        auto& [edge4, cloud4] = nodes.at(4);
        classic_rep[static_cast<std::size_t>(si)] = evaluate(
            edge4, cloud4, splits.test, &classic[static_cast<std::size_t>(si)]);
        progress("classic targeted baseline seed " + std::to_string(s) + " (" +
                 fmt("%.1f", seconds_since(t0)) + "s)");

        Perturbation r =
            random_sign_perturbation(splits.test.sample_shape(), kEpsilons[1], s);
        r.target_class = 0;
        control_rep[static_cast<std::size_t>(si)] =
            evaluate(edge4, cloud4, splits.test, &r);
        control[static_cast<std::size_t>(si)] = std::move(r);
      }
      have_attacks = true;
    } catch (const std::exception& e) {
      stage_error = e.what();
    }
  }

  // -------------------------------------------------------------------------
  // 5. attack margin over the random-sign control
  {
    if (!have_attacks) {
      record(5, "attack margin over random control", false,
             "attack stage unavailable: " + stage_error, 0.0);
    } else {
      std::array<double, 3> margin{};
      for (int si = 0; si < 3; ++si)
        margin[static_cast<std::size_t>(si)] =
            control_rep[static_cast<std::size_t>(si)].attacked_accuracy -
            reports.at({4, 1, si}).attacked_accuracy;
      const double med = median3(margin);
      record(5, "attack margin over random control", med >= 25.0,
             "median extra accuracy drop " + fmt("%.2f", med) +
                 " points at eps 16/255, depth 4 (need 25)",
             0.0);
    }
  }

  // -------------------------------------------------------------------------
  // 6. ascent sanity: every edge-only score trace must climb by > 0.05
  {
    if (!have_attacks) {
      record(6, "ascent sanity", false, "attack stage unavailable: " + stage_error,
             0.0);
    } else {
      double worst_gain = 1e9;
      Key worst_key{0, 0, 0};
      for (const auto& [key, p] : attacks) {
        const double gain = p.score_trace.back() - p.score_trace.front();
        if (gain < worst_gain) {
          worst_gain = gain;
          worst_key = key;
        }
      }
      record(6, "ascent sanity", worst_gain > 0.05,
             "smallest probe-score gain " + fmt("%.4f", worst_gain) + " (depth " +
                 std::to_string(std::get<0>(worst_key)) + ", eps " +
                 (std::get<1>(worst_key) == 0 ? "10" : "16") + "/255; need 0.05)",
             0.0);
    }
  }

  // -------------------------------------------------------------------------
  // 7. budget invariant: every delta inside its budget, every perturbed
  // input inside [0,1] (step-level checks also run inside the optimizers)
  {
    const Clock::time_point t0 = Clock::now();
    if (!have_attacks) {
      record(7, "budget invariant", false,
             "attack stage unavailable: " + stage_error, 0.0);
    } else {
      std::vector<const Perturbation*> all;
      for (const auto& [key, p] : attacks) all.push_back(&p);
      for (const Perturbation& p : classic) all.push_back(&p);
      for (const Perturbation& p : control) all.push_back(&p);
      int budget_bad = 0, range_bad = 0;
      for (const Perturbation* p : all) {
        if (p->delta.max_abs() > p->epsilon) ++budget_bad;
        const Tensor adv = apply_perturbation(splits.test.images, p->delta);
        for (std::int64_t i = 0; i < adv.numel(); ++i)
          if (adv[i] < 0.0f || adv[i] > 1.0f) {
            ++range_bad;
            break;
          }
      }
      record(7, "budget invariant", budget_bad == 0 && range_bad == 0,
             std::to_string(all.size()) + " perturbations checked, " +
                 std::to_string(budget_bad) + " budget and " +
                 std::to_string(range_bad) + " range violations",
             seconds_since(t0));
    }
  }

  // -------------------------------------------------------------------------
  // 8. targeted propagation: deep attacks steer toward the target, and the
  // full-knowledge baseline is no more than 5 points ahead
  {
    if (!have_attacks) {
      record(8, "targeted propagation by depth", false,
             "attack stage unavailable: " + stage_error, 0.0);
    } else {
      std::array<double, 3> t4{}, t1{}, tc{};
      for (int si = 0; si < 3; ++si) {
        t4[static_cast<std::size_t>(si)] =
            reports.at({4, 1, si}).target_success_rate;
        t1[static_cast<std::size_t>(si)] =
            reports.at({1, 1, si}).target_success_rate;
        tc[static_cast<std::size_t>(si)] =
            classic_rep[static_cast<std::size_t>(si)].target_success_rate;
      }
      const double m4 = median3(t4), m1 = median3(t1), mc = median3(tc);
      record(8, "targeted propagation by depth", m4 >= m1 && mc >= m4 - 5.0,
             "median TSR " + fmt("%.2f", m4) + "% at depth 4 vs " +
                 fmt("%.2f", m1) + "% at depth 1; classic baseline " +
                 fmt("%.2f", mc) + "%",
             0.0);
    }
  }

  // -------------------------------------------------------------------------
  // 9. prediction concentration under the shallow attack
  {
    const Clock::time_point t0 = Clock::now();
    if (!have_attacks) {
      record(9, "prediction concentration", false,
             "attack stage unavailable: " + stage_error, 0.0);
    } else {
      auto& [edge1, cloud1] = nodes.at(1);
      const int clean_top =
          prediction_histogram(edge1, cloud1, splits.test, nullptr, 1)[0].second;
      std::array<double, 3> ratio{};
      for (int si = 0; si < 3; ++si) {
        const int att_top =
            prediction_histogram(edge1, cloud1, splits.test,
                                 &attacks.at({1, 1, si}), 1)[0]
                .second;
        ratio[static_cast<std::size_t>(si)] =
            static_cast<double>(att_top) / std::max(1, clean_top);
      }
      const double med = median3(ratio);
      record(9, "prediction concentration", med >= 3.0,
             "median top-1 count ratio " + fmt("%.2f", med) + "x vs clean top-1 of " +
                 std::to_string(clean_top) + " (need 3x)",
             seconds_since(t0));
    }
  }

  // -------------------------------------------------------------------------
  // 11. epsilon monotonicity per depth
  {
    if (!have_attacks) {
      record(11, "epsilon monotonicity", false,
             "attack stage unavailable: " + stage_error, 0.0);
    } else {
      bool ok = true;
      std::string detail;
      for (int depth = 1; depth <= 4; ++depth) {
        std::array<double, 3> a10{}, a16{};
        for (int si = 0; si < 3; ++si) {
          a10[static_cast<std::size_t>(si)] =
              reports.at({depth, 0, si}).attacked_accuracy;
          a16[static_cast<std::size_t>(si)] =
              reports.at({depth, 1, si}).attacked_accuracy;
        }
        const double m10 = median3(a10), m16 = median3(a16);
        if (m16 > m10 + 2.0) ok = false;
        if (!detail.empty()) detail += ", ";
        detail += "d" + std::to_string(depth) + " " + fmt("%.1f", m10) + "->" +
                  fmt("%.1f", m16);
      }
      record(11, "epsilon monotonicity", ok,
             "median attacked accuracy at eps 10/255 -> 16/255: " + detail, 0.0);
    }
  }

  // -------------------------------------------------------------------------
  // 10. ablation grid (reduced budget: the criterion is about shape and
  // reproducibility of the harness, not the cell values)
  {
    const Clock::time_point t0 = Clock::now();
    if (!have_splits) {
      record(10, "ablation grid", false, "scenario unavailable: " + stage_error,
             0.0);
    } else {
      try {
        progress("running the 2x2x4 ablation grid twice (reduced budget)");
        AttackConfig g = attack_config(kEpsilons[0], 0);
        g.epochs = 2;
        ProbeTrainConfig gp;
        gp.epochs = 5;
        gp.batch = 100;
        const std::string csv1 = run_ablation_grid(victim, splits, g, 777, gp);
        const std::string csv2 = run_ablation_grid(victim, splits, g, 777, gp);

        std::vector<std::string> lines;
        std::size_t start = 0;
        while (start < csv1.size()) {
          const std::size_t stop = csv1.find('\n', start);
          lines.push_back(csv1.substr(start, stop - start));
          if (stop == std::string::npos) break;
          start = stop + 1;
        }
        bool schema = lines.size() == 17 && lines[0] + "\n" == kCsvHeader;
        for (std::size_t i = 1; schema && i < lines.size(); ++i) {
          int commas = 0;
          for (char ch : lines[i])
            if (ch == ',') ++commas;
          if (commas != 9 || lines[i].rfind("edge_only,", 0) != 0) schema = false;
          const char depth_col = lines[i][10];  // first char after "edge_only,"
          if (depth_col < '1' || depth_col > '4') schema = false;
        }
        record(10, "ablation grid", schema && csv1 == csv2,
               std::string(schema ? "16 schema-valid rows" : "schema violation") +
                   (csv1 == csv2 ? ", byte-identical on rerun"
                                 : ", rerun differs"),
               seconds_since(t0));
      } catch (const std::exception& e) {
        record(10, "ablation grid", false, e.what(), seconds_since(t0));
      }
    }
  }

  // -------------------------------------------------------------------------
  // 12. artifact determinism across pipeline stages
  {
    const Clock::time_point t0 = Clock::now();
    if (!have_attacks) {
      record(12, "artifact determinism", false,
             "attack stage unavailable: " + stage_error, 0.0);
    } else {
      try {
        progress("re-running pipeline stages for byte comparisons");
        std::vector<std::string> mismatched;

        // dataset stage
        {
          const Dataset pool = generate_synthetic(2, 20, {1, 16, 16}, 5);
          save_dataset(out_path("data_a.ckpt"), pool);
          save_dataset(out_path("data_b.ckpt"),
                       generate_synthetic(2, 20, {1, 16, 16}, 5));
          if (read_file(out_path("data_a.ckpt")) !=
              read_file(out_path("data_b.ckpt")))
            mismatched.push_back("dataset");
        }

        // victim training stage (reduced size to keep the rerun cheap)
        {
          const Dataset small = generate_synthetic(2, 10, {1, 16, 16}, 3);
          TrainConfig tc;
          tc.epochs = 2;
          tc.batch = 5;
          tc.seed = 4;
          for (const char* name : {"victim_a.ckpt", "victim_b.ckpt"}) {
            Model m = init_model(build_model("smallconv4", 2, {1, 16, 16}), 4);
            train_victim(m, small, Dataset{}, tc);
            save_model(out_path(name), m);
          }
          if (read_file(out_path("victim_a.ckpt")) !=
              read_file(out_path("victim_b.ckpt")))
            mismatched.push_back("train");
        }

        // probe stage, at full scenario scale
        {
          save_probes(out_path("probes_a.ckpt"), probe_cache.at({1, kSeeds[0]}));
          save_probes(out_path("probes_b.ckpt"),
                      train_probes(nodes.at(1).first, splits,
                                   probe_config(kSeeds[0], 1)));
          if (read_file(out_path("probes_a.ckpt")) !=
              read_file(out_path("probes_b.ckpt")))
            mismatched.push_back("probes");
        }

        // attack stage, at full scenario scale (depth 1 is the cheap one)
        {
          save_perturbation(out_path("uap_a.ckpt"), attacks.at({1, 1, 0}));
          const AttackConfig cfg = attack_config(kEpsilons[1], kSeeds[0]);
          save_perturbation(out_path("uap_b.ckpt"),
                            edge_only_uap(nodes.at(1).first,
                                          probe_cache.at({1, kSeeds[0]}), d_opt_u,
                                          0, cfg));
          if (read_file(out_path("uap_a.ckpt")) !=
              read_file(out_path("uap_b.ckpt")))
            mismatched.push_back("attack");
        }

        // evaluation stage
        {
          auto& [edge4, cloud4] = nodes.at(4);
          const EvalReport r1 =
              evaluate(edge4, cloud4, splits.test, &attacks.at({4, 1, 0}));
          const EvalReport r2 =
              evaluate(edge4, cloud4, splits.test, &attacks.at({4, 1, 0}));
          write_file(out_path("report_a.json"), report_json(r1));
          write_file(out_path("report_b.json"), report_json(r2));
          if (read_file(out_path("report_a.json")) !=
              read_file(out_path("report_b.json")))
            mismatched.push_back("eval");
        }

        std::string detail = "dataset, train, probes, attack and eval stages "
                             "byte-identical on rerun";
        if (!mismatched.empty()) {
          detail = "stages differing on rerun:";
          for (const std::string& s : mismatched) detail += " " + s;
        }
        record(12, "artifact determinism", mismatched.empty(), detail,
               seconds_since(t0));
      } catch (const std::exception& e) {
        record(12, "artifact determinism", false, e.what(), seconds_since(t0));
      }
    }
  }

  // -------------------------------------------------------------------------
  // report
  std::sort(g_results.begin(), g_results.end(),
            [](const CheckResult& a, const CheckResult& b) { return a.id < b.id; });
  bool all_pass = true;
  std::printf("\n");
  for (const CheckResult& r : g_results) {
    all_pass = all_pass && r.pass;
    if (r.seconds > 0.05)
      std::printf("criterion %2d: %s  %s — %s (%.1fs)\n", r.id,
                  r.pass ? "PASS" : "FAIL", r.name, r.detail.c_str(), r.seconds);
    else
      std::printf("criterion %2d: %s  %s — %s\n", r.id, r.pass ? "PASS" : "FAIL",
                  r.name, r.detail.c_str());
  }
  int passed = 0;
  for (const CheckResult& r : g_results) passed += r.pass ? 1 : 0;
  std::printf("\nacceptance: %d/%zu criteria passed in %.1fs\n", passed,
              g_results.size(), seconds_since(t_start));
  return all_pass ? EXIT_SUCCESS : EXIT_FAILURE;
}
