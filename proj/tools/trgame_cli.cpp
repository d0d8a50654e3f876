#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "trgame/io.hpp"

namespace {

using namespace trgame;

// exit codes: 0 success, 2 config error, 3 protocol violation, 4 numerical failure
constexpr int kOk = 0;
constexpr int kConfigExit = 2;
constexpr int kProtocolExit = 3;
constexpr int kNumericExit = 4;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_data, seed_attacker, seed_defender;
  std::optional<int> trials;
  bool quiet = false;
};

void apply_overrides(ExperimentConfig& cfg, const CommonOpts& opt) {
  if (!opt.out_dir.empty()) cfg.output_dir = opt.out_dir;
  if (opt.quiet) cfg.quiet = true;
  auto seed_game = [&](GameConfig& g) {
    if (opt.seed_data) g.data_seed = *opt.seed_data;
    if (opt.seed_attacker) g.attacker_seed = *opt.seed_attacker;
    if (opt.seed_defender) g.defender_seed = *opt.seed_defender;
  };
  seed_game(cfg.game);
  seed_game(cfg.attack_bench.game);
  if (opt.seed_data) {
    cfg.separation.seed = *opt.seed_data;
    cfg.rejectron.seed = *opt.seed_data;
  }
  if (opt.trials) cfg.separation.trials = *opt.trials;
}

std::string attacker_label(AttackerKind k) {
  switch (k) {
    case AttackerKind::Pgd:
      return "pgd";
    case AttackerKind::Transfer:
      return "transfer";
    case AttackerKind::Fpa:
      return "fpa";
    case AttackerKind::GmsaAvg:
      return "gmsa_avg";
    case AttackerKind::GmsaMin:
      return "gmsa_min";
  }
  return "?";
}

std::string dataset_label(const DataSpec& d) {
  if (d.idx_images) return "idx";
  switch (d.kind) {
    case SyntheticKind::TwoGaussians:
      return "two_gaussians";
    case SyntheticKind::Blobs2D:
      return "blobs2d";
    case SyntheticKind::Rings:
      return "rings";
  }
  return "?";
}

std::string trainer_label(TrainerKind k) {
  return k == TrainerKind::Standard ? "standard" : "adversarial";
}

std::string adaptor_label(AdaptorKind k) {
  switch (k) {
    case AdaptorKind::Identity:
      return "identity";
    case AdaptorKind::RetrainMatching:
      return "retrain_matching";
    case AdaptorKind::Atrm:
      return "atrm";
    case AdaptorKind::Rmc:
      return "rmc";
  }
  return "?";
}

ResultRow row_from_transcript(const GameConfig& g, const GameTranscript& t) {
  ResultRow r;
  r.dataset = dataset_label(g.data);
  r.trainer = trainer_label(g.trainer.kind);
  r.adaptor = adaptor_label(g.adaptor.kind);
  r.attacker = attacker_label(g.attacker.kind);
  r.epsilon = g.budget.epsilon;
  r.seed = g.data_seed;
  r.clean_acc = t.clean_accuracy;
  r.robust_acc = 1.0 - t.referee_valuation;
  return r;
}

int run_game(const ExperimentConfig& cfg) {
  GameTranscript t = play_transductive_game(cfg.game);
  emit_results(cfg.output_dir, cfg, {row_from_transcript(cfg.game, t)});
  save_transcript(cfg.output_dir + "/transcript", cfg.game, t);
  if (!cfg.quiet) {
    std::cout << "clean_acc=" << format_double(t.clean_accuracy)
              << " robust_acc=" << format_double(1.0 - t.referee_valuation)
              << " referee_valuation=" << format_double(t.referee_valuation)
              << " attacker_valuation=" << format_double(t.attacker_valuation) << "\n";
  }
  return kOk;
}

int run_separation(const ExperimentConfig& cfg) {
  const SeparationConfig& s = cfg.separation;
  GaussianInstance inst =
      GaussianInstance::theorem_regime(s.d, s.nu, s.c1, s.epsilon, s.k_over_n0, s.seed);
  SeparationReport rep = run_separation(inst, s.trials, s.seed);

  std::filesystem::create_directories(cfg.output_dir);
  std::string csv = "trial,arm,error\n";
  for (int i = 0; i < rep.trials; ++i) {
    csv += std::to_string(i) + ",inductive," + std::to_string(rep.inductive_err_flags[i]) + "\n";
    csv +=
        std::to_string(i) + ",transductive," + std::to_string(rep.transductive_err_flags[i]) + "\n";
  }
  write_text_file(cfg.output_dir + "/separation.csv", csv);

  std::string summary = std::string("{\n") +
      "  \"d\": " + std::to_string(s.d) + ",\n" +
      "  \"nu\": " + format_double(s.nu) + ",\n" +
      "  \"c1\": " + format_double(s.c1) + ",\n" +
      "  \"epsilon\": " + format_double(s.epsilon) + ",\n" +
      "  \"sigma\": " + format_double(inst.sigma) + ",\n" +
      "  \"m\": " + std::to_string(inst.m) + ",\n" +
      "  \"m_prime\": " + std::to_string(inst.m_prime) + ",\n" +
      "  \"trials\": " + std::to_string(rep.trials) + ",\n" +
      "  \"inductive_error\": " + format_double(rep.inductive_error) + ",\n" +
      "  \"inductive_ci\": [" + format_double(rep.inductive_ci.lo) + ", " +
      format_double(rep.inductive_ci.hi) + "],\n" +
      "  \"transductive_error\": " + format_double(rep.transductive_error) + ",\n" +
      "  \"transductive_ci\": [" + format_double(rep.transductive_ci.lo) + ", " +
      format_double(rep.transductive_ci.hi) + "],\n" +
      "  \"mean_analytic_inductive_error\": " +
      format_double(rep.mean_analytic_inductive_error) + "\n}\n";
  write_text_file(cfg.output_dir + "/summary.json", summary);
  write_text_file(cfg.output_dir + "/config.resolved.json", emit_config(cfg));
  if (!cfg.quiet) {
    std::cout << "inductive_error=" << format_double(rep.inductive_error)
              << " transductive_error=" << format_double(rep.transductive_error) << "\n";
  }
  return kOk;
}

int run_rejectron(const ExperimentConfig& cfg) {
  ScenarioResult res = run_failure_mode_experiment(cfg.rejectron);
  std::filesystem::create_directories(cfg.output_dir);
  auto dump = [&](const std::vector<SweepPoint>& curve, const std::string& name) {
    std::string csv = "threshold,rej,err,err_defined\n";
    for (const SweepPoint& p : curve) {
      csv += format_double(p.threshold) + "," + format_double(p.rej) + ",";
      csv += p.err ? format_double(*p.err) : std::string("");
      csv += std::string(",") + (p.err ? "1" : "0") + "\n";
    }
    write_text_file(cfg.output_dir + "/" + name + ".csv", csv);
  };
  dump(res.pgd_curve, "curve_pgd");
  dump(res.benign_curve, "curve_benign");
  dump(res.mimic_curve, "curve_mimic");
  write_text_file(cfg.output_dir + "/config.resolved.json", emit_config(cfg));
  if (!cfg.quiet) std::cout << "wrote curve_pgd.csv curve_benign.csv curve_mimic.csv\n";
  return kOk;
}

int run_attack_bench(const ExperimentConfig& cfg) {
  const AttackBenchConfig& ab = cfg.attack_bench;
  std::vector<ResultRow> rows;
  for (AttackerKind attacker : ab.attackers) {
    for (int s = 0; s < ab.seeds; ++s) {
      GameConfig g = ab.game;
      g.attacker.kind = attacker;
      g.data_seed = ab.game.data_seed + static_cast<std::uint64_t>(s);
      g.attacker_seed = ab.game.attacker_seed + static_cast<std::uint64_t>(s);
      g.defender_seed = ab.game.defender_seed + static_cast<std::uint64_t>(s);
      GameTranscript t = play_transductive_game(g);
      rows.push_back(row_from_transcript(g, t));
      if (!cfg.quiet)
        std::cout << attacker_label(attacker) << " seed=" << s
                  << " robust_acc=" << format_double(rows.back().robust_acc) << "\n";
    }
  }
  emit_results(cfg.output_dir, cfg, rows);
  return kOk;
}

int run_replay(const std::string& dir, bool quiet) {
  LoadedTranscript lt = load_transcript(dir);
  const bool ok = replay_matches(lt);
  if (!quiet) std::cout << (ok ? "replay OK: bit-identical\n" : "replay MISMATCH\n");
  return ok ? kOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transductive robustness game runner"};
  app.require_subcommand(1);

  CommonOpts opt;
  std::string replay_dir;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* c = sub->add_option("--config", opt.config_path, "experiment config (JSON)");
    if (need_config) c->required();
    sub->add_option("--out", opt.out_dir, "output directory override");
    sub->add_option("--seed-data", opt.seed_data, "data seed override");
    sub->add_option("--seed-attacker", opt.seed_attacker, "attacker seed override");
    sub->add_option("--seed-defender", opt.seed_defender, "defender seed override");
    sub->add_option("--trials", opt.trials, "trial count override");
    sub->add_flag("--quiet", opt.quiet, "suppress progress output");
  };

  CLI::App* cmd_run = app.add_subcommand("run", "run any experiment config");
  add_common(cmd_run, true);
  CLI::App* cmd_sep = app.add_subcommand("separation", "two-Gaussian separation experiment");
  add_common(cmd_sep, false);
  CLI::App* cmd_rej = app.add_subcommand("rejectron", "rejection-metric failure-mode curves");
  add_common(cmd_rej, false);
  CLI::App* cmd_bench = app.add_subcommand("attack-bench", "attacker comparison over seeds");
  add_common(cmd_bench, true);
  CLI::App* cmd_replay = app.add_subcommand("replay", "re-execute a transcript and compare");
  cmd_replay->add_option("transcript", replay_dir, "transcript directory")->required();
  cmd_replay->add_flag("--quiet", opt.quiet, "suppress output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_replay->parsed()) return run_replay(replay_dir, opt.quiet);

    ExperimentConfig cfg;
    if (!opt.config_path.empty()) cfg = load_config(opt.config_path);
    if (cmd_sep->parsed()) cfg.kind = ExperimentKind::Separation;
    if (cmd_rej->parsed()) cfg.kind = ExperimentKind::Rejectron;
    if (cmd_bench->parsed()) cfg.kind = ExperimentKind::AttackBench;
    apply_overrides(cfg, opt);

    switch (cfg.kind) {
      case ExperimentKind::Game:
        return run_game(cfg);
      case ExperimentKind::Separation:
        return run_separation(cfg);
      case ExperimentKind::Rejectron:
        return run_rejectron(cfg);
      case ExperimentKind::AttackBench:
        return run_attack_bench(cfg);
    }
    return kOk;
  } catch (const trgame::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const trgame::ProtocolViolation& e) {
    std::cerr << "protocol violation: " << e.what() << "\n";
    return kProtocolExit;
  } catch (const trgame::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
