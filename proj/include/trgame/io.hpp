#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trgame/core.hpp"
#include "trgame/game.hpp"
#include "trgame/gaussian_sep.hpp"
#include "trgame/rejectron.hpp"

namespace trgame {

enum class ExperimentKind { Game, Separation, Rejectron, AttackBench };

struct SeparationConfig {
  int d = 4096;
  double nu = 0.1;
  double c1 = 1.0;
  double epsilon = 0.5;
  double k_over_n0 = 1.0;
  int trials = 500;
  std::uint64_t seed = 0;
};

/// Attack-bench: one game instance evaluated under several attackers across
/// seeds, emitting a robust-accuracy row per (attacker, seed).
struct AttackBenchConfig {
  GameConfig game;
  std::vector<AttackerKind> attackers = {AttackerKind::Transfer, AttackerKind::Fpa,
                                         AttackerKind::GmsaAvg, AttackerKind::GmsaMin};
  int seeds = 20;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Game;
  std::string output_dir = "out";
  bool quiet = false;
  GameConfig game;
  SeparationConfig separation;
  ScenarioConfig rejectron;
  AttackBenchConfig attack_bench;
};

/// Parse and validate a JSON experiment config. Unknown keys are rejected by
/// name; defaults are resolved so the result is self-contained.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);

/// Serialize the fully-resolved config (the provenance echo written into
/// every run directory).
std::string emit_config(const ExperimentConfig& cfg);

/// Big-endian IDX image/label pair, pixels scaled into [0, 1].
LabeledSet load_mnist_idx(const std::string& images_path, const std::string& labels_path);

/// Inverse of load_mnist_idx for fixtures: features must lie in [0, 1] and
/// are quantized back to bytes; rows*cols must equal the feature dim.
void save_mnist_idx(const LabeledSet& data, int rows, int cols, const std::string& images_path,
                    const std::string& labels_path);

/// Shortest round-trip decimal formatting ('.' separator, no locale).
std::string format_double(double v);

struct ResultRow {
  std::string dataset;
  std::string trainer;
  std::string adaptor;
  std::string attacker;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
};

/// Write results.csv (stable column order, LF endings), summary.json and the
/// resolved config copy into output_dir. Byte-identical across reruns of the
/// same config.
void emit_results(const std::string& output_dir, const ExperimentConfig& cfg,
                  const std::vector<ResultRow>& rows);

void write_text_file(const std::string& path, const std::string& content);

// Dataset blobs for transcripts (magic TRDS, version, dims, doubles + labels).
void save_labeled_set(const LabeledSet& s, const std::string& path);
LabeledSet load_labeled_set(const std::string& path);

/// Persist a full game transcript (config echo, datasets, models, history,
/// valuations) into a directory for later replay.
void save_transcript(const std::string& dir, const GameConfig& cfg, const GameTranscript& t);

struct LoadedTranscript {
  GameConfig config;
  GameTranscript transcript;
  bool inductive = false;
};
LoadedTranscript load_transcript(const std::string& dir);

/// Re-execute the stored game and compare every artifact bit-exactly.
bool replay_matches(const LoadedTranscript& lt);

}  // namespace trgame
