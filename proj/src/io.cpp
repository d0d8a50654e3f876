#include "trgame/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

namespace trgame {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

namespace {

std::uint32_t read_be32(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataFormatError(std::string("Truncated: ") + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

LabeledSet load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream im(images_path, std::ios::binary);
  if (!im) throw IoError("cannot open " + images_path);
  std::ifstream lb(labels_path, std::ios::binary);
  if (!lb) throw IoError("cannot open " + labels_path);

  if (read_be32(im, "image magic") != 2051u)
    throw DataFormatError("BadMagic: image file magic != 2051");
  const std::uint32_t count = read_be32(im, "image count");
  const std::uint32_t rows = read_be32(im, "image rows");
  const std::uint32_t cols = read_be32(im, "image cols");

  if (read_be32(lb, "label magic") != 2049u)
    throw DataFormatError("BadMagic: label file magic != 2049");
  const std::uint32_t label_count = read_be32(lb, "label count");
  if (label_count != count)
    throw DataFormatError("CountMismatch: labels=" + std::to_string(label_count) +
                          " images=" + std::to_string(count));

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  LabeledSet out;
  out.features.resize(count, static_cast<Eigen::Index>(pixels));
  out.labels.resize(count);
  std::vector<unsigned char> buf(pixels);
  for (std::uint32_t i = 0; i < count; ++i) {
    im.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
    if (!im) throw DataFormatError("Truncated: image data");
    for (std::size_t p = 0; p < pixels; ++p)
      out.features(i, static_cast<Eigen::Index>(p)) = buf[p] / 255.0;  // row-major flatten
    int y = lb.get();
    if (y == EOF) throw DataFormatError("Truncated: label data");
    out.labels[i] = y;
  }
  return out;
}

void save_mnist_idx(const LabeledSet& data, int rows, int cols, const std::string& images_path,
                    const std::string& labels_path) {
  if (static_cast<Eigen::Index>(rows) * cols != data.dim())
    throw BadParams("save_mnist_idx: rows*cols != feature dim");
  data.validate(/*unit_box=*/true);
  std::ofstream im(images_path, std::ios::binary);
  if (!im) throw IoError("cannot open " + images_path);
  std::ofstream lb(labels_path, std::ios::binary);
  if (!lb) throw IoError("cannot open " + labels_path);
  write_be32(im, 2051u);
  write_be32(im, static_cast<std::uint32_t>(data.size()));
  write_be32(im, static_cast<std::uint32_t>(rows));
  write_be32(im, static_cast<std::uint32_t>(cols));
  write_be32(lb, 2049u);
  write_be32(lb, static_cast<std::uint32_t>(data.size()));
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index p = 0; p < data.dim(); ++p) {
      const int v = static_cast<int>(std::lround(data.features(i, p) * 255.0));
      im.put(static_cast<char>(std::clamp(v, 0, 255)));
    }
    lb.put(static_cast<char>(data.labels[i]));
  }
  if (!im || !lb) throw IoError("save_mnist_idx: write failed");
}

// ---------------------------------------------------------------------------
// config parsing
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void unknown_key(const std::string& key, const char* ctx) {
  throw ConfigError(std::string("unknown key '") + key + "' in " + ctx);
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* ctx) {
  if (!j.is_object()) throw ConfigError(std::string(ctx) + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) unknown_key(it.key(), ctx);
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

Vec get_vec(const json& j, const char* key, const Vec& fallback) {
  if (!j.contains(key)) return fallback;
  const auto arr = j.at(key).get<std::vector<double>>();
  Vec v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i];
  return v;
}

template <class Enum>
Enum parse_enum(const json& j, const char* key, const std::map<std::string, Enum>& table,
                Enum fallback) {
  if (!j.contains(key)) return fallback;
  const std::string s = j.at(key).get<std::string>();
  auto it = table.find(s);
  if (it == table.end()) throw ConfigError(std::string("bad value '") + s + "' for '" + key + "'");
  return it->second;
}

template <class Enum>
std::string enum_name(Enum v, const std::map<std::string, Enum>& table) {
  for (const auto& [name, val] : table)
    if (val == v) return name;
  return "?";
}

const std::map<std::string, SyntheticKind> kGeneratorNames = {
    {"two_gaussians", SyntheticKind::TwoGaussians},
    {"blobs2d", SyntheticKind::Blobs2D},
    {"rings", SyntheticKind::Rings}};
const std::map<std::string, TrainerKind> kTrainerNames = {
    {"standard", TrainerKind::Standard}, {"adversarial", TrainerKind::Adversarial}};
const std::map<std::string, AdaptorKind> kAdaptorNames = {{"identity", AdaptorKind::Identity},
                                                          {"retrain_matching",
                                                           AdaptorKind::RetrainMatching},
                                                          {"atrm", AdaptorKind::Atrm},
                                                          {"rmc", AdaptorKind::Rmc}};
const std::map<std::string, AttackerKind> kAttackerNames = {{"pgd", AttackerKind::Pgd},
                                                            {"transfer", AttackerKind::Transfer},
                                                            {"fpa", AttackerKind::Fpa},
                                                            {"gmsa_avg", AttackerKind::GmsaAvg},
                                                            {"gmsa_min", AttackerKind::GmsaMin}};
const std::map<std::string, Optimizer> kOptimizerNames = {{"sgd", Optimizer::Sgd},
                                                          {"adam", Optimizer::Adam}};
const std::map<std::string, Matcher> kMatcherNames = {
    {"mean_feature", Matcher::MeanFeature}, {"discriminator", Matcher::Discriminator}};
const std::map<std::string, AlphaSchedule> kScheduleNames = {
    {"constant", AlphaSchedule::Constant}, {"progressive", AlphaSchedule::Progressive}};
const std::map<std::string, ExperimentKind> kKindNames = {
    {"game", ExperimentKind::Game},
    {"separation", ExperimentKind::Separation},
    {"rejectron", ExperimentKind::Rejectron},
    {"attack_bench", ExperimentKind::AttackBench}};

PerturbationBudget budget_from_json(const json& j, const char* ctx,
                                    const PerturbationBudget& fallback) {
  check_keys(j, {"epsilon", "step_size", "steps", "random_init", "clip_unit_box"}, ctx);
  PerturbationBudget b = fallback;
  b.epsilon = get_or(j, "epsilon", b.epsilon);
  b.step_size = get_or(j, "step_size", b.step_size);
  b.steps = get_or(j, "steps", b.steps);
  b.random_init = get_or(j, "random_init", b.random_init);
  b.clip_unit_box = get_or(j, "clip_unit_box", b.clip_unit_box);
  b.validate();
  return b;
}

json budget_to_json(const PerturbationBudget& b) {
  return json{{"epsilon", b.epsilon},
              {"step_size", b.step_size},
              {"steps", b.steps},
              {"random_init", b.random_init},
              {"clip_unit_box", b.clip_unit_box}};
}

void train_cfg_from_json(const json& j, TrainConfig& cfg) {
  cfg.epochs = get_or(j, "epochs", cfg.epochs);
  cfg.batch_size = get_or(j, "batch_size", cfg.batch_size);
  cfg.learning_rate = get_or(j, "learning_rate", cfg.learning_rate);
  cfg.optimizer = parse_enum(j, "optimizer", kOptimizerNames, cfg.optimizer);
  cfg.weight_decay = get_or(j, "weight_decay", cfg.weight_decay);
  if (j.contains("early_stop_patience") && !j.at("early_stop_patience").is_null())
    cfg.early_stop_patience = j.at("early_stop_patience").get<int>();
}

void train_cfg_to_json(json& j, const TrainConfig& cfg) {
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["optimizer"] = enum_name(cfg.optimizer, kOptimizerNames);
  j["weight_decay"] = cfg.weight_decay;
  j["early_stop_patience"] =
      cfg.early_stop_patience ? json(*cfg.early_stop_patience) : json(nullptr);
}

DataSpec data_from_json(const json& j) {
  check_keys(j,
             {"generator", "noise", "center0", "center1", "dim", "sigma", "mu_seed", "radius0",
              "radius1", "idx_images", "idx_labels"},
             "data");
  DataSpec d;
  d.kind = parse_enum(j, "generator", kGeneratorNames, d.kind);
  d.noise = get_or(j, "noise", d.noise);
  d.center0 = get_vec(j, "center0", d.center0);
  d.center1 = get_vec(j, "center1", d.center1);
  d.dim = get_or(j, "dim", d.dim);
  d.sigma = get_or(j, "sigma", d.sigma);
  d.mu_seed = get_or<std::uint64_t>(j, "mu_seed", d.mu_seed);
  d.radius0 = get_or(j, "radius0", d.radius0);
  d.radius1 = get_or(j, "radius1", d.radius1);
  if (j.contains("idx_images")) d.idx_images = j.at("idx_images").get<std::string>();
  if (j.contains("idx_labels")) d.idx_labels = j.at("idx_labels").get<std::string>();
  d.validate();
  return d;
}

json data_to_json(const DataSpec& d) {
  json j;
  j["generator"] = enum_name(d.kind, kGeneratorNames);
  j["noise"] = d.noise;
  j["center0"] = std::vector<double>(d.center0.data(), d.center0.data() + d.center0.size());
  j["center1"] = std::vector<double>(d.center1.data(), d.center1.data() + d.center1.size());
  j["dim"] = d.dim;
  j["sigma"] = d.sigma;
  j["mu_seed"] = d.mu_seed;
  j["radius0"] = d.radius0;
  j["radius1"] = d.radius1;
  if (d.idx_images) j["idx_images"] = *d.idx_images;
  if (d.idx_labels) j["idx_labels"] = *d.idx_labels;
  return j;
}

int data_input_dim(const DataSpec& d) {
  if (d.idx_images) {
    std::ifstream im(*d.idx_images, std::ios::binary);
    if (!im) throw IoError("cannot open " + *d.idx_images);
    read_be32(im, "magic");
    read_be32(im, "count");
    const auto rows = read_be32(im, "rows");
    const auto cols = read_be32(im, "cols");
    return static_cast<int>(rows * cols);
  }
  switch (d.kind) {
    case SyntheticKind::Blobs2D:
      return static_cast<int>(d.center0.size());
    case SyntheticKind::TwoGaussians:
      return d.dim;
    case SyntheticKind::Rings:
      return 2;
  }
  throw BadParams("data_input_dim: unknown generator");
}

GameConfig game_from_json(const json& j) {
  check_keys(j,
             {"data", "n_train", "n_test", "budget", "trainer", "adaptor", "attacker", "seeds",
              "leak_labels_to_adaptor"},
             "game");
  GameConfig g;
  if (j.contains("data")) g.data = data_from_json(j.at("data"));
  g.n_train = get_or(j, "n_train", g.n_train);
  g.n_test = get_or(j, "n_test", g.n_test);
  if (j.contains("budget")) g.budget = budget_from_json(j.at("budget"), "budget", g.budget);
  g.leak_labels_to_adaptor = get_or(j, "leak_labels_to_adaptor", g.leak_labels_to_adaptor);

  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    check_keys(s, {"data", "attacker", "defender"}, "seeds");
    g.data_seed = get_or<std::uint64_t>(s, "data", g.data_seed);
    g.attacker_seed = get_or<std::uint64_t>(s, "attacker", g.attacker_seed);
    g.defender_seed = get_or<std::uint64_t>(s, "defender", g.defender_seed);
  }

  // trainer: architecture is hidden layers + class count; the input width
  // comes from the data source
  TrainerSpec& tr = g.trainer;
  tr.cfg.epochs = 150;
  tr.cfg.batch_size = 16;
  std::vector<int> hidden = {8};
  int classes = 2;
  int cut = 1;
  if (j.contains("trainer")) {
    const json& t = j.at("trainer");
    check_keys(t,
               {"kind", "epochs", "batch_size", "learning_rate", "optimizer", "weight_decay",
                "early_stop_patience", "hidden", "classes", "representation_cut", "adv_budget"},
               "trainer");
    tr.kind = parse_enum(t, "kind", kTrainerNames, tr.kind);
    train_cfg_from_json(t, tr.cfg);
    hidden = get_or(t, "hidden", hidden);
    classes = get_or(t, "classes", classes);
    cut = get_or(t, "representation_cut", cut);
    tr.adv_budget = t.contains("adv_budget")
                        ? budget_from_json(t.at("adv_budget"), "adv_budget", g.budget)
                        : g.budget;
  } else {
    tr.adv_budget = g.budget;
  }
  tr.arch.layer_dims.clear();
  tr.arch.layer_dims.push_back(data_input_dim(g.data));
  tr.arch.layer_dims.insert(tr.arch.layer_dims.end(), hidden.begin(), hidden.end());
  tr.arch.layer_dims.push_back(classes);
  tr.arch.representation_cut = std::min(cut, static_cast<int>(tr.arch.layer_dims.size()) - 1);

  AdaptorSpec& ad = g.adaptor;
  ad.cfg.epochs = 150;
  ad.cfg.batch_size = 16;
  ad.inner_budget = g.budget;
  if (j.contains("adaptor")) {
    const json& a = j.at("adaptor");
    check_keys(a,
               {"kind", "epochs", "batch_size", "learning_rate", "optimizer", "weight_decay",
                "early_stop_patience", "matcher", "schedule", "alpha_max", "inner_budget",
                "rmc_k", "rmc_adv_copies"},
               "adaptor");
    ad.kind = parse_enum(a, "kind", kAdaptorNames, ad.kind);
    train_cfg_from_json(a, ad.cfg);
    ad.matcher = parse_enum(a, "matcher", kMatcherNames, ad.matcher);
    ad.schedule = parse_enum(a, "schedule", kScheduleNames, ad.schedule);
    ad.alpha_max = get_or(a, "alpha_max", ad.alpha_max);
    if (a.contains("inner_budget"))
      ad.inner_budget = budget_from_json(a.at("inner_budget"), "inner_budget", g.budget);
    ad.rmc_k = get_or(a, "rmc_k", ad.rmc_k);
    ad.rmc_adv_copies = get_or(a, "rmc_adv_copies", ad.rmc_adv_copies);
  }

  if (j.contains("attacker")) {
    const json& a = j.at("attacker");
    check_keys(a, {"kind", "iterations"}, "attacker");
    g.attacker.kind = parse_enum(a, "kind", kAttackerNames, g.attacker.kind);
    g.attacker.iterations = get_or(a, "iterations", g.attacker.iterations);
  }
  g.validate();
  return g;
}

json game_to_json(const GameConfig& g) {
  json j;
  j["data"] = data_to_json(g.data);
  j["n_train"] = g.n_train;
  j["n_test"] = g.n_test;
  j["budget"] = budget_to_json(g.budget);
  j["seeds"] = {{"data", g.data_seed}, {"attacker", g.attacker_seed},
                {"defender", g.defender_seed}};
  j["leak_labels_to_adaptor"] = g.leak_labels_to_adaptor;

  json t;
  t["kind"] = enum_name(g.trainer.kind, kTrainerNames);
  train_cfg_to_json(t, g.trainer.cfg);
  std::vector<int> hidden(g.trainer.arch.layer_dims.begin() + 1,
                          g.trainer.arch.layer_dims.end() - 1);
  t["hidden"] = hidden;
  t["classes"] = g.trainer.arch.layer_dims.back();
  t["representation_cut"] = g.trainer.arch.representation_cut;
  t["adv_budget"] = budget_to_json(g.trainer.adv_budget);
  j["trainer"] = t;

  json a;
  a["kind"] = enum_name(g.adaptor.kind, kAdaptorNames);
  train_cfg_to_json(a, g.adaptor.cfg);
  a["matcher"] = enum_name(g.adaptor.matcher, kMatcherNames);
  a["schedule"] = enum_name(g.adaptor.schedule, kScheduleNames);
  a["alpha_max"] = g.adaptor.alpha_max;
  a["inner_budget"] = budget_to_json(g.adaptor.inner_budget);
  a["rmc_k"] = g.adaptor.rmc_k;
  a["rmc_adv_copies"] = g.adaptor.rmc_adv_copies;
  j["adaptor"] = a;

  j["attacker"] = {{"kind", enum_name(g.attacker.kind, kAttackerNames)},
                   {"iterations", g.attacker.iterations}};
  return j;
}

SeparationConfig separation_from_json(const json& j) {
  check_keys(j, {"d", "nu", "c1", "epsilon", "k_over_n0", "trials", "seed"}, "separation");
  SeparationConfig s;
  s.d = get_or(j, "d", s.d);
  s.nu = get_or(j, "nu", s.nu);
  s.c1 = get_or(j, "c1", s.c1);
  s.epsilon = get_or(j, "epsilon", s.epsilon);
  s.k_over_n0 = get_or(j, "k_over_n0", s.k_over_n0);
  s.trials = get_or(j, "trials", s.trials);
  s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
  return s;
}

json separation_to_json(const SeparationConfig& s) {
  return json{{"d", s.d},           {"nu", s.nu},         {"c1", s.c1},
              {"epsilon", s.epsilon}, {"k_over_n0", s.k_over_n0}, {"trials", s.trials},
              {"seed", s.seed}};
}

ScenarioConfig rejectron_from_json(const json& j) {
  check_keys(j,
             {"n_train", "n_eval", "blob_noise", "budget", "benign_shift", "mimic_lambda",
              "thresholds", "classifier", "discriminator", "seed"},
             "rejectron");
  ScenarioConfig c;
  c.classifier_cfg.epochs = 120;
  c.discriminator_cfg.epochs = 120;
  c.n_train = get_or(j, "n_train", c.n_train);
  c.n_eval = get_or(j, "n_eval", c.n_eval);
  c.blob_noise = get_or(j, "blob_noise", c.blob_noise);
  c.budget.epsilon = 1.1;
  c.budget.step_size = 0.05;
  c.budget.steps = 60;
  if (j.contains("budget")) c.budget = budget_from_json(j.at("budget"), "budget", c.budget);
  c.benign_shift = get_or(j, "benign_shift", c.benign_shift);
  c.mimic_lambda = get_or(j, "mimic_lambda", c.mimic_lambda);
  c.thresholds = get_or(j, "thresholds", c.thresholds);
  if (j.contains("classifier")) {
    check_keys(j.at("classifier"),
               {"epochs", "batch_size", "learning_rate", "optimizer", "weight_decay",
                "early_stop_patience"},
               "classifier");
    train_cfg_from_json(j.at("classifier"), c.classifier_cfg);
  }
  if (j.contains("discriminator")) {
    check_keys(j.at("discriminator"),
               {"epochs", "batch_size", "learning_rate", "optimizer", "weight_decay",
                "early_stop_patience"},
               "discriminator");
    train_cfg_from_json(j.at("discriminator"), c.discriminator_cfg);
  }
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  return c;
}

json rejectron_to_json(const ScenarioConfig& c) {
  json clf, disc;
  train_cfg_to_json(clf, c.classifier_cfg);
  train_cfg_to_json(disc, c.discriminator_cfg);
  return json{{"n_train", c.n_train},
              {"n_eval", c.n_eval},
              {"blob_noise", c.blob_noise},
              {"budget", budget_to_json(c.budget)},
              {"benign_shift", c.benign_shift},
              {"mimic_lambda", c.mimic_lambda},
              {"thresholds", c.thresholds},
              {"classifier", clf},
              {"discriminator", disc},
              {"seed", c.seed}};
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("ParseError: ") + e.what());
  }
  check_keys(j, {"kind", "output_dir", "quiet", "game", "separation", "rejectron", "attack_bench"},
             "config");
  ExperimentConfig cfg;
  if (!j.contains("kind")) throw ConfigError("missing required key 'kind'");
  cfg.kind = parse_enum(j, "kind", kKindNames, cfg.kind);
  cfg.output_dir = get_or<std::string>(j, "output_dir", cfg.output_dir);
  cfg.quiet = get_or(j, "quiet", cfg.quiet);
  if (j.contains("game")) cfg.game = game_from_json(j.at("game"));
  if (j.contains("separation")) cfg.separation = separation_from_json(j.at("separation"));
  if (j.contains("rejectron")) cfg.rejectron = rejectron_from_json(j.at("rejectron"));
  if (j.contains("attack_bench")) {
    const json& ab = j.at("attack_bench");
    check_keys(ab, {"game", "seeds", "attackers"}, "attack_bench");
    if (ab.contains("game")) cfg.attack_bench.game = game_from_json(ab.at("game"));
    cfg.attack_bench.seeds = get_or(ab, "seeds", cfg.attack_bench.seeds);
    if (ab.contains("attackers")) {
      cfg.attack_bench.attackers.clear();
      for (const auto& name : ab.at("attackers")) {
        auto it = kAttackerNames.find(name.get<std::string>());
        if (it == kAttackerNames.end())
          throw ConfigError("bad attacker name '" + name.get<std::string>() + "'");
        cfg.attack_bench.attackers.push_back(it->second);
      }
    }
  }
  // kind-specific required sections
  if (cfg.kind == ExperimentKind::Game && !j.contains("game"))
    throw ConfigError("kind 'game' requires a 'game' section");
  if (cfg.kind == ExperimentKind::AttackBench && !j.contains("attack_bench"))
    throw ConfigError("kind 'attack_bench' requires an 'attack_bench' section");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const ExperimentConfig& cfg) {
  json j;
  j["kind"] = enum_name(cfg.kind, kKindNames);
  j["output_dir"] = cfg.output_dir;
  j["quiet"] = cfg.quiet;
  j["game"] = game_to_json(cfg.game);
  j["separation"] = separation_to_json(cfg.separation);
  j["rejectron"] = rejectron_to_json(cfg.rejectron);
  json ab;
  ab["game"] = game_to_json(cfg.attack_bench.game);
  ab["seeds"] = cfg.attack_bench.seeds;
  std::vector<std::string> names;
  for (AttackerKind k : cfg.attack_bench.attackers) names.push_back(enum_name(k, kAttackerNames));
  ab["attackers"] = names;
  j["attack_bench"] = ab;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// results
// ---------------------------------------------------------------------------

void emit_results(const std::string& output_dir, const ExperimentConfig& cfg,
                  const std::vector<ResultRow>& rows) {
  fs::create_directories(output_dir);
  std::string csv = "dataset,trainer,adaptor,attacker,epsilon,seed,clean_acc,robust_acc\n";
  for (const ResultRow& r : rows) {
    csv += r.dataset + "," + r.trainer + "," + r.adaptor + "," + r.attacker + "," +
           format_double(r.epsilon) + "," + std::to_string(r.seed) + "," +
           format_double(r.clean_acc) + "," + format_double(r.robust_acc) + "\n";
  }
  write_text_file(output_dir + "/results.csv", csv);

  json summary;
  summary["rows"] = rows.size();
  if (!rows.empty()) {
    double clean = 0.0, robust = 0.0;
    std::map<std::string, std::pair<double, int>> per_attacker;
    for (const ResultRow& r : rows) {
      clean += r.clean_acc;
      robust += r.robust_acc;
      auto& [acc, n] = per_attacker[r.attacker];
      acc += r.robust_acc;
      ++n;
    }
    summary["mean_clean_acc"] = clean / static_cast<double>(rows.size());
    summary["mean_robust_acc"] = robust / static_cast<double>(rows.size());
    json pa;
    for (const auto& [name, acc_n] : per_attacker)
      pa[name] = acc_n.first / acc_n.second;
    summary["mean_robust_acc_by_attacker"] = pa;
  }
  write_text_file(output_dir + "/summary.json", summary.dump(2) + "\n");
  write_text_file(output_dir + "/config.resolved.json", emit_config(cfg));
}

// ---------------------------------------------------------------------------
// dataset blobs and transcripts
// ---------------------------------------------------------------------------

namespace {
constexpr std::uint32_t kSetMagic = 0x54524453;  // "TRDS"

template <class T>
void wpod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T rpod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataFormatError("dataset blob truncated");
  return v;
}
}  // namespace

void save_labeled_set(const LabeledSet& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path);
  wpod(out, kSetMagic);
  wpod(out, static_cast<std::uint32_t>(1));
  wpod(out, static_cast<std::uint64_t>(s.size()));
  wpod(out, static_cast<std::uint64_t>(s.dim()));
  for (Eigen::Index i = 0; i < s.size(); ++i)
    for (Eigen::Index j = 0; j < s.dim(); ++j) wpod(out, s.features(i, j));
  for (int y : s.labels) wpod(out, static_cast<std::int32_t>(y));
  if (!out) throw IoError("write failed: " + path);
}

LabeledSet load_labeled_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  if (rpod<std::uint32_t>(in) != kSetMagic) throw DataFormatError("dataset blob: bad magic");
  if (rpod<std::uint32_t>(in) != 1u) throw DataFormatError("dataset blob: bad version");
  const auto n = rpod<std::uint64_t>(in);
  const auto d = rpod<std::uint64_t>(in);
  LabeledSet s;
  s.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::uint64_t i = 0; i < n; ++i)
    for (std::uint64_t j = 0; j < d; ++j)
      s.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rpod<double>(in);
  s.labels.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) s.labels[i] = rpod<std::int32_t>(in);
  return s;
}

void save_transcript(const std::string& dir, const GameConfig& cfg, const GameTranscript& t) {
  fs::create_directories(dir);
  json meta;
  meta["protocol"] = cfg.adaptor.kind == AdaptorKind::Identity ? "inductive" : "transductive";
  meta["config"] = game_to_json(cfg);
  meta["attacker_valuation"] = t.attacker_valuation;
  meta["referee_valuation"] = t.referee_valuation;
  meta["clean_accuracy"] = t.clean_accuracy;
  meta["history_valuations"] = t.history.valuations;
  meta["history_selected"] = t.history.selected;
  meta["history_models"] = t.history.models.size();
  write_text_file(dir + "/meta.json", meta.dump(2) + "\n");
  save_labeled_set(t.d, dir + "/D.tds");
  save_labeled_set(t.v, dir + "/V.tds");
  save_labeled_set(t.v_prime, dir + "/Vprime.tds");
  save_model_file(t.f, dir + "/F.tmb");
  save_model_file(t.f_star, dir + "/Fstar.tmb");
  for (std::size_t i = 0; i < t.history.models.size(); ++i)
    save_model_file(t.history.models[i], dir + "/history_model_" + std::to_string(i) + ".tmb");
  for (std::size_t i = 0; i < t.history.attack_sets.size(); ++i)
    save_labeled_set(t.history.attack_sets[i],
                     dir + "/history_attack_" + std::to_string(i) + ".tds");
}

LoadedTranscript load_transcript(const std::string& dir) {
  std::ifstream in(dir + "/meta.json");
  if (!in) throw IoError("cannot open transcript meta: " + dir);
  json meta = json::parse(in);
  LoadedTranscript lt;
  lt.config = game_from_json(meta.at("config"));
  lt.inductive = meta.at("protocol").get<std::string>() == "inductive";
  GameTranscript& t = lt.transcript;
  t.attacker_valuation = meta.at("attacker_valuation").get<double>();
  t.referee_valuation = meta.at("referee_valuation").get<double>();
  t.clean_accuracy = meta.at("clean_accuracy").get<double>();
  t.history.valuations = meta.at("history_valuations").get<std::vector<double>>();
  t.history.selected = meta.at("history_selected").get<std::size_t>();
  t.d = load_labeled_set(dir + "/D.tds");
  t.v = load_labeled_set(dir + "/V.tds");
  t.v_prime = load_labeled_set(dir + "/Vprime.tds");
  t.f = load_model_file(dir + "/F.tmb");
  t.f_star = load_model_file(dir + "/Fstar.tmb");
  const auto n_models = meta.at("history_models").get<std::size_t>();
  for (std::size_t i = 0; i < n_models; ++i)
    t.history.models.push_back(load_model_file(dir + "/history_model_" + std::to_string(i) + ".tmb"));
  for (std::size_t i = 0; i + 1 < n_models; ++i)
    t.history.attack_sets.push_back(
        load_labeled_set(dir + "/history_attack_" + std::to_string(i) + ".tds"));
  return lt;
}

namespace {

bool sets_equal(const LabeledSet& a, const LabeledSet& b) {
  if (a.size() != b.size() || a.dim() != b.dim() || a.labels != b.labels) return false;
  return std::memcmp(a.features.data(), b.features.data(), sizeof(double) * a.features.size()) ==
         0;
}

}  // namespace

bool replay_matches(const LoadedTranscript& lt) {
  GameTranscript fresh = lt.inductive ? play_inductive_game(lt.config)
                                      : play_transductive_game(lt.config);
  if (!sets_equal(fresh.d, lt.transcript.d)) return false;
  if (!sets_equal(fresh.v, lt.transcript.v)) return false;
  if (!sets_equal(fresh.v_prime, lt.transcript.v_prime)) return false;
  if (!fresh.f.equals(lt.transcript.f)) return false;
  if (!fresh.f_star.equals(lt.transcript.f_star)) return false;
  if (fresh.referee_valuation != lt.transcript.referee_valuation) return false;
  if (fresh.attacker_valuation != lt.transcript.attacker_valuation) return false;
  if (fresh.clean_accuracy != lt.transcript.clean_accuracy) return false;
  if (fresh.history.valuations != lt.transcript.history.valuations) return false;
  for (std::size_t i = 0; i < lt.transcript.history.models.size(); ++i)
    if (!fresh.history.models[i].equals(lt.transcript.history.models[i])) return false;
  for (std::size_t i = 0; i < lt.transcript.history.attack_sets.size(); ++i)
    if (!sets_equal(fresh.history.attack_sets[i], lt.transcript.history.attack_sets[i]))
      return false;
  return true;
}

}  // namespace trgame
