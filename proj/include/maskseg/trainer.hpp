#pragma once

// Training loop, optimizer, evaluation, checkpoints, metrics log and the
// ablation sweep runner.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskseg/objective.hpp"

namespace maskseg {

// base * (1 - iter / total)^power; `base` when total is 0.
double poly_lr(double base, int iter, int total, double power);

// g = grad + wd * w;  buf = momentum * buf + g;  w -= lr * buf
template <typename T>
void sgd_update(std::span<T> weights, std::span<const T> grad, std::span<T> buffer, double lr, double momentum,
                double weight_decay);

struct TrainState {
  SegNetParams<float> params;
  std::vector<NdArray<float>> momenta;  // aligned with params.entries()
  PrototypeMemory<float> memory;
  int iteration = 0;
};

TrainState init_state(const TrainConfig& config);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepResult {
  int iteration = 0;
  double lr_main = 0.0;
  double lr_pixel = 0.0;
  LossReport report;
};

// One combined backward over the whole objective and one optimizer step.
StepResult train_step(TrainState& state, const TrainConfig& config, const TrainData& data);

// Rows are ground truth, columns predictions; ignore-marked pixels skipped.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);
  int num_classes() const { return classes_; }
  void add(const LabelMap& truth, const LabelMap& prediction);
  std::uint64_t& at(int truth, int prediction);
  std::uint64_t at(int truth, int prediction) const;
  // TP / (TP + FP + FN); nullopt when the class is absent from both.
  std::optional<double> iou(int cls) const;
  // Mean over classes with a defined IoU.
  double miou() const;

 private:
  int classes_;
  std::vector<std::uint64_t> counts_;
};

struct EvalMetrics {
  std::vector<std::optional<double>> iou;
  double miou = 0.0;
};

EvalMetrics metrics_from_confusion(const ConfusionMatrix& cm);
// Plain forward, no perturbation or masking.
EvalMetrics evaluate(const SegNetParams<float>& params, const Corpus& corpus);

// checkpoint.json (manifest) + checkpoint.bin (little-endian float32).
void save_checkpoint(const TrainState& state, const TrainConfig& config, const std::filesystem::path& dir);

struct LoadedCheckpoint {
  TrainState state;
  TrainConfig config;
  std::string config_hash;
  std::vector<std::string> warnings;
};

// With `expected`, a config hash mismatch is reported as a warning.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir, const TrainConfig* expected = nullptr);

class MetricsWriter {
 public:
  explicit MetricsWriter(std::ostream& out) : out_(out) {}
  void header(const TrainConfig& config);
  void step(const StepResult& step);
  void eval(int iteration, const EvalMetrics& metrics);

 private:
  std::ostream& out_;
};

std::string format_real(double v);  // %.9g, "nan" for NaN

struct RunOptions {
  std::filesystem::path out;  // metrics.csv and checkpoints/ land here
  std::optional<TrainState> resume;
  int stop_at = -1;  // stop once this many iterations are done (-1: run to the end)
  std::ostream* log = nullptr;
};

struct RunResult {
  TrainState state;
  std::optional<EvalMetrics> final_eval;
  std::vector<StepResult> steps;
};

// Appends to an existing metrics.csv when resuming.
RunResult run_training(const TrainConfig& config, const TrainData& data, const Corpus* eval_corpus,
                       const RunOptions& options);

std::filesystem::path checkpoint_dir(const std::filesystem::path& out, int iteration);

// Training corpus, split and evaluation corpus named by the config: files
// when paths are set, otherwise synthetic corpora generated in memory. The
// generated split is seeded by data.synth_seed, so training seeds never
// change which images are labeled.
struct Datasets {
  Corpus train;
  SplitManifest split;
  Corpus eval;
};

Datasets load_datasets(const TrainConfig& config);

struct AblationCell {
  std::string name;
  nlohmann::json overrides = nlohmann::json::object();  // flat dotted keys
};

struct AblationGrid {
  std::string name;
  std::vector<AblationCell> cells;
  std::vector<std::uint64_t> seeds;  // empty: the base config's seeds
};

// components (6), ratio_patch (9), semantic_loss (3), mim_variant (3),
// feature_aggregation (4).
AblationGrid preset_grid(const std::string& name);
std::vector<std::string> preset_names();
// {"preset": name} or {"name":, "cells": [{"name":, "overrides": {}}]},
// optionally with "seeds" and "base" (flat config keys).
AblationGrid grid_from_json(const nlohmann::json& j, TrainConfig* base = nullptr);

// The config of one cell for one seed. A seed sets all three seeds.
TrainConfig cell_config(const TrainConfig& base, const AblationCell& cell, std::optional<std::uint64_t> seed);

struct AblationRow {
  std::string cell;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EvalMetrics metrics;
};

// One run per cell and seed, each under out/<cell>/seed_<s>; writes
// out/results.csv. A failing cell is recorded and the sweep continues.
std::vector<AblationRow> run_ablation(const TrainConfig& base, const AblationGrid& grid, const TrainData& data,
                                      const Corpus* eval_corpus, const std::filesystem::path& out,
                                      std::ostream* log = nullptr);

}  // namespace maskseg
