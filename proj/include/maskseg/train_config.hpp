#pragma once

// Every knob of a training run, serialized as a flat JSON object with
// dotted keys.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "maskseg/masking.hpp"
#include "maskseg/nets.hpp"
#include "maskseg/phase1.hpp"
#include "maskseg/semmim.hpp"

namespace maskseg {

struct TrainConfig {
  NetConfig net;
  LossWeights weights;
  LossToggles toggles;
  MaskSpec mask;
  WeakPerturbConfig weak;
  StrongPerturbConfig strong;

  double psi = 0.95;
  double tau = 10.0;
  double alpha = 0.99;
  double feature_drop = 0.5;
  GateReduction gate_reduction = GateReduction::kGatedMean;
  SemanticLossKind semantic_loss = SemanticLossKind::kCrossEntropy;
  bool semantic_gated = false;
  bool classwise = true;       // false: plain MIM through the same heads
  bool use_memory = true;      // false: prototypes of the current batch only
  bool use_confidence = true;  // false: unit weights in prototypes and aggregation
  bool detach_fp_target = false;  // true: the fp reconstruction target is a constant

  double lr = 0.02;
  double lr_pixel = 0.01;
  double poly_power = 0.9;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  int iterations = 2000;
  int batch = 4;
  int eval_interval = 0;        // 0: evaluate once at the end
  int checkpoint_interval = 0;  // 0: checkpoint only at the end
  bool shared_batch = false;    // both phases use the same draw

  std::uint64_t seed_model = 0;
  std::uint64_t seed_data = 0;
  std::uint64_t seed_mask = 0;

  // Corpus on disk, or an in-memory synthetic corpus when empty.
  std::string corpus;
  std::string split;
  std::string eval_corpus;
  int n_labeled = 8;
  int synth_hw = 64;
  int synth_count = 264;
  int synth_eval_count = 64;
  std::uint64_t synth_seed = 1;
  std::uint64_t synth_eval_seed = 2;
};

void validate(const TrainConfig& config);

nlohmann::json to_json(const TrainConfig& config);
// Keys not present keep their defaults; unknown keys are rejected.
TrainConfig config_from_json(const nlohmann::json& flat, TrainConfig base = {});
// "key=value" with the value parsed by the key's type.
void apply_override(TrainConfig& config, const std::string& assignment);

std::string config_dump(const TrainConfig& config);  // compact, sorted keys
std::string config_hash(const TrainConfig& config);  // 16 hex digits

std::vector<std::string> config_keys();

}  // namespace maskseg
