#pragma once

// Finite-difference checks of every differentiable op and of the composite
// objective, in double precision.

#include <cstdint>
#include <string>
#include <vector>

#include "maskseg/gradcheck.hpp"
#include "maskseg/objective.hpp"

namespace maskseg {

struct OracleResult {
  std::string module;
  std::string name;
  GradCheckResult check;
};

inline constexpr double kGradTolerance = 1e-4;

std::vector<std::string> oracle_modules();

// Runs the checks of one module, or all of them when `module` is empty.
// Throws std::invalid_argument for an unknown module.
std::vector<OracleResult> run_oracles(const std::string& module = "", std::uint64_t seed = 7);

// Setup of the composite check: a 4 + 4 image micro-batch of 8 x 8 x 3
// synthetic images, C = 4, reduced channel widths.
struct CompositeSetup {
  TrainConfig config;
  Corpus corpus;
  TrainData data;
};

CompositeSetup composite_setup(std::uint64_t seed);

// Initial parameters with small random biases.
SegNetParams<double> composite_params(const TrainConfig& config);

GradCheckResult composite_gradcheck(std::uint64_t seed, bool detach_fp_target = false);

}  // namespace maskseg
