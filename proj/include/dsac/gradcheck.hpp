#pragma once

#include "dsac/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dsac {

// Central-difference gradient of a scalar function of `x` (64-bit).
VecD finite_difference_gradient(const std::function<double(const VecD&)>& f, const VecD& x,
                                double h = 1e-5);

// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)
double max_relative_error(const VecD& analytic, const VecD& numeric, double floor = 1e-6);

struct GradcheckCase {
  std::string name;
  int configurations = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double tolerance = 1e-4;

  bool passed() const {
    for (const auto& c : cases)
      if (!c.passed) return false;
    return !cases.empty();
  }
};

// Analytic vs finite-difference gradients for every layer kind (dense, conv,
// leaky ReLU, log-softmax, decorrelated dense / conv) and every SAC loss, over
// `configurations` seeded random setups each.
GradcheckReport run_gradcheck(int configurations = 50, std::uint64_t seed = 2024,
                              double tolerance = 1e-4);

}  // namespace dsac
