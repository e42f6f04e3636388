#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aastereo/gradcheck.hpp"

namespace aastereo {

// One registered operator together with seeded inputs chosen away from
// kinks (integer sample coordinates, leaky-ReLU zeros, smooth-L1 joints).
struct GradCheckCase {
  DifferentiableOp op;
  std::vector<Tensor> inputs;
  GradCheckOptions options;
};

const std::vector<std::string>& gradcheck_suite_names();

// Throws std::out_of_range for a name that is not registered.
GradCheckCase make_gradcheck_case(const std::string& name, std::uint64_t seed = 2024);

}  // namespace aastereo
