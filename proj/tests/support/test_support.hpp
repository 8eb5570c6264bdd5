#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "attnhtr/autodiff.hpp"
#include "attnhtr/config.hpp"
#include "attnhtr/error.hpp"
#include "attnhtr/pipeline.hpp"
#include "attnhtr/synthgen.hpp"

namespace attnhtr::testkit {

// Fresh, empty directory under the build tree.
std::filesystem::path scratch_dir(const std::string& name);

// Scalable fonts installed on the machine, falling back to the built-in
// stroke fonts when none are found.
const FontSet& test_fonts();

struct TensorCheck {
  std::string name;
  double relative_error = 0.0;  // ||a - n|| / max(||a||, ||n||)
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

// Backpropagated gradients of `loss` against central differences with step
// h, one entry per parameter. `loss` must rebuild the graph on the given
// tape and be deterministic.
std::vector<TensorCheck> gradient_check(const std::vector<ad::Parameter*>& params,
                                        const std::function<ad::Var(ad::Tape&)>& loss, double h = 1e-4);
double worst_error(const std::vector<TensorCheck>& checks);

// Small recognizer configuration that trains in seconds on one core.
Config tiny_config();

// Renders each word with fonts cycling through `fonts` (seeded), optionally
// augmented, at the given height.
Dataset render_dataset(const std::vector<std::string>& words, const FontSet& fonts, int height,
                       std::uint64_t seed, const AugmentConfig* augment = nullptr);

}  // namespace attnhtr::testkit
