#pragma once

// Self-contained model snapshots: every parameter tensor (batch-norm
// running statistics included), the vocabulary, the full configuration,
// the epoch counter and the Adam moments.
//
// Layout: "ATTNHTR1\n", a little-endian uint64 header length, a JSON header,
// then the tensors as raw float64 in the order the header lists them.

#include <filesystem>
#include <map>
#include <string>

#include "attnhtr/autodiff.hpp"
#include "attnhtr/config.hpp"
#include "attnhtr/optim.hpp"
#include "attnhtr/vocab.hpp"

namespace attnhtr {

struct Checkpoint {
  Config config;
  Vocabulary vocab;
  int epoch = 0;
  double best_valid_cer = -1.0;
  long long optimizer_steps = 0;
  std::map<std::string, ad::Matrix> tensors;
  std::map<std::string, bool> trainable;
  std::map<std::string, Adam::Moments> moments;
};

Checkpoint snapshot(const ad::ParameterStore& store, const Vocabulary& vocab, const Config& config, int epoch,
                    const Adam* adam = nullptr);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
// Throws IoError for unreadable or corrupt files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct RestoreReport {
  std::size_t restored = 0;
  std::size_t partial = 0;  // shape changed: overlapping block copied
  std::size_t missing = 0;  // in the store but not in the checkpoint
};

// Copies tensors into parameters of the same name. With strict set, every
// parameter must be present with an identical shape (DimensionMismatch
// otherwise). Without it, shape changes copy the overlapping top-left block
// and absent parameters keep their initialization; `prefix` limits the
// copy to names starting with it.
RestoreReport restore_parameters(const Checkpoint& checkpoint, ad::ParameterStore& store, bool strict,
                                 const std::string& prefix = {});

}  // namespace attnhtr
