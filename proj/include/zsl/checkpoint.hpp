#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "zsl/adam.hpp"
#include "zsl/rng.hpp"
#include "zsl/vit.hpp"

namespace zsl {

// Everything beyond the weights that an exact resume needs.
struct TrainingState {
  AdamState adam;
  Rng batch_rng;
  std::size_t epochs_done = 0;
  std::uint64_t steps_done = 0;
};

struct Checkpoint {
  ViTModel model;
  std::optional<TrainingState> state;
};

// Binary layout is described in docs/checkpoint_format.md. All integers are
// unsigned 64-bit little endian, all floats IEEE-754 binary64 little endian.
void save_checkpoint(const std::filesystem::path& path, const ViTModel& model,
                     const TrainingState* state = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace zsl
