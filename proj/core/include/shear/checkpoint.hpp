#pragma once

#include <filesystem>
#include <string>

#include "shear/trainer.hpp"

namespace shear {

inline constexpr int kCheckpointFormatVersion = 1;

// A checkpoint is a directory holding manifest.json (format version, step,
// feature config, tokenizer fingerprint, training config echo, blob index)
// and weights.bin (raw little-endian float32 arrays in index order:
// parameters, then Adam first and second moments). Parameters live on the
// f32 grid, so the round trip is bit-exact.
void save_checkpoint(const TrainState& state, const TrainingConfig& config,
                     const std::filesystem::path& dir);

// Loads a checkpoint. When expected_tokenizer_fingerprint is non-empty and
// differs from the manifest's, the load is refused with both fingerprints
// shown. Version mismatch raises ConfigError; short or oversized blob data
// raises IntegrityError naming the blob index.
TrainState load_checkpoint(const std::filesystem::path& dir,
                           const std::string& expected_tokenizer_fingerprint = "");

// The training config echoed into the manifest when the checkpoint was
// written (informational; a run may override it).
TrainingConfig checkpoint_training_config(const std::filesystem::path& dir);

}  // namespace shear
