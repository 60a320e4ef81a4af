#pragma once

#include <cstdint>
#include <filesystem>

#include "dafar/model.hpp"

namespace dafar {

// Self-describing checkpoint container:
//   magic "DAFARCK1" | u32 header_len | header JSON | raw little-endian f32 blobs
// The header carries the format version, the NetworkSpec, per-tensor sizes and
// the parameter hash; load rebuilds the model and verifies both.
void save_checkpoint(const DefendedModel& model, const std::filesystem::path& path,
                     int epoch = -1);
DefendedModel load_checkpoint(const std::filesystem::path& path, int* epoch_out = nullptr);

// parameter hash recorded in (and verified against) a checkpoint file
uint64_t checkpoint_param_hash(const std::filesystem::path& path);

// write-temp-then-rename; used for every artifact the trainer emits
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

}  // namespace dafar
