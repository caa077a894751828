#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ovgsr/model.hpp"
#include "ovgsr/tensor.hpp"

// Checkpoint container and its binary file format:
//   magic "OVGSRCK1" | u32 version | u64 config fingerprint |
//   u32 tensor count | per tensor: u32 name length, name bytes,
//   u8 dtype (0 = float64), u8 ndim, i64 dims[ndim], raw values.
// Integers and values are little-endian host order. Eval restores the
// trainable parameters from here and rebuilds everything else (class
// embeddings, encoders) from the config, so no teacher state is stored.
namespace ovgsr {

struct Checkpoint {
  std::uint64_t fingerprint = 0;
  std::vector<std::pair<std::string, Tensor<double>>> tensors;

  const Tensor<double>* find(const std::string& name) const;
};

// Deep-copies every trainable parameter under its registered name.
Checkpoint snapshot_params(ModelParams<double>& params,
                           std::uint64_t fingerprint);

// Writes each stored tensor back into the parameter of the same name.
// The two sides must carry exactly the same names and shapes;
// mismatches raise CheckpointError.
void restore_params(ModelParams<double>& params, const Checkpoint& ck);

void save_checkpoint(const Checkpoint& ck, const std::string& path);

// Unreadable files, bad magic/version, and truncation all raise
// CheckpointError naming the path.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ovgsr
