#pragma once

#include <string>
#include <utility>
#include <vector>

#include "t2f/tensor.hpp"

namespace t2f {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Binary container: magic "T2FL", little-endian u32 version, then repeated
/// records of (u32 name length, name bytes, u32 rank, u64 extents,
/// little-endian f64 payload). Round-trips byte-exactly.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::string& path);

/// First tensor with the given name, or an undefined Tensor.
Tensor find_tensor(const NamedTensors& ts, const std::string& name);
/// As above but throws DataError when missing.
Tensor require_tensor(const NamedTensors& ts, const std::string& name);

}  // namespace t2f
