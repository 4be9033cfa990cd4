#pragma once

#include <string>
#include <utility>
#include <vector>

#include "crt/tensor.hpp"

namespace crt {

// Binary tensor container, bit-exact across round trips.
// Layout: 8-byte magic "CRTCKPT1", u64 entry count, then per entry:
// u64 name length, UTF-8 name, u64 rank, rank x u64 extents, float64 payload.
// All integers and floats little-endian.
inline constexpr char kCheckpointMagic[8] = {'C', 'R', 'T', 'C',
                                             'K', 'P', 'T', '1'};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const std::string& path, const NamedTensors& entries);
NamedTensors load_checkpoint(const std::string& path);

// First entry with the given name, or an undefined tensor.
Tensor find_entry(const NamedTensors& entries, const std::string& name);

}  // namespace crt
