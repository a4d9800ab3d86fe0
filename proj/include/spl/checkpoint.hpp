#pragma once

#include <string>
#include <vector>

#include "spl/tensor.hpp"

namespace spl {

// Parameter checkpoint file: 8-byte magic "SPLCKPT1", u32 format version,
// u32 parameter count, then per parameter: u32 name length, name bytes,
// u32 rank, u64 extents, raw little-endian f64 data. Round-trips bit-exactly.
void save_checkpoint(const std::string& path,
                     const std::vector<Parameter>& params);

// Reads a checkpoint into a fresh parameter list (requires_grad set).
std::vector<Parameter> read_checkpoint(const std::string& path);

// Loads values into an existing parameter set; every stored name must match
// a parameter with an identical shape, and vice versa.
void load_checkpoint(const std::string& path, std::vector<Parameter>& params);

}  // namespace spl
