#pragma once

#include <string>
#include <utility>
#include <vector>

#include "branchnet/model.hpp"
#include "branchnet/tensor.hpp"

namespace branchnet {

// Tensor container: magic "BRNET1", then per-tensor records of
// u32-LE name length, name bytes, four u64-LE dims (rows, height, width,
// channels), then rows*height*width*channels little-endian f32 values.
// Records run until end of file.
void write_tensor_file(const std::string& path,
                       const std::vector<std::pair<std::string, const Tensor4*>>& tensors);
std::vector<std::pair<std::string, Tensor4>> read_tensor_file(const std::string& path);

// Whole-model snapshot: every state tensor (parameters and BN running stats).
void save_checkpoint(Network& net, const std::string& path);
// By-name restore; missing tensors, unknown names, or shape mismatches are
// errors.
void load_checkpoint(Network& net, const std::string& path);

}  // namespace branchnet
