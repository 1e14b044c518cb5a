#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cmfuse/data.hpp"
#include "cmfuse/nn.hpp"

namespace cmfuse {

struct Checkpoint {
    std::string config_json;
    std::vector<std::pair<std::string, TensorF>> tensors;
};

// Flat record container: version header, embedded config, then
// (name, shape, raw little-endian f32 data) per tensor. Saving the result of
// a load reproduces the file byte for byte.
void save_checkpoint(const std::string& path, const std::string& config_json,
                     const ParamMap<float>& state);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace cmfuse
