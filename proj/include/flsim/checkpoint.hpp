#pragma once

#include <string>

#include "flsim/model.hpp"

namespace flsim::nn {

// Checkpoint file layout: 8-byte magic "FPSIMPV1", then a little-endian
// uint32 length, then length little-endian float64 values.
void save_params(const std::string& path, const ParamVector& params);
ParamVector load_params(const std::string& path);

}  // namespace flsim::nn
