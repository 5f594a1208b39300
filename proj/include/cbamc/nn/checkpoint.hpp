#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbamc/nn/network.hpp"

namespace cbamc::nn {

/// On disk: <name>.json (architecture, parameter count, provenance) and
/// <name>.f32 (raw little-endian float32 parameters in layer order).
struct Checkpoint {
  NetworkSpec spec;
  std::vector<float> parameters;
  nlohmann::json provenance;
};

void save_checkpoint(const std::filesystem::path& dir, const std::string& name, const Network<float>& net,
                     const nlohmann::json& provenance);
Checkpoint load_checkpoint(const std::filesystem::path& dir, const std::string& name);
Network<float> to_network(const Checkpoint& checkpoint);

}  // namespace cbamc::nn
