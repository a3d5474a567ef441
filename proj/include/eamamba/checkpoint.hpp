#pragma once

#include <filesystem>

#include "eamamba/restoration_net.hpp"

namespace eamamba {

// Directory layout:
//   manifest.txt   "[config]" with the network keys, then "[params]" with
//                  one "name = file" line per parameter in visit order
//   <name>.eamt    one tensor dump per parameter
void save_checkpoint(const std::filesystem::path& dir, RestorationNet<float>& net);

// Rebuilds the network from the manifest and loads every tensor. Missing,
// extra or misshapen parameters throw ConfigError.
RestorationNet<float> load_checkpoint(const std::filesystem::path& dir);

}  // namespace eamamba
