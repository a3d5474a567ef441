#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "eamamba/restoration_net.hpp"
#include "eamamba/synth.hpp"
#include "eamamba/train.hpp"

namespace eamamba {

// Everything a `key = value` run file can set.
//
//   network   base_channels level_blocks refinement_blocks expansion groups
//             scan_set mlp_kind mlp_expansion d_state simplified_bbar
//   training  iterations lr_init lr_final beta1 beta2 weight_decay stages
//             augment seed
//   data      sigma train_count train_size val_count val_size data_seed
struct RunConfig {
  NetConfig net;
  TrainConfig train;
  SynthSpec train_data{25.0, 64, 64, 64, 1};
  SynthSpec val_data{25.0, 8, 64, 64, 2};

  void validate() const;
};

// Raw key/value pairs in file order; `#` starts a comment. Malformed lines
// throw ConfigError naming the line.
std::map<std::string, std::string> parse_key_values(std::istream& is);

// Unknown keys and unparsable values throw ConfigError.
RunConfig parse_run_config(std::istream& is);
RunConfig load_run_config(const std::filesystem::path& path);

NetConfig net_config_from(const std::map<std::string, std::string>& kv);
// `key = value` lines for the network keys; parses back to the same config.
std::string to_config_text(const NetConfig& cfg);

}  // namespace eamamba
