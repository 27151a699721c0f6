#pragma once

#include <string>

#include "branchy/train.hpp"

namespace branchy {

// A parsed config file: the network description plus training settings.
struct FullConfig {
  NetworkSpec net;
  TrainConfig train;
};

// Line-oriented text format. Sections [net], [trunk], [branch] (repeatable,
// in exit order) and [train]; "key = value" lines; '#' starts a comment.
// Layers are written as "layer = <kind> key=value ...". Errors carry line
// numbers. The parsed network is fully validated, including a symbolic
// forward pass over the shape chain.
FullConfig parse_config(const std::string& text);

FullConfig load_config_file(const std::string& path);

// Canonical text form; parse(serialize(parse(x))) is a fixed point.
std::string serialize_config(const FullConfig& config);

// Network sections only ([net]/[trunk]/[branch]); used inside model files.
std::string serialize_network(const NetworkSpec& net);

}  // namespace branchy
