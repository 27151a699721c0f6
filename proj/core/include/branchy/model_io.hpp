#pragma once

#include <cstdint>
#include <string>

#include "branchy/graph.hpp"

namespace branchy {

// Versioned binary model file:
//   bytes 0..3   magic "BNET"
//   bytes 4..7   format version (u32 LE, currently 1)
//   bytes 8..11  network description length L (u32 LE)
//   L bytes      network description (the [net]/[trunk]/[branch] text form)
//   payload      parameters as f32 LE, in store declaration order
//   last 4 bytes CRC32 of the payload (u32 LE)
inline constexpr std::uint32_t kModelVersion = 1;

struct LoadedModel {
  NetworkSpec net;
  ParameterStore params;
  // False when the payload bytes do not match the stored checksum; the
  // parameters are still loaded.
  bool checksum_ok = true;
};

// Writes via a temp file plus rename, so failures leave no partial model.
void save_model(const std::string& path, const NetworkSpec& net, const ParameterStore& params);

LoadedModel load_model(const std::string& path);

std::uint32_t crc32(const unsigned char* data, std::size_t size);

}  // namespace branchy
