#include "branchy/model_io.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "branchy/config.hpp"

namespace branchy {

namespace {

constexpr std::array<char, 4> kMagic = {'B', 'N', 'E', 'T'};

void put_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

void put_f32le(std::string& out, float v) {
  static_assert(sizeof(float) == 4);
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  if constexpr (std::endian::native == std::endian::big) {
    bits = __builtin_bswap32(bits);
  }
  put_u32le(out, bits);
}

float get_f32le(const unsigned char* p) {
  std::uint32_t bits = get_u32le(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t size) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < size; ++i) {
    c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
  }
  return c ^ 0xFFFFFFFFu;
}

void save_model(const std::string& path, const NetworkSpec& net, const ParameterStore& params) {
  validate_network(net);
  const std::string spec_text = serialize_network(net);

  std::string payload;
  for (const auto& entry : params) {
    for (std::int64_t i = 0; i < entry.value.size(); ++i) put_f32le(payload, entry.value[i]);
  }

  std::string file;
  file.append(kMagic.data(), kMagic.size());
  put_u32le(file, kModelVersion);
  put_u32le(file, static_cast<std::uint32_t>(spec_text.size()));
  file += spec_text;
  file += payload;
  put_u32le(file, crc32(reinterpret_cast<const unsigned char*>(payload.data()), payload.size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(file.data(), static_cast<std::streamsize>(file.size()));
    out.flush();
    if (!out) {
      std::remove(tmp.c_str());
      throw IoError("write failed for " + tmp);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
  }
}

LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());

  if (bytes.size() < 12) {
    throw ParseError(path + ": truncated model header (" + std::to_string(bytes.size()) +
                     " bytes)");
  }
  if (std::memcmp(bytes.data(), kMagic.data(), 4) != 0) {
    throw ParseError(path + ": bad magic, expected \"BNET\"");
  }
  const std::uint32_t version = get_u32le(bytes.data() + 4);
  if (version != kModelVersion) {
    throw ParseError(path + ": unsupported model version " + std::to_string(version) +
                     " (supported: " + std::to_string(kModelVersion) + ")");
  }
  const std::uint32_t spec_len = get_u32le(bytes.data() + 8);
  if (bytes.size() < 12 + std::size_t(spec_len) + 4) {
    throw ParseError(path + ": truncated network description");
  }

  LoadedModel model;
  const std::string spec_text(reinterpret_cast<const char*>(bytes.data() + 12), spec_len);
  model.net = parse_config(spec_text).net;

  // Rebuild the store layout from the network, then fill values from the
  // payload.
  Rng rng(0);
  model.params = init_params<float>(model.net, rng);

  std::int64_t total = 0;
  for (const auto& entry : model.params) total += entry.value.size();
  const std::size_t expected = 12 + std::size_t(spec_len) + std::size_t(total) * 4 + 4;
  if (bytes.size() != expected) {
    throw ParseError(path + ": payload length mismatch, expected " + std::to_string(expected) +
                     " bytes total for " + std::to_string(total) + " parameters, got " +
                     std::to_string(bytes.size()));
  }

  const unsigned char* payload = bytes.data() + 12 + spec_len;
  const unsigned char* cursor = payload;
  for (auto& entry : model.params) {
    for (std::int64_t i = 0; i < entry.value.size(); ++i, cursor += 4) {
      entry.value[i] = get_f32le(cursor);
    }
  }
  const std::uint32_t stored_crc = get_u32le(bytes.data() + bytes.size() - 4);
  model.checksum_ok = crc32(payload, std::size_t(total) * 4) == stored_crc;
  return model;
}

}  // namespace branchy
