// Copyright (c) 2026, The emoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// EMOCKPT1 layout:
//   bytes 0-7   "EMOCKPT1"
//   bytes 8-11  u32 LE header length H
//   H bytes     UTF-8 JSON {config, metadata, tensors: [{name, shape, offset}]}
//   rest        float32 LE tensor data, concatenated in canonical order;
//               offsets are byte offsets from the start of this region.

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "emoalign/projector.hpp"

namespace emoalign {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

void save_checkpoint(const ProjectorParams& params, const ojson& metadata, const fs::path& path) {
  params.config.validate();
  ojson header;
  header["config"] = projector_config_to_json(params.config);
  header["metadata"] = metadata;
  ojson tensors = ojson::array();
  std::string blob;
  for (const auto& [name, t] : params.named()) {
    if (!t->all_finite()) throw NumericError("checkpoint tensor '" + name + "' has non-finite values");
    tensors.push_back(ojson{{"name", name}, {"shape", t->shape()}, {"offset", blob.size()}});
    for (double v : t->data()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) blob.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
  }
  header["tensors"] = std::move(tensors);
  const std::string hdr = header.dump();
  std::string bytes(kCheckpointMagic, 8);
  const auto hlen = static_cast<std::uint32_t>(hdr.size());
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((hlen >> (8 * i)) & 0xFF));
  bytes += hdr;
  bytes += blob;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = std::move(ss).str();
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 8 || std::memcmp(p, kCheckpointMagic, 8) != 0) {
    throw FormatError("'" + path.string() + "': bad magic, expected \"EMOCKPT1\"");
  }
  if (bytes.size() < 12) throw FormatError("'" + path.string() + "': truncated header length");
  const std::size_t hlen = static_cast<std::size_t>(p[8]) | (static_cast<std::size_t>(p[9]) << 8) |
                           (static_cast<std::size_t>(p[10]) << 16) | (static_cast<std::size_t>(p[11]) << 24);
  if (bytes.size() < 12 + hlen) throw FormatError("'" + path.string() + "': truncated header");
  ojson header;
  try {
    header = ojson::parse(bytes.substr(12, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "': bad header JSON: " + e.what());
  }
  const std::size_t blob_start = 12 + hlen;
  const std::size_t blob_size = bytes.size() - blob_start;

  Checkpoint ck;
  try {
    ProjectorConfig cfg = projector_config_from_json(nlohmann::json(header.at("config")));
    cfg.validate();
    // Shapes come from the config; the header table must agree with them.
    ck.params = init_projector(cfg, 0);
    ck.metadata = header.value("metadata", ojson::object());
    const auto& table = header.at("tensors");
    auto named = ck.params.named();
    if (!table.is_array() || table.size() != named.size()) {
      throw FormatError("'" + path.string() + "': tensor table has " + std::to_string(table.size()) +
                        " entries, config implies " + std::to_string(named.size()));
    }
    std::size_t expected_offset = 0;
    for (std::size_t i = 0; i < named.size(); ++i) {
      auto& [name, t] = named[i];
      const auto& entry = table[i];
      if (entry.at("name").get<std::string>() != name) {
        throw FormatError("'" + path.string() + "': tensor " + std::to_string(i) + " is '" +
                          entry.at("name").get<std::string>() + "', expected '" + name + "'");
      }
      if (entry.at("shape").get<Shape>() != t->shape()) {
        throw FormatError("'" + path.string() + "': tensor '" + name + "' has shape " +
                          shape_to_string(entry.at("shape").get<Shape>()) + ", config implies " +
                          shape_to_string(t->shape()));
      }
      if (entry.at("offset").get<std::size_t>() != expected_offset) {
        throw FormatError("'" + path.string() + "': tensor '" + name + "' has a non-canonical offset");
      }
      const std::size_t nbytes = 4 * t->numel();
      if (expected_offset + nbytes > blob_size) {
        throw FormatError("'" + path.string() + "': truncated tensor data at '" + name + "', blob has " +
                          std::to_string(blob_size) + " bytes");
      }
      const unsigned char* src = p + blob_start + expected_offset;
      auto data = t->data();
      for (std::size_t k = 0; k < data.size(); ++k) {
        const unsigned char* b = src + 4 * k;
        const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                                   (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
        data[k] = static_cast<double>(std::bit_cast<float>(bits));
      }
      expected_offset += nbytes;
    }
    if (expected_offset != blob_size) {
      throw FormatError("'" + path.string() + "': tensor data is " + std::to_string(blob_size) +
                        " bytes, config implies " + std::to_string(expected_offset));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "': bad header: " + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError("'" + path.string() + "': invalid config: " + e.what());
  } catch (const ValidationError& e) {
    throw FormatError("'" + path.string() + "': invalid config: " + e.what());
  }
  return ck;
}

}  // namespace emoalign
