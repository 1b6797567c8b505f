// include/asrkit/checkpoint.hpp

// Copyright 2026  asrkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Checkpoint container: 8-byte magic `E2EASR01`, a little-endian uint64
// manifest length, a JSON manifest listing named tensors in sorted order,
// then the raw little-endian value buffers in manifest order.

#ifndef ASRKIT_CHECKPOINT_HPP_
#define ASRKIT_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "asrkit/common.hpp"
#include "asrkit/nn.hpp"
#include "asrkit/tensor.hpp"
#include "json.hpp"

namespace asrkit {

inline constexpr char kCheckpointMagic[] = "E2EASR01";

template <typename Real>
constexpr const char *PrecisionName();
template <>
constexpr const char *PrecisionName<float>() {
  return "float";
}
template <>
constexpr const char *PrecisionName<double>() {
  return "double";
}

struct CheckpointInfo {
  std::string model_type;
  std::string precision;
  uint64_t token_checksum = 0;
};

template <typename Real>
void SaveCheckpoint(const ParamStore<Real> &params,
                    const std::filesystem::path &file,
                    const std::string &model_type, uint64_t token_checksum) {
  nlohmann::json tensors = nlohmann::json::array();
  params.ForEach([&](const std::string &name, const Tensor<Real> &t) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}});
  });
  nlohmann::json manifest = {{"model_type", model_type},
                             {"precision", PrecisionName<Real>()},
                             {"token_checksum", std::to_string(token_checksum)},
                             {"tensors", tensors}};
  std::string m = manifest.dump();
  std::ofstream os(file, std::ios::binary);
  ASRKIT_CHECK(os.good(), DataError, "cannot write " << file.string());
  os.write(kCheckpointMagic, 8);
  uint64_t len = m.size();
  char lenb[8];
  for (int i = 0; i < 8; ++i) {
    lenb[i] = static_cast<char>((len >> (8 * i)) & 0xFF);
  }
  os.write(lenb, 8);
  os.write(m.data(), static_cast<std::streamsize>(m.size()));
  params.ForEach([&](const std::string &, const Tensor<Real> &t) {
    os.write(reinterpret_cast<const char *>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(Real)));
  });
  os.flush();
  ASRKIT_CHECK(os.good(), DataError, "short write to " << file.string());
}

// Reads the manifest only; used to pick the right precision and model type
// before constructing a model.
inline CheckpointInfo PeekCheckpoint(const std::filesystem::path &file) {
  std::ifstream is(file, std::ios::binary);
  ASRKIT_CHECK(is.good(), DataError, "cannot open " << file.string());
  char magic[8];
  is.read(magic, 8);
  ASRKIT_CHECK(is.gcount() == 8 && std::string(magic, 8) == kCheckpointMagic,
               DataError, file.string() << ": not a checkpoint (bad magic)");
  char lenb[8];
  is.read(lenb, 8);
  ASRKIT_CHECK(is.gcount() == 8, DataError,
               file.string() << ": truncated manifest length");
  uint64_t len = 0;
  for (int i = 0; i < 8; ++i) {
    len |= static_cast<uint64_t>(static_cast<unsigned char>(lenb[i]))
           << (8 * i);
  }
  ASRKIT_CHECK(len > 0 && len < (1ull << 30), DataError,
               file.string() << ": implausible manifest length " << len);
  std::string m(len, '\0');
  is.read(m.data(), static_cast<std::streamsize>(len));
  ASRKIT_CHECK(is.gcount() == static_cast<std::streamsize>(len), DataError,
               file.string() << ": truncated manifest");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(m);
  } catch (const nlohmann::json::exception &e) {
    throw DataError(file.string() + ": bad manifest JSON: " + e.what());
  }
  CheckpointInfo info;
  try {
    info.model_type = j.at("model_type").get<std::string>();
    info.precision = j.at("precision").get<std::string>();
    info.token_checksum =
        std::stoull(j.at("token_checksum").get<std::string>());
  } catch (const std::exception &e) {
    throw DataError(file.string() + ": bad manifest fields: " + e.what());
  }
  return info;
}

// Loads tensors into `params`. Names already present must match in shape and
// are filled in place (external leaf bindings stay valid); unknown names are
// created. Returns the manifest header fields.
template <typename Real>
CheckpointInfo LoadCheckpoint(const std::filesystem::path &file,
                              ParamStore<Real> *params) {
  std::ifstream is(file, std::ios::binary);
  ASRKIT_CHECK(is.good(), DataError, "cannot open " << file.string());
  char magic[8];
  is.read(magic, 8);
  ASRKIT_CHECK(is.gcount() == 8 && std::string(magic, 8) == kCheckpointMagic,
               DataError, file.string() << ": not a checkpoint (bad magic)");
  char lenb[8];
  is.read(lenb, 8);
  ASRKIT_CHECK(is.gcount() == 8, DataError,
               file.string() << ": truncated manifest length");
  uint64_t len = 0;
  for (int i = 0; i < 8; ++i) {
    len |= static_cast<uint64_t>(static_cast<unsigned char>(lenb[i]))
           << (8 * i);
  }
  ASRKIT_CHECK(len > 0 && len < (1ull << 30), DataError,
               file.string() << ": implausible manifest length " << len);
  std::string m(len, '\0');
  is.read(m.data(), static_cast<std::streamsize>(len));
  ASRKIT_CHECK(is.gcount() == static_cast<std::streamsize>(len), DataError,
               file.string() << ": truncated manifest");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(m);
  } catch (const nlohmann::json::exception &e) {
    throw DataError(file.string() + ": bad manifest JSON: " + e.what());
  }
  CheckpointInfo info;
  try {
    info.model_type = j.at("model_type").get<std::string>();
    info.precision = j.at("precision").get<std::string>();
    info.token_checksum =
        std::stoull(j.at("token_checksum").get<std::string>());
  } catch (const std::exception &e) {
    throw DataError(file.string() + ": bad manifest fields: " + e.what());
  }
  ASRKIT_CHECK(info.precision == PrecisionName<Real>(), DataError,
               file.string() << ": precision " << info.precision
                             << ", expected " << PrecisionName<Real>());
  ASRKIT_CHECK(j.contains("tensors") && j["tensors"].is_array(), DataError,
               file.string() << ": manifest has no tensor list");
  for (const auto &entry : j["tensors"]) {
    std::string name;
    std::vector<int64_t> shape;
    try {
      name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<std::vector<int64_t>>();
    } catch (const std::exception &e) {
      throw DataError(file.string() + ": bad tensor entry: " + e.what());
    }
    Tensor<Real> *dst = params->Find(name);
    if (dst == nullptr) {
      dst = params->Add(name, shape);
    } else {
      ASRKIT_CHECK(dst->shape() == shape, DataError,
                   file.string() << ": tensor " << name << " has shape "
                                 << Tensor<Real>::ShapeString(shape)
                                 << ", model expects "
                                 << Tensor<Real>::ShapeString(dst->shape()));
    }
    std::streamsize bytes =
        static_cast<std::streamsize>(dst->numel() * sizeof(Real));
    is.read(reinterpret_cast<char *>(dst->data()), bytes);
    ASRKIT_CHECK(is.gcount() == bytes, DataError,
                 file.string() << ": truncated buffer for " << name);
  }
  is.peek();
  ASRKIT_CHECK(is.eof(), DataError,
               file.string() << ": trailing bytes after tensor buffers");
  return info;
}

}  // namespace asrkit

#endif  // ASRKIT_CHECKPOINT_HPP_
