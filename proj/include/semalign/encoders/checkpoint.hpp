// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "semalign/common/matrix.hpp"
#include "semalign/encoders/model.hpp"

namespace semalign::encoders {

// Container layout (all integers little-endian):
//   bytes 0..7    magic "SEMALCK1"
//   bytes 8..15   u64 header length H
//   bytes 16..19  u32 CRC32 of the header bytes
//   bytes 20..    H bytes of UTF-8 JSON header
//   then          tensor blobs, each at header.tensors[i].offset relative to
//                 the end of the header
//
// Header keys: format_version, kind ("model" | "optimizer"), precision
// ("f32" | "f64"), model_config, tensors[{name, shape, dtype, offset, nbytes,
// crc32}], extra (free-form state owned by the writer).

inline constexpr int kCheckpointFormatVersion = 1;

template <typename Real>
struct NamedTensor {
  std::string name;
  const Matrix<Real>* value = nullptr;
};

struct TensorEntry {
  std::string name;
  std::size_t rows = 0, cols = 0;
  std::string dtype;
  std::uint64_t offset = 0;
  std::uint64_t nbytes = 0;
  std::uint32_t crc32 = 0;
};

/// Parsed container. Construction verifies magic, header and every tensor's
/// bounds and CRC; failures throw CheckpointError naming the byte offset.
struct TensorFile {
  nlohmann::json header;
  std::vector<TensorEntry> tensors;
  std::vector<std::uint8_t> bytes;  ///< whole file
  std::uint64_t blob_start = 0;

  std::string kind() const { return header.at("kind").get<std::string>(); }
  std::string precision() const { return header.at("precision").get<std::string>(); }
  const TensorEntry& entry(const std::string& name) const;

  /// Throws CheckpointError when the stored dtype or shape disagrees with `out`.
  template <typename Real>
  void read_into(const TensorEntry& e, Matrix<Real>& out) const;
};

template <typename Real>
constexpr const char* precision_name() {
  return sizeof(Real) == 4 ? "f32" : "f64";
}

template <typename Real>
std::vector<std::uint8_t> encode_tensor_file(const std::string& kind, const nlohmann::json& model_config,
                                             const nlohmann::json& extra,
                                             const std::vector<NamedTensor<Real>>& tensors);

TensorFile decode_tensor_file(std::vector<std::uint8_t> bytes);
/// Read errors become IoError; format errors CheckpointError.
TensorFile read_tensor_file(const std::filesystem::path& path);

/// Every parameter, frozen ones included, in parameter-set order.
template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const Model<Real>& model,
                     const nlohmann::json& extra = nlohmann::json::object());

/// Overwrites the parameters of `model`. The stored model config, precision,
/// parameter names and shapes must all match. Returns the header's `extra`.
template <typename Real>
nlohmann::json load_checkpoint(const std::filesystem::path& path, Model<Real>& model);
template <typename Real>
nlohmann::json load_checkpoint(const TensorFile& file, Model<Real>& model);

/// Builds a model from the stored config and loads it.
template <typename Real>
Model<Real> load_model(const TensorFile& file);

}  // namespace semalign::encoders
