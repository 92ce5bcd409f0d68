// SPDX-License-Identifier: Apache-2.0
#include "semalign/encoders/checkpoint.hpp"

#include <cstring>

#include "semalign/common/errors.hpp"
#include "semalign/common/io.hpp"

namespace semalign::encoders {
namespace {

constexpr char kMagic[8] = {'S', 'E', 'M', 'A', 'L', 'C', 'K', '1'};
constexpr std::uint64_t kPrefix = 20;  // magic, header length, header CRC

std::string at_offset(std::uint64_t off) { return " (at byte offset " + std::to_string(off) + ")"; }

}  // namespace

const TensorEntry& TensorFile::entry(const std::string& name) const {
  for (const auto& e : tensors)
    if (e.name == name) return e;
  throw CheckpointError("checkpoint has no tensor named '" + name + "'");
}

template <typename Real>
void TensorFile::read_into(const TensorEntry& e, Matrix<Real>& out) const {
  if (e.dtype != precision_name<Real>()) {
    throw CheckpointError("tensor '" + e.name + "' has dtype " + e.dtype + ", expected " +
                          precision_name<Real>());
  }
  if (e.rows != out.rows() || e.cols != out.cols()) {
    throw CheckpointError("tensor '" + e.name + "' has shape " + std::to_string(e.rows) + "x" +
                          std::to_string(e.cols) + ", model expects " + out.shape_string());
  }
  io::ByteReader r(std::span<const std::uint8_t>(bytes).subspan(blob_start + e.offset, e.nbytes));
  for (Real& v : out.values()) {
    if constexpr (sizeof(Real) == 4) v = r.f32(); else v = r.f64();
  }
}

template <typename Real>
std::vector<std::uint8_t> encode_tensor_file(const std::string& kind, const nlohmann::json& model_config,
                                             const nlohmann::json& extra,
                                             const std::vector<NamedTensor<Real>>& tensors) {
  io::ByteWriter blobs;
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& t : tensors) {
    io::ByteWriter one;
    for (Real v : t.value->values()) {
      if constexpr (sizeof(Real) == 4) one.f32(v); else one.f64(v);
    }
    auto data = one.take();
    manifest.push_back({{"name", t.name},
                        {"shape", {t.value->rows(), t.value->cols()}},
                        {"dtype", precision_name<Real>()},
                        {"offset", blobs.size()},
                        {"nbytes", data.size()},
                        {"crc32", io::crc32(data)}});
    blobs.bytes(data);
  }
  nlohmann::json header = {{"format_version", kCheckpointFormatVersion},
                           {"kind", kind},
                           {"precision", precision_name<Real>()},
                           {"model_config", model_config},
                           {"tensors", std::move(manifest)},
                           {"extra", extra}};
  const std::string text = header.dump();
  io::ByteWriter out;
  out.bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(kMagic), 8));
  out.u64(text.size());
  out.u32(io::crc32(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size())));
  out.text(text);
  out.bytes(blobs.take());
  return out.take();
}

TensorFile decode_tensor_file(std::vector<std::uint8_t> bytes) {
  TensorFile f;
  f.bytes = std::move(bytes);
  if (f.bytes.size() < kPrefix || std::memcmp(f.bytes.data(), kMagic, 8) != 0) {
    throw CheckpointError("not a checkpoint file: bad magic" + at_offset(0));
  }
  io::ByteReader r(f.bytes);
  r.bytes(8);
  const std::uint64_t header_len = r.u64();
  const std::uint32_t header_crc = r.u32();
  if (header_len > f.bytes.size() - kPrefix) {
    throw CheckpointError("header length " + std::to_string(header_len) + " exceeds file size" + at_offset(8));
  }
  if (io::crc32(std::span<const std::uint8_t>(f.bytes).subspan(kPrefix, header_len)) != header_crc) {
    throw CheckpointError("header CRC mismatch" + at_offset(kPrefix));
  }
  const auto* hp = reinterpret_cast<const char*>(f.bytes.data() + kPrefix);
  try {
    f.header = nlohmann::json::parse(hp, hp + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed header: ") + e.what() + at_offset(kPrefix));
  }
  f.blob_start = kPrefix + header_len;
  try {
    if (f.header.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw CheckpointError("unsupported checkpoint format version " + f.header.at("format_version").dump() +
                            at_offset(kPrefix));
    }
    for (const auto& t : f.header.at("tensors")) {
      TensorEntry e;
      e.name = t.at("name").get<std::string>();
      e.rows = t.at("shape").at(0).get<std::size_t>();
      e.cols = t.at("shape").at(1).get<std::size_t>();
      e.dtype = t.at("dtype").get<std::string>();
      e.offset = t.at("offset").get<std::uint64_t>();
      e.nbytes = t.at("nbytes").get<std::uint64_t>();
      e.crc32 = t.at("crc32").get<std::uint32_t>();
      f.tensors.push_back(std::move(e));
    }
    (void)f.kind();
    (void)f.precision();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed header: ") + e.what() + at_offset(kPrefix));
  }
  const std::uint64_t blob_len = f.bytes.size() - f.blob_start;
  for (const auto& e : f.tensors) {
    const std::size_t width = e.dtype == "f32" ? 4 : e.dtype == "f64" ? 8 : 0;
    if (width == 0) throw CheckpointError("tensor '" + e.name + "' has unknown dtype " + e.dtype);
    if (e.nbytes != e.rows * e.cols * width) {
      throw CheckpointError("tensor '" + e.name + "' byte count does not match its shape");
    }
    if (e.offset > blob_len || e.nbytes > blob_len - e.offset) {
      throw CheckpointError("tensor '" + e.name + "' extends past end of file" +
                            at_offset(f.blob_start + e.offset));
    }
    const auto data = std::span<const std::uint8_t>(f.bytes).subspan(f.blob_start + e.offset, e.nbytes);
    if (io::crc32(data) != e.crc32) {
      throw CheckpointError("CRC mismatch in tensor '" + e.name + "'" + at_offset(f.blob_start + e.offset));
    }
  }
  return f;
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  return decode_tensor_file(io::read_file(path));
}

template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const Model<Real>& model, const nlohmann::json& extra) {
  std::vector<NamedTensor<Real>> tensors;
  for (const auto& p : model.params()) tensors.push_back({p.name, &p.value});
  io::atomic_write(path, encode_tensor_file<Real>("model", to_json(model.config()), extra, tensors));
}

template <typename Real>
nlohmann::json load_checkpoint(const TensorFile& file, Model<Real>& model) {
  if (file.kind() != "model") throw CheckpointError("expected a model checkpoint, found kind '" + file.kind() + "'");
  if (file.precision() != precision_name<Real>()) {
    throw CheckpointError("checkpoint precision " + file.precision() + " does not match run precision " +
                          precision_name<Real>());
  }
  const nlohmann::json expected = to_json(model.config());
  if (file.header.at("model_config") != expected) {
    throw CheckpointError("checkpoint model config does not match: stored " + file.header.at("model_config").dump() +
                          ", expected " + expected.dump());
  }
  if (file.tensors.size() != model.params().size()) {
    throw CheckpointError("checkpoint has " + std::to_string(file.tensors.size()) + " tensors, model has " +
                          std::to_string(model.params().size()));
  }
  // Decode into scratch copies first so a failure leaves the model untouched.
  std::vector<Matrix<Real>> values;
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const auto& p = model.params()[i];
    const TensorEntry& e = file.tensors[i];
    if (e.name != p.name) {
      throw CheckpointError("tensor " + std::to_string(i) + " is '" + e.name + "', model expects '" + p.name + "'");
    }
    Matrix<Real> m(p.value.rows(), p.value.cols());
    file.read_into(e, m);
    values.push_back(std::move(m));
  }
  for (std::size_t i = 0; i < values.size(); ++i) model.params()[i].value = std::move(values[i]);
  return file.header.value("extra", nlohmann::json::object());
}

template <typename Real>
nlohmann::json load_checkpoint(const std::filesystem::path& path, Model<Real>& model) {
  return load_checkpoint(read_tensor_file(path), model);
}

template <typename Real>
Model<Real> load_model(const TensorFile& file) {
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(file.header.at("model_config"));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint model config is invalid: ") + e.what());
  }
  Model<Real> model(cfg, 0);
  load_checkpoint(file, model);
  return model;
}

#define SEMALIGN_INSTANTIATE(Real)                                                                      \
  template void TensorFile::read_into<Real>(const TensorEntry&, Matrix<Real>&) const;                  \
  template std::vector<std::uint8_t> encode_tensor_file<Real>(const std::string&, const nlohmann::json&, \
                                                              const nlohmann::json&,                   \
                                                              const std::vector<NamedTensor<Real>>&);  \
  template void save_checkpoint<Real>(const std::filesystem::path&, const Model<Real>&,                \
                                      const nlohmann::json&);                                          \
  template nlohmann::json load_checkpoint<Real>(const std::filesystem::path&, Model<Real>&);           \
  template nlohmann::json load_checkpoint<Real>(const TensorFile&, Model<Real>&);                      \
  template Model<Real> load_model<Real>(const TensorFile&);

SEMALIGN_INSTANTIATE(float)
SEMALIGN_INSTANTIATE(double)
#undef SEMALIGN_INSTANTIATE

}  // namespace semalign::encoders
