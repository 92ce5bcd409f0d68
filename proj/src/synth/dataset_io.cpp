// SPDX-License-Identifier: Apache-2.0
#include "semalign/synth/dataset_io.hpp"

#include <array>
#include <system_error>

#include "semalign/common/errors.hpp"
#include "semalign/common/io.hpp"
#include "semalign/common/json_config.hpp"

namespace semalign::synth {

using nlohmann::json;

namespace {

constexpr std::array<std::uint8_t, 4> kSplitMagic = {'S', 'G', 'C', 'L'};
constexpr SplitKind kSplits[] = {SplitKind::Train, SplitKind::Val, SplitKind::Test};

}  // namespace

json to_json(const DatasetConfig& cfg) {
  json admissible = json::array();
  for (const auto& a : cfg.admissible) admissible.push_back(to_string(a));
  return json{{"seed", cfg.seed},
              {"train", cfg.train},
              {"val", cfg.val},
              {"test", cfg.test},
              {"frames", cfg.frames},
              {"num_categories", cfg.num_categories},
              {"admissible", admissible},
              {"amplitude_min", cfg.ranges.amplitude_min},
              {"amplitude_max", cfg.ranges.amplitude_max},
              {"noise_min", cfg.ranges.noise_min},
              {"noise_max", cfg.ranges.noise_max}};
}

DatasetConfig dataset_config_from_json(const json& j, const std::string& path) {
  DatasetConfig cfg;
  read_dataset_config(j, cfg, path);
  return cfg;
}

void read_dataset_config(const json& j, DatasetConfig& cfg, const std::string& path) {
  StrictJson r(j, path);
  r.get("seed", cfg.seed);
  r.get("train", cfg.train);
  r.get("val", cfg.val);
  r.get("test", cfg.test);
  r.get("frames", cfg.frames);
  r.get("num_categories", cfg.num_categories);
  if (r.has("admissible")) {
    std::vector<std::string> tuples;
    r.get("admissible", tuples);
    cfg.admissible.clear();
    for (const auto& t : tuples) {
      try {
        cfg.admissible.push_back(parse_attributes(t));
      } catch (const InvalidArgument& e) {
        throw ConfigError("invalid value in '" + r.full("admissible") + "': " + e.what());
      }
    }
  }
  r.get("amplitude_min", cfg.ranges.amplitude_min);
  r.get("amplitude_max", cfg.ranges.amplitude_max);
  r.get("noise_min", cfg.ranges.noise_min);
  r.get("noise_max", cfg.ranges.noise_max);
  r.finish();
}

std::vector<std::uint8_t> encode_split(const DatasetSplit& ds, SplitKind split) {
  const auto& samples = ds.split(split);
  io::ByteWriter w;
  w.bytes(kSplitMagic);
  w.u32(kDatasetFormatVersion);
  w.u32(static_cast<std::uint32_t>(ds.config.frames));
  w.u32(static_cast<std::uint32_t>(kJointCount));
  w.u32(static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    w.u64(s.instance.seed);
    for (std::uint8_t c : s.instance.attributes.codes()) w.u8(c);
    w.u32(static_cast<std::uint32_t>(s.category_id));
    for (float v : s.clip.coords) w.f32(v);
  }
  return w.take();
}

std::string encode_split_text(const DatasetSplit& ds, SplitKind split) {
  std::string out;
  const auto& samples = ds.split(split);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    json line{{"index", i},
              {"seed", s.instance.seed},
              {"category_id", s.category_id},
              {"fg_text", s.fg_text.text},
              {"category_text", compose_category_text(s.category_id, ds.category_map).text}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

namespace {

json build_manifest(const DatasetSplit& ds, const std::array<std::string, 3>& bin_digests,
                    const std::array<std::string, 3>& text_digests) {
  json splits = json::object();
  std::string all;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string name = to_string(kSplits[i]);
    splits[name] = json{{"count", ds.split(kSplits[i]).size()},
                        {"bin", name + ".bin"},
                        {"text", name + ".jsonl"},
                        {"bin_sha256", bin_digests[i]},
                        {"text_sha256", text_digests[i]}};
    all += bin_digests[i];
    all += text_digests[i];
  }
  json categories = json::array();
  for (std::size_t c = 0; c < ds.category_map.size(); ++c) {
    const int id = static_cast<int>(c);
    categories.push_back(json{{"id", id},
                              {"attributes", to_string(ds.category_map.defining(id))},
                              {"name", ds.category_map.name(id)},
                              {"text", compose_category_text(id, ds.category_map).text}});
  }
  return json{{"format_version", kDatasetFormatVersion},
              {"config", to_json(ds.config)},
              {"num_categories", ds.category_map.size()},
              {"frames", ds.config.frames},
              {"joints", kJointCount},
              {"splits", splits},
              {"category_map", categories},
              {"data_digest", io::sha256_hex(all)}};
}

}  // namespace

std::string write_dataset(const std::filesystem::path& dir, const DatasetSplit& ds) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());

  std::array<std::vector<std::uint8_t>, 3> bins;
  std::array<std::string, 3> texts;
  std::array<std::string, 3> bin_digests, text_digests;
  for (std::size_t i = 0; i < 3; ++i) {
    bins[i] = encode_split(ds, kSplits[i]);
    texts[i] = encode_split_text(ds, kSplits[i]);
    bin_digests[i] = io::sha256_hex(bins[i]);
    text_digests[i] = io::sha256_hex(texts[i]);
  }
  const std::string manifest = build_manifest(ds, bin_digests, text_digests).dump(2) + "\n";

  // Stage everything, then rename; a failure removes whatever was staged.
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged;
  auto cleanup = [&]() {
    for (const auto& [tmp, _] : staged) std::filesystem::remove(tmp, ec);
  };
  auto stage = [&](const std::string& name, std::span<const std::uint8_t> bytes) {
    const auto final_path = dir / name;
    const auto tmp = dir / ("." + name + ".staging");
    try {
      io::atomic_write(tmp, bytes);
    } catch (...) {
      cleanup();
      throw;
    }
    staged.emplace_back(tmp, final_path);
  };
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string name = to_string(kSplits[i]);
    stage(name + ".bin", bins[i]);
    stage(name + ".jsonl", std::span(reinterpret_cast<const std::uint8_t*>(texts[i].data()), texts[i].size()));
  }
  stage("manifest.json", std::span(reinterpret_cast<const std::uint8_t*>(manifest.data()), manifest.size()));
  for (const auto& [tmp, final_path] : staged) {
    std::filesystem::rename(tmp, final_path, ec);
    if (ec) {
      cleanup();
      throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
    }
  }
  return io::sha256_hex(manifest);
}

std::string manifest_digest(const std::filesystem::path& dir) {
  return io::sha256_hex(io::read_text(dir / "manifest.json"));
}

namespace {

std::vector<Sample> decode_split(std::span<const std::uint8_t> bytes, const DatasetConfig& cfg,
                                 const GestureSpace& space, std::size_t expected,
                                 const std::string& what) {
  io::ByteReader r(bytes);
  auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kSplitMagic.begin())) throw IoError(what + ": bad magic");
  if (r.u32() != kDatasetFormatVersion) throw IoError(what + ": unsupported format version");
  const std::uint32_t frames = r.u32();
  const std::uint32_t joints = r.u32();
  const std::uint32_t count = r.u32();
  if (frames != cfg.frames || joints != kJointCount || count != expected) {
    throw IoError(what + ": header does not match manifest");
  }
  std::vector<Sample> out(count);
  for (auto& s : out) {
    s.instance.seed = r.u64();
    std::array<std::uint8_t, 4> codes{};
    for (auto& c : codes) c = r.u8();
    const auto attrs = SemanticAttributes::from_codes(codes);
    s.category_id = static_cast<int>(r.u32());
    if (space.categories.category_of(attrs) != s.category_id) {
      throw IoError(what + ": record label does not match the category map");
    }
    s.instance = sample_gesture_in_category(s.instance.seed, space, s.category_id);
    s.clip.frames = frames;
    s.clip.joints = joints;
    s.clip.coords.resize(std::size_t{frames} * joints * 2);
    for (float& v : s.clip.coords) v = r.f32();
    s.fg_text = compose_fg_text(attrs);
  }
  if (r.remaining() != 0) throw IoError(what + ": trailing bytes");
  return out;
}

}  // namespace

LoadedDataset read_dataset(const std::filesystem::path& dir) {
  LoadedDataset out;
  const std::string manifest_text = io::read_text(dir / "manifest.json");
  out.manifest_digest = io::sha256_hex(manifest_text);
  try {
    out.manifest = json::parse(manifest_text);
  } catch (const json::exception& e) {
    throw IoError("manifest.json is not valid JSON: " + std::string(e.what()));
  }
  if (out.manifest.value("format_version", 0) != kDatasetFormatVersion) {
    throw IoError("unsupported dataset format version");
  }
  DatasetConfig cfg = dataset_config_from_json(out.manifest.at("config"), "manifest.config");
  cfg.validate();
  out.data.config = cfg;
  out.data.category_map = CategoryMap(cfg.category_tuples());
  GestureSpace space{out.data.category_map, cfg.ranges};

  for (SplitKind kind : kSplits) {
    const std::string name = to_string(kind);
    const json& entry = out.manifest.at("splits").at(name);
    const auto bin = io::read_file(dir / entry.at("bin").get<std::string>());
    if (io::sha256_hex(bin) != entry.at("bin_sha256").get<std::string>()) {
      throw IoError(name + ".bin does not match its manifest digest");
    }
    auto samples = decode_split(bin, cfg, space, entry.at("count").get<std::size_t>(), name + ".bin");
    switch (kind) {
      case SplitKind::Train: out.data.train = std::move(samples); break;
      case SplitKind::Val: out.data.val = std::move(samples); break;
      case SplitKind::Test: out.data.test = std::move(samples); break;
    }
  }
  return out;
}

}  // namespace semalign::synth
