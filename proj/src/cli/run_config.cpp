// SPDX-License-Identifier: Apache-2.0
#include "semalign/cli/run_config.hpp"

#include <cstdlib>

#include "semalign/common/errors.hpp"
#include "semalign/common/io.hpp"
#include "semalign/common/json_config.hpp"
#include "semalign/synth/dataset_io.hpp"

namespace semalign::cli {

using nlohmann::json;

std::filesystem::path resolve_output_path(const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) return std::filesystem::path(root) / path;
  return path;
}

std::filesystem::path RunConfig::run_dir() const { return resolve_output_path(output_dir) / run_id; }
std::filesystem::path RunConfig::resolved_dataset_dir() const { return resolve_output_path(dataset_dir); }

void RunConfig::validate() const {
  if (run_id.empty() || run_id.find('/') != std::string::npos) {
    throw ConfigError("run_id must be a non-empty name without '/'");
  }
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (dataset_dir.empty()) throw ConfigError("dataset.dir must not be empty");
  dataset.validate();
  model.validate();
  train.validate();
  if (model.num_classes != dataset.num_categories) {
    throw ConfigError("model.num_classes (" + std::to_string(model.num_classes) + ") must equal dataset.num_categories (" +
                      std::to_string(dataset.num_categories) + ")");
  }
  if (model.visual.frames != dataset.frames) {
    throw ConfigError("model.visual.frames (" + std::to_string(model.visual.frames) + ") must equal dataset.frames (" +
                      std::to_string(dataset.frames) + ")");
  }
}

std::vector<std::string> preset_names() { return {"tiny", "desk", "paper-shaped"}; }

RunConfig preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") {
    c.run_id = "desk";
    c.dataset_dir = "data/desk";
    return c;
  }
  if (name == "tiny") {
    c.run_id = "tiny";
    c.dataset_dir = "data/tiny";
    c.dataset.num_categories = 4;
    c.dataset.train = 64;
    c.dataset.val = 32;
    c.dataset.test = 32;
    c.model.num_classes = 4;
    c.model.visual.d_model = 16;
    c.model.visual.d_ff = 32;
    c.model.text.d_model = 16;
    c.model.text.d_ff = 32;
    c.model.embed_dim = 16;
    c.model.lora.rank = 4;
    c.model.lora.alpha = 4;
    c.train.epochs = 6;
    c.train.batch_size = 8;
    c.train.grad_accum_steps = 2;
    c.train.peak_lr = 3e-3;
    return c;
  }
  if (name == "paper-shaped") {
    // Large-backbone hyperparameters as published; not expected to train well
    // on the desk-scale encoders.
    c.run_id = "paper-shaped";
    c.dataset_dir = "data/desk";
    c.train.peak_lr = 4e-5;
    c.train.epochs = 15;
    c.train.warmup_ratio = 0.03;
    c.train.weight_decay = 0.05;
    c.train.clip_norm = 1.0;
    c.train.batch_size = 8;
    c.train.grad_accum_steps = 4;
    c.model.lora.rank = 8;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected tiny, desk or paper-shaped)");
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must have the form dotted.key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

RunConfig run_config_from_json(const json& tree) {
  if (!tree.is_object()) throw ConfigError("config root must be a JSON object");
  std::string preset_name = "desk";
  if (tree.contains("preset")) {
    if (!tree["preset"].is_string()) throw ConfigError("'preset' must be a string");
    preset_name = tree["preset"].get<std::string>();
  }
  RunConfig c = preset(preset_name);
  StrictJson r(tree, "");
  r.get("preset", c.preset);
  r.get("run_id", c.run_id);
  r.get("output_dir", c.output_dir);
  if (r.has("precision")) {
    std::string p;
    r.get("precision", p);
    if (p == "f32") c.precision = Precision::F32;
    else if (p == "f64") c.precision = Precision::F64;
    else throw ConfigError("precision must be \"f32\" or \"f64\", got \"" + p + "\"");
  }
  if (r.has("dataset")) {
    json ds = r.raw("dataset");
    if (!ds.is_object()) throw ConfigError("'dataset' must be a JSON object");
    StrictJson d(ds, "dataset");
    d.get("dir", c.dataset_dir);
    d.get("manifest_digest", c.manifest_digest);
    ds.erase("dir");
    ds.erase("manifest_digest");
    synth::read_dataset_config(ds, c.dataset, "dataset");
  }
  if (r.has("model")) encoders::read_model_config(r.raw("model"), c.model, "model");
  if (r.has("train")) trainer::read_train_config(r.raw("train"), c.train, "train");
  if (r.has("loss")) trainer::read_loss_weights(r.raw("loss"), c.train.loss, "loss");
  if (r.has("ablation")) trainer::read_ablation(r.raw("ablation"), c.train.ablation, "ablation");
  r.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json tree = json::object();
  if (!path.empty()) {
    const std::string text = io::read_text(path);
    try {
      tree = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(tree, o);
  return run_config_from_json(tree);
}

json to_json(const RunConfig& c) {
  json ds = synth::to_json(c.dataset);
  ds["dir"] = c.dataset_dir;
  ds["manifest_digest"] = c.manifest_digest;
  return {{"preset", c.preset},
          {"run_id", c.run_id},
          {"output_dir", c.output_dir},
          {"precision", c.precision == Precision::F32 ? "f32" : "f64"},
          {"dataset", ds},
          {"model", encoders::to_json(c.model)},
          {"train", trainer::to_json(c.train)},
          {"loss", trainer::to_json(c.train.loss)},
          {"ablation", trainer::to_json(c.train.ablation)}};
}

}  // namespace semalign::cli
