// SPDX-License-Identifier: Apache-2.0
#include "semalign/encoders/config.hpp"

#include "semalign/common/errors.hpp"
#include "semalign/common/json_config.hpp"
#include "semalign/synth/render.hpp"
#include "semalign/synth/text.hpp"

namespace semalign::encoders {

using nlohmann::json;

std::string to_string(Centering c) { return c == Centering::RestPose ? "rest_pose" : "temporal_mean"; }

Centering parse_centering(const std::string& s) {
  if (s == "rest_pose") return Centering::RestPose;
  if (s == "temporal_mean") return Centering::TemporalMean;
  throw ConfigError("unknown centering '" + s + "' (expected rest_pose or temporal_mean)");
}

std::size_t ModelConfig::mid_layer() const {
  return visual.mid_layer != 0 ? visual.mid_layer : (visual.blocks + 1) / 2;
}

std::size_t ModelConfig::vocab_size() const {
  return text.vocab_size != 0 ? text.vocab_size : synth::Vocabulary::standard().size();
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(visual.joints, "model.visual.joints");
  positive(visual.frames, "model.visual.frames");
  positive(visual.d_model, "model.visual.d_model");
  positive(visual.heads, "model.visual.heads");
  positive(visual.d_ff, "model.visual.d_ff");
  positive(text.d_model, "model.text.d_model");
  positive(text.max_len, "model.text.max_len");
  positive(embed_dim, "model.embed_dim");
  positive(num_classes, "model.num_classes");
  positive(lora.rank, "model.lora.rank");
  if (!(lora.alpha > 0)) throw ConfigError("model.lora.alpha must be positive");
  if (!(visual.input_scale > 0)) throw ConfigError("model.visual.input_scale must be positive");
  if (visual.d_model % visual.heads != 0) {
    throw ConfigError("model.visual.d_model must be divisible by model.visual.heads");
  }
  if (text.blocks > 0) {
    positive(text.heads, "model.text.heads");
    positive(text.d_ff, "model.text.d_ff");
    if (text.d_model % text.heads != 0) {
      throw ConfigError("model.text.d_model must be divisible by model.text.heads");
    }
  }
  if (visual.centering == Centering::RestPose && visual.joints != synth::kJointCount) {
    throw ConfigError("model.visual.centering rest_pose needs " + std::to_string(synth::kJointCount) +
                      " joints, got " + std::to_string(visual.joints));
  }
  const std::size_t m = mid_layer();
  if (visual.blocks < 2 || m < 1 || m >= visual.blocks) {
    throw ConfigError("mid-level tap " + std::to_string(m) + " is not representable with " +
                      std::to_string(visual.blocks) + " visual blocks (need 1 <= mid_layer < blocks)");
  }
}

json to_json(const ModelConfig& c) {
  return json{{"text",
               {{"vocab_size", c.text.vocab_size},
                {"d_model", c.text.d_model},
                {"blocks", c.text.blocks},
                {"heads", c.text.heads},
                {"d_ff", c.text.d_ff},
                {"max_len", c.text.max_len},
                {"seed", c.text.seed}}},
              {"visual",
               {{"joints", c.visual.joints},
                {"frames", c.visual.frames},
                {"d_model", c.visual.d_model},
                {"blocks", c.visual.blocks},
                {"heads", c.visual.heads},
                {"d_ff", c.visual.d_ff},
                {"mid_layer", c.visual.mid_layer},
                {"centering", to_string(c.visual.centering)},
                {"input_scale", c.visual.input_scale}}},
              {"lora", {{"rank", c.lora.rank}, {"alpha", c.lora.alpha}}},
              {"embed_dim", c.embed_dim},
              {"num_classes", c.num_classes},
              {"train_from_scratch", c.train_from_scratch},
              {"train_mlp", c.train_mlp}};
}

ModelConfig model_config_from_json(const json& j, const std::string& path) {
  ModelConfig c;
  read_model_config(j, c, path);
  return c;
}

void read_model_config(const json& j, ModelConfig& c, const std::string& path) {
  StrictJson r(j, path);
  if (r.has("text")) {
    StrictJson t(r.raw("text"), r.full("text"));
    t.get("vocab_size", c.text.vocab_size);
    t.get("d_model", c.text.d_model);
    t.get("blocks", c.text.blocks);
    t.get("heads", c.text.heads);
    t.get("d_ff", c.text.d_ff);
    t.get("max_len", c.text.max_len);
    t.get("seed", c.text.seed);
    t.finish();
  }
  if (r.has("visual")) {
    StrictJson v(r.raw("visual"), r.full("visual"));
    v.get("joints", c.visual.joints);
    v.get("frames", c.visual.frames);
    v.get("d_model", c.visual.d_model);
    v.get("blocks", c.visual.blocks);
    v.get("heads", c.visual.heads);
    v.get("d_ff", c.visual.d_ff);
    v.get("mid_layer", c.visual.mid_layer);
    if (v.has("centering")) {
      std::string mode;
      v.get("centering", mode);
      c.visual.centering = parse_centering(mode);
    }
    v.get("input_scale", c.visual.input_scale);
    v.finish();
  }
  if (r.has("lora")) {
    StrictJson l(r.raw("lora"), r.full("lora"));
    l.get("rank", c.lora.rank);
    l.get("alpha", c.lora.alpha);
    l.finish();
  }
  r.get("embed_dim", c.embed_dim);
  r.get("num_classes", c.num_classes);
  r.get("train_from_scratch", c.train_from_scratch);
  r.get("train_mlp", c.train_mlp);
  r.finish();
}

}  // namespace semalign::encoders
