// SPDX-License-Identifier: Apache-2.0
#include "semalign/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "semalign/common/errors.hpp"
#include "semalign/common/io.hpp"
#include "semalign/common/rng.hpp"
#include "semalign/encoders/checkpoint.hpp"
#include "semalign/trainer/schedule.hpp"

namespace semalign::trainer {

using objectives::Stage;
using synth::SplitKind;

namespace {

constexpr std::uint64_t kShuffleStream = 0x5E0F'0000;

template <typename Real>
void copy_row(const Matrix<Real>& src, std::size_t r, Matrix<Real>& dst, std::size_t dr) {
  std::copy_n(src.row(r).data(), src.cols(), dst.row(dr).data());
}

nlohmann::json run_identity(const TrainConfig& cfg) {
  return {{"train", to_json(cfg)}, {"loss", to_json(cfg.loss)}, {"ablation", to_json(cfg.ablation)}};
}

}  // namespace

template <typename Real>
TextTargets<Real> prepare_text_targets(const encoders::Model<Real>& model, const synth::DatasetSplit& data,
                                       FgTextMode mode) {
  const std::size_t k = data.num_categories();
  const std::size_t de = model.config().embed_dim;
  TextTargets<Real> out;
  out.prototypes = Matrix<Real>(k, de);
  for (std::size_t c = 0; c < k; ++c) {
    const auto text = synth::compose_category_text(static_cast<int>(c), data.category_map);
    const auto e = model.encode_text(text.tokens, encoders::EmbeddingKind::Category);
    copy_row(e.vector, 0, out.prototypes, 0 + c);
  }
  std::map<synth::TokenSequence, std::size_t> keys;
  std::vector<Matrix<Real>> cache;
  for (SplitKind s : {SplitKind::Train, SplitKind::Val, SplitKind::Test}) {
    const auto& samples = data.split(s);
    const auto si = static_cast<std::size_t>(s);
    out.aligned[si] = Matrix<Real>(samples.size(), de);
    out.text_key[si].resize(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const synth::Sample& smp = samples[i];
      if (mode == FgTextMode::ClassLevel) {
        copy_row(out.prototypes, static_cast<std::size_t>(smp.category_id), out.aligned[si], i);
        out.text_key[si][i] = static_cast<std::size_t>(smp.category_id);
        continue;
      }
      auto [it, inserted] = keys.emplace(smp.fg_text.tokens, cache.size());
      if (inserted) cache.push_back(model.encode_text(smp.fg_text.tokens).vector);
      copy_row(cache[it->second], 0, out.aligned[si], i);
      out.text_key[si][i] = it->second;
    }
  }
  return out;
}

template <typename Real>
MicroBatch<Real> make_batch(const synth::DatasetSplit& data, const TextTargets<Real>& targets, SplitKind split,
                            std::span<const std::size_t> indices) {
  const auto& samples = data.split(split);
  const auto si = static_cast<std::size_t>(split);
  MicroBatch<Real> b;
  b.t_fg = Matrix<Real>(indices.size(), targets.aligned[si].cols());
  b.dup = objectives::DuplicateMask(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    b.clips.push_back(&samples.at(i).clip);
    b.labels.push_back(samples[i].category_id);
    copy_row(targets.aligned[si], i, b.t_fg, r);
  }
  for (std::size_t r = 0; r < indices.size(); ++r)
    for (std::size_t c = 0; c < indices.size(); ++c)
      b.dup.set(r, c, targets.text_key[si][indices[r]] == targets.text_key[si][indices[c]]);
  return b;
}

objectives::LossWeights effective_weights(const TrainConfig& cfg) {
  objectives::LossWeights w = cfg.loss;
  if (!cfg.ablation.fg_sa) w.lambda_fg = 0;
  if (!cfg.ablation.cp_a) w.lambda_cp = 0;
  return w;
}

template <typename Real>
GradientResult<Real> compute_gradients(const encoders::Model<Real>& model, const MicroBatch<Real>& batch,
                                       const Matrix<Real>& prototypes, Stage stage, const TrainConfig& cfg) {
  const objectives::LossWeights w = effective_weights(cfg);
  ad::Tape<Real> t;
  const auto P = model.bind(t, true);
  const encoders::VisualOutputs out = model.forward(t, P, batch.clips);

  const auto cls = objectives::cls_loss(t.value(out.logits), batch.labels);
  const auto cp = objectives::cp_a_loss(t.value(out.f_high), prototypes, batch.labels,
                                        static_cast<Real>(w.cp_temperature()));
  const auto fg = objectives::fg_sa_loss(t.value(out.f_mid), batch.t_fg, static_cast<Real>(w.temperature),
                                         batch.dup, cfg.fg_sa);

  const auto loss = objectives::total_loss({cls.value, fg.value, cp.value}, w, stage);
  if (!std::isfinite(loss.total) || !std::isfinite(loss.l_fg)) {
    throw TrainingDivergence("non-finite loss: l_cls=" + std::to_string(loss.l_cls) +
                             " l_fg=" + std::to_string(loss.l_fg) + " l_cp=" + std::to_string(loss.l_cp));
  }
  const ad::Var v_cls = ad::external_loss(t, cls.value, {out.logits}, {cls.d_features});
  const ad::Var v_fg = ad::external_loss(t, fg.value, {out.f_mid}, {fg.d_features});
  const ad::Var v_cp = ad::external_loss(t, cp.value, {out.f_high}, {cp.d_features});
  const ad::Var total = ad::weighted_sum<Real>(t, {{v_cls, Real{1}},
                                                   {v_fg, static_cast<Real>(objectives::fg_weight(w, stage))},
                                                   {v_cp, static_cast<Real>(w.lambda_cp)}});
  t.backward(total);

  GradientResult<Real> r;
  r.loss = loss;
  for (std::size_t idx : model.trainable_parameters()) {
    const Matrix<Real>* g = t.grad(P[idx]);
    const auto& p = model.params()[idx].value;
    r.grads.push_back(g ? *g : Matrix<Real>(p.rows(), p.cols()));
    r.reached.push_back(g != nullptr);
  }
  return r;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  CounterRng rng(seed, kShuffleStream + epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::size_t micro_batches_per_epoch(std::size_t n_train, const TrainConfig& cfg) {
  return (n_train + cfg.batch_size - 1) / cfg.batch_size;
}

std::uint64_t steps_per_epoch(std::size_t n_train, const TrainConfig& cfg) {
  return (micro_batches_per_epoch(n_train, cfg) + cfg.grad_accum_steps - 1) / cfg.grad_accum_steps;
}

template <typename Real>
StepRecord train_step(encoders::Model<Real>& model, std::span<const MicroBatch<Real>> group,
                      const Matrix<Real>& prototypes, TrainState<Real>& state, const TrainConfig& cfg,
                      std::size_t epoch, std::uint64_t spe) {
  if (group.empty()) throw InvalidArgument("train_step: empty micro-batch group");
  StepRecord rec;
  rec.step = state.step;
  rec.epoch = epoch;
  rec.stage = stage_of(epoch, cfg);
  rec.lr = scheduled_lr(state.step, spe, cfg);

  std::vector<Matrix<Real>> grads;
  std::vector<bool> reached;
  const Real share = static_cast<Real>(1.0 / static_cast<double>(group.size()));
  const double dshare = 1.0 / static_cast<double>(group.size());
  rec.loss.stage = rec.stage;
  for (const auto& mb : group) {
    auto g = compute_gradients(model, mb, prototypes, rec.stage, cfg);
    if (grads.empty()) {
      reached = g.reached;
      grads = std::move(g.grads);
      for (auto& m : grads)
        for (Real& v : m.values()) v *= share;
    } else {
      for (std::size_t k = 0; k < grads.size(); ++k) {
        add_inplace(grads[k], g.grads[k], share);
        reached[k] = reached[k] || g.reached[k];
      }
    }
    rec.loss.l_cls += g.loss.l_cls * dshare;
    rec.loss.l_fg += g.loss.l_fg * dshare;
    rec.loss.l_cp += g.loss.l_cp * dshare;
    rec.loss.total += g.loss.total * dshare;
  }
  try {
    rec.grad_norm = clip_gradients(grads, cfg.clip_norm);
  } catch (const TrainingDivergence& e) {
    throw TrainingDivergence(std::string(e.what()) + " at step " + std::to_string(state.step) + ", epoch " +
                             std::to_string(epoch) + " (l_cls=" + std::to_string(rec.loss.l_cls) +
                             ", l_fg=" + std::to_string(rec.loss.l_fg) + ", l_cp=" + std::to_string(rec.loss.l_cp) + ")");
  }
  state.optimizer.step(model.params(), grads, rec.lr, &reached);
  ++state.step;
  return rec;
}

std::string checkpoint_name(std::size_t epoch) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "epoch_%03zu.ckpt", epoch);
  return buf;
}

std::string optimizer_name(std::size_t epoch) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "epoch_%03zu.optim", epoch);
  return buf;
}

std::size_t best_index(std::span<const double> history) {
  if (history.empty()) throw InvalidArgument("best_index: empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i)
    if (history[i] > history[best]) best = i;
  return best;
}

namespace {

template <typename Real>
void save_optimizer(const std::filesystem::path& path, const encoders::Model<Real>& model,
                    const TrainState<Real>& state, const TrainConfig& cfg) {
  std::vector<encoders::NamedTensor<Real>> tensors;
  const auto& idx = state.optimizer.indices();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    tensors.push_back({"m/" + model.params()[idx[k]].name, &state.optimizer.first_moments()[k]});
    tensors.push_back({"v/" + model.params()[idx[k]].name, &state.optimizer.second_moments()[k]});
  }
  nlohmann::json extra = {{"step", state.step},
                          {"next_epoch", state.next_epoch},
                          {"optimizer_steps", state.optimizer.steps_taken()},
                          {"parameter_steps", state.optimizer.parameter_steps()},
                          {"val_history", state.val_history},
                          {"best_epoch", state.best_epoch ? nlohmann::json(*state.best_epoch) : nlohmann::json()},
                          {"best_val_top1", state.best_val_top1},
                          {"run", run_identity(cfg)}};
  io::atomic_write(path, encoders::encode_tensor_file<Real>("optimizer", encoders::to_json(model.config()), extra, tensors));
}

template <typename Real>
void load_optimizer_state(const encoders::TensorFile& f, const std::filesystem::path& path,
                          const encoders::Model<Real>& model, TrainState<Real>& state, const TrainConfig& cfg) {
  if (f.kind() != "optimizer") throw CheckpointError(path.string() + " is not an optimizer sidecar");
  const nlohmann::json& extra = f.header.at("extra");
  if (extra.at("run") != run_identity(cfg)) {
    throw CheckpointError("cannot resume: " + path.string() + " was written by a run with a different configuration");
  }
  if (f.header.at("model_config") != encoders::to_json(model.config())) {
    throw CheckpointError("cannot resume: model config of " + path.string() + " differs from the current model");
  }
  const auto& idx = state.optimizer.indices();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    f.read_into(f.entry("m/" + model.params()[idx[k]].name), state.optimizer.first_moments()[k]);
    f.read_into(f.entry("v/" + model.params()[idx[k]].name), state.optimizer.second_moments()[k]);
  }
  state.step = extra.at("step").get<std::uint64_t>();
  state.next_epoch = extra.at("next_epoch").get<std::size_t>();
  state.optimizer.set_steps_taken(extra.at("optimizer_steps").get<std::uint64_t>());
  state.optimizer.set_parameter_steps(extra.at("parameter_steps").get<std::vector<std::uint64_t>>());
  state.val_history = extra.at("val_history").get<std::vector<double>>();
  if (!extra.at("best_epoch").is_null()) state.best_epoch = extra.at("best_epoch").get<std::size_t>();
  state.best_val_top1 = extra.at("best_val_top1").get<double>();
}

template <typename Real>
void load_optimizer(const std::filesystem::path& path, const encoders::Model<Real>& model, TrainState<Real>& state,
                    const TrainConfig& cfg) {
  const encoders::TensorFile f = encoders::read_tensor_file(path);
  try {
    load_optimizer_state(f, path, model, state, cfg);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed optimizer sidecar " + path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw CheckpointError("malformed optimizer sidecar " + path.string() + ": " + e.what());
  }
}

}  // namespace

std::optional<std::size_t> latest_complete_epoch(const std::filesystem::path& dir, std::size_t epochs) {
  for (std::size_t e = epochs; e-- > 0;) {
    if (std::filesystem::exists(dir / checkpoint_name(e)) && std::filesystem::exists(dir / optimizer_name(e))) return e;
  }
  return std::nullopt;
}

template <typename Real>
eval::RetrievalResult split_retrieval(const Matrix<Real>& f_mid, const TextTargets<Real>& targets, SplitKind split) {
  const auto si = static_cast<std::size_t>(split);
  const auto& keys = targets.text_key[si];
  std::map<std::size_t, std::size_t> bank_row;
  std::vector<std::size_t> first;
  for (std::size_t i = 0; i < keys.size(); ++i)
    if (bank_row.emplace(keys[i], first.size()).second) first.push_back(i);
  Matrix<Real> bank(first.size(), targets.aligned[si].cols());
  for (std::size_t r = 0; r < first.size(); ++r) copy_row(targets.aligned[si], first[r], bank, r);
  std::vector<std::size_t> pairing;
  for (std::size_t k : keys) pairing.push_back(bank_row.at(k));
  return eval::retrieval_diag(f_mid, bank, pairing);
}

template <typename Real>
TrainResult run_training(const TrainConfig& cfg, const synth::DatasetSplit& data, encoders::Model<Real>& model,
                         const RunOptions& options) {
  cfg.validate();
  if (data.num_categories() != model.config().num_classes) {
    throw ConfigError("model.num_classes (" + std::to_string(model.config().num_classes) +
                      ") does not match the dataset's category count (" + std::to_string(data.num_categories()) + ")");
  }
  if (data.train.empty() || data.val.empty() || data.test.empty()) throw ConfigError("every split needs samples");

  const TextTargets<Real> targets = prepare_text_targets(model, data, cfg.ablation.fg_text_mode);
  const std::size_t n = data.train.size();
  const std::uint64_t spe = steps_per_epoch(n, cfg);
  const std::vector<int> val_labels = eval::labels_of(data.val);
  const bool persist = !options.checkpoint_dir.empty();
  if (persist) std::filesystem::create_directories(options.checkpoint_dir);

  TrainState<Real> state;
  state.optimizer = AdamW<Real>(model.params(), model.trainable_parameters(),
                                {cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay});
  TrainResult result;
  if (options.resume && persist) {
    if (const auto last = latest_complete_epoch(options.checkpoint_dir, cfg.epochs)) {
      encoders::load_checkpoint(options.checkpoint_dir / checkpoint_name(*last), model);
      load_optimizer(options.checkpoint_dir / optimizer_name(*last), model, state, cfg);
      if (state.next_epoch != *last + 1) throw CheckpointError("optimizer sidecar epoch does not match its checkpoint");
      result.resumed_after_epoch = *last;
    }
  }

  std::vector<Matrix<Real>> best_snapshot;
  auto snapshot = [&] {
    best_snapshot.clear();
    for (const auto& p : model.params()) best_snapshot.push_back(p.value);
  };

  const std::size_t micro = micro_batches_per_epoch(n, cfg);
  for (std::size_t epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    const Stage stage = stage_of(epoch, cfg);
    const auto order = epoch_order(n, cfg.seed, epoch);
    EpochRecord er;
    er.epoch = epoch;
    er.stage = stage;
    er.mean_loss.stage = stage;
    std::size_t steps = 0;
    std::vector<MicroBatch<Real>> group;
    for (std::size_t mb = 0; mb < micro; mb += cfg.grad_accum_steps) {
      group.clear();
      for (std::size_t j = mb; j < std::min(micro, mb + cfg.grad_accum_steps); ++j) {
        const std::size_t lo = j * cfg.batch_size;
        const std::size_t hi = std::min(n, lo + cfg.batch_size);
        group.push_back(make_batch(data, targets, SplitKind::Train,
                                   std::span<const std::size_t>(order).subspan(lo, hi - lo)));
      }
      const StepRecord rec = train_step<Real>(model, group, targets.prototypes, state, cfg, epoch, spe);
      if (options.hooks.on_step) options.hooks.on_step(rec);
      er.mean_loss.l_cls += rec.loss.l_cls;
      er.mean_loss.l_fg += rec.loss.l_fg;
      er.mean_loss.l_cp += rec.loss.l_cp;
      er.mean_loss.total += rec.loss.total;
      ++steps;
    }
    const double inv = 1.0 / static_cast<double>(steps);
    er.mean_loss.l_cls *= inv;
    er.mean_loss.l_fg *= inv;
    er.mean_loss.l_cp *= inv;
    er.mean_loss.total *= inv;

    const auto feats = eval::encode_split(model, data.val, cfg.eval_batch_size);
    er.val_top1 = eval::top1_accuracy(feats.logits, val_labels);
    const eval::RetrievalResult rr = split_retrieval(feats.f_mid, targets, SplitKind::Val);
    er.val_median_rank = rr.median_rank;
    er.val_recall_at_1 = rr.recall_at_1;
    state.val_history.push_back(er.val_top1);
    if (!state.best_epoch || er.val_top1 > state.best_val_top1) {
      state.best_epoch = epoch;
      state.best_val_top1 = er.val_top1;
      er.best_so_far = true;
      if (!persist) snapshot();
    }
    state.next_epoch = epoch + 1;
    if (persist) {
      er.checkpoint = checkpoint_name(epoch);
      encoders::save_checkpoint(options.checkpoint_dir / er.checkpoint, model,
                                {{"epoch", epoch}, {"val_top1", er.val_top1}, {"stage", objectives::to_string(stage)},
                                 {"run", run_identity(cfg)}});
      save_optimizer(options.checkpoint_dir / optimizer_name(epoch), model, state, cfg);
      if (er.best_so_far) {
        const nlohmann::json marker = {{"epoch", epoch}, {"val_top1", er.val_top1}, {"checkpoint", er.checkpoint}};
        io::atomic_write(options.checkpoint_dir / kBestMarker, marker.dump(2) + "\n");
      }
    }
    if (options.hooks.on_epoch) options.hooks.on_epoch(er);
    if (options.halt_after_epoch && *options.halt_after_epoch == epoch && epoch + 1 < cfg.epochs) {
      result.best_epoch = *state.best_epoch;
      result.best_val_top1 = state.best_val_top1;
      result.val_history = state.val_history;
      if (persist) result.best_checkpoint = options.checkpoint_dir / checkpoint_name(result.best_epoch);
      return result;
    }
  }

  result.best_epoch = *state.best_epoch;
  result.best_val_top1 = state.best_val_top1;
  result.val_history = state.val_history;
  if (persist) {
    result.best_checkpoint = options.checkpoint_dir / checkpoint_name(result.best_epoch);
    encoders::load_checkpoint(result.best_checkpoint, model);
  } else if (!best_snapshot.empty()) {
    for (std::size_t i = 0; i < best_snapshot.size(); ++i) model.params()[i].value = best_snapshot[i];
  }
  const auto test = eval::encode_split(model, data.test, cfg.eval_batch_size);
  result.test_top1 = eval::top1_accuracy(test.logits, eval::labels_of(data.test));
  result.completed = true;
  return result;
}

#define SEMALIGN_INSTANTIATE(Real)                                                                             \
  template TextTargets<Real> prepare_text_targets<Real>(const encoders::Model<Real>&, const synth::DatasetSplit&, \
                                                        FgTextMode);                                           \
  template MicroBatch<Real> make_batch<Real>(const synth::DatasetSplit&, const TextTargets<Real>&, SplitKind,   \
                                             std::span<const std::size_t>);                                    \
  template GradientResult<Real> compute_gradients<Real>(const encoders::Model<Real>&, const MicroBatch<Real>&, \
                                                        const Matrix<Real>&, Stage, const TrainConfig&);       \
  template StepRecord train_step<Real>(encoders::Model<Real>&, std::span<const MicroBatch<Real>>,              \
                                       const Matrix<Real>&, TrainState<Real>&, const TrainConfig&,             \
                                       std::size_t, std::uint64_t);                                            \
  template eval::RetrievalResult split_retrieval<Real>(const Matrix<Real>&, const TextTargets<Real>&, SplitKind); \
  template TrainResult run_training<Real>(const TrainConfig&, const synth::DatasetSplit&, encoders::Model<Real>&, \
                                          const RunOptions&);

SEMALIGN_INSTANTIATE(float)
SEMALIGN_INSTANTIATE(double)
#undef SEMALIGN_INSTANTIATE

}  // namespace semalign::trainer
