#include "pira/train.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "pira/errors.h"
#include "pira/parallel.h"
#include "pira/rng.h"

namespace pira {

namespace {

constexpr uint64_t kTagInstance = 0x696e7374;
constexpr uint64_t kTagPick = 0x7069636b;
constexpr uint64_t kTagFixedPick = 0x66697864;
constexpr uint64_t kTagBackboneDrop = 0x62626472;
constexpr uint64_t kTagHeadDrop = 0x68646472;
constexpr uint64_t kTagShuffle = 0x73686566;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t example_hash(const PreferenceExample& ex) {
  uint64_t h = fnv1a(ex.question);
  h = fnv1a("\x1f", h);
  h = fnv1a(ex.chosen, h);
  h = fnv1a("\x1f", h);
  h = fnv1a(ex.rejected, h);
  return h;
}

std::vector<MutableParamEntry> trainable_entries(ModelParams& p) {
  std::vector<MutableParamEntry> out;
  for (MutableParamEntry& e : enumerate_params(p)) {
    if (e.trainable) out.push_back(e);
  }
  return out;
}

struct InstanceResult {
  double loss = 0.0;
  float r_chosen = 0.0f;
  float r_rejected = 0.0f;
  std::vector<Tensor> grads;  // aligned with trainable entries
};

InstanceResult run_instance(const ModelParams& params, const PreferenceExample& ex,
                            const InstructionSet& set, const TrainConfig& cfg,
                            uint64_t instance_key) {
  int pick = 0;
  if (cfg.input_format == InputFormat::instructed && set.size() > 1) {
    const uint64_t pick_key = cfg.instruction_sampling == TrainConfig::InstructionSampling::fixed
                                  ? derive_key(cfg.seed, kTagFixedPick, example_hash(ex))
                                  : derive_key(instance_key, kTagPick);
    CounterRng pick_rng(pick_key);
    pick = static_cast<int>(pick_rng.next_below(static_cast<uint64_t>(set.size())));
  }

  std::vector<int32_t> ids_c, ids_r;
  if (cfg.input_format == InputFormat::instructed) {
    ids_c = assemble_input(set, pick, ex.question, ex.chosen, params.vocab);
    ids_r = assemble_input(set, pick, ex.question, ex.rejected, params.vocab);
  } else {
    ids_c = assemble_concat(ex.question, ex.chosen, params.vocab);
    ids_r = assemble_concat(ex.question, ex.rejected, params.vocab);
  }

  Tape tape;
  ModelGraph graph(tape, params, /*training=*/true);
  const float bb_rate = static_cast<float>(cfg.train_dropout);
  const float head_rate = params.config.head_dropout_default;

  // The chosen and rejected passes of one instance reuse the same mask
  // streams, which removes mask noise from the reward difference and makes
  // the zero-init anchor exact.
  CounterRng bb_rng_c(derive_key(instance_key, kTagBackboneDrop));
  CounterRng head_rng_c(derive_key(instance_key, kTagHeadDrop));
  const NodeId r_c = graph.head(graph.backbone(ids_c, bb_rate, &bb_rng_c), head_rate,
                                &head_rng_c);
  CounterRng bb_rng_r(derive_key(instance_key, kTagBackboneDrop));
  CounterRng head_rng_r(derive_key(instance_key, kTagHeadDrop));
  const NodeId r_r = graph.head(graph.backbone(ids_r, bb_rate, &bb_rng_r), head_rate,
                                &head_rng_r);

  const NodeId loss = tape.softplus(tape.scale(tape.sub(r_c, r_r), -1.0f));
  tape.backward(loss);

  InstanceResult res;
  res.loss = tape.value(loss).at(0);
  res.r_chosen = tape.value(r_c).at(0);
  res.r_rejected = tape.value(r_r).at(0);
  res.grads.reserve(graph.trainable_nodes().size());
  for (NodeId id : graph.trainable_nodes()) res.grads.push_back(tape.grad(id));
  return res;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr_backbone > 0.0) || !(lr_head > lr_backbone)) {
    throw ValidationError("lr", "need lr_head > lr_backbone > 0");
  }
  if (batch_size < 1) throw ValidationError("batch_size", "must be positive");
  if (epochs < 1) throw ValidationError("epochs", "must be positive");
  if (warmup_ratio < 0.0 || warmup_ratio >= 1.0) {
    throw ValidationError("warmup_ratio", "must lie in [0, 1)");
  }
  if (train_dropout < 0.0 || train_dropout >= 1.0) {
    throw ValidationError("train_dropout", "must lie in [0, 1)");
  }
  if (threads < 1) throw ValidationError("threads", "must be positive");
}

OptimizerState OptimizerState::create(const ModelParams& params) {
  OptimizerState st;
  for (const ParamEntry& e : enumerate_params(params)) {
    if (!e.trainable) continue;
    st.slots.push_back({Tensor::zeros(e.tensor->shape()), Tensor::zeros(e.tensor->shape())});
  }
  return st;
}

double bt_loss(double r_chosen, double r_rejected) {
  const double neg_delta = r_rejected - r_chosen;
  if (neg_delta > 0.0) return neg_delta + std::log1p(std::exp(-neg_delta));
  return std::log1p(std::exp(neg_delta));
}

double bt_loss_ddelta(double delta) {
  const double sig = delta >= 0.0 ? 1.0 / (1.0 + std::exp(-delta))
                                  : std::exp(delta) / (1.0 + std::exp(delta));
  return sig - 1.0;
}

double lr_at(int64_t step, int64_t total_steps, double base_lr, double warmup_ratio) {
  if (step < 0 || step > total_steps) throw ContractError("lr_at: step out of range");
  const double warmup = warmup_ratio * static_cast<double>(total_steps);
  if (warmup <= 0.0 || static_cast<double>(step) >= warmup) return base_lr;
  return base_lr * static_cast<double>(step) / warmup;
}

BatchMetrics train_step(ModelParams& params, OptimizerState& opt,
                        std::span<const PreferenceExample> batch,
                        const InstructionSet& set, const TrainConfig& cfg,
                        int64_t total_steps, int64_t epoch, int64_t batch_index) {
  if (batch.empty()) throw ValidationError("batch", "must not be empty");
  auto entries = trainable_entries(params);
  if (opt.slots.size() != entries.size()) {
    throw ContractError("optimizer state does not match the model's trainable tensors");
  }

  const int n = static_cast<int>(batch.size());
  std::vector<InstanceResult> results(static_cast<size_t>(n));
  parallel_for(n, cfg.threads, [&](int i) {
    const uint64_t key = derive_key(cfg.seed, kTagInstance, static_cast<uint64_t>(epoch),
                                    static_cast<uint64_t>(batch_index),
                                    static_cast<uint64_t>(i));
    results[static_cast<size_t>(i)] = run_instance(params, batch[i], set, cfg, key);
  });

  BatchMetrics metrics;
  double loss_sum = 0.0, acc_sum = 0.0;
  for (const InstanceResult& r : results) {
    if (!std::isfinite(r.loss)) {
      throw NumericError("train_step: non-finite loss in batch " + std::to_string(batch_index));
    }
    loss_sum += r.loss;
    if (r.r_chosen > r.r_rejected) acc_sum += 1.0;
    else if (r.r_chosen == r.r_rejected) acc_sum += 0.5;
  }
  metrics.loss = loss_sum / n;
  metrics.pair_accuracy = acc_sum / n;

  // Summed (not averaged) batch gradient, accumulated in instance order.
  std::vector<Tensor> grads;
  grads.reserve(entries.size());
  for (size_t t = 0; t < entries.size(); ++t) {
    Tensor g = Tensor::zeros(entries[t].tensor->shape());
    for (const InstanceResult& r : results) {
      const Tensor& gi = r.grads[t];
      for (int64_t j = 0; j < g.numel(); ++j) g.at(j) += gi.at(j);
    }
    grads.push_back(std::move(g));
  }

  double sq_backbone = 0.0, sq_head = 0.0;
  for (size_t t = 0; t < entries.size(); ++t) {
    double sq = 0.0;
    for (int64_t j = 0; j < grads[t].numel(); ++j) {
      sq += static_cast<double>(grads[t].at(j)) * grads[t].at(j);
    }
    (entries[t].group == ParamGroup::head ? sq_head : sq_backbone) += sq;
  }
  metrics.grad_norm_backbone = std::sqrt(sq_backbone);
  metrics.grad_norm_head = std::sqrt(sq_head);

  double clip_scale = 1.0;
  const double global_norm = std::sqrt(sq_backbone + sq_head);
  if (cfg.clip_norm > 0.0 && global_norm > cfg.clip_norm) {
    clip_scale = cfg.clip_norm / global_norm;
  }

  const double lr_b = lr_at(opt.step, total_steps, cfg.lr_backbone, cfg.warmup_ratio);
  const double lr_h = lr_at(opt.step, total_steps, cfg.lr_head, cfg.warmup_ratio);
  const int64_t t_adam = opt.step + 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t_adam));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t_adam));

  for (size_t t = 0; t < entries.size(); ++t) {
    const double lr = entries[t].group == ParamGroup::head ? lr_h : lr_b;
    Tensor& p = *entries[t].tensor;
    Tensor& m = opt.slots[t].m;
    Tensor& v = opt.slots[t].v;
    for (int64_t j = 0; j < p.numel(); ++j) {
      const double g = static_cast<double>(grads[t].at(j)) * clip_scale;
      const double mj = kAdamBeta1 * m.at(j) + (1.0 - kAdamBeta1) * g;
      const double vj = kAdamBeta2 * v.at(j) + (1.0 - kAdamBeta2) * g * g;
      m.at(j) = static_cast<float>(mj);
      v.at(j) = static_cast<float>(vj);
      const double update = (mj / bc1) / (std::sqrt(vj / bc2) + kAdamEps) +
                            cfg.weight_decay * static_cast<double>(p.at(j));
      p.at(j) = static_cast<float>(static_cast<double>(p.at(j)) - lr * update);
    }
  }
  ++opt.step;
  return metrics;
}

TrainResult train(const std::vector<PreferenceExample>& corpus, const InstructionSet& set,
                  const ModelConfig& model_cfg, const TrainConfig& cfg) {
  if (corpus.empty()) throw ValidationError("corpus", "must not be empty");
  cfg.validate();
  set.validate();

  TrainResult result;
  result.params = init_model(model_cfg, Vocab::build(model_cfg.vocab_size, set), cfg.seed);
  OptimizerState opt = OptimizerState::create(result.params);

  const int64_t n = static_cast<int64_t>(corpus.size());
  const int64_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = batches_per_epoch * cfg.epochs;

  std::vector<int64_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    CounterRng shuffle_rng(derive_key(cfg.seed, kTagShuffle, static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
    }
    for (int64_t b = 0; b < batches_per_epoch; ++b) {
      const int64_t lo = b * cfg.batch_size;
      const int64_t hi = std::min<int64_t>(lo + cfg.batch_size, n);
      std::vector<PreferenceExample> batch;
      batch.reserve(static_cast<size_t>(hi - lo));
      for (int64_t i = lo; i < hi; ++i) batch.push_back(corpus[order[i]]);

      const double lr_b = lr_at(opt.step, total_steps, cfg.lr_backbone, cfg.warmup_ratio);
      const double lr_h = lr_at(opt.step, total_steps, cfg.lr_head, cfg.warmup_ratio);
      const int64_t step = opt.step;
      const BatchMetrics m =
          train_step(result.params, opt, batch, set, cfg, total_steps, epoch, b);
      result.history.push_back({step, m.loss, m.pair_accuracy, lr_b, lr_h,
                                m.grad_norm_backbone, m.grad_norm_head});
    }
  }
  result.meta.step = opt.step;
  result.meta.seed = cfg.seed;
  return result;
}

void write_metrics_csv(const std::vector<StepMetrics>& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write metrics file: " + path);
  out << "step,loss,pair_accuracy,lr_backbone,lr_head,grad_norm_backbone,grad_norm_head\n";
  char buf[256];
  for (const StepMetrics& m : history) {
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  static_cast<long long>(m.step), m.loss, m.pair_accuracy, m.lr_backbone,
                  m.lr_head, m.grad_norm_backbone, m.grad_norm_head);
    out << buf;
  }
  if (!out) throw IoError("failed while writing " + path);
}

}  // namespace pira
