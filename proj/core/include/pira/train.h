#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pira/checkpoint.h"
#include "pira/corpus.h"
#include "pira/instruction.h"
#include "pira/model.h"

namespace pira {

struct TrainConfig {
  // The backbone learns conservatively, the freshly initialized head fast;
  // what matters is the ordering lr_head > lr_backbone, enforced below.
  double lr_backbone = 1e-3;
  double lr_head = 5e-3;
  int batch_size = 32;
  int epochs = 2;
  double warmup_ratio = 0.05;
  double train_dropout = 0.05;  // backbone sites; the head uses the model's rate
  uint64_t seed = 42;

  enum class InstructionSampling { per_instance, fixed };
  // per_instance re-samples the instruction each epoch; fixed pins one
  // instruction per example (content-addressed) for the whole run.
  InstructionSampling instruction_sampling = InstructionSampling::per_instance;
  InputFormat input_format = InputFormat::instructed;

  double clip_norm = 1.0;  // global-norm gradient clip; <= 0 disables
  double weight_decay = 0.0;
  int threads = 1;  // per-instance forward/backward parallelism

  void validate() const;
};

struct BatchMetrics {
  double loss = 0.0;  // per-pair mean of the summed batch objective
  double pair_accuracy = 0.0;
  double grad_norm_backbone = 0.0;
  double grad_norm_head = 0.0;
};

struct StepMetrics {
  int64_t step = 0;
  double loss = 0.0;
  double pair_accuracy = 0.0;
  double lr_backbone = 0.0;
  double lr_head = 0.0;
  double grad_norm_backbone = 0.0;
  double grad_norm_head = 0.0;
};

// AdamW moments for every trainable tensor, in enumeration order.
struct OptimizerState {
  struct Slot {
    Tensor m, v;
  };
  std::vector<Slot> slots;
  int64_t step = 0;

  static OptimizerState create(const ModelParams& params);
};

// Numerically stable Bradley-Terry pairwise loss softplus(-(rc - rr)).
double bt_loss(double r_chosen, double r_rejected);
// d/d(delta) of softplus(-delta): sigmoid(delta) - 1.
double bt_loss_ddelta(double delta);

// Linear warmup to base_lr over warmup_ratio * total_steps, constant after.
double lr_at(int64_t step, int64_t total_steps, double base_lr, double warmup_ratio);

// One optimizer step over a batch: per-instance instruction sampling,
// shared dropout masks across the chosen/rejected passes of an instance,
// summed Bradley-Terry loss, global-norm clipping, and per-group learning
// rates. Keys derive from (seed, epoch, batch_index, instance).
BatchMetrics train_step(ModelParams& params, OptimizerState& opt,
                        std::span<const PreferenceExample> batch,
                        const InstructionSet& set, const TrainConfig& cfg,
                        int64_t total_steps, int64_t epoch, int64_t batch_index);

struct TrainResult {
  ModelParams params;
  CheckpointMeta meta;
  std::vector<StepMetrics> history;
};

TrainResult train(const std::vector<PreferenceExample>& corpus, const InstructionSet& set,
                  const ModelConfig& model_cfg, const TrainConfig& cfg);

// CSV columns: step,loss,pair_accuracy,lr_backbone,lr_head,
// grad_norm_backbone,grad_norm_head
void write_metrics_csv(const std::vector<StepMetrics>& history, const std::string& path);

}  // namespace pira
