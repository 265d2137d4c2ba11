#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pira/instruction.h"
#include "pira/tape.h"
#include "pira/tensor.h"
#include "pira/vocab.h"

namespace pira {

struct ModelConfig {
  int vocab_size = 512;
  int embed_dim = 64;
  int num_layers = 2;
  int num_heads = 2;
  int head_hidden_dim = 64;
  int max_seq_len = 256;
  float head_dropout_default = 0.05f;
  std::optional<int> adapter_rank;
  float adapter_alpha = 4.0f;

  int mlp_hidden() const { return 4 * embed_dim; }
  int head_dim() const { return embed_dim / num_heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Decoder-style backbone: token+position embeddings, pre-norm causal
// attention blocks with a 4x MLP, and a final layer norm. The reward is
// read from the last position's hidden state.
struct BackboneParams {
  Tensor tok_emb;  // [V x d]
  Tensor pos_emb;  // [max_seq_len x d]
  struct Layer {
    Tensor ln1_g, ln1_b;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // [d x d] weights, [d] biases
    Tensor ln2_g, ln2_b;
    Tensor w_fc, b_fc;      // [d x 4d], [4d]
    Tensor w_proj, b_proj;  // [4d x d], [d]
  };
  std::vector<Layer> layers;
  Tensor lnf_g, lnf_b;
};

// Two-layer scalar head with one dropout site after the tanh hidden
// activation. The output layer starts at exactly zero so a fresh model
// rewards everything 0.
struct ValueHeadParams {
  Tensor w1;  // [d x h]
  Tensor b1;  // [h]
  Tensor w2;  // [h x 1]
  Tensor b2;  // [1]
};

// Low-rank deltas on the query/value projections: W_eff = W + (alpha/rank) A B.
struct AdapterParams {
  struct Layer {
    Tensor a_q, b_q;  // [d x r], [r x d]
    Tensor a_v, b_v;
  };
  std::vector<Layer> layers;
  int rank = 0;
  float alpha = 0.0f;
};

struct ModelParams {
  ModelConfig config;
  Vocab vocab;
  BackboneParams backbone;
  ValueHeadParams head;
  std::optional<AdapterParams> adapters;
};

ModelParams init_model(const ModelConfig& cfg, Vocab vocab, uint64_t seed);

enum class ParamGroup { backbone, head };

template <typename TensorPtr>
struct BasicParamEntry {
  std::string name;
  TensorPtr tensor;
  ParamGroup group = ParamGroup::backbone;
  // With adapters enabled the backbone base weights are frozen and only
  // the adapter factors (plus the head) remain trainable.
  bool trainable = true;
};
using ParamEntry = BasicParamEntry<const Tensor*>;
using MutableParamEntry = BasicParamEntry<Tensor*>;

std::vector<ParamEntry> enumerate_params(const ModelParams& p);
std::vector<MutableParamEntry> enumerate_params(ModelParams& p);

// Builds the model's compute graph on a caller-owned tape. In training
// mode every trainable tensor is registered as a tape parameter so its
// gradient can be read back by enumeration order; in inference mode all
// weights enter as constants and dropout sites are disabled.
class ModelGraph {
 public:
  ModelGraph(Tape& tape, const ModelParams& params, bool training);

  // Final-position hidden state [d]. Backbone dropout (post-attention and
  // post-MLP sites) is active only in training mode with rate > 0.
  NodeId backbone(std::span<const int32_t> ids, float dropout_rate, CounterRng* rng);
  // Scalar reward node [1]; `delta` drives the head dropout site.
  NodeId head(NodeId u, float delta, CounterRng* rng);

  // Tape nodes of trainable tensors, aligned with the trainable entries of
  // enumerate_params order. Empty in inference mode.
  const std::vector<NodeId>& trainable_nodes() const { return trainable_nodes_; }

 private:
  Tape& tape_;
  const ModelParams& params_;
  bool training_;
  std::vector<NodeId> trainable_nodes_;
  // Graph-side handles to weights, aligned with enumeration.
  std::vector<NodeId> all_nodes_;
};

// Convenience inference entry points (deterministic unless stated).
Tensor backbone_forward(const ModelParams& params, std::span<const int32_t> ids,
                        bool training = false, float dropout_rate = 0.0f,
                        CounterRng* rng = nullptr);
// One stochastic head pass over a fixed backbone output; pure function of
// (params, u, delta, rng_key).
float head_forward(const ModelParams& params, const Tensor& u, float delta,
                   uint64_t rng_key);
float reward(const ModelParams& params, const InstructionSet& set, int k,
             const std::string& question, const std::string& response, float delta,
             uint64_t rng_key);
float reward_concat(const ModelParams& params, const std::string& question,
                    const std::string& response, float delta, uint64_t rng_key);
// Dispatches on format; `k` is ignored for the concat form.
float reward_with_format(const ModelParams& params, const InstructionSet& set,
                         InputFormat format, int k, const std::string& question,
                         const std::string& response, float delta, uint64_t rng_key);

// Materializes adapter deltas into plain backbone weights using the same
// arithmetic as the training graph.
BackboneParams apply_adapters(const BackboneParams& base, const AdapterParams& adapters);

// Process-wide count of backbone forward passes, used to verify that
// aggregation reruns only the value head.
uint64_t backbone_forward_count();
void reset_backbone_forward_count();

}  // namespace pira
