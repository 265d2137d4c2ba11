#include "pira/model.h"

#include <array>
#include <cmath>

#include "pira/errors.h"

namespace pira {

namespace {

std::atomic<uint64_t> g_backbone_forwards{0};

constexpr float kInitStd = 0.02f;

template <typename Entry, typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
  const bool lora = p.adapters.has_value();
  auto add = [&](const std::string& name, auto& tensor, ParamGroup group, bool trainable) {
    fn(Entry{name, &tensor, group, trainable});
  };
  add("tok_emb", p.backbone.tok_emb, ParamGroup::backbone, !lora);
  add("pos_emb", p.backbone.pos_emb, ParamGroup::backbone, !lora);
  for (size_t l = 0; l < p.backbone.layers.size(); ++l) {
    auto& ly = p.backbone.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    add(pre + "ln1_g", ly.ln1_g, ParamGroup::backbone, !lora);
    add(pre + "ln1_b", ly.ln1_b, ParamGroup::backbone, !lora);
    add(pre + "wq", ly.wq, ParamGroup::backbone, !lora);
    add(pre + "bq", ly.bq, ParamGroup::backbone, !lora);
    add(pre + "wk", ly.wk, ParamGroup::backbone, !lora);
    add(pre + "bk", ly.bk, ParamGroup::backbone, !lora);
    add(pre + "wv", ly.wv, ParamGroup::backbone, !lora);
    add(pre + "bv", ly.bv, ParamGroup::backbone, !lora);
    add(pre + "wo", ly.wo, ParamGroup::backbone, !lora);
    add(pre + "bo", ly.bo, ParamGroup::backbone, !lora);
    add(pre + "ln2_g", ly.ln2_g, ParamGroup::backbone, !lora);
    add(pre + "ln2_b", ly.ln2_b, ParamGroup::backbone, !lora);
    add(pre + "w_fc", ly.w_fc, ParamGroup::backbone, !lora);
    add(pre + "b_fc", ly.b_fc, ParamGroup::backbone, !lora);
    add(pre + "w_proj", ly.w_proj, ParamGroup::backbone, !lora);
    add(pre + "b_proj", ly.b_proj, ParamGroup::backbone, !lora);
  }
  add("lnf_g", p.backbone.lnf_g, ParamGroup::backbone, !lora);
  add("lnf_b", p.backbone.lnf_b, ParamGroup::backbone, !lora);
  if (lora) {
    for (size_t l = 0; l < p.adapters->layers.size(); ++l) {
      auto& ly = p.adapters->layers[l];
      const std::string pre = "adapter" + std::to_string(l) + ".";
      add(pre + "a_q", ly.a_q, ParamGroup::backbone, true);
      add(pre + "b_q", ly.b_q, ParamGroup::backbone, true);
      add(pre + "a_v", ly.a_v, ParamGroup::backbone, true);
      add(pre + "b_v", ly.b_v, ParamGroup::backbone, true);
    }
  }
  add("head.w1", p.head.w1, ParamGroup::head, true);
  add("head.b1", p.head.b1, ParamGroup::head, true);
  add("head.w2", p.head.w2, ParamGroup::head, true);
  add("head.b2", p.head.b2, ParamGroup::head, true);
}

Tensor causal_mask(int t_len) {
  Tensor m({t_len, t_len});
  for (int i = 0; i < t_len; ++i)
    for (int j = i + 1; j < t_len; ++j) m(i, j) = -1e9f;
  return m;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 8) throw ValidationError("vocab_size", "must be at least 8");
  if (embed_dim < 1 || num_layers < 1 || num_heads < 1 || head_hidden_dim < 1) {
    throw ValidationError("model", "dimensions must be positive");
  }
  if (embed_dim % num_heads != 0) {
    throw ValidationError("num_heads", "embed_dim must be divisible by num_heads");
  }
  if (max_seq_len < 1) throw ValidationError("max_seq_len", "must be positive");
  if (!(head_dropout_default >= 0.0f && head_dropout_default < 1.0f)) {
    throw ValidationError("head_dropout_default", "must lie in [0, 1)");
  }
  if (adapter_rank) {
    if (*adapter_rank < 1) throw ValidationError("adapter_rank", "must be >= 1");
    if (*adapter_rank > embed_dim) {
      throw ValidationError("adapter_rank", "must not exceed embed_dim");
    }
  }
}

ModelParams init_model(const ModelConfig& cfg, Vocab vocab, uint64_t seed) {
  cfg.validate();
  if (vocab.size() != cfg.vocab_size) {
    throw ValidationError("vocab_size", "config does not match vocabulary size");
  }
  const int d = cfg.embed_dim, h = cfg.head_hidden_dim, f = cfg.mlp_hidden();
  CounterRng rng(derive_key(seed, 0x6d6f64));

  ModelParams p;
  p.config = cfg;
  p.vocab = std::move(vocab);
  p.backbone.tok_emb = Tensor::gaussian({cfg.vocab_size, d}, kInitStd, rng);
  p.backbone.pos_emb = Tensor::gaussian({cfg.max_seq_len, d}, kInitStd, rng);
  p.backbone.layers.resize(cfg.num_layers);
  for (auto& ly : p.backbone.layers) {
    ly.ln1_g = Tensor::full({d}, 1.0f);
    ly.ln1_b = Tensor::zeros({d});
    ly.wq = Tensor::gaussian({d, d}, kInitStd, rng);
    ly.bq = Tensor::zeros({d});
    ly.wk = Tensor::gaussian({d, d}, kInitStd, rng);
    ly.bk = Tensor::zeros({d});
    ly.wv = Tensor::gaussian({d, d}, kInitStd, rng);
    ly.bv = Tensor::zeros({d});
    ly.wo = Tensor::gaussian({d, d}, kInitStd, rng);
    ly.bo = Tensor::zeros({d});
    ly.ln2_g = Tensor::full({d}, 1.0f);
    ly.ln2_b = Tensor::zeros({d});
    ly.w_fc = Tensor::gaussian({d, f}, kInitStd, rng);
    ly.b_fc = Tensor::zeros({f});
    ly.w_proj = Tensor::gaussian({f, d}, kInitStd, rng);
    ly.b_proj = Tensor::zeros({d});
  }
  p.backbone.lnf_g = Tensor::full({d}, 1.0f);
  p.backbone.lnf_b = Tensor::zeros({d});

  // Fan-in scaled hidden layer; zero output layer pins the initial reward
  // (and the first Bradley-Terry loss) exactly.
  p.head.w1 = Tensor::gaussian({d, h}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  p.head.b1 = Tensor::zeros({h});
  p.head.w2 = Tensor::zeros({h, 1});
  p.head.b2 = Tensor::zeros({1});

  if (cfg.adapter_rank) {
    AdapterParams ad;
    ad.rank = *cfg.adapter_rank;
    ad.alpha = cfg.adapter_alpha;
    ad.layers.resize(cfg.num_layers);
    for (auto& ly : ad.layers) {
      ly.a_q = Tensor::gaussian({d, ad.rank}, kInitStd, rng);
      ly.b_q = Tensor::zeros({ad.rank, d});
      ly.a_v = Tensor::gaussian({d, ad.rank}, kInitStd, rng);
      ly.b_v = Tensor::zeros({ad.rank, d});
    }
    p.adapters = std::move(ad);
  }
  return p;
}

std::vector<ParamEntry> enumerate_params(const ModelParams& p) {
  std::vector<ParamEntry> out;
  visit_params<ParamEntry>(p, [&](ParamEntry e) { out.push_back(std::move(e)); });
  return out;
}

std::vector<MutableParamEntry> enumerate_params(ModelParams& p) {
  std::vector<MutableParamEntry> out;
  visit_params<MutableParamEntry>(p, [&](MutableParamEntry e) { out.push_back(std::move(e)); });
  return out;
}

ModelGraph::ModelGraph(Tape& tape, const ModelParams& params, bool training)
    : tape_(tape), params_(params), training_(training) {
  for (const ParamEntry& e : enumerate_params(params_)) {
    NodeId id;
    if (training_ && e.trainable) {
      id = tape_.param(*e.tensor);
      trainable_nodes_.push_back(id);
    } else {
      id = tape_.constant(*e.tensor);
    }
    all_nodes_.push_back(id);
  }
}

NodeId ModelGraph::backbone(std::span<const int32_t> ids, float dropout_rate,
                            CounterRng* rng) {
  const ModelConfig& cfg = params_.config;
  const int t_len = static_cast<int>(ids.size());
  if (t_len < 1) throw DimensionError("backbone: empty token sequence");
  if (t_len > cfg.max_seq_len) {
    throw DimensionError("backbone: sequence length " + std::to_string(t_len) +
                         " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  g_backbone_forwards.fetch_add(1, std::memory_order_relaxed);

  const bool drop = training_ && dropout_rate > 0.0f && rng != nullptr;
  const int hd = cfg.head_dim();

  // Enumeration order: tok_emb, pos_emb, then 16 tensors per layer, then
  // lnf_g/lnf_b, optional adapters (4 per layer), then the 4 head tensors.
  int idx = 0;
  const NodeId tok_emb = all_nodes_[idx++];
  const NodeId pos_emb = all_nodes_[idx++];
  std::vector<std::array<NodeId, 16>> layer_nodes(cfg.num_layers);
  for (int l = 0; l < cfg.num_layers; ++l)
    for (int j = 0; j < 16; ++j) layer_nodes[l][j] = all_nodes_[idx++];
  const NodeId lnf_g = all_nodes_[idx++];
  const NodeId lnf_b = all_nodes_[idx++];
  std::vector<std::array<NodeId, 4>> adapter_nodes;
  if (params_.adapters) {
    adapter_nodes.resize(cfg.num_layers);
    for (int l = 0; l < cfg.num_layers; ++l)
      for (int j = 0; j < 4; ++j) adapter_nodes[l][j] = all_nodes_[idx++];
  }

  NodeId x = tape_.add(tape_.embedding_gather(tok_emb, {ids.begin(), ids.end()}),
                       tape_.slice_rows(pos_emb, 0, t_len));
  const NodeId mask = tape_.constant(causal_mask(t_len));
  const float inv_sqrt_hd = 1.0f / std::sqrt(static_cast<float>(hd));

  for (int l = 0; l < cfg.num_layers; ++l) {
    const auto& ln = layer_nodes[l];
    // ln: 0 ln1_g, 1 ln1_b, 2 wq, 3 bq, 4 wk, 5 bk, 6 wv, 7 bv, 8 wo, 9 bo,
    //     10 ln2_g, 11 ln2_b, 12 w_fc, 13 b_fc, 14 w_proj, 15 b_proj
    NodeId wq = ln[2], wv = ln[6];
    if (params_.adapters) {
      const float s = params_.adapters->alpha / static_cast<float>(params_.adapters->rank);
      wq = tape_.add(wq, tape_.scale(tape_.matmul(adapter_nodes[l][0], adapter_nodes[l][1]), s));
      wv = tape_.add(wv, tape_.scale(tape_.matmul(adapter_nodes[l][2], adapter_nodes[l][3]), s));
    }
    const NodeId h = tape_.layer_norm(x, ln[0], ln[1]);
    const NodeId q = tape_.add(tape_.matmul(h, wq), ln[3]);
    const NodeId k = tape_.add(tape_.matmul(h, ln[4]), ln[5]);
    const NodeId v = tape_.add(tape_.matmul(h, wv), ln[7]);

    std::vector<NodeId> ctx(cfg.num_heads);
    for (int hh = 0; hh < cfg.num_heads; ++hh) {
      const int c0 = hh * hd, c1 = (hh + 1) * hd;
      const NodeId qh = tape_.slice_cols(q, c0, c1);
      const NodeId kh = tape_.slice_cols(k, c0, c1);
      const NodeId vh = tape_.slice_cols(v, c0, c1);
      NodeId scores = tape_.scale(tape_.matmul(qh, tape_.transpose(kh)), inv_sqrt_hd);
      scores = tape_.add(scores, mask);
      ctx[hh] = tape_.matmul(tape_.softmax_rows(scores), vh);
    }
    NodeId attn = tape_.add(tape_.matmul(tape_.concat_cols(ctx), ln[8]), ln[9]);
    if (drop) attn = tape_.dropout(attn, dropout_rate, *rng);
    x = tape_.add(x, attn);

    const NodeId h2 = tape_.layer_norm(x, ln[10], ln[11]);
    NodeId mlp = tape_.add(
        tape_.matmul(tape_.gelu(tape_.add(tape_.matmul(h2, ln[12]), ln[13])), ln[14]), ln[15]);
    if (drop) mlp = tape_.dropout(mlp, dropout_rate, *rng);
    x = tape_.add(x, mlp);
  }
  x = tape_.layer_norm(x, lnf_g, lnf_b);
  return tape_.index_last(x);
}

NodeId ModelGraph::head(NodeId u, float delta, CounterRng* rng) {
  const size_t n = all_nodes_.size();
  const NodeId w1 = all_nodes_[n - 4], b1 = all_nodes_[n - 3];
  const NodeId w2 = all_nodes_[n - 2], b2 = all_nodes_[n - 1];
  NodeId h = tape_.tanh_op(tape_.add(tape_.matmul(u, w1), b1));
  if (delta > 0.0f && rng != nullptr) h = tape_.dropout(h, delta, *rng);
  return tape_.add(tape_.matmul(h, w2), b2);
}

Tensor backbone_forward(const ModelParams& params, std::span<const int32_t> ids,
                        bool training, float dropout_rate, CounterRng* rng) {
  Tape tape;
  ModelGraph graph(tape, params, training);
  return tape.value(graph.backbone(ids, dropout_rate, rng));
}

float head_forward(const ModelParams& params, const Tensor& u, float delta,
                   uint64_t rng_key) {
  // Head dropout stays live at inference; that is the stochastic-averaging
  // mechanism. Only the backbone is forced deterministic.
  Tape tape;
  const NodeId un = tape.constant(u);
  CounterRng rng(rng_key);
  NodeId h = tape.tanh_op(tape.add(tape.matmul(un, tape.constant(params.head.w1)),
                                   tape.constant(params.head.b1)));
  if (delta > 0.0f) h = tape.dropout(h, delta, rng);
  const NodeId r = tape.add(tape.matmul(h, tape.constant(params.head.w2)),
                            tape.constant(params.head.b2));
  return tape.value(r).at(0);
}

float reward(const ModelParams& params, const InstructionSet& set, int k,
             const std::string& question, const std::string& response, float delta,
             uint64_t rng_key) {
  const std::vector<int32_t> ids = assemble_input(set, k, question, response, params.vocab);
  return head_forward(params, backbone_forward(params, ids), delta, rng_key);
}

float reward_concat(const ModelParams& params, const std::string& question,
                    const std::string& response, float delta, uint64_t rng_key) {
  const std::vector<int32_t> ids = assemble_concat(question, response, params.vocab);
  return head_forward(params, backbone_forward(params, ids), delta, rng_key);
}

float reward_with_format(const ModelParams& params, const InstructionSet& set,
                         InputFormat format, int k, const std::string& question,
                         const std::string& response, float delta, uint64_t rng_key) {
  if (format == InputFormat::concat) {
    return reward_concat(params, question, response, delta, rng_key);
  }
  return reward(params, set, k, question, response, delta, rng_key);
}

BackboneParams apply_adapters(const BackboneParams& base, const AdapterParams& adapters) {
  if (adapters.rank < 1) throw ValidationError("adapter_rank", "must be >= 1");
  if (base.layers.size() != adapters.layers.size()) {
    throw ValidationError("adapters", "layer count does not match backbone");
  }
  BackboneParams out = base;
  const float s = adapters.alpha / static_cast<float>(adapters.rank);
  for (size_t l = 0; l < base.layers.size(); ++l) {
    // Same primitive sequence as the training graph, so materialized
    // weights match it bitwise.
    Tape tape;
    const auto& ad = adapters.layers[l];
    out.layers[l].wq = tape.value(
        tape.add(tape.constant(base.layers[l].wq),
                 tape.scale(tape.matmul(tape.constant(ad.a_q), tape.constant(ad.b_q)), s)));
    out.layers[l].wv = tape.value(
        tape.add(tape.constant(base.layers[l].wv),
                 tape.scale(tape.matmul(tape.constant(ad.a_v), tape.constant(ad.b_v)), s)));
  }
  return out;
}

uint64_t backbone_forward_count() { return g_backbone_forwards.load(); }
void reset_backbone_forward_count() { g_backbone_forwards.store(0); }

}  // namespace pira
