#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "pira/checkpoint.h"
#include "pira/errors.h"
#include "pira/model.h"
#include "pira/rng.h"
#include "pira/train.h"

using namespace pira;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.vocab_size = 512;
  cfg.embed_dim = 32;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.head_hidden_dim = 32;
  cfg.max_seq_len = 96;
  return cfg;
}

ModelParams fresh_model(const ModelConfig& cfg, uint64_t seed) {
  return init_model(cfg, Vocab::build(cfg.vocab_size, default_instruction_set()), seed);
}

void randomize_head_output(ModelParams& params, uint64_t seed) {
  CounterRng rng(seed);
  params.head.w2 = Tensor::gaussian(params.head.w2.shape(), 0.3, rng);
  params.head.b2 = Tensor::gaussian(params.head.b2.shape(), 0.3, rng);
}

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

Vec to_vec(const Tensor& t) {
  Vec v(t.data().begin(), t.data().end());
  return v;
}

Mat to_mat(const Tensor& t) {
  Mat m(static_cast<size_t>(t.rows()), Vec(static_cast<size_t>(t.cols())));
  for (int i = 0; i < t.rows(); ++i)
    for (int j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

Vec ln_row(const Vec& x, const Vec& g, const Vec& b, double eps = 1e-5) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + eps);
  Vec out(x.size());
  for (size_t j = 0; j < x.size(); ++j) out[j] = g[j] * ((x[j] - mean) * inv) + b[j];
  return out;
}

Vec affine(const Vec& x, const Mat& w, const Vec& b) {
  Vec out(b);
  for (size_t i = 0; i < x.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j) out[j] += x[i] * w[i][j];
  return out;
}

double gelu_ref(double x) {
  const double u = 0.7978845608028654 * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

// Fully independent double-precision re-implementation of the reward
// pipeline (assembly handled by the caller).
double oracle_reward(const ModelParams& p, const std::vector<int32_t>& ids) {
  const ModelConfig& cfg = p.config;
  const int t_len = static_cast<int>(ids.size());
  const int d = cfg.embed_dim, heads = cfg.num_heads, hd = cfg.head_dim();

  std::vector<Vec> x(static_cast<size_t>(t_len), Vec(static_cast<size_t>(d)));
  for (int t = 0; t < t_len; ++t)
    for (int j = 0; j < d; ++j)
      x[t][j] = static_cast<double>(p.backbone.tok_emb(ids[t], j)) + p.backbone.pos_emb(t, j);

  for (const auto& ly : p.backbone.layers) {
    const Mat wq = to_mat(ly.wq), wk = to_mat(ly.wk), wv = to_mat(ly.wv), wo = to_mat(ly.wo);
    const Vec bq = to_vec(ly.bq), bk = to_vec(ly.bk), bv = to_vec(ly.bv), bo = to_vec(ly.bo);
    std::vector<Vec> q(t_len), k(t_len), v(t_len), ctx(t_len, Vec(d, 0.0));
    for (int t = 0; t < t_len; ++t) {
      const Vec h = ln_row(x[t], to_vec(ly.ln1_g), to_vec(ly.ln1_b));
      q[t] = affine(h, wq, bq);
      k[t] = affine(h, wk, bk);
      v[t] = affine(h, wv, bv);
    }
    for (int hh = 0; hh < heads; ++hh) {
      const int c0 = hh * hd;
      for (int t = 0; t < t_len; ++t) {
        Vec scores(static_cast<size_t>(t + 1));
        double mx = -1e300;
        for (int s = 0; s <= t; ++s) {
          double dot = 0.0;
          for (int j = 0; j < hd; ++j) dot += q[t][c0 + j] * k[s][c0 + j];
          scores[s] = dot / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, scores[s]);
        }
        double denom = 0.0;
        for (int s = 0; s <= t; ++s) denom += std::exp(scores[s] - mx);
        for (int s = 0; s <= t; ++s) {
          const double w = std::exp(scores[s] - mx) / denom;
          for (int j = 0; j < hd; ++j) ctx[t][c0 + j] += w * v[s][c0 + j];
        }
      }
    }
    for (int t = 0; t < t_len; ++t) {
      const Vec attn = affine(ctx[t], wo, bo);
      for (int j = 0; j < d; ++j) x[t][j] += attn[j];
      const Vec h2 = ln_row(x[t], to_vec(ly.ln2_g), to_vec(ly.ln2_b));
      Vec mid = affine(h2, to_mat(ly.w_fc), to_vec(ly.b_fc));
      for (double& m : mid) m = gelu_ref(m);
      const Vec out = affine(mid, to_mat(ly.w_proj), to_vec(ly.b_proj));
      for (int j = 0; j < d; ++j) x[t][j] += out[j];
    }
  }
  const Vec u = ln_row(x[static_cast<size_t>(t_len - 1)], to_vec(p.backbone.lnf_g),
                       to_vec(p.backbone.lnf_b));
  Vec hidden = affine(u, to_mat(p.head.w1), to_vec(p.head.b1));
  for (double& h : hidden) h = std::tanh(h);
  double r = p.head.b2.at(0);
  for (size_t i = 0; i < hidden.size(); ++i) r += hidden[i] * p.head.w2(static_cast<int>(i), 0);
  return r;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("inference forward is deterministic and position sensitive") {
  const ModelParams params = fresh_model(small_config(), 11);
  const std::vector<int32_t> ids = {1, 40, 41, 42, 43, 44};
  const Tensor u1 = backbone_forward(params, ids);
  const Tensor u2 = backbone_forward(params, ids);
  CHECK(u1.bitwise_equal(u2));

  std::vector<int32_t> permuted = ids;
  std::swap(permuted[1], permuted[3]);
  const Tensor u3 = backbone_forward(params, permuted);
  CHECK_FALSE(u1.bitwise_equal(u3));
}

TEST_CASE("overlong sequences raise a length error") {
  ModelConfig cfg = small_config();
  cfg.max_seq_len = 4;
  const ModelParams params = fresh_model(cfg, 1);
  CHECK_THROWS_AS(backbone_forward(params, std::vector<int32_t>{1, 2, 3, 4, 5}),
                  DimensionError);
}

TEST_CASE("single token with zeroed attention matches a straight-line oracle") {
  ModelParams params = fresh_model(small_config(), 12);
  for (auto& ly : params.backbone.layers) {
    ly.wq = Tensor::zeros(ly.wq.shape());
    ly.wk = Tensor::zeros(ly.wk.shape());
    ly.wv = Tensor::zeros(ly.wv.shape());
    ly.wo = Tensor::zeros(ly.wo.shape());
  }
  const std::vector<int32_t> ids = {77};
  const Tensor u = backbone_forward(params, ids);

  // By hand: x = emb+pos; each block adds only its MLP path; final norm.
  const int d = params.config.embed_dim;
  Vec x(static_cast<size_t>(d));
  for (int j = 0; j < d; ++j)
    x[static_cast<size_t>(j)] =
        static_cast<double>(params.backbone.tok_emb(77, j)) + params.backbone.pos_emb(0, j);
  for (const auto& ly : params.backbone.layers) {
    const Vec h2 = ln_row(x, to_vec(ly.ln2_g), to_vec(ly.ln2_b));
    Vec mid = affine(h2, to_mat(ly.w_fc), to_vec(ly.b_fc));
    for (double& m : mid) m = gelu_ref(m);
    const Vec out = affine(mid, to_mat(ly.w_proj), to_vec(ly.b_proj));
    for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] += out[static_cast<size_t>(j)];
  }
  const Vec want = ln_row(x, to_vec(params.backbone.lnf_g), to_vec(params.backbone.lnf_b));
  for (int j = 0; j < d; ++j) {
    CHECK(u.at(j) == doctest::Approx(want[static_cast<size_t>(j)]).epsilon(1e-4));
  }
}

TEST_CASE("head: determinism at delta 0, stochasticity otherwise, MC unbiasedness") {
  ModelParams params = fresh_model(small_config(), 13);
  randomize_head_output(params, 14);
  CounterRng rng(15);
  const Tensor u = Tensor::gaussian({params.config.embed_dim}, 1.0, rng);

  const float det = head_forward(params, u, 0.0f, 1);
  CHECK(det == head_forward(params, u, 0.0f, 2));  // key irrelevant at delta 0
  CHECK(head_forward(params, u, 0.3f, 1) == head_forward(params, u, 0.3f, 1));
  CHECK(head_forward(params, u, 0.3f, 1) != head_forward(params, u, 0.3f, 2));

  // Inverted dropout keeps the head unbiased at the linear output layer.
  const int n = 10000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = head_forward(params, u, 0.3f, derive_key(200, i));
    acc += r;
    acc2 += r * r;
  }
  const double mean = acc / n;
  const double var = (acc2 - n * mean * mean) / (n - 1);
  const double se = std::sqrt(var / n);
  CHECK(std::abs(mean - det) < 3.0 * se);
}

TEST_CASE("reward equals the deterministic composition and the monolithic oracle") {
  ModelParams params = fresh_model(small_config(), 16);
  randomize_head_output(params, 17);
  const InstructionSet& set = default_instruction_set();
  const Vocab& vocab = params.vocab;

  CounterRng rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = static_cast<int>(rng.next_below(10));
    std::string q, a;
    for (int i = 0; i < 4; ++i) {
      q += (i ? " " : "");
      q += vocab.token(vocab.filler_ids()[rng.next_below(vocab.filler_ids().size())]);
    }
    for (int i = 0; i < 6; ++i) {
      a += (i ? " " : "");
      const auto& pool = i % 2 ? vocab.good_ids() : vocab.filler_ids();
      a += vocab.token(pool[rng.next_below(pool.size())]);
    }

    const float r = reward(params, set, k, q, a, 0.0f, 999);
    // Composition identity, bitwise.
    const auto ids = assemble_input(set, k, q, a, vocab);
    CHECK(r == head_forward(params, backbone_forward(params, ids), 0.0f, 999));
    // Independent monolithic pipeline.
    CHECK(r == doctest::Approx(oracle_reward(params, ids)).epsilon(5e-3));

    // Distinct templates produce distinct token sequences.
    const int k2 = (k + 1) % 10;
    CHECK(assemble_input(set, k2, q, a, vocab) != ids);
  }
}

TEST_CASE("bias shift moves every reward by the shift and keeps orderings") {
  ModelParams params = fresh_model(small_config(), 19);
  randomize_head_output(params, 20);
  ModelParams shifted = params;
  const float c = 2.0f;
  shifted.head.b2.at(0) += c;

  const InstructionSet& set = default_instruction_set();
  CounterRng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    std::string q = params.vocab.token(
        params.vocab.filler_ids()[rng.next_below(params.vocab.filler_ids().size())]);
    std::string a1 = params.vocab.token(
        params.vocab.good_ids()[rng.next_below(params.vocab.good_ids().size())]);
    std::string a2 = params.vocab.token(
        params.vocab.bad_ids()[rng.next_below(params.vocab.bad_ids().size())]);
    a1 += " " + q;
    a2 += " " + q;
    const float r1 = reward(params, set, 0, q, a1, 0.0f, 0);
    const float r2 = reward(params, set, 0, q, a2, 0.0f, 0);
    const float s1 = reward(shifted, set, 0, q, a1, 0.0f, 0);
    const float s2 = reward(shifted, set, 0, q, a2, 0.0f, 0);
    CHECK(s1 - r1 == doctest::Approx(c).epsilon(1e-5));
    CHECK(s2 - r2 == doctest::Approx(c).epsilon(1e-5));
    if (std::abs(r1 - r2) > 1e-5f) {
      CHECK((r1 > r2) == (s1 > s2));
    }
  }
}

TEST_CASE("adapters: zero factors are the identity; dense rank equals direct addition") {
  ModelConfig cfg = small_config();
  const ModelParams base = fresh_model(cfg, 22);

  cfg.adapter_rank = 4;
  cfg.adapter_alpha = 4.0f;
  ModelParams lora = fresh_model(cfg, 22);
  // Same backbone/head point as `base` (adapter draws shift later tensors,
  // so copy explicitly).
  lora.backbone = base.backbone;
  lora.head = base.head;
  randomize_head_output(lora, 23);

  const InstructionSet& set = default_instruction_set();
  const std::string q = "fill000 fill001", a = "good000 fill002";

  // B starts at zero, so rewards match a no-adapter model bitwise.
  ModelParams plain = base;
  plain.head = lora.head;
  CHECK(reward(lora, set, 0, q, a, 0.0f, 0) == reward(plain, set, 0, q, a, 0.0f, 0));

  // Dense oracle at rank == embed_dim and alpha == rank: W + A B.
  ModelConfig dense_cfg = small_config();
  dense_cfg.adapter_rank = dense_cfg.embed_dim;
  dense_cfg.adapter_alpha = static_cast<float>(dense_cfg.embed_dim);
  ModelParams dense = fresh_model(dense_cfg, 22);
  dense.backbone = base.backbone;
  dense.head = lora.head;
  CounterRng arng(24);
  for (auto& ly : dense.adapters->layers) {
    ly.a_q = Tensor::gaussian(ly.a_q.shape(), 0.05, arng);
    ly.b_q = Tensor::gaussian(ly.b_q.shape(), 0.05, arng);
    ly.a_v = Tensor::gaussian(ly.a_v.shape(), 0.05, arng);
    ly.b_v = Tensor::gaussian(ly.b_v.shape(), 0.05, arng);
  }
  const BackboneParams effective = apply_adapters(dense.backbone, *dense.adapters);
  ModelParams manual = base;
  manual.head = dense.head;
  const int d = dense_cfg.embed_dim;
  for (size_t l = 0; l < manual.backbone.layers.size(); ++l) {
    const auto& ad = dense.adapters->layers[l];
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        double dq = 0.0, dv = 0.0;
        for (int r = 0; r < d; ++r) {
          dq += static_cast<double>(ad.a_q(i, r)) * ad.b_q(r, j);
          dv += static_cast<double>(ad.a_v(i, r)) * ad.b_v(r, j);
        }
        manual.backbone.layers[l].wq(i, j) += static_cast<float>(dq);
        manual.backbone.layers[l].wv(i, j) += static_cast<float>(dv);
      }
    }
    CHECK(effective.layers[l].wq.bitwise_equal(dense.backbone.layers[l].wq) == false);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        CHECK(effective.layers[l].wq(i, j) ==
              doctest::Approx(manual.backbone.layers[l].wq(i, j)).epsilon(1e-5));
  }
  const float via_graph = reward(dense, set, 0, q, a, 0.0f, 0);
  ModelParams materialized = dense;
  materialized.backbone = effective;
  materialized.adapters.reset();
  materialized.config.adapter_rank.reset();
  CHECK(via_graph == reward(materialized, set, 0, q, a, 0.0f, 0));

  CHECK_THROWS_AS(
      [] {
        ModelConfig bad;
        bad.adapter_rank = bad.embed_dim + 1;
        bad.validate();
      }(),
      ValidationError);
}

TEST_CASE("adapter training updates factors but never the frozen base") {
  ModelConfig cfg = small_config();
  cfg.adapter_rank = 4;
  ModelParams params = fresh_model(cfg, 30);
  randomize_head_output(params, 31);
  const ModelParams before = params;

  TrainConfig tc;
  tc.batch_size = 4;
  tc.epochs = 1;
  tc.threads = 1;
  tc.seed = 32;
  OptimizerState opt = OptimizerState::create(params);
  std::vector<PreferenceExample> batch;
  for (int i = 0; i < 4; ++i) {
    batch.push_back({"fill000 fill001", "good000 good001 fill002", "bad000 fill003", 2.0});
  }
  train_step(params, opt, batch, default_instruction_set(), tc, 10, 0, 0);

  // Frozen base weights are bitwise identical; adapters and head moved.
  CHECK(params.backbone.tok_emb.bitwise_equal(before.backbone.tok_emb));
  for (size_t l = 0; l < params.backbone.layers.size(); ++l) {
    CHECK(params.backbone.layers[l].wq.bitwise_equal(before.backbone.layers[l].wq));
    CHECK(params.backbone.layers[l].w_fc.bitwise_equal(before.backbone.layers[l].w_fc));
  }
  CHECK_FALSE(params.adapters->layers[0].b_q.bitwise_equal(before.adapters->layers[0].b_q));
  CHECK_FALSE(params.head.w2.bitwise_equal(before.head.w2));
}

TEST_CASE("checkpoint round-trip is bitwise; corruption and mismatch are refused") {
  const fs::path dir = fs::temp_directory_path() / "pira_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "model.pira").string();

  ModelParams params = fresh_model(small_config(), 40);
  randomize_head_output(params, 41);
  save_checkpoint(params, {123, 40}, path);

  const LoadedCheckpoint ck = load_checkpoint(path);
  CHECK(ck.meta.step == 123);
  CHECK(ck.meta.seed == 40);
  CHECK(ck.params.config == params.config);
  const auto a = enumerate_params(params);
  const auto b = enumerate_params(ck.params);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tensor->bitwise_equal(*b[i].tensor));
  }
  CHECK(ck.params.vocab.tokens() == params.vocab.tokens());

  // Truncation.
  {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream out((dir / "trunc.pira").string(), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "trunc.pira").string()), IoError);

  // Bad magic.
  {
    std::ofstream out((dir / "junk.pira").string(), std::ios::binary);
    out << "JUNKJUNKJUNKJUNKJUNKJUNK";
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "junk.pira").string()), ParseError);

  // Config mismatch.
  ModelConfig other = small_config();
  other.vocab_size = 600;
  CHECK_THROWS_AS(load_checkpoint(path, other), ConfigMismatchError);
  CHECK_NOTHROW(load_checkpoint(path, params.config));
}

TEST_SUITE_END();
