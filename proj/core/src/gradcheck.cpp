#include "pira/gradcheck.h"

#include <chrono>

#include "pira/corpus.h"
#include "pira/errors.h"
#include "pira/train.h"

namespace pira {

namespace {
constexpr uint64_t kTagPair = 0x6763;
constexpr uint64_t kTagDropB = 0x676264;
constexpr uint64_t kTagDropH = 0x676864;
constexpr float kBackboneDropRate = 0.05f;
}  // namespace

GradCheckReport gradcheck_model(const GradCheckConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const InstructionSet& set = default_instruction_set();

  // Small pairs keep each of the ~2*samples loss evaluations cheap.
  SyntheticCorpusConfig corpus_cfg;
  corpus_cfg.vocab_size = cfg.model.vocab_size;
  corpus_cfg.num_examples = cfg.batch_pairs * 5;
  corpus_cfg.response_len_min = 3;
  corpus_cfg.response_len_max = 8;
  corpus_cfg.seed = derive_key(cfg.seed, 0x6363);
  SyntheticCorpus corpus = generate_synthetic_corpus(corpus_cfg, set);

  ModelParams params = init_model(cfg.model, corpus.vocab, cfg.seed);
  {
    // The structured zero init would zero every backbone gradient; check at
    // a generic point instead.
    CounterRng rng(derive_key(cfg.seed, 0x7732));
    params.head.w2 = Tensor::gaussian(params.head.w2.shape(), 0.2, rng);
    params.head.b2 = Tensor::gaussian(params.head.b2.shape(), 0.2, rng);
  }

  std::vector<PreferenceExample> batch(corpus.train.begin(),
                                       corpus.train.begin() + cfg.batch_pairs);

  // Instruction picks and dropout mask streams are pure functions of the
  // pair index, so every loss evaluation sees identical masks.
  auto run_batch = [&](bool with_grads, std::vector<Tensor>* grads_out) -> double {
    double total = 0.0;
    for (int i = 0; i < static_cast<int>(batch.size()); ++i) {
      const uint64_t key = derive_key(cfg.seed, kTagPair, static_cast<uint64_t>(i));
      const int pick = static_cast<int>(derive_key(key, 0x70) % set.size());
      const auto ids_c =
          assemble_input(set, pick, batch[i].question, batch[i].chosen, params.vocab);
      const auto ids_r =
          assemble_input(set, pick, batch[i].question, batch[i].rejected, params.vocab);

      Tape tape;
      ModelGraph graph(tape, params, /*training=*/true);
      CounterRng bb_c(derive_key(key, kTagDropB));
      CounterRng hd_c(derive_key(key, kTagDropH));
      const NodeId rc = graph.head(graph.backbone(ids_c, kBackboneDropRate, &bb_c),
                                   params.config.head_dropout_default, &hd_c);
      CounterRng bb_r(derive_key(key, kTagDropB));
      CounterRng hd_r(derive_key(key, kTagDropH));
      const NodeId rr = graph.head(graph.backbone(ids_r, kBackboneDropRate, &bb_r),
                                   params.config.head_dropout_default, &hd_r);
      const NodeId loss = tape.softplus(tape.scale(tape.sub(rc, rr), -1.0f));
      total += tape.value(loss).at(0);
      if (with_grads) {
        tape.backward(loss);
        const auto& nodes = graph.trainable_nodes();
        for (size_t t = 0; t < nodes.size(); ++t) {
          const Tensor& g = tape.grad(nodes[t]);
          Tensor& acc = (*grads_out)[t];
          for (int64_t j = 0; j < g.numel(); ++j) acc.at(j) += g.at(j);
        }
      }
    }
    return total;
  };

  std::vector<MutableParamEntry> trainable;
  for (MutableParamEntry& e : enumerate_params(params)) {
    if (e.trainable) trainable.push_back(e);
  }
  std::vector<Tensor> grads;
  grads.reserve(trainable.size());
  for (const auto& e : trainable) grads.push_back(Tensor::zeros(e.tensor->shape()));
  run_batch(true, &grads);

  std::vector<FdTarget> targets;
  targets.reserve(trainable.size());
  int64_t params_total = 0;
  for (size_t t = 0; t < trainable.size(); ++t) {
    params_total += trainable[t].tensor->numel();
    targets.push_back({trainable[t].tensor, std::move(grads[t]), trainable[t].name});
  }

  GradCheckReport report;
  report.fd = finite_diff_check([&] { return run_batch(false, nullptr); }, targets,
                                cfg.epsilon, cfg.min_params, derive_key(cfg.seed, 0xfd));
  report.params_total = params_total;
  report.threshold = cfg.threshold;
  report.passed = report.fd.max_rel_error < cfg.threshold;
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace pira
