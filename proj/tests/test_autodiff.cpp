#include <doctest.h>

#include <cmath>

#include "pira/errors.h"
#include "pira/finite_diff.h"
#include "pira/rng.h"
#include "pira/tape.h"

using namespace pira;

namespace {

Tensor random_tensor(std::vector<int> shape, CounterRng& rng, double stddev = 1.0) {
  return Tensor::gaussian(std::move(shape), stddev, rng);
}

// Independent finite-difference probe of d(sum of weighted outputs)/d(input)
// for an arbitrary single-primitive graph.
double primitive_fd_max_rel(const std::function<NodeId(Tape&, std::vector<NodeId>&)>& build,
                            std::vector<Tensor> inputs, uint64_t seed) {
  // Weighted sum makes the seed scalar sensitive to every output element.
  CounterRng wrng(derive_key(seed, 0x77));
  std::vector<Tensor> base = inputs;

  auto eval = [&](const std::vector<Tensor>& ins, std::vector<Tensor>* grads) -> double {
    Tape tape;
    std::vector<NodeId> in_nodes;
    for (const Tensor& t : ins) in_nodes.push_back(tape.param(t));
    const NodeId out = build(tape, in_nodes);
    CounterRng wr(derive_key(seed, 0x77));
    Tensor w = random_tensor(tape.value(out).shape(), wr);
    const NodeId loss = tape.sum(tape.mul(out, tape.constant(w)));
    const double value = tape.value(loss).at(0);
    if (grads) {
      tape.backward(loss);
      grads->clear();
      for (NodeId id : in_nodes) grads->push_back(tape.grad(id));
    }
    return value;
  };

  std::vector<Tensor> analytic;
  eval(base, &analytic);

  double max_rel = 0.0;
  const double eps = 1e-3;
  CounterRng pick(derive_key(seed, 0x70));
  for (size_t t = 0; t < base.size(); ++t) {
    const int64_t n = base[t].numel();
    const int64_t samples = std::min<int64_t>(n, 12);
    for (int64_t s = 0; s < samples; ++s) {
      const int64_t j = static_cast<int64_t>(pick.next_below(static_cast<uint64_t>(n)));
      std::vector<Tensor> pert = base;
      const float orig = base[t].at(j);
      const float hi = static_cast<float>(orig + eps), lo = static_cast<float>(orig - eps);
      pert[t].at(j) = hi;
      const double lp = eval(pert, nullptr);
      pert[t].at(j) = lo;
      const double lm = eval(pert, nullptr);
      const double fd = (lp - lm) / (static_cast<double>(hi) - lo);
      const double an = analytic[t].at(j);
      max_rel = std::max(max_rel,
                         std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-2}));
    }
  }
  return max_rel;
}

}  // namespace

TEST_SUITE_BEGIN("autodiff");

TEST_CASE("dropout rate 0 is the identity in both modes") {
  CounterRng rng(1);
  Tensor x = random_tensor({4, 5}, rng);
  Tape tape;
  const NodeId xin = tape.constant(x);
  CounterRng drop(2);
  CHECK(tape.dropout(xin, 0.0f, drop, DropoutMode::stochastic) == xin);
  CHECK(tape.dropout(xin, 0.5f, drop, DropoutMode::deterministic) == xin);
  CHECK(drop.counter == 0);  // no draws consumed
}

TEST_CASE("softmax rows sum to one") {
  CounterRng rng(3);
  Tape tape;
  const NodeId out = tape.softmax_rows(tape.constant(random_tensor({6, 9}, rng, 3.0)));
  const Tensor& y = tape.value(out);
  for (int i = 0; i < y.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < y.cols(); ++j) s += y(i, j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("dropout statistics over 10^6 elements") {
  CounterRng rng(4);
  Tensor x = Tensor::full({1000, 1000}, 1.0f);
  Tape tape;
  CounterRng drop(derive_key(4, 1));
  const NodeId out = tape.dropout(tape.constant(x), 0.3f, drop);
  const Tensor& y = tape.value(out);
  int64_t zeros = 0;
  double sum = 0.0;
  for (int64_t i = 0; i < y.numel(); ++i) {
    if (y.at(i) == 0.0f) ++zeros;
    sum += y.at(i);
  }
  const double zero_frac = static_cast<double>(zeros) / static_cast<double>(y.numel());
  CHECK(zero_frac == doctest::Approx(0.3).epsilon(0.002 / 0.3));
  // Inverted scaling preserves the mean within 1%.
  CHECK(sum / static_cast<double>(y.numel()) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("backward of sum is all ones") {
  CounterRng rng(5);
  Tape tape;
  const NodeId p = tape.param(random_tensor({3, 4}, rng));
  tape.backward(tape.sum(p));
  const Tensor& g = tape.grad(p);
  for (int64_t i = 0; i < g.numel(); ++i) CHECK(g.at(i) == 1.0f);
}

TEST_CASE("gradient through logistic(0) times c is 0.5") {
  Tape tape;
  const NodeId c = tape.param(Tensor::scalar(1.7f));
  const NodeId loss = tape.mul(tape.logistic(tape.constant(Tensor::scalar(0.0f))), c);
  tape.backward(loss);
  CHECK(tape.grad(c).at(0) == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("non-scalar backward seed is rejected") {
  CounterRng rng(6);
  Tape tape;
  const NodeId p = tape.param(random_tensor({2, 2}, rng));
  CHECK_THROWS_AS(tape.backward(p), ContractError);
}

TEST_CASE("shape mismatch raises DimensionError") {
  CounterRng rng(7);
  Tape tape;
  const NodeId a = tape.constant(random_tensor({2, 3}, rng));
  const NodeId b = tape.constant(random_tensor({2, 2}, rng));
  CHECK_THROWS_AS(tape.matmul(a, a), DimensionError);
  CHECK_THROWS_AS(tape.add(a, b), DimensionError);
  CHECK_THROWS_AS(tape.mul(a, b), DimensionError);
}

TEST_CASE("non-finite output raises NumericError") {
  Tape tape;
  const NodeId big = tape.constant(Tensor::scalar(1e30f));
  CHECK_THROWS_AS(tape.mul(big, big), NumericError);
}

TEST_CASE("per-primitive finite differences") {
  CounterRng rng(8);
  auto unary = [&](const char* name, auto op, std::vector<int> shape, double stddev) {
    CAPTURE(name);
    std::vector<Tensor> ins{random_tensor(shape, rng, stddev)};
    const double rel = primitive_fd_max_rel(
        [&](Tape& t, std::vector<NodeId>& in) { return op(t, in[0]); }, ins,
        derive_key(8, std::hash<std::string>{}(name)));
    CHECK(rel < 1e-3);
  };

  unary("tanh", [](Tape& t, NodeId a) { return t.tanh_op(a); }, {3, 5}, 1.0);
  unary("gelu", [](Tape& t, NodeId a) { return t.gelu(a); }, {3, 5}, 1.5);
  unary("logistic", [](Tape& t, NodeId a) { return t.logistic(a); }, {3, 5}, 2.0);
  unary("softplus", [](Tape& t, NodeId a) { return t.softplus(a); }, {3, 5}, 2.0);
  unary("softmax_rows", [](Tape& t, NodeId a) { return t.softmax_rows(a); }, {4, 6}, 1.5);
  unary("scale", [](Tape& t, NodeId a) { return t.scale(a, -2.5f); }, {3, 5}, 1.0);
  unary("transpose", [](Tape& t, NodeId a) { return t.transpose(a); }, {3, 5}, 1.0);
  unary("index_last", [](Tape& t, NodeId a) { return t.index_last(a); }, {4, 5}, 1.0);
  unary("sum", [](Tape& t, NodeId a) { return t.sum(a); }, {4, 5}, 1.0);
  unary("slice_cols", [](Tape& t, NodeId a) { return t.slice_cols(a, 1, 4); }, {4, 6}, 1.0);
  unary("slice_rows", [](Tape& t, NodeId a) { return t.slice_rows(a, 1, 3); }, {5, 4}, 1.0);

  SUBCASE("matmul") {
    std::vector<Tensor> ins{random_tensor({4, 3}, rng), random_tensor({3, 5}, rng)};
    CHECK(primitive_fd_max_rel(
              [](Tape& t, std::vector<NodeId>& in) { return t.matmul(in[0], in[1]); },
              ins, 101) < 1e-3);
  }
  SUBCASE("add same shape and bias broadcast") {
    std::vector<Tensor> ins{random_tensor({4, 5}, rng), random_tensor({4, 5}, rng)};
    CHECK(primitive_fd_max_rel(
              [](Tape& t, std::vector<NodeId>& in) { return t.add(in[0], in[1]); },
              ins, 102) < 1e-3);
    std::vector<Tensor> ins2{random_tensor({4, 5}, rng), random_tensor({5}, rng)};
    CHECK(primitive_fd_max_rel(
              [](Tape& t, std::vector<NodeId>& in) { return t.add(in[0], in[1]); },
              ins2, 103) < 1e-3);
  }
  SUBCASE("mul") {
    std::vector<Tensor> ins{random_tensor({4, 5}, rng), random_tensor({4, 5}, rng)};
    CHECK(primitive_fd_max_rel(
              [](Tape& t, std::vector<NodeId>& in) { return t.mul(in[0], in[1]); },
              ins, 104) < 1e-3);
  }
  SUBCASE("layer_norm") {
    std::vector<Tensor> ins{random_tensor({4, 8}, rng), random_tensor({8}, rng),
                            random_tensor({8}, rng)};
    CHECK(primitive_fd_max_rel(
              [](Tape& t, std::vector<NodeId>& in) {
                return t.layer_norm(in[0], in[1], in[2]);
              },
              ins, 105) < 1e-3);
  }
  SUBCASE("embedding_gather") {
    std::vector<Tensor> ins{random_tensor({7, 4}, rng)};
    CHECK(primitive_fd_max_rel(
              [](Tape& t, std::vector<NodeId>& in) {
                return t.embedding_gather(in[0], {0, 3, 3, 6, 1});
              },
              ins, 106) < 1e-3);
  }
  SUBCASE("concat_cols") {
    std::vector<Tensor> ins{random_tensor({4, 2}, rng), random_tensor({4, 3}, rng)};
    CHECK(primitive_fd_max_rel(
              [](Tape& t, std::vector<NodeId>& in) {
                return t.concat_cols({in[0], in[1]});
              },
              ins, 107) < 1e-3);
  }
  SUBCASE("dropout with a frozen mask") {
    std::vector<Tensor> ins{random_tensor({6, 6}, rng)};
    CHECK(primitive_fd_max_rel(
              [](Tape& t, std::vector<NodeId>& in) {
                CounterRng drop(99);  // same mask stream every evaluation
                return t.dropout(in[0], 0.4f, drop);
              },
              ins, 108) < 1e-3);
  }
}

TEST_CASE("two-layer network gradients match finite differences") {
  // 200+ parameters through matmul/tanh/gelu/layer_norm/softplus.
  CounterRng rng(9);
  Tensor w1 = random_tensor({10, 12}, rng, 0.5);
  Tensor b1 = random_tensor({12}, rng, 0.5);
  Tensor w2 = random_tensor({12, 6}, rng, 0.5);
  Tensor b2 = random_tensor({6}, rng, 0.5);
  Tensor x = random_tensor({5, 10}, rng);
  Tensor g = Tensor::full({12}, 1.0f), be = Tensor::zeros({12});

  std::vector<FdTarget> targets;
  std::vector<Tensor*> params = {&w1, &b1, &w2, &b2};
  const char* names[] = {"w1", "b1", "w2", "b2"};

  auto forward = [&](std::vector<Tensor>* grads) -> double {
    Tape tape;
    std::vector<NodeId> ids;
    for (Tensor* p : params) ids.push_back(tape.param(*p));
    NodeId h = tape.layer_norm(tape.add(tape.matmul(tape.constant(x), ids[0]), ids[1]),
                               tape.constant(g), tape.constant(be));
    h = tape.gelu(h);
    NodeId out = tape.tanh_op(tape.add(tape.matmul(h, ids[2]), ids[3]));
    const NodeId loss = tape.sum(tape.softplus(out));
    const double v = tape.value(loss).at(0);
    if (grads) {
      tape.backward(loss);
      grads->clear();
      for (NodeId id : ids) grads->push_back(tape.grad(id));
    }
    return v;
  };

  std::vector<Tensor> analytic;
  forward(&analytic);
  for (size_t i = 0; i < params.size(); ++i) {
    targets.push_back({params[i], analytic[i], names[i]});
  }
  const auto report =
      finite_diff_check([&] { return forward(nullptr); }, targets, 1e-3, 220, 42);
  CHECK(report.checked >= 200);
  CHECK(report.max_rel_error < 1e-3);
}

TEST_CASE("finite_diff_check on a linear loss is nearly exact") {
  CounterRng rng(10);
  Tensor p = random_tensor({20}, rng);
  Tensor w = random_tensor({20}, rng);
  auto loss = [&]() -> double {
    double acc = 0.0;
    for (int i = 0; i < 20; ++i) acc += static_cast<double>(w.at(i)) * p.at(i);
    return acc;
  };
  std::vector<FdTarget> targets{{&p, w, "p"}};
  const auto report = finite_diff_check(loss, targets, 1e-3, 20, 7);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("finite_diff_check rejects a nondeterministic loss") {
  CounterRng rng(11);
  Tensor p = random_tensor({4}, rng);
  CounterRng ambient(12);  // advances between calls: a re-sampled mask
  auto loss = [&]() -> double { return p.at(0) * ambient.next_double(); };
  std::vector<FdTarget> targets{{&p, Tensor::zeros({4}), "p"}};
  CHECK_THROWS_AS(finite_diff_check(loss, targets, 1e-3, 4, 7), DeterminismError);
}

TEST_CASE("gradient linearity") {
  // grad(a*L1 + b*L2) = a*grad(L1) + b*grad(L2)
  CounterRng rng(13);
  Tensor p0 = random_tensor({6, 6}, rng);
  const float a = 2.25f, b = -0.75f;

  auto grads_of = [&](int which) {
    Tape tape;
    const NodeId p = tape.param(p0);
    const NodeId l1 = tape.sum(tape.tanh_op(p));
    const NodeId l2 = tape.sum(tape.mul(p, p));
    NodeId loss;
    if (which == 0) loss = l1;
    else if (which == 1) loss = l2;
    else loss = tape.add(tape.scale(l1, a), tape.scale(l2, b));
    tape.backward(loss);
    return tape.grad(p);
  };
  const Tensor g1 = grads_of(0), g2 = grads_of(1), gc = grads_of(2);
  for (int64_t i = 0; i < g1.numel(); ++i) {
    CHECK(gc.at(i) == doctest::Approx(a * g1.at(i) + b * g2.at(i)).epsilon(1e-5));
  }
}

TEST_CASE("replaying a tape with identical inputs and masks is bitwise stable") {
  CounterRng rng(14);
  Tensor x = random_tensor({8, 8}, rng);
  Tensor w = random_tensor({8, 8}, rng);
  auto run = [&]() {
    Tape tape;
    CounterRng drop(1234);
    const NodeId out = tape.dropout(
        tape.gelu(tape.matmul(tape.constant(x), tape.constant(w))), 0.3f, drop);
    return tape.value(tape.softmax_rows(out));
  };
  CHECK(run().bitwise_equal(run()));
}

TEST_SUITE_END();
