#include "pira/tape.h"

#include <cmath>
#include <utility>

#include "pira/errors.h"

namespace pira {

namespace {

constexpr float kGeluC0 = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluC1 = 0.044715f;

float stable_logistic(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  float e = std::exp(x);
  return e / (1.0f + e);
}

float stable_softplus(float x) {
  if (x > 0.0f) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// C = A @ B with per-element double accumulation.
void matmul_forward(const Tensor& a, const Tensor& b, Tensor& c) {
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> acc(static_cast<size_t>(n));
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* pc = c.data().data();
  for (int i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const float* arow = pa + static_cast<size_t>(i) * k;
    for (int t = 0; t < k; ++t) {
      const double av = arow[t];
      const float* brow = pb + static_cast<size_t>(t) * n;
      for (int j = 0; j < n; ++j) acc[j] += av * brow[j];
    }
    float* crow = pc + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
  }
}

// dA += dC @ B^T
void matmul_grad_a(const Tensor& dc, const Tensor& b, Tensor& da) {
  const int m = da.rows(), k = da.cols(), n = b.cols();
  const float* pdc = dc.data().data();
  const float* pb = b.data().data();
  float* pda = da.data().data();
  for (int i = 0; i < m; ++i) {
    const float* gr = pdc + static_cast<size_t>(i) * n;
    float* dar = pda + static_cast<size_t>(i) * k;
    for (int t = 0; t < k; ++t) {
      const float* brow = pb + static_cast<size_t>(t) * n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += static_cast<double>(gr[j]) * brow[j];
      dar[t] += static_cast<float>(acc);
    }
  }
}

// dB += A^T @ dC
void matmul_grad_b(const Tensor& a, const Tensor& dc, Tensor& db) {
  const int m = a.rows(), k = a.cols(), n = db.cols();
  std::vector<double> acc(static_cast<size_t>(k) * n, 0.0);
  const float* pa = a.data().data();
  const float* pdc = dc.data().data();
  for (int i = 0; i < m; ++i) {
    const float* arow = pa + static_cast<size_t>(i) * k;
    const float* gr = pdc + static_cast<size_t>(i) * n;
    for (int t = 0; t < k; ++t) {
      const double av = arow[t];
      double* accrow = acc.data() + static_cast<size_t>(t) * n;
      for (int j = 0; j < n; ++j) accrow[j] += av * gr[j];
    }
  }
  float* pdb = db.data().data();
  for (size_t i = 0; i < acc.size(); ++i) pdb[i] += static_cast<float>(acc[i]);
}

}  // namespace

NodeId Tape::push(Tensor v, bool requires_grad, const char* op,
                  std::function<void(Tape&)> backprop) {
  Node n;
  n.value = std::move(v);
  n.requires_grad = requires_grad;
  n.op = op;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::constant(Tensor v) { return push(std::move(v), false, "constant", nullptr); }

NodeId Tape::param(Tensor v) { return push(std::move(v), true, "param", nullptr); }

Tensor& Tape::grad_buf(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.numel() == 0) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

const Tensor& Tape::grad(NodeId id) { return grad_buf(id); }

void Tape::add_grad(NodeId id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  Tensor& buf = grad_buf(id);
  float* dst = buf.data().data();
  const float* src = g.data().data();
  const int64_t n = g.numel();
  for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& ta = nodes_[a].value;
  const Tensor& tb = nodes_[b].value;
  if (tb.ndim() != 2 || ta.cols() != tb.rows()) {
    throw DimensionError("matmul: incompatible shapes");
  }
  std::vector<int> shape = ta.ndim() == 1 ? std::vector<int>{tb.cols()}
                                          : std::vector<int>{ta.rows(), tb.cols()};
  Tensor out(std::move(shape));
  matmul_forward(ta, tb, out);
  check_finite(out, "matmul");
  bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [a, b, out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      if (t.nodes_[a].requires_grad) matmul_grad_a(g, t.nodes_[b].value, t.grad_buf(a));
      if (t.nodes_[b].requires_grad) matmul_grad_b(t.nodes_[a].value, g, t.grad_buf(b));
    };
  }
  return push(std::move(out), rg, "matmul", std::move(bp));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& ta = nodes_[a].value;
  const Tensor& tb = nodes_[b].value;
  const bool bias = !ta.same_shape(tb) && tb.numel() == ta.cols() && ta.ndim() == 2;
  if (!ta.same_shape(tb) && !bias) throw DimensionError("add: incompatible shapes");

  Tensor out(ta.shape());
  const float* pa = ta.data().data();
  const float* pb = tb.data().data();
  float* po = out.data().data();
  if (bias) {
    const int m = ta.rows(), n = ta.cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        po[static_cast<size_t>(i) * n + j] = pa[static_cast<size_t>(i) * n + j] + pb[j];
  } else {
    for (int64_t i = 0; i < ta.numel(); ++i) po[i] = pa[i] + pb[i];
  }
  check_finite(out, "add");
  bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [a, b, bias, out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      t.add_grad(a, g);
      if (!t.nodes_[b].requires_grad) return;
      if (!bias) {
        t.add_grad(b, g);
      } else {
        Tensor& db = t.grad_buf(b);
        const int m = g.rows(), n = g.cols();
        std::vector<double> acc(static_cast<size_t>(n), 0.0);
        const float* pg = g.data().data();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) acc[j] += pg[static_cast<size_t>(i) * n + j];
        for (int j = 0; j < n; ++j) db.at(j) += static_cast<float>(acc[j]);
      }
    };
  }
  return push(std::move(out), rg, "add", std::move(bp));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& ta = nodes_[a].value;
  const Tensor& tb = nodes_[b].value;
  if (!ta.same_shape(tb)) throw DimensionError("mul: incompatible shapes");
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.numel(); ++i) out.at(i) = ta.at(i) * tb.at(i);
  check_finite(out, "mul");
  bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [a, b, out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      if (t.nodes_[a].requires_grad) {
        Tensor& da = t.grad_buf(a);
        const Tensor& vb = t.nodes_[b].value;
        for (int64_t i = 0; i < g.numel(); ++i) da.at(i) += g.at(i) * vb.at(i);
      }
      if (t.nodes_[b].requires_grad) {
        Tensor& db = t.grad_buf(b);
        const Tensor& va = t.nodes_[a].value;
        for (int64_t i = 0; i < g.numel(); ++i) db.at(i) += g.at(i) * va.at(i);
      }
    };
  }
  return push(std::move(out), rg, "mul", std::move(bp));
}

NodeId Tape::scale(NodeId a, float s) {
  const Tensor& ta = nodes_[a].value;
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.numel(); ++i) out.at(i) = ta.at(i) * s;
  check_finite(out, "scale");
  bool rg = nodes_[a].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [a, s, out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      Tensor& da = t.grad_buf(a);
      for (int64_t i = 0; i < g.numel(); ++i) da.at(i) += g.at(i) * s;
    };
  }
  return push(std::move(out), rg, "scale", std::move(bp));
}

NodeId Tape::tanh_op(NodeId a) {
  const Tensor& ta = nodes_[a].value;
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.numel(); ++i) out.at(i) = std::tanh(ta.at(i));
  check_finite(out, "tanh");
  bool rg = nodes_[a].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [a, out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      const Tensor& y = t.nodes_[out_id].value;
      Tensor& da = t.grad_buf(a);
      for (int64_t i = 0; i < g.numel(); ++i) da.at(i) += g.at(i) * (1.0f - y.at(i) * y.at(i));
    };
  }
  return push(std::move(out), rg, "tanh", std::move(bp));
}

NodeId Tape::gelu(NodeId a) {
  const Tensor& ta = nodes_[a].value;
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.numel(); ++i) {
    float x = ta.at(i);
    float u = kGeluC0 * (x + kGeluC1 * x * x * x);
    out.at(i) = 0.5f * x * (1.0f + std::tanh(u));
  }
  check_finite(out, "gelu");
  bool rg = nodes_[a].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [a, out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      const Tensor& x = t.nodes_[a].value;
      Tensor& da = t.grad_buf(a);
      for (int64_t i = 0; i < g.numel(); ++i) {
        float xi = x.at(i);
        float u = kGeluC0 * (xi + kGeluC1 * xi * xi * xi);
        float th = std::tanh(u);
        float du = kGeluC0 * (1.0f + 3.0f * kGeluC1 * xi * xi);
        float d = 0.5f * (1.0f + th) + 0.5f * xi * (1.0f - th * th) * du;
        da.at(i) += g.at(i) * d;
      }
    };
  }
  return push(std::move(out), rg, "gelu", std::move(bp));
}

NodeId Tape::logistic(NodeId a) {
  const Tensor& ta = nodes_[a].value;
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.numel(); ++i) out.at(i) = stable_logistic(ta.at(i));
  check_finite(out, "logistic");
  bool rg = nodes_[a].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [a, out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      const Tensor& y = t.nodes_[out_id].value;
      Tensor& da = t.grad_buf(a);
      for (int64_t i = 0; i < g.numel(); ++i) da.at(i) += g.at(i) * y.at(i) * (1.0f - y.at(i));
    };
  }
  return push(std::move(out), rg, "logistic", std::move(bp));
}

NodeId Tape::softplus(NodeId a) {
  const Tensor& ta = nodes_[a].value;
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.numel(); ++i) out.at(i) = stable_softplus(ta.at(i));
  check_finite(out, "softplus");
  bool rg = nodes_[a].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [a, out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      const Tensor& x = t.nodes_[a].value;
      Tensor& da = t.grad_buf(a);
      for (int64_t i = 0; i < g.numel(); ++i) da.at(i) += g.at(i) * stable_logistic(x.at(i));
    };
  }
  return push(std::move(out), rg, "softplus", std::move(bp));
}

NodeId Tape::softmax_rows(NodeId a) {
  const Tensor& ta = nodes_[a].value;
  const int m = ta.rows(), n = ta.cols();
  Tensor out(ta.shape());
  for (int i = 0; i < m; ++i) {
    double mx = -1e300;
    for (int j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(ta(i, j)));
    double denom = 0.0;
    for (int j = 0; j < n; ++j) denom += std::exp(static_cast<double>(ta(i, j)) - mx);
    for (int j = 0; j < n; ++j)
      out(i, j) = static_cast<float>(std::exp(static_cast<double>(ta(i, j)) - mx) / denom);
  }
  check_finite(out, "softmax_rows");
  bool rg = nodes_[a].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [a, m, n, out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      const Tensor& y = t.nodes_[out_id].value;
      Tensor& da = t.grad_buf(a);
      for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += static_cast<double>(g(i, j)) * y(i, j);
        for (int j = 0; j < n; ++j)
          da(i, j) += static_cast<float>(y(i, j) * (g(i, j) - s));
      }
    };
  }
  return push(std::move(out), rg, "softmax_rows", std::move(bp));
}

NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta, float eps) {
  const Tensor& tx = nodes_[x].value;
  const Tensor& tg = nodes_[gamma].value;
  const Tensor& tb = nodes_[beta].value;
  const int m = tx.rows(), n = tx.cols();
  if (tg.numel() != n || tb.numel() != n) throw DimensionError("layer_norm: bad gamma/beta");

  Tensor out(tx.shape());
  Tensor xhat(tx.shape());
  std::vector<double> inv_std(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += tx(i, j);
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      double d = tx(i, j) - mean;
      var += d * d;
    }
    var /= n;
    double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = inv;
    for (int j = 0; j < n; ++j) {
      float xh = static_cast<float>((tx(i, j) - mean) * inv);
      xhat(i, j) = xh;
      out(i, j) = tg.at(j) * xh + tb.at(j);
    }
  }
  check_finite(out, "layer_norm");
  bool rg = nodes_[x].requires_grad || nodes_[gamma].requires_grad || nodes_[beta].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [x, gamma, beta, m, n, xh = std::move(xhat), inv = std::move(inv_std),
          out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      const Tensor& tg = t.nodes_[gamma].value;
      if (t.nodes_[x].requires_grad) {
        Tensor& dx = t.grad_buf(x);
        for (int i = 0; i < m; ++i) {
          double m1 = 0.0, m2 = 0.0;
          for (int j = 0; j < n; ++j) {
            double dxh = static_cast<double>(g(i, j)) * tg.at(j);
            m1 += dxh;
            m2 += dxh * xh(i, j);
          }
          m1 /= n;
          m2 /= n;
          for (int j = 0; j < n; ++j) {
            double dxh = static_cast<double>(g(i, j)) * tg.at(j);
            dx(i, j) += static_cast<float>(inv[i] * (dxh - m1 - xh(i, j) * m2));
          }
        }
      }
      if (t.nodes_[gamma].requires_grad) {
        Tensor& dg = t.grad_buf(gamma);
        std::vector<double> acc(static_cast<size_t>(n), 0.0);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) acc[j] += static_cast<double>(g(i, j)) * xh(i, j);
        for (int j = 0; j < n; ++j) dg.at(j) += static_cast<float>(acc[j]);
      }
      if (t.nodes_[beta].requires_grad) {
        Tensor& db = t.grad_buf(beta);
        std::vector<double> acc(static_cast<size_t>(n), 0.0);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) acc[j] += g(i, j);
        for (int j = 0; j < n; ++j) db.at(j) += static_cast<float>(acc[j]);
      }
    };
  }
  return push(std::move(out), rg, "layer_norm", std::move(bp));
}

NodeId Tape::embedding_gather(NodeId table, std::vector<int32_t> ids) {
  const Tensor& tt = nodes_[table].value;
  if (tt.ndim() != 2) throw DimensionError("embedding_gather: table must be 2D");
  const int v = tt.rows(), d = tt.cols();
  const int t_len = static_cast<int>(ids.size());
  for (int32_t id : ids) {
    if (id < 0 || id >= v) throw DimensionError("embedding_gather: token id out of range");
  }
  Tensor out({t_len, d});
  for (int i = 0; i < t_len; ++i)
    for (int j = 0; j < d; ++j) out(i, j) = tt(ids[i], j);
  check_finite(out, "embedding_gather");
  bool rg = nodes_[table].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [table, ids = std::move(ids), d,
          out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      Tensor& dt = t.grad_buf(table);
      for (size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < d; ++j) dt(ids[i], j) += g(static_cast<int>(i), j);
    };
  }
  return push(std::move(out), rg, "embedding_gather", std::move(bp));
}

NodeId Tape::dropout(NodeId x, float rate, CounterRng& rng, DropoutMode mode) {
  if (!(rate >= 0.0f && rate < 1.0f)) {
    throw ValidationError("rate", "dropout rate must lie in [0, 1)");
  }
  if (mode == DropoutMode::deterministic || rate == 0.0f) return x;

  const Tensor& tx = nodes_[x].value;
  const float keep_scale = 1.0f / (1.0f - rate);
  Tensor mask(tx.shape());
  for (int64_t i = 0; i < tx.numel(); ++i) {
    mask.at(i) = rng.next_float() >= rate ? keep_scale : 0.0f;
  }
  Tensor out(tx.shape());
  for (int64_t i = 0; i < tx.numel(); ++i) out.at(i) = tx.at(i) * mask.at(i);
  check_finite(out, "dropout");
  bool rg = nodes_[x].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [x, mask = std::move(mask), out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      Tensor& dx = t.grad_buf(x);
      for (int64_t i = 0; i < g.numel(); ++i) dx.at(i) += g.at(i) * mask.at(i);
    };
  }
  return push(std::move(out), rg, "dropout", std::move(bp));
}

NodeId Tape::concat_cols(const std::vector<NodeId>& xs) {
  if (xs.empty()) throw DimensionError("concat_cols: empty input list");
  const int m = nodes_[xs[0]].value.rows();
  int total = 0;
  bool rg = false;
  for (NodeId id : xs) {
    const Tensor& t = nodes_[id].value;
    if (t.rows() != m) throw DimensionError("concat_cols: row mismatch");
    total += t.cols();
    rg = rg || nodes_[id].requires_grad;
  }
  Tensor out({m, total});
  int off = 0;
  for (NodeId id : xs) {
    const Tensor& t = nodes_[id].value;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < t.cols(); ++j) out(i, off + j) = t(i, j);
    off += t.cols();
  }
  check_finite(out, "concat_cols");
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [xs, m, out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      int off = 0;
      for (NodeId id : xs) {
        const int w = t.nodes_[id].value.cols();
        if (t.nodes_[id].requires_grad) {
          Tensor& dx = t.grad_buf(id);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) dx(i, j) += g(i, off + j);
        }
        off += w;
      }
    };
  }
  return push(std::move(out), rg, "concat_cols", std::move(bp));
}

NodeId Tape::slice_cols(NodeId x, int c0, int c1) {
  const Tensor& tx = nodes_[x].value;
  if (c0 < 0 || c1 > tx.cols() || c0 >= c1) throw DimensionError("slice_cols: bad range");
  const int m = tx.rows(), w = c1 - c0;
  Tensor out({m, w});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j) out(i, j) = tx(i, c0 + j);
  bool rg = nodes_[x].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [x, c0, m, w, out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      Tensor& dx = t.grad_buf(x);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) dx(i, c0 + j) += g(i, j);
    };
  }
  return push(std::move(out), rg, "slice_cols", std::move(bp));
}

NodeId Tape::slice_rows(NodeId x, int r0, int r1) {
  const Tensor& tx = nodes_[x].value;
  if (r0 < 0 || r1 > tx.rows() || r0 >= r1) throw DimensionError("slice_rows: bad range");
  const int n = tx.cols(), m = r1 - r0;
  Tensor out({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = tx(r0 + i, j);
  bool rg = nodes_[x].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [x, r0, m, n, out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      Tensor& dx = t.grad_buf(x);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) dx(r0 + i, j) += g(i, j);
    };
  }
  return push(std::move(out), rg, "slice_rows", std::move(bp));
}

NodeId Tape::transpose(NodeId x) {
  const Tensor& tx = nodes_[x].value;
  const int m = tx.rows(), n = tx.cols();
  Tensor out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out(j, i) = tx(i, j);
  bool rg = nodes_[x].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [x, m, n, out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      Tensor& dx = t.grad_buf(x);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) dx(i, j) += g(j, i);
    };
  }
  return push(std::move(out), rg, "transpose", std::move(bp));
}

NodeId Tape::index_last(NodeId x) {
  const Tensor& tx = nodes_[x].value;
  if (tx.ndim() != 2 || tx.rows() < 1) throw DimensionError("index_last: need a non-empty 2D input");
  const int n = tx.cols(), last = tx.rows() - 1;
  Tensor out({n});
  for (int j = 0; j < n; ++j) out.at(j) = tx(last, j);
  bool rg = nodes_[x].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [x, n, last, out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const Tensor& g = t.nodes_[out_id].grad;
      Tensor& dx = t.grad_buf(x);
      for (int j = 0; j < n; ++j) dx(last, j) += g.at(j);
    };
  }
  return push(std::move(out), rg, "index_last", std::move(bp));
}

NodeId Tape::sum(NodeId x) {
  const Tensor& tx = nodes_[x].value;
  double acc = 0.0;
  for (int64_t i = 0; i < tx.numel(); ++i) acc += tx.at(i);
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  check_finite(out, "sum");
  bool rg = nodes_[x].requires_grad;
  std::function<void(Tape&)> bp;
  if (rg) {
    bp = [x, out_id = static_cast<NodeId>(nodes_.size())](Tape& t) {
      const float g = t.nodes_[out_id].grad.at(0);
      Tensor& dx = t.grad_buf(x);
      for (int64_t i = 0; i < dx.numel(); ++i) dx.at(i) += g;
    };
  }
  return push(std::move(out), rg, "sum", std::move(bp));
}

void Tape::backward(NodeId seed) {
  if (seed < 0 || seed >= static_cast<NodeId>(nodes_.size())) {
    throw ContractError("backward: seed node out of range");
  }
  if (nodes_[seed].value.numel() != 1) {
    throw ContractError("backward: seed output must be a scalar");
  }
  if (ran_backward_) throw ContractError("backward: already run on this tape");
  ran_backward_ = true;

  grad_buf(seed).at(0) = 1.0f;
  for (NodeId id = seed; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backprop) continue;
    if (n.grad.numel() == 0) continue;  // not on any path to the seed
    n.backprop(*this);
  }
}

}  // namespace pira
