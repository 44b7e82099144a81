#include "remake/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace remake::ad {

namespace {

thread_local bool g_grad_enabled = true;

// c (M,N) += a (M,K) . b (K,N)
void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k,
             int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c (M,N) += a (M,K) . b (N,K)^T
void gemm_nt(const double* a, const double* b, double* c, int64_t m, int64_t k,
             int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0;
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// c (K,N) += a (M,K)^T . b (M,N)
void gemm_tn(const double* a, const double* b, double* c, int64_t m, int64_t k,
             int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

TensorPtr make_node(std::vector<int> shape, std::vector<TensorPtr> parents) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  t->requires_grad = needs;
  if (needs) {
    t->parents = std::move(parents);
  }
  t->value.resize(static_cast<size_t>(t->numel()));
  if (needs) t->grad.assign(t->value.size(), 0.0);
  return t;
}

void check_2d_compatible(const Tensor& x, const Tensor& w) {
  if (x.cols() != w.rows()) {
    throw NumericError("linear: inner dimensions differ: " +
                       std::to_string(x.cols()) + " vs " +
                       std::to_string(w.rows()));
  }
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

TensorPtr leaf(std::vector<int> shape, std::vector<double> value,
               bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->value = std::move(value);
  if (static_cast<int64_t>(t->value.size()) != t->numel()) {
    throw NumericError("leaf: value size does not match shape");
  }
  t->requires_grad = requires_grad && g_grad_enabled;
  if (t->requires_grad) t->grad.assign(t->value.size(), 0.0);
  return t;
}

TensorPtr constant(std::vector<int> shape, std::vector<double> value) {
  return leaf(std::move(shape), std::move(value), false);
}

TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
  check_2d_compatible(*x, *w);
  const int64_t n = x->rows(), k = x->cols(), m = w->cols();
  std::vector<int> out_shape(x->shape.begin(), x->shape.end() - 1);
  out_shape.push_back(static_cast<int>(m));
  std::vector<TensorPtr> parents{x, w};
  if (b) parents.push_back(b);
  auto out = make_node(std::move(out_shape), std::move(parents));

  std::fill(out->value.begin(), out->value.end(), 0.0);
  gemm_nn(x->value.data(), w->value.data(), out->value.data(), n, k, m);
  if (b) {
    for (int64_t i = 0; i < n; ++i) {
      double* row = out->value.data() + i * m;
      for (int64_t j = 0; j < m; ++j) row[j] += b->value[j];
    }
  }

  if (out->requires_grad) {
    TensorPtr xp = x, wp = w, bp = b;
    out->backprop = [xp, wp, bp, n, k, m](Tensor& self) {
      if (xp->requires_grad) {
        gemm_nt(self.grad.data(), wp->value.data(), xp->grad.data(), n, m, k);
      }
      if (wp->requires_grad) {
        gemm_tn(xp->value.data(), self.grad.data(), wp->grad.data(), n, k, m);
      }
      if (bp && bp->requires_grad) {
        for (int64_t i = 0; i < n; ++i) {
          const double* row = self.grad.data() + i * m;
          for (int64_t j = 0; j < m; ++j) bp->grad[j] += row[j];
        }
      }
    };
  }
  return out;
}

TensorPtr bmm(const TensorPtr& a, const TensorPtr& b, bool trans_b) {
  if (a->shape.size() != 3 || b->shape.size() != 3 ||
      a->shape[0] != b->shape[0]) {
    throw NumericError("bmm: expects matching 3D batches");
  }
  const int64_t batches = a->shape[0];
  const int64_t m = a->shape[1], k = a->shape[2];
  const int64_t kb = trans_b ? b->shape[2] : b->shape[1];
  const int64_t n = trans_b ? b->shape[1] : b->shape[2];
  if (kb != k) throw NumericError("bmm: inner dimensions differ");

  auto out = make_node({static_cast<int>(batches), static_cast<int>(m),
                        static_cast<int>(n)},
                       {a, b});
  std::fill(out->value.begin(), out->value.end(), 0.0);
  for (int64_t i = 0; i < batches; ++i) {
    const double* ap = a->value.data() + i * m * k;
    const double* bp = b->value.data() + i * (trans_b ? n * k : k * n);
    double* cp = out->value.data() + i * m * n;
    if (trans_b) {
      gemm_nt(ap, bp, cp, m, k, n);
    } else {
      gemm_nn(ap, bp, cp, m, k, n);
    }
  }

  if (out->requires_grad) {
    TensorPtr pa = a, pb = b;
    out->backprop = [pa, pb, batches, m, k, n, trans_b](Tensor& self) {
      for (int64_t i = 0; i < batches; ++i) {
        const double* gy = self.grad.data() + i * m * n;
        const double* av = pa->value.data() + i * m * k;
        const double* bv = pb->value.data() + i * (trans_b ? n * k : k * n);
        if (pa->requires_grad) {
          double* ga = pa->grad.data() + i * m * k;
          if (trans_b) {
            // dA = dY . B            (M,N)x(N,K)
            gemm_nn(gy, bv, ga, m, n, k);
          } else {
            // dA = dY . B^T          (M,N)x(K,N)^T
            gemm_nt(gy, bv, ga, m, n, k);
          }
        }
        if (pb->requires_grad) {
          double* gb = pb->grad.data() + i * (trans_b ? n * k : k * n);
          if (trans_b) {
            // dB = dY^T . A          (N,M)x(M,K)
            gemm_tn(gy, av, gb, m, n, k);
          } else {
            // dB = A^T . dY          (K,M)x(M,N)
            gemm_tn(av, gy, gb, m, k, n);
          }
        }
      }
    };
  }
  return out;
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  if (a->numel() != b->numel()) throw NumericError("add: size mismatch");
  auto out = make_node(a->shape, {a, b});
  for (size_t i = 0; i < out->value.size(); ++i) {
    out->value[i] = a->value[i] + b->value[i];
  }
  if (out->requires_grad) {
    TensorPtr pa = a, pb = b;
    out->backprop = [pa, pb](Tensor& self) {
      if (pa->requires_grad) {
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
      }
      if (pb->requires_grad) {
        for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
      }
    };
  }
  return out;
}

TensorPtr scale(const TensorPtr& a, double s) {
  auto out = make_node(a->shape, {a});
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a->value[i] * s;
  if (out->requires_grad) {
    TensorPtr pa = a;
    out->backprop = [pa, s](Tensor& self) {
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += s * self.grad[i];
    };
  }
  return out;
}

TensorPtr concat_cols(const std::vector<TensorPtr>& xs) {
  if (xs.empty()) throw NumericError("concat_cols: empty input");
  const int64_t rows = xs[0]->rows();
  int64_t total = 0;
  for (const auto& x : xs) {
    if (x->rows() != rows) throw NumericError("concat_cols: row mismatch");
    total += x->cols();
  }
  std::vector<int> shape(xs[0]->shape.begin(), xs[0]->shape.end() - 1);
  shape.push_back(static_cast<int>(total));
  auto out = make_node(std::move(shape), std::vector<TensorPtr>(xs));
  int64_t offset = 0;
  for (const auto& x : xs) {
    const int64_t c = x->cols();
    for (int64_t i = 0; i < rows; ++i) {
      std::copy_n(x->value.data() + i * c, c,
                  out->value.data() + i * total + offset);
    }
    offset += c;
  }
  if (out->requires_grad) {
    std::vector<TensorPtr> ps(xs);
    out->backprop = [ps, rows, total](Tensor& self) {
      int64_t offset = 0;
      for (const auto& p : ps) {
        const int64_t c = p->cols();
        if (p->requires_grad) {
          for (int64_t i = 0; i < rows; ++i) {
            const double* g = self.grad.data() + i * total + offset;
            double* pg = p->grad.data() + i * c;
            for (int64_t j = 0; j < c; ++j) pg[j] += g[j];
          }
        }
        offset += c;
      }
    };
  }
  return out;
}

TensorPtr slice_cols(const TensorPtr& x, int64_t from, int64_t count) {
  const int64_t rows = x->rows(), c = x->cols();
  if (from < 0 || from + count > c) throw NumericError("slice_cols: out of range");
  std::vector<int> shape(x->shape.begin(), x->shape.end() - 1);
  shape.push_back(static_cast<int>(count));
  auto out = make_node(std::move(shape), {x});
  for (int64_t i = 0; i < rows; ++i) {
    std::copy_n(x->value.data() + i * c + from, count,
                out->value.data() + i * count);
  }
  if (out->requires_grad) {
    TensorPtr px = x;
    out->backprop = [px, from, count, rows, c](Tensor& self) {
      for (int64_t i = 0; i < rows; ++i) {
        const double* g = self.grad.data() + i * count;
        double* pg = px->grad.data() + i * c + from;
        for (int64_t j = 0; j < count; ++j) pg[j] += g[j];
      }
    };
  }
  return out;
}

TensorPtr gather(const TensorPtr& x,
                 std::shared_ptr<const std::vector<int64_t>> idx,
                 std::vector<int> out_shape) {
  auto out = make_node(std::move(out_shape), {x});
  if (static_cast<int64_t>(idx->size()) != out->numel()) {
    throw NumericError("gather: index size does not match output shape");
  }
  const auto& ix = *idx;
  for (size_t i = 0; i < ix.size(); ++i) out->value[i] = x->value[ix[i]];
  if (out->requires_grad) {
    TensorPtr px = x;
    out->backprop = [px, idx](Tensor& self) {
      const auto& ix = *idx;
      for (size_t i = 0; i < ix.size(); ++i) px->grad[ix[i]] += self.grad[i];
    };
  }
  return out;
}

TensorPtr reshape(const TensorPtr& x, std::vector<int> shape) {
  auto out = make_node(std::move(shape), {x});
  if (out->numel() != x->numel()) throw NumericError("reshape: size mismatch");
  out->value = x->value;
  if (out->requires_grad) {
    TensorPtr px = x;
    out->backprop = [px](Tensor& self) {
      for (size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
    };
  }
  return out;
}

TensorPtr mean_axis1(const TensorPtr& x) {
  if (x->shape.size() != 3) throw NumericError("mean_axis1: expects 3D input");
  const int64_t n = x->shape[0], g = x->shape[1], d = x->shape[2];
  auto out = make_node({static_cast<int>(n), static_cast<int>(d)}, {x});
  const double inv = 1.0 / static_cast<double>(g);
  for (int64_t i = 0; i < n; ++i) {
    double* orow = out->value.data() + i * d;
    std::fill_n(orow, d, 0.0);
    for (int64_t j = 0; j < g; ++j) {
      const double* xrow = x->value.data() + (i * g + j) * d;
      for (int64_t c = 0; c < d; ++c) orow[c] += xrow[c];
    }
    for (int64_t c = 0; c < d; ++c) orow[c] *= inv;
  }
  if (out->requires_grad) {
    TensorPtr px = x;
    out->backprop = [px, n, g, d, inv](Tensor& self) {
      for (int64_t i = 0; i < n; ++i) {
        const double* grow = self.grad.data() + i * d;
        for (int64_t j = 0; j < g; ++j) {
          double* pg = px->grad.data() + (i * g + j) * d;
          for (int64_t c = 0; c < d; ++c) pg[c] += grow[c] * inv;
        }
      }
    };
  }
  return out;
}

TensorPtr softmax_last(const TensorPtr& x) {
  const int64_t rows = x->rows(), c = x->cols();
  auto out = make_node(x->shape, {x});
  for (int64_t i = 0; i < rows; ++i) {
    const double* xr = x->value.data() + i * c;
    double* yr = out->value.data() + i * c;
    double mx = xr[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
    double sum = 0;
    for (int64_t j = 0; j < c; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const double inv = 1.0 / sum;
    for (int64_t j = 0; j < c; ++j) yr[j] *= inv;
  }
  if (out->requires_grad) {
    TensorPtr px = x;
    out->backprop = [px, rows, c](Tensor& self) {
      for (int64_t i = 0; i < rows; ++i) {
        const double* y = self.value.data() + i * c;
        const double* gy = self.grad.data() + i * c;
        double* gx = px->grad.data() + i * c;
        double dot = 0;
        for (int64_t j = 0; j < c; ++j) dot += gy[j] * y[j];
        for (int64_t j = 0; j < c; ++j) gx[j] += y[j] * (gy[j] - dot);
      }
    };
  }
  return out;
}

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma,
                     const TensorPtr& beta, double eps) {
  const int64_t rows = x->rows(), d = x->cols();
  if (gamma->numel() != d || beta->numel() != d) {
    throw NumericError("layer_norm: gamma/beta size mismatch");
  }
  auto out = make_node(x->shape, {x, gamma, beta});
  // Cache per-row mean and inverse stddev for the backward pass.
  auto stats = std::make_shared<std::vector<double>>(rows * 2);
  for (int64_t i = 0; i < rows; ++i) {
    const double* xr = x->value.data() + i * d;
    double mean = 0;
    for (int64_t j = 0; j < d; ++j) mean += xr[j];
    mean /= d;
    double var = 0;
    for (int64_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= d;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    (*stats)[2 * i] = mean;
    (*stats)[2 * i + 1] = inv_std;
    double* yr = out->value.data() + i * d;
    for (int64_t j = 0; j < d; ++j) {
      yr[j] = (xr[j] - mean) * inv_std * gamma->value[j] + beta->value[j];
    }
  }
  if (out->requires_grad) {
    TensorPtr px = x, pg = gamma, pb = beta;
    out->backprop = [px, pg, pb, stats, rows, d](Tensor& self) {
      for (int64_t i = 0; i < rows; ++i) {
        const double mean = (*stats)[2 * i];
        const double inv_std = (*stats)[2 * i + 1];
        const double* xr = px->value.data() + i * d;
        const double* gy = self.grad.data() + i * d;
        double sum_gxhat = 0, sum_gxhat_xhat = 0;
        for (int64_t j = 0; j < d; ++j) {
          const double xhat = (xr[j] - mean) * inv_std;
          const double gxhat = gy[j] * pg->value[j];
          sum_gxhat += gxhat;
          sum_gxhat_xhat += gxhat * xhat;
          if (pg->requires_grad) pg->grad[j] += gy[j] * xhat;
          if (pb->requires_grad) pb->grad[j] += gy[j];
        }
        if (px->requires_grad) {
          double* gx = px->grad.data() + i * d;
          const double invd = 1.0 / d;
          for (int64_t j = 0; j < d; ++j) {
            const double xhat = (xr[j] - mean) * inv_std;
            const double gxhat = gy[j] * pg->value[j];
            gx[j] += inv_std *
                     (gxhat - invd * sum_gxhat - xhat * invd * sum_gxhat_xhat);
          }
        }
      }
    };
  }
  return out;
}

TensorPtr gelu(const TensorPtr& x) {
  auto out = make_node(x->shape, {x});
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  for (size_t i = 0; i < out->value.size(); ++i) {
    const double v = x->value[i];
    out->value[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  if (out->requires_grad) {
    TensorPtr px = x;
    out->backprop = [px](Tensor& self) {
      for (size_t i = 0; i < self.grad.size(); ++i) {
        const double v = px->value[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        px->grad[i] += self.grad[i] * (cdf + v * pdf);
      }
    };
  }
  return out;
}

namespace {

TensorPtr weighted_loss(const TensorPtr& pred, const std::vector<double>& target,
                        const std::vector<double>& weights, bool squared) {
  if (pred->value.size() != target.size() || target.size() != weights.size()) {
    throw NumericError("loss: size mismatch");
  }
  double wsum = 0;
  for (double w : weights) wsum += w;
  if (!(wsum > 0)) {
    throw DataError(DataError::Kind::kEmptyRegion,
                    "loss: empty effective region (no positive weight)");
  }
  auto out = make_node({1}, {pred});
  double acc = 0;
  for (size_t i = 0; i < target.size(); ++i) {
    const double e = pred->value[i] - target[i];
    acc += weights[i] * (squared ? e * e : std::abs(e));
  }
  out->value[0] = acc / wsum;
  if (out->requires_grad) {
    TensorPtr pp = pred;
    auto tgt = std::make_shared<std::vector<double>>(target);
    auto wts = std::make_shared<std::vector<double>>(weights);
    out->backprop = [pp, tgt, wts, wsum, squared](Tensor& self) {
      const double g = self.grad[0] / wsum;
      for (size_t i = 0; i < tgt->size(); ++i) {
        const double w = (*wts)[i];
        if (w == 0) continue;
        const double e = pp->value[i] - (*tgt)[i];
        pp->grad[i] += g * w * (squared ? 2.0 * e : (e > 0 ? 1.0 : (e < 0 ? -1.0 : 0.0)));
      }
    };
  }
  return out;
}

}  // namespace

TensorPtr l1_loss(const TensorPtr& pred, const std::vector<double>& target,
                  const std::vector<double>& weights) {
  return weighted_loss(pred, target, weights, false);
}

TensorPtr sq_loss(const TensorPtr& pred, const std::vector<double>& target,
                  const std::vector<double>& weights) {
  return weighted_loss(pred, target, weights, true);
}

void backward(const TensorPtr& root) {
  if (root->numel() != 1) throw NumericError("backward: root must be scalar");
  if (!root->requires_grad) return;

  // Iterative post-order DFS for a reverse-topological schedule.
  std::vector<Tensor*> order;
  std::unordered_set<Tensor*> visited;
  std::vector<std::pair<Tensor*, size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Tensor* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

}  // namespace remake::ad
