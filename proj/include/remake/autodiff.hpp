#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "remake/errors.hpp"

namespace remake::ad {

// Reverse-mode autodiff over dense double arrays. Each forward call builds a
// fresh graph; leaves hold parameters. Graphs are independent, so concurrent
// forward/backward passes on different threads are safe as long as they do
// not share Tensor nodes.
struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

struct Tensor {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::vector<TensorPtr> parents;
  std::function<void(Tensor&)> backprop;  // pushes grad into parents

  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  // 2D views: all leading dims collapse into rows, last dim is cols.
  int64_t cols() const { return shape.empty() ? 1 : shape.back(); }
  int64_t rows() const { return cols() ? numel() / cols() : 0; }
};

bool grad_enabled();

// Disables graph construction in scope (inference / validation passes).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();

 private:
  bool prev_;
};

TensorPtr leaf(std::vector<int> shape, std::vector<double> value,
               bool requires_grad);
TensorPtr constant(std::vector<int> shape, std::vector<double> value);

// y = x . w + b     x: (N, K), w: (K, M), b: (M) or null
TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);
// Batched matmul. a: (B, M, K); b: (B, K, N), or (B, N, K) with trans_b.
TensorPtr bmm(const TensorPtr& a, const TensorPtr& b, bool trans_b = false);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);  // same shape
TensorPtr scale(const TensorPtr& a, double s);
TensorPtr concat_cols(const std::vector<TensorPtr>& xs);
TensorPtr slice_cols(const TensorPtr& x, int64_t from, int64_t count);
// out.value[i] = x.value[idx[i]]; backward scatter-adds.
TensorPtr gather(const TensorPtr& x, std::shared_ptr<const std::vector<int64_t>> idx,
                 std::vector<int> out_shape);
TensorPtr reshape(const TensorPtr& x, std::vector<int> shape);
// (N, G, D) -> (N, D), mean over the middle axis.
TensorPtr mean_axis1(const TensorPtr& x);
TensorPtr softmax_last(const TensorPtr& x);
TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma,
                     const TensorPtr& beta, double eps = 1e-5);
TensorPtr gelu(const TensorPtr& x);

// Weighted losses against plain arrays; scalar result.
// l1:  sum_i w_i |p_i - t_i| / sum_i w_i
// sq:  sum_i w_i (p_i - t_i)^2 / sum_i w_i
TensorPtr l1_loss(const TensorPtr& pred, const std::vector<double>& target,
                  const std::vector<double>& weights);
TensorPtr sq_loss(const TensorPtr& pred, const std::vector<double>& target,
                  const std::vector<double>& weights);

// Backpropagates from a scalar root through the graph.
void backward(const TensorPtr& root);

}  // namespace remake::ad
