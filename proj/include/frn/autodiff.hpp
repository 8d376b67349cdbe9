#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "frn/rng.hpp"
#include "frn/tensor.hpp"

namespace frn {

enum class Mode { train, eval };

template <typename T>
class Tape;

// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t index = 0;

  const Tensor<T>& value() const { return tape->value(index); }
  const Shape& shape() const { return value().shape(); }
};

// Reverse-mode recording context. Ops append nodes in execution order;
// backward() walks them in exact reverse order, accumulating gradients
// additively into every input that feeds more than one consumer.
// A tape is single-threaded and is consumed by backward().
template <typename T>
class Tape {
 public:
  // Receives the node's accumulated upstream gradient; pushes gradients into inputs.
  using Backprop = std::function<void(Tape&, const Tensor<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  // Non-owning; `value` must outlive the tape.
  Var<T> constant_ref(const Tensor<T>& value);
  // Non-owning, gradient tracked. backward() returns gradients in registration order.
  Var<T> parameter(const Tensor<T>& value);

  Var<T> record(const char* op, Tensor<T> value, bool requires_grad,
                Backprop backprop);

  const Tensor<T>& value(std::size_t index) const;
  bool requires_grad(std::size_t index) const { return nodes_[index].requires_grad; }
  bool requires_grad(Var<T> v) const { return requires_grad(v.index); }

  // Adds `g` into the gradient slot of `index` (no-op for constants).
  void accumulate(std::size_t index, const Tensor<T>& g);
  // Mutable gradient accumulator, zero-initialised on first access.
  Tensor<T>& grad_slot(std::size_t index);

  std::size_t size() const { return nodes_.size(); }
  std::size_t parameter_count() const { return parameters_.size(); }
  bool consumed() const { return consumed_; }

  std::vector<Tensor<T>> backward(Var<T> loss);

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    Backprop backprop;
  };

  void check_live() const;

  std::vector<Node> nodes_;
  std::vector<std::size_t> parameters_;
  bool consumed_ = false;
};

// ---- primitive ops ---------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

// x[m x n] + bias[n] broadcast over rows.
template <typename T>
Var<T> add_bias(Var<T> x, Var<T> bias);

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  return add_bias(matmul(x, weight), bias);
}

// Normalizes each row over the last axis.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));

template <typename T>
Var<T> relu(Var<T> x);

// Inverted dropout. Identity in eval mode or at rate 0.
template <typename T>
Var<T> dropout(Var<T> x, double rate, Rng* rng, Mode mode);

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b);

// Row k of the result is [e(pairs[k].first) | e(pairs[k].second)].
template <typename T>
Var<T> gather_pairs(Var<T> e,
                    const std::vector<std::pair<std::size_t, std::size_t>>& pairs);

// Row b of the result is the mean of rows offsets[b] .. offsets[b+1]-1.
template <typename T>
Var<T> segment_mean(Var<T> h, const std::vector<std::size_t>& offsets);

template <typename T>
struct CrossEntropy {
  Var<T> loss;      // scalar, mean over rows
  Tensor<T> probs;  // softmax of each row
};

template <typename T>
CrossEntropy<T> softmax_cross_entropy(Var<T> logits, const std::vector<int>& labels);

template <typename T>
Var<T> sum(Var<T> x);

template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> x, T factor);

// ---- value-level helpers ---------------------------------------------------

// Max-subtracted softmax of a single logit row.
template <typename T>
std::vector<T> softmax(std::span<const T> logits);

template <typename T>
struct LossAndProbs {
  T loss;
  std::vector<T> probs;
};

template <typename T>
LossAndProbs<T> softmax_cross_entropy(const Tensor<T>& logits, int label);

}  // namespace frn
