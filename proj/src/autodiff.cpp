#include "frn/autodiff.hpp"

#include <Eigen/Core>
#include <cmath>

namespace frn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

template <typename T>
ConstMap<T> view(const Tensor<T>& t) {
  return ConstMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
MutMap<T> view(Tensor<T>& t) {
  return MutMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
void require_same_tape(Var<T> a, Var<T> b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw UsageError(std::string(op) + ": operands recorded on different tapes");
  }
}

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op, const char* name) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": " + name + " must be a matrix, got " +
                         shape_str(t.shape()));
  }
}

}  // namespace

// ---- Tape ------------------------------------------------------------------

template <typename T>
void Tape<T>::check_live() const {
  if (consumed_) throw UsageError("tape already consumed by backward()");
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  check_live();
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::constant_ref(const Tensor<T>& value) {
  check_live();
  Node node;
  node.ref = &value;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::parameter(const Tensor<T>& value) {
  check_live();
  Node node;
  node.ref = &value;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  parameters_.push_back(nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(const char* op, Tensor<T> value, bool requires_grad,
                       Backprop backprop) {
  check_live();
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite value in output " +
                       shape_str(value.shape()));
  }
  Node node;
  node.owned = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t index) const {
  const Node& node = nodes_.at(index);
  return node.ref ? *node.ref : node.owned;
}

template <typename T>
Tensor<T>& Tape<T>::grad_slot(std::size_t index) {
  Node& node = nodes_[index];
  if (!node.has_grad) {
    node.grad = Tensor<T>(value(index).shape());
    node.has_grad = true;
  }
  return node.grad;
}

template <typename T>
void Tape<T>::accumulate(std::size_t index, const Tensor<T>& g) {
  if (!nodes_[index].requires_grad) return;
  Tensor<T>& slot = grad_slot(index);
  if (slot.size() != g.size()) {
    throw DimensionError("gradient shape " + shape_str(g.shape()) +
                         " does not match value " + shape_str(slot.shape()));
  }
  for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
}

template <typename T>
std::vector<Tensor<T>> Tape<T>::backward(Var<T> loss) {
  check_live();
  if (loss.tape != this) throw UsageError("backward: loss was not recorded on this tape");
  if (value(loss.index).size() != 1) {
    throw UsageError("backward: loss must be scalar, got " +
                     shape_str(value(loss.index).shape()));
  }
  consumed_ = true;
  if (nodes_[loss.index].requires_grad) {
    grad_slot(loss.index).fill(T{1});
  }
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backprop) continue;
    node.backprop(*this, node.grad);
    // Free intermediates as soon as they are no longer needed.
    node.backprop = nullptr;
    node.owned = Tensor<T>();
    node.grad = Tensor<T>();
  }
  std::vector<Tensor<T>> grads;
  grads.reserve(parameters_.size());
  for (std::size_t index : parameters_) {
    grads.push_back(std::move(grad_slot(index)));
  }
  return grads;
}

// ---- ops -------------------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "matmul");
  Tape<T>& tape = *a.tape;
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  require_rank2(A, "matmul", "lhs");
  require_rank2(B, "matmul", "rhs");
  if (A.cols() != B.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(A.shape()) +
                         " x " + shape_str(B.shape()));
  }
  Tensor<T> C({A.rows(), B.cols()});
  view(C).noalias() = view(A) * view(B);
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  const std::size_t ai = a.index, bi = b.index;
  return tape.record("matmul", std::move(C), rg,
                     [ai, bi](Tape<T>& t, const Tensor<T>& dC) {
                       if (t.requires_grad(ai)) {
                         view(t.grad_slot(ai)).noalias() +=
                             view(dC) * view(t.value(bi)).transpose();
                       }
                       if (t.requires_grad(bi)) {
                         view(t.grad_slot(bi)).noalias() +=
                             view(t.value(ai)).transpose() * view(dC);
                       }
                     });
}

template <typename T>
Var<T> add_bias(Var<T> x, Var<T> bias) {
  require_same_tape(x, bias, "add_bias");
  Tape<T>& tape = *x.tape;
  const Tensor<T>& X = x.value();
  const Tensor<T>& b = bias.value();
  if (b.rank() != 1 || b.size() != X.cols()) {
    throw DimensionError("add_bias: bias " + shape_str(b.shape()) +
                         " does not match input " + shape_str(X.shape()));
  }
  Tensor<T> Y = X;
  const std::size_t n = X.cols();
  for (std::size_t r = 0; r < X.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) Y[r * n + c] += b[c];
  }
  const bool rg = tape.requires_grad(x) || tape.requires_grad(bias);
  const std::size_t xi = x.index, bi = bias.index;
  return tape.record("add_bias", std::move(Y), rg,
                     [xi, bi, n](Tape<T>& t, const Tensor<T>& dY) {
                       t.accumulate(xi, dY);
                       if (t.requires_grad(bi)) {
                         Tensor<T>& gb = t.grad_slot(bi);
                         const std::size_t rows = dY.size() / n;
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t c = 0; c < n; ++c) gb[c] += dY[r * n + c];
                         }
                       }
                     });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  require_same_tape(x, gain, "layer_norm");
  require_same_tape(x, bias, "layer_norm");
  Tape<T>& tape = *x.tape;
  const Tensor<T>& X = x.value();
  const Tensor<T>& G = gain.value();
  const Tensor<T>& B = bias.value();
  const std::size_t d = X.cols();
  if (G.size() != d || B.size() != d) {
    throw DimensionError("layer_norm: gain " + shape_str(G.shape()) + " / bias " +
                         shape_str(B.shape()) + " do not match input " +
                         shape_str(X.shape()));
  }
  if (!(eps > T{0})) throw ParameterError("layer_norm: eps must be positive");
  const std::size_t rows = X.rows();
  Tensor<T> xhat(X.shape());
  std::vector<T> inv_std(rows);
  Tensor<T> Y(X.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = X.data() + r * d;
    T mean{0};
    for (std::size_t c = 0; c < d; ++c) mean += in[c];
    mean /= static_cast<T>(d);
    T var{0};
    for (std::size_t c = 0; c < d; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<T>(d);
    const T is = T{1} / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const T h = (in[c] - mean) * is;
      xhat[r * d + c] = h;
      Y[r * d + c] = h * G[c] + B[c];
    }
  }
  const bool rg =
      tape.requires_grad(x) || tape.requires_grad(gain) || tape.requires_grad(bias);
  const std::size_t xi = x.index, gi = gain.index, bi = bias.index;
  return tape.record(
      "layer_norm", std::move(Y), rg,
      [xi, gi, bi, d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape<T>& t, const Tensor<T>& dY) {
        if (t.requires_grad(gi) || t.requires_grad(bi)) {
          const bool wg = t.requires_grad(gi), wb = t.requires_grad(bi);
          Tensor<T>* gg = wg ? &t.grad_slot(gi) : nullptr;
          Tensor<T>* gb = wb ? &t.grad_slot(bi) : nullptr;
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
              if (gg) (*gg)[c] += dY[r * d + c] * xhat[r * d + c];
              if (gb) (*gb)[c] += dY[r * d + c];
            }
          }
        }
        if (t.requires_grad(xi)) {
          const Tensor<T>& G = t.value(gi);
          Tensor<T>& gx = t.grad_slot(xi);
          std::vector<T> dxhat(d);
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_d{0}, mean_dx{0};
            for (std::size_t c = 0; c < d; ++c) {
              dxhat[c] = dY[r * d + c] * G[c];
              mean_d += dxhat[c];
              mean_dx += dxhat[c] * xhat[r * d + c];
            }
            mean_d /= static_cast<T>(d);
            mean_dx /= static_cast<T>(d);
            for (std::size_t c = 0; c < d; ++c) {
              gx[r * d + c] +=
                  inv_std[r] * (dxhat[c] - mean_d - xhat[r * d + c] * mean_dx);
            }
          }
        }
      });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tape<T>& tape = *x.tape;
  Tensor<T> Y = x.value();
  for (std::size_t i = 0; i < Y.size(); ++i) {
    if (!(Y[i] > T{0})) Y[i] = T{0};
  }
  const std::size_t xi = x.index;
  return tape.record("relu", std::move(Y), tape.requires_grad(x),
                     [xi](Tape<T>& t, const Tensor<T>& dY) {
                       const Tensor<T>& X = t.value(xi);
                       Tensor<T>& gx = t.grad_slot(xi);
                       for (std::size_t i = 0; i < dY.size(); ++i) {
                         if (X[i] > T{0}) gx[i] += dY[i];
                       }
                     });
}

template <typename T>
Var<T> dropout(Var<T> x, double rate, Rng* rng, Mode mode) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::eval || rate == 0.0) return x;
  if (rng == nullptr) throw UsageError("dropout: training mode needs a generator");
  Tape<T>& tape = *x.tape;
  const Tensor<T>& X = x.value();
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> mask(X.shape());
  Tensor<T> Y(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) {
    const T m = uniform01(*rng) < rate ? T{0} : keep_scale;
    mask[i] = m;
    Y[i] = X[i] * m;
  }
  const std::size_t xi = x.index;
  return tape.record("dropout", std::move(Y), tape.requires_grad(x),
                     [xi, mask = std::move(mask)](Tape<T>& t, const Tensor<T>& dY) {
                       Tensor<T>& gx = t.grad_slot(xi);
                       for (std::size_t i = 0; i < dY.size(); ++i) {
                         gx[i] += dY[i] * mask[i];
                       }
                     });
}

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "concat_cols");
  Tape<T>& tape = *a.tape;
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  require_rank2(A, "concat_cols", "lhs");
  require_rank2(B, "concat_cols", "rhs");
  if (A.rows() != B.rows()) {
    throw DimensionError("concat_cols: row counts differ, " + shape_str(A.shape()) +
                         " vs " + shape_str(B.shape()));
  }
  const std::size_t m = A.rows(), p = A.cols(), q = B.cols();
  Tensor<T> Y({m, p + q});
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(A.data() + r * p, p, Y.data() + r * (p + q));
    std::copy_n(B.data() + r * q, q, Y.data() + r * (p + q) + p);
  }
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  const std::size_t ai = a.index, bi = b.index;
  return tape.record("concat_cols", std::move(Y), rg,
                     [ai, bi, m, p, q](Tape<T>& t, const Tensor<T>& dY) {
                       if (t.requires_grad(ai)) {
                         Tensor<T>& ga = t.grad_slot(ai);
                         for (std::size_t r = 0; r < m; ++r) {
                           for (std::size_t c = 0; c < p; ++c) {
                             ga[r * p + c] += dY[r * (p + q) + c];
                           }
                         }
                       }
                       if (t.requires_grad(bi)) {
                         Tensor<T>& gb = t.grad_slot(bi);
                         for (std::size_t r = 0; r < m; ++r) {
                           for (std::size_t c = 0; c < q; ++c) {
                             gb[r * q + c] += dY[r * (p + q) + p + c];
                           }
                         }
                       }
                     });
}

template <typename T>
Var<T> gather_pairs(Var<T> e,
                    const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  Tape<T>& tape = *e.tape;
  const Tensor<T>& E = e.value();
  require_rank2(E, "gather_pairs", "input");
  if (pairs.empty()) throw DimensionError("gather_pairs: no pairs");
  const std::size_t n = E.rows(), d = E.cols();
  for (const auto& [i, j] : pairs) {
    if (i >= n || j >= n) {
      throw DimensionError("gather_pairs: pair index out of range for " +
                           shape_str(E.shape()));
    }
  }
  Tensor<T> Y({pairs.size(), 2 * d});
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    std::copy_n(E.data() + pairs[k].first * d, d, Y.data() + k * 2 * d);
    std::copy_n(E.data() + pairs[k].second * d, d, Y.data() + k * 2 * d + d);
  }
  const std::size_t ei = e.index;
  return tape.record("gather_pairs", std::move(Y), tape.requires_grad(e),
                     [ei, d, pairs](Tape<T>& t, const Tensor<T>& dY) {
                       Tensor<T>& ge = t.grad_slot(ei);
                       for (std::size_t k = 0; k < pairs.size(); ++k) {
                         const T* src = dY.data() + k * 2 * d;
                         T* first = ge.data() + pairs[k].first * d;
                         T* second = ge.data() + pairs[k].second * d;
                         for (std::size_t c = 0; c < d; ++c) {
                           first[c] += src[c];
                           second[c] += src[d + c];
                         }
                       }
                     });
}

template <typename T>
Var<T> segment_mean(Var<T> h, const std::vector<std::size_t>& offsets) {
  Tape<T>& tape = *h.tape;
  const Tensor<T>& H = h.value();
  require_rank2(H, "segment_mean", "input");
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != H.rows()) {
    throw DimensionError("segment_mean: offsets do not cover " + shape_str(H.shape()));
  }
  const std::size_t segments = offsets.size() - 1, d = H.cols();
  Tensor<T> Y({segments, d});
  for (std::size_t s = 0; s < segments; ++s) {
    if (offsets[s + 1] <= offsets[s]) {
      throw DimensionError("segment_mean: empty segment " + std::to_string(s));
    }
    T* out = Y.data() + s * d;
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
      const T* in = H.data() + r * d;
      for (std::size_t c = 0; c < d; ++c) out[c] += in[c];
    }
    const T count = static_cast<T>(offsets[s + 1] - offsets[s]);
    for (std::size_t c = 0; c < d; ++c) out[c] /= count;
  }
  const std::size_t hi = h.index;
  return tape.record("segment_mean", std::move(Y), tape.requires_grad(h),
                     [hi, d, offsets](Tape<T>& t, const Tensor<T>& dY) {
                       Tensor<T>& gh = t.grad_slot(hi);
                       for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                         const T inv =
                             T{1} / static_cast<T>(offsets[s + 1] - offsets[s]);
                         for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
                           for (std::size_t c = 0; c < d; ++c) {
                             gh[r * d + c] += dY[s * d + c] * inv;
                           }
                         }
                       }
                     });
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  if (logits.empty()) throw DimensionError("softmax: empty logits");
  T max = logits[0];
  for (T v : logits) max = std::max(max, v);
  std::vector<T> p(logits.size());
  T total{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - max);
    total += p[i];
  }
  for (T& v : p) v /= total;
  return p;
}

template <typename T>
CrossEntropy<T> softmax_cross_entropy(Var<T> logits, const std::vector<int>& labels) {
  Tape<T>& tape = *logits.tape;
  const Tensor<T>& L = logits.value();
  require_rank2(L, "softmax_cross_entropy", "logits");
  const std::size_t rows = L.rows(), classes = L.cols();
  if (labels.size() != rows) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_str(L.shape()));
  }
  Tensor<T> probs(L.shape());
  T total{0};
  for (std::size_t r = 0; r < rows; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw InputError("softmax_cross_entropy: label out of range");
    }
    const auto row = L.row(r);
    T max = row[0];
    for (T v : row) max = std::max(max, v);
    T z{0};
    for (std::size_t c = 0; c < classes; ++c) {
      probs(r, c) = std::exp(row[c] - max);
      z += probs(r, c);
    }
    for (std::size_t c = 0; c < classes; ++c) probs(r, c) /= z;
    // log-sum-exp form keeps the loss finite when probs(r, y) underflows.
    total += std::log(z) - (row[y] - max);
  }
  const T loss = total / static_cast<T>(rows);
  const std::size_t li = logits.index;
  Var<T> out = tape.record(
      "softmax_cross_entropy", Tensor<T>::scalar(loss), tape.requires_grad(logits),
      [li, probs, labels, rows, classes](Tape<T>& t, const Tensor<T>& dLoss) {
        Tensor<T>& gl = t.grad_slot(li);
        const T g = dLoss[0] / static_cast<T>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < classes; ++c) {
            const T target = static_cast<int>(c) == labels[r] ? T{1} : T{0};
            gl(r, c) += g * (probs(r, c) - target);
          }
        }
      });
  return {out, std::move(probs)};
}

template <typename T>
LossAndProbs<T> softmax_cross_entropy(const Tensor<T>& logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw InputError("softmax_cross_entropy: label out of range");
  }
  std::vector<T> p = softmax<T>(logits.span());
  T max = logits[0];
  for (T v : logits.span()) max = std::max(max, v);
  T z{0};
  for (T v : logits.span()) z += std::exp(v - max);
  return {std::log(z) - (logits[label] - max), std::move(p)};
}

template <typename T>
Var<T> sum(Var<T> x) {
  Tape<T>& tape = *x.tape;
  T total{0};
  for (T v : x.value().span()) total += v;
  const std::size_t xi = x.index;
  return tape.record("sum", Tensor<T>::scalar(total), tape.requires_grad(x),
                     [xi](Tape<T>& t, const Tensor<T>& dY) {
                       Tensor<T>& gx = t.grad_slot(xi);
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dY[0];
                     });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "mul");
  Tape<T>& tape = *a.tape;
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  if (A.shape() != B.shape()) {
    throw DimensionError("mul: shapes differ, " + shape_str(A.shape()) + " vs " +
                         shape_str(B.shape()));
  }
  Tensor<T> Y(A.shape());
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = A[i] * B[i];
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  const std::size_t ai = a.index, bi = b.index;
  return tape.record("mul", std::move(Y), rg, [ai, bi](Tape<T>& t, const Tensor<T>& dY) {
    if (t.requires_grad(ai)) {
      const Tensor<T>& B = t.value(bi);
      Tensor<T>& ga = t.grad_slot(ai);
      for (std::size_t i = 0; i < dY.size(); ++i) ga[i] += dY[i] * B[i];
    }
    if (t.requires_grad(bi)) {
      const Tensor<T>& A = t.value(ai);
      Tensor<T>& gb = t.grad_slot(bi);
      for (std::size_t i = 0; i < dY.size(); ++i) gb[i] += dY[i] * A[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  Tape<T>& tape = *x.tape;
  Tensor<T> Y = x.value();
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] *= factor;
  const std::size_t xi = x.index;
  return tape.record("scale", std::move(Y), tape.requires_grad(x),
                     [xi, factor](Tape<T>& t, const Tensor<T>& dY) {
                       Tensor<T>& gx = t.grad_slot(xi);
                       for (std::size_t i = 0; i < dY.size(); ++i) gx[i] += dY[i] * factor;
                     });
}

#define FRN_INSTANTIATE(T)                                                         \
  template class Tape<T>;                                                          \
  template Var<T> matmul(Var<T>, Var<T>);                                          \
  template Var<T> add_bias(Var<T>, Var<T>);                                        \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                           \
  template Var<T> relu(Var<T>);                                                    \
  template Var<T> dropout(Var<T>, double, Rng*, Mode);                             \
  template Var<T> concat_cols(Var<T>, Var<T>);                                     \
  template Var<T> gather_pairs(                                                    \
      Var<T>, const std::vector<std::pair<std::size_t, std::size_t>>&);            \
  template Var<T> segment_mean(Var<T>, const std::vector<std::size_t>&);           \
  template CrossEntropy<T> softmax_cross_entropy(Var<T>, const std::vector<int>&); \
  template Var<T> sum(Var<T>);                                                     \
  template Var<T> mul(Var<T>, Var<T>);                                             \
  template Var<T> scale(Var<T>, T);                                                \
  template std::vector<T> softmax(std::span<const T>);                             \
  template LossAndProbs<T> softmax_cross_entropy(const Tensor<T>&, int);

FRN_INSTANTIATE(float)
FRN_INSTANTIATE(double)

#undef FRN_INSTANTIATE

}  // namespace frn
