#pragma once

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "derivgen/numeric/tensor.hpp"

namespace derivgen::numeric {

class Tape;

/// Handle to a tensor recorded on a tape. Cheap to copy; valid while the
/// tape (and, for parameters, the parameter tensor) is alive.
class Var {
 public:
  Var() = default;

  const Tensor& tensor() const { return *node_; }
  const Shape& shape() const { return node_->shape(); }
  size_t size() const { return node_->size(); }
  std::span<const double> values() const { return node_->values(); }
  std::span<const double> grad() const { return node_->grad(); }
  double value() const;  // scalar only
  Tape& tape() const { return *tape_; }
  bool valid() const { return node_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, Tensor* node) : tape_(tape), node_(node) {}
  Tensor* node() const { return node_; }

  Tape* tape_ = nullptr;
  Tensor* node_ = nullptr;
};

/// Records forward operations and replays them in reverse to accumulate
/// gradients. Single-threaded; use one tape per thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable tensor owned elsewhere; backward() accumulates into its grad.
  Var param(Tensor& t);
  /// Read-only tensor owned elsewhere. A tape holding frozen tensors is
  /// inference-only: backward() throws.
  Var frozen(const Tensor& t);
  /// Tensor owned by the tape.
  Var constant(Tensor t);

  /// Zeroes every tape-owned gradient, seeds d loss = 1 and runs the recorded
  /// ops in reverse. Parameter gradients accumulate across calls.
  /// Throws std::invalid_argument unless `loss` has exactly one element.
  void backward(Var loss);

  /// Drops all recorded nodes.
  void clear();
  size_t num_nodes() const { return owned_.size(); }

  // Used by op implementations. The closure receives the output node (value
  // and gradient) and adds its contribution to the operands' gradients.
  using BackwardFn = std::function<void(const Tensor& out)>;
  Var emit(Tensor value, BackwardFn backward_fn);
  static Tensor& node(Var v) { return *v.node(); }

 private:
  struct Step {
    Tensor* out;
    BackwardFn fn;
  };
  std::deque<Tensor> owned_;
  std::vector<Step> steps_;
  bool inference_only_ = false;
};

// Matrix [m,n] x vector [n] -> [m]; matrix [m,k] x matrix [k,n] -> [m,n].
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var dot(Var a, Var b);  // vectors -> scalar
Var tanh(Var a);
Var sigmoid(Var a);
Var softmax(Var a);      // over a vector
Var log_softmax(Var a);  // over a vector
Var concat(std::span<const Var> parts);  // vectors
Var slice(Var a, size_t offset, size_t length);  // vector
Var lookup(Var table, size_t row);  // row of [n,d] -> [d]
Var stack(std::span<const Var> rows);  // vectors of equal length -> [n,d]
Var transpose(Var a);  // [m,n] -> [n,m]
Var sum(Var a);
Var pick(Var a, size_t index);  // element of a vector -> scalar

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace derivgen::numeric
