#include "derivgen/numeric/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace derivgen::numeric {

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_string(a) +
                              " and " + shape_string(b));
}

[[noreturn]] void shape_error(const char* op, const Shape& a) {
  throw std::invalid_argument(std::string(op) + ": unsupported shape " + shape_string(a));
}

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands recorded on different tapes");
  return a.tape();
}

void require_vector(const char* op, Var a) {
  if (a.shape().size() != 1) shape_error(op, a.shape());
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

// Elementwise unary op given f(x) and f'(x) expressed through y = f(x).
template <typename F, typename DF>
Var unary(Var a, F f, DF dfdy) {
  Tensor* in = &Tape::node(a);
  Tensor out(in->shape());
  auto x = in->values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return a.tape().emit(std::move(out), [in, dfdy](const Tensor& y) {
    auto g = in->grad();
    auto yv = y.values();
    auto yg = y.grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += yg[i] * dfdy(yv[i]);
  });
}

}  // namespace

double Var::value() const {
  if (node_->size() != 1) {
    throw std::invalid_argument("value() on non-scalar of shape " + shape_string(shape()));
  }
  return node_->values()[0];
}

Var Tape::param(Tensor& t) {
  t.enable_grad();
  return Var(this, &t);
}

Var Tape::frozen(const Tensor& t) {
  inference_only_ = true;
  return Var(this, const_cast<Tensor*>(&t));
}

Var Tape::constant(Tensor t) {
  owned_.push_back(std::move(t));
  owned_.back().enable_grad();
  return Var(this, &owned_.back());
}

Var Tape::emit(Tensor value, BackwardFn backward_fn) {
  owned_.push_back(std::move(value));
  Tensor* out = &owned_.back();
  out->enable_grad();
  steps_.push_back({out, std::move(backward_fn)});
  return Var(this, out);
}

void Tape::backward(Var loss) {
  if (loss.size() != 1) {
    throw std::invalid_argument("backward() needs a scalar loss, got shape " +
                                shape_string(loss.shape()));
  }
  if (inference_only_) throw std::logic_error("backward() on an inference-only tape");
  for (auto& t : owned_) t.zero_grad();
  loss.node()->grad()[0] += 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) it->fn(*it->out);
}

void Tape::clear() {
  steps_.clear();
  owned_.clear();
  inference_only_ = false;
}

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  Tensor* A = &Tape::node(a);
  Tensor* B = &Tape::node(b);
  if (A->rank() != 2 || (B->rank() != 1 && B->rank() != 2) || A->cols() != B->shape()[0]) {
    shape_error("matmul", A->shape(), B->shape());
  }
  const size_t m = A->rows();
  const size_t k = A->cols();
  const size_t n = B->rank() == 1 ? 1 : B->cols();
  Tensor out(B->rank() == 1 ? Shape{m} : Shape{m, n});
  {
    const double* a_ptr = A->values().data();
    const double* b_ptr = B->values().data();
    double* o = out.values().data();
    for (size_t i = 0; i < m; ++i) {
      const double* row = a_ptr + i * k;
      for (size_t p = 0; p < k; ++p) {
        const double av = row[p];
        const double* brow = b_ptr + p * n;
        double* orow = o + i * n;
        for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }
  return tape.emit(std::move(out), [A, B, m, k, n](const Tensor& C) {
    const double* g = C.grad().data();
    const double* a_ptr = A->values().data();
    const double* b_ptr = B->values().data();
    double* ga = A->grad().data();
    double* gb = B->grad().data();
    // dA = dC * B^T, dB = A^T * dC
    for (size_t i = 0; i < m; ++i) {
      const double* grow = g + i * n;
      const double* arow = a_ptr + i * k;
      double* garow = ga + i * k;
      for (size_t p = 0; p < k; ++p) {
        const double* brow = b_ptr + p * n;
        double* gbrow = gb + p * n;
        double acc = 0.0;
        const double av = arow[p];
        for (size_t j = 0; j < n; ++j) {
          acc += grow[j] * brow[j];
          gbrow[j] += av * grow[j];
        }
        garow[p] += acc;
      }
    }
  });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape("add", a, b);
  Tensor* A = &Tape::node(a);
  Tensor* B = &Tape::node(b);
  Tensor out(A->shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = (*A)[i] + (*B)[i];
  return tape.emit(std::move(out), [A, B](const Tensor& C) {
    auto g = C.grad();
    auto ga = A->grad();
    auto gb = B->grad();
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape("sub", a, b);
  Tensor* A = &Tape::node(a);
  Tensor* B = &Tape::node(b);
  Tensor out(A->shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = (*A)[i] - (*B)[i];
  return tape.emit(std::move(out), [A, B](const Tensor& C) {
    auto g = C.grad();
    auto ga = A->grad();
    auto gb = B->grad();
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape("mul", a, b);
  Tensor* A = &Tape::node(a);
  Tensor* B = &Tape::node(b);
  Tensor out(A->shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = (*A)[i] * (*B)[i];
  return tape.emit(std::move(out), [A, B](const Tensor& C) {
    auto g = C.grad();
    auto ga = A->grad();
    auto gb = B->grad();
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * (*B)[i];
      gb[i] += g[i] * (*A)[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor* A = &Tape::node(a);
  Tensor out(A->shape());
  for (size_t i = 0; i < out.size(); ++i) out[i] = factor * (*A)[i];
  return a.tape().emit(std::move(out), [A, factor](const Tensor& C) {
    auto g = C.grad();
    auto ga = A->grad();
    for (size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

Var dot(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_vector("dot", a);
  require_same_shape("dot", a, b);
  Tensor* A = &Tape::node(a);
  Tensor* B = &Tape::node(b);
  double acc = 0.0;
  for (size_t i = 0; i < A->size(); ++i) acc += (*A)[i] * (*B)[i];
  return tape.emit(Tensor::scalar(acc), [A, B](const Tensor& C) {
    const double g = C.grad()[0];
    auto ga = A->grad();
    auto gb = B->grad();
    for (size_t i = 0; i < ga.size(); ++i) {
      ga[i] += g * (*B)[i];
      gb[i] += g * (*A)[i];
    }
  });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double y) { return y * (1.0 - y); });
}

Var softmax(Var a) {
  require_vector("softmax", a);
  Tensor* A = &Tape::node(a);
  Tensor out(A->shape());
  if (A->size() > 0) {
    const double mx = *std::max_element(A->values().begin(), A->values().end());
    double z = 0.0;
    for (size_t i = 0; i < out.size(); ++i) z += (out[i] = std::exp((*A)[i] - mx));
    for (size_t i = 0; i < out.size(); ++i) out[i] /= z;
  }
  return a.tape().emit(std::move(out), [A](const Tensor& Y) {
    auto y = Y.values();
    auto g = Y.grad();
    double inner = 0.0;
    for (size_t i = 0; i < y.size(); ++i) inner += g[i] * y[i];
    auto ga = A->grad();
    for (size_t i = 0; i < y.size(); ++i) ga[i] += y[i] * (g[i] - inner);
  });
}

Var log_softmax(Var a) {
  require_vector("log_softmax", a);
  Tensor* A = &Tape::node(a);
  Tensor out(A->shape());
  if (A->size() > 0) {
    const double mx = *std::max_element(A->values().begin(), A->values().end());
    double z = 0.0;
    for (size_t i = 0; i < out.size(); ++i) z += std::exp((*A)[i] - mx);
    const double log_z = mx + std::log(z);
    for (size_t i = 0; i < out.size(); ++i) out[i] = (*A)[i] - log_z;
  }
  return a.tape().emit(std::move(out), [A](const Tensor& Y) {
    auto y = Y.values();
    auto g = Y.grad();
    double total = 0.0;
    for (double gi : g) total += gi;
    auto ga = A->grad();
    for (size_t i = 0; i < y.size(); ++i) ga[i] += g[i] - std::exp(y[i]) * total;
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no operands");
  std::vector<Tensor*> inputs;
  size_t total = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (Tape::node(p).rank() > 1) require_vector("concat", p);
    inputs.push_back(&Tape::node(p));
    total += p.size();
  }
  Tensor out({total});
  size_t offset = 0;
  for (Tensor* t : inputs) {
    std::copy(t->values().begin(), t->values().end(), out.values().begin() + offset);
    offset += t->size();
  }
  return parts[0].tape().emit(std::move(out), [inputs = std::move(inputs)](const Tensor& C) {
    auto g = C.grad();
    size_t offset = 0;
    for (Tensor* t : inputs) {
      auto gt = t->grad();
      for (size_t i = 0; i < gt.size(); ++i) gt[i] += g[offset + i];
      offset += gt.size();
    }
  });
}

Var slice(Var a, size_t offset, size_t length) {
  require_vector("slice", a);
  if (offset + length > a.size()) {
    throw std::invalid_argument("slice: range [" + std::to_string(offset) + "," +
                                std::to_string(offset + length) + ") exceeds shape " +
                                shape_string(a.shape()));
  }
  Tensor* A = &Tape::node(a);
  Tensor out({length});
  std::copy_n(A->values().begin() + offset, length, out.values().begin());
  return a.tape().emit(std::move(out), [A, offset](const Tensor& C) {
    auto g = C.grad();
    auto ga = A->grad();
    for (size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
  });
}

Var lookup(Var table, size_t row) {
  Tensor* T = &Tape::node(table);
  if (T->rank() != 2) shape_error("lookup", T->shape());
  if (row >= T->rows()) {
    throw std::out_of_range("lookup: row " + std::to_string(row) + " outside table of shape " +
                            shape_string(T->shape()));
  }
  const size_t d = T->cols();
  Tensor out({d});
  std::copy_n(T->values().begin() + row * d, d, out.values().begin());
  return table.tape().emit(std::move(out), [T, row, d](const Tensor& C) {
    auto g = C.grad();
    auto gt = T->grad();
    for (size_t i = 0; i < d; ++i) gt[row * d + i] += g[i];
  });
}

Var stack(std::span<const Var> rows) {
  if (rows.empty()) throw std::invalid_argument("stack: no operands");
  const size_t d = rows[0].size();
  std::vector<Tensor*> inputs;
  for (const Var& r : rows) {
    same_tape(rows[0], r);
    require_vector("stack", r);
    if (r.size() != d) shape_error("stack", rows[0].shape(), r.shape());
    inputs.push_back(&Tape::node(r));
  }
  Tensor out({rows.size(), d});
  for (size_t i = 0; i < inputs.size(); ++i) {
    std::copy(inputs[i]->values().begin(), inputs[i]->values().end(),
              out.values().begin() + i * d);
  }
  return rows[0].tape().emit(std::move(out), [inputs = std::move(inputs), d](const Tensor& C) {
    auto g = C.grad();
    for (size_t i = 0; i < inputs.size(); ++i) {
      auto gt = inputs[i]->grad();
      for (size_t j = 0; j < d; ++j) gt[j] += g[i * d + j];
    }
  });
}

Var transpose(Var a) {
  Tensor* A = &Tape::node(a);
  if (A->rank() != 2) shape_error("transpose", A->shape());
  const size_t m = A->rows();
  const size_t n = A->cols();
  Tensor out({n, m});
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < n; ++j) out.at(j, i) = A->at(i, j);
  }
  return a.tape().emit(std::move(out), [A, m, n](const Tensor& C) {
    auto g = C.grad();
    auto ga = A->grad();
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    }
  });
}

Var sum(Var a) {
  Tensor* A = &Tape::node(a);
  double acc = 0.0;
  for (double v : A->values()) acc += v;
  return a.tape().emit(Tensor::scalar(acc), [A](const Tensor& C) {
    const double g = C.grad()[0];
    for (double& ga : A->grad()) ga += g;
  });
}

Var pick(Var a, size_t index) {
  require_vector("pick", a);
  if (index >= a.size()) {
    throw std::out_of_range("pick: index " + std::to_string(index) + " outside shape " +
                            shape_string(a.shape()));
  }
  Tensor* A = &Tape::node(a);
  return a.tape().emit(Tensor::scalar((*A)[index]), [A, index](const Tensor& C) {
    A->grad()[index] += C.grad()[0];
  });
}

}  // namespace derivgen::numeric
