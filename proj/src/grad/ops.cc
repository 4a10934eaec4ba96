#include "ctformer/grad/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ctformer::grad {

namespace {

using NodePtr = std::shared_ptr<internal::Node>;

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Marks out as differentiable and records fn on the active tape.
template <typename Fn>
void attach(Tensor& out, Fn&& fn) {
  out.set_requires_grad(true);
  Tape::active()->record(std::forward<Fn>(fn));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined operand");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
}

void require_rank_at_most_2(const Tensor& a, const char* op) {
  require_defined(a, op);
  if (a.rank() == 0 || a.rank() > 2) {
    throw std::invalid_argument(std::string(op) + ": expected rank 1 or 2, got " +
                                shape_to_string(a.shape()));
  }
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& a, Forward forward, Derivative derivative) {
  require_defined(a, "unary");
  std::vector<double> values(a.size());
  auto in = a.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = forward(in[i]);
  Tensor out(a.shape(), std::move(values));
  if (recording({&a})) {
    NodePtr an = a.node(), on = out.node();
    attach(out, [an, on, derivative] {
      if (on->grad.empty()) return;
      auto ga = an->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) {
        ga[i] += on->grad[i] * derivative(an->values[i], on->values[i]);
      }
    });
  }
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> values(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = av[i] + bv[i];
  Tensor out(a.shape(), std::move(values));
  if (recording({&a, &b})) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    attach(out, [an, bn, on] {
      if (on->grad.empty()) return;
      for (const NodePtr& n : {an, bn}) {
        if (!n->requires_grad) continue;
        auto g = n->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> values(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = av[i] - bv[i];
  Tensor out(a.shape(), std::move(values));
  if (recording({&a, &b})) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    attach(out, [an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        auto g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        auto g = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= on->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> values(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = av[i] * bv[i];
  Tensor out(a.shape(), std::move(values));
  if (recording({&a, &b})) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    attach(out, [an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        auto g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * bn->values[i];
      }
      if (bn->requires_grad) {
        auto g = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * an->values[i];
      }
    });
  }
  return out;
}

Tensor add_row(const Tensor& a, const Tensor& v) {
  require_rank_at_most_2(a, "add_row");
  require_defined(v, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  if (v.size() != n) {
    throw std::invalid_argument("add_row: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                shape_to_string(v.shape()));
  }
  std::vector<double> values(a.values().begin(), a.values().end());
  auto vv = v.values();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) values[r * n + c] += vv[c];
  }
  Tensor out(a.shape(), std::move(values));
  if (recording({&a, &v})) {
    NodePtr an = a.node(), vn = v.node(), on = out.node();
    attach(out, [an, vn, on, m, n] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        auto g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
      }
      if (vn->requires_grad) {
        auto g = vn->ensure_grad();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) g[c] += on->grad[r * n + c];
        }
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor one_minus(const Tensor& a) {
  return unary(a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank_at_most_2(a, "matmul");
  require_rank_at_most_2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols();
  if (b.rank() != 2 || b.rows() != k) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
  const std::size_t n = b.cols();
  std::vector<double> values(m * n, 0.0);
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    double* out_row = values.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* b_row = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aip * b_row[j];
    }
  }
  Shape shape = a.rank() == 1 ? Shape{n} : Shape{m, n};
  Tensor out(std::move(shape), std::move(values));
  if (recording({&a, &b})) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    attach(out, [an, bn, on, m, k, n] {
      if (on->grad.empty()) return;
      const double* go = on->grad.data();
      if (an->requires_grad) {
        // dA = dC . B^T
        auto ga = an->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double* b_row = bn->values.data() + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += go[i * n + j] * b_row[j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        // dB = A^T . dC
        auto gb = bn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = an->values[i * k + p];
            if (aip == 0.0) continue;
            double* g_row = gb.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) g_row[j] += aip * go[i * n + j];
          }
        }
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank_at_most_2(x, "linear");
  require_defined(weight, "linear");
  const std::size_t m = x.rows(), in = x.cols();
  if (weight.rank() != 2 || weight.cols() != in) {
    throw std::invalid_argument("linear: shape mismatch " + shape_to_string(x.shape()) + " vs " +
                                shape_to_string(weight.shape()));
  }
  const std::size_t out_dim = weight.rows();
  if (bias.defined() && bias.size() != out_dim) {
    throw std::invalid_argument("linear: bias shape mismatch " + shape_to_string(weight.shape()) +
                                " vs " + shape_to_string(bias.shape()));
  }
  std::vector<double> values(m * out_dim, 0.0);
  auto xv = x.values(), wv = weight.values();
  for (std::size_t i = 0; i < m; ++i) {
    const double* x_row = xv.data() + i * in;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* w_row = wv.data() + o * in;
      double acc = bias.defined() ? bias.values()[o] : 0.0;
      for (std::size_t p = 0; p < in; ++p) acc += x_row[p] * w_row[p];
      values[i * out_dim + o] = acc;
    }
  }
  Shape shape = x.rank() == 1 ? Shape{out_dim} : Shape{m, out_dim};
  Tensor out(std::move(shape), std::move(values));
  const bool has_bias = bias.defined();
  if (recording({&x, &weight}) || (has_bias && recording({&bias}))) {
    NodePtr xn = x.node(), wn = weight.node(), on = out.node();
    NodePtr bn = has_bias ? bias.node() : nullptr;
    attach(out, [xn, wn, bn, on, m, in, out_dim] {
      if (on->grad.empty()) return;
      const double* go = on->grad.data();
      if (xn->requires_grad) {
        auto gx = xn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t o = 0; o < out_dim; ++o) {
            const double g = go[i * out_dim + o];
            if (g == 0.0) continue;
            const double* w_row = wn->values.data() + o * in;
            for (std::size_t p = 0; p < in; ++p) gx[i * in + p] += g * w_row[p];
          }
        }
      }
      if (wn->requires_grad) {
        auto gw = wn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          const double* x_row = xn->values.data() + i * in;
          for (std::size_t o = 0; o < out_dim; ++o) {
            const double g = go[i * out_dim + o];
            if (g == 0.0) continue;
            double* gw_row = gw.data() + o * in;
            for (std::size_t p = 0; p < in; ++p) gw_row[p] += g * x_row[p];
          }
        }
      }
      if (bn && bn->requires_grad) {
        auto gb = bn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t o = 0; o < out_dim; ++o) gb[o] += go[i * out_dim + o];
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  if (a.rank() != 2) {
    throw std::invalid_argument("transpose: expected rank 2, got " + shape_to_string(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> values(m * n);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) values[j * m + i] = av[i * n + j];
  }
  Tensor out({n, m}, std::move(values));
  if (recording({&a})) {
    NodePtr an = a.node(), on = out.node();
    attach(out, [an, on, m, n] {
      if (on->grad.empty()) return;
      auto ga = an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += on->grad[j * m + i];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_size(shape) != a.size()) {
    throw std::invalid_argument("reshape: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                shape_to_string(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(a.values().begin(), a.values().end()));
  if (recording({&a})) {
    NodePtr an = a.node(), on = out.node();
    attach(out, [an, on] {
      if (on->grad.empty()) return;
      auto ga = an->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += on->grad[i];
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no operands");
  for (const Tensor& p : parts) require_rank_at_most_2(p, "concat");
  const std::size_t m = parts[0].rows();
  const std::size_t rank = parts[0].rank();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != rank || p.rows() != m) {
      throw std::invalid_argument("concat: shape mismatch " + shape_to_string(parts[0].shape()) +
                                  " vs " + shape_to_string(p.shape()));
    }
    total += p.cols();
  }
  std::vector<double> values(m * total);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t n = p.cols();
    auto pv = p.values();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(pv.data() + r * n, n, values.data() + r * total + offset);
    }
    offset += n;
  }
  Shape shape = rank == 1 ? Shape{total} : Shape{m, total};
  Tensor out(std::move(shape), std::move(values));
  bool any = false;
  for (const Tensor& p : parts) any = any || recording({&p});
  if (any) {
    std::vector<NodePtr> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node());
    NodePtr on = out.node();
    attach(out, [nodes, on, m, total] {
      if (on->grad.empty()) return;
      std::size_t off = 0;
      for (const NodePtr& pn : nodes) {
        const std::size_t n = pn->shape.back();
        if (pn->requires_grad) {
          auto g = pn->ensure_grad();
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < n; ++c) g[r * n + c] += on->grad[r * total + off + c];
          }
        }
        off += n;
      }
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  require_rank_at_most_2(a, "slice_cols");
  const std::size_t m = a.rows(), n = a.cols();
  if (start + count > n) {
    throw std::invalid_argument("slice_cols: columns [" + std::to_string(start) + ", " +
                                std::to_string(start + count) + ") out of range for " +
                                shape_to_string(a.shape()));
  }
  std::vector<double> values(m * count);
  auto av = a.values();
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(av.data() + r * n + start, count, values.data() + r * count);
  }
  Shape shape = a.rank() == 1 ? Shape{count} : Shape{m, count};
  Tensor out(std::move(shape), std::move(values));
  if (recording({&a})) {
    NodePtr an = a.node(), on = out.node();
    attach(out, [an, on, m, n, start, count] {
      if (on->grad.empty()) return;
      auto ga = an->ensure_grad();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < count; ++c) ga[r * n + start + c] += on->grad[r * count + c];
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
  require_defined(a, "slice_rows");
  if (a.rank() != 2 || start + count > a.rows()) {
    throw std::invalid_argument("slice_rows: rows [" + std::to_string(start) + ", " +
                                std::to_string(start + count) + ") out of range for " +
                                shape_to_string(a.shape()));
  }
  const std::size_t n = a.cols();
  auto av = a.values();
  std::vector<double> values(av.begin() + start * n, av.begin() + (start + count) * n);
  Tensor out({count, n}, std::move(values));
  if (recording({&a})) {
    NodePtr an = a.node(), on = out.node();
    attach(out, [an, on, start, n] {
      if (on->grad.empty()) return;
      auto ga = an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) ga[start * n + i] += on->grad[i];
    });
  }
  return out;
}

Tensor row(const Tensor& a, std::size_t r) {
  return reshape(slice_rows(a, r, 1), Shape{a.cols()});
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no operands");
  const std::size_t n = rows[0].size();
  for (const Tensor& r : rows) {
    require_defined(r, "stack_rows");
    if (r.rank() != 1 || r.size() != n) {
      throw std::invalid_argument("stack_rows: shape mismatch " + shape_to_string(rows[0].shape()) +
                                  " vs " + shape_to_string(r.shape()));
    }
  }
  std::vector<double> values(rows.size() * n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(rows[i].values().data(), n, values.data() + i * n);
  }
  Tensor out({rows.size(), n}, std::move(values));
  bool any = false;
  for (const Tensor& r : rows) any = any || recording({&r});
  if (any) {
    std::vector<NodePtr> nodes;
    for (const Tensor& r : rows) nodes.push_back(r.node());
    NodePtr on = out.node();
    attach(out, [nodes, on, n] {
      if (on->grad.empty()) return;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i]->requires_grad) continue;
        auto g = nodes[i]->ensure_grad();
        for (std::size_t c = 0; c < n; ++c) g[c] += on->grad[i * n + c];
      }
    });
  }
  return out;
}

Tensor pad(const Tensor& a, std::size_t rows, std::size_t cols) {
  require_defined(a, "pad");
  if (a.rank() != 2 || rows < a.rows() || cols < a.cols()) {
    throw std::invalid_argument("pad: cannot pad " + shape_to_string(a.shape()) + " to " +
                                shape_to_string({rows, cols}));
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> values(rows * cols, 0.0);
  auto av = a.values();
  for (std::size_t r = 0; r < m; ++r) std::copy_n(av.data() + r * n, n, values.data() + r * cols);
  Tensor out({rows, cols}, std::move(values));
  if (recording({&a})) {
    NodePtr an = a.node(), on = out.node();
    attach(out, [an, on, m, n, cols] {
      if (on->grad.empty()) return;
      auto ga = an->ensure_grad();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += on->grad[r * cols + c];
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor row_softmax_masked(const Tensor& logits, std::span<const std::uint8_t> allowed) {
  require_rank_at_most_2(logits, "row_softmax_masked");
  const std::size_t m = logits.rows(), n = logits.cols();
  if (allowed.size() != m * n) {
    throw std::invalid_argument("row_softmax_masked: mask of " + std::to_string(allowed.size()) +
                                " entries for logits " + shape_to_string(logits.shape()));
  }
  std::vector<double> values(m * n, 0.0);
  auto lv = logits.values();
  for (std::size_t r = 0; r < m; ++r) {
    double max_logit = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t c = 0; c < n; ++c) {
      if (allowed[r * n + c]) {
        max_logit = std::max(max_logit, lv[r * n + c]);
        any = true;
      }
    }
    if (!any) {
      throw std::invalid_argument("row_softmax_masked: row " + std::to_string(r) +
                                  " has no unmasked entry");
    }
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (allowed[r * n + c]) {
        values[r * n + c] = std::exp(lv[r * n + c] - max_logit);
        total += values[r * n + c];
      }
    }
    for (std::size_t c = 0; c < n; ++c) values[r * n + c] /= total;
  }
  Tensor out(logits.shape(), std::move(values));
  if (recording({&logits})) {
    NodePtr ln = logits.node(), on = out.node();
    attach(out, [ln, on, m, n] {
      if (on->grad.empty()) return;
      auto gl = ln->ensure_grad();
      for (std::size_t r = 0; r < m; ++r) {
        const double* y = on->values.data() + r * n;
        const double* gy = on->grad.data() + r * n;
        double inner = 0.0;
        for (std::size_t c = 0; c < n; ++c) inner += y[c] * gy[c];
        // Masked positions have y = 0 and receive no gradient.
        for (std::size_t c = 0; c < n; ++c) gl[r * n + c] += y[c] * (gy[c] - inner);
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double total = 0.0;
  for (double v : a.values()) total += v;
  Tensor out = Tensor::scalar(total);
  if (recording({&a})) {
    NodePtr an = a.node(), on = out.node();
    attach(out, [an, on] {
      if (on->grad.empty()) return;
      auto ga = an->ensure_grad();
      for (double& g : ga) g += on->grad[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum_axis(const Tensor& a, int axis) {
  require_defined(a, "sum_axis");
  if (a.rank() != 2 || (axis != 0 && axis != 1)) {
    throw std::invalid_argument("sum_axis: axis " + std::to_string(axis) + " on " +
                                shape_to_string(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  auto av = a.values();
  std::vector<double> values(axis == 0 ? n : m, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) values[axis == 0 ? c : r] += av[r * n + c];
  }
  Tensor out = Tensor::vector(std::move(values));
  if (recording({&a})) {
    NodePtr an = a.node(), on = out.node();
    attach(out, [an, on, m, n, axis] {
      if (on->grad.empty()) return;
      auto ga = an->ensure_grad();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += on->grad[axis == 0 ? c : r];
      }
    });
  }
  return out;
}

Tensor mean_axis(const Tensor& a, int axis) {
  Tensor s = sum_axis(a, axis);
  const std::size_t count = axis == 0 ? a.rows() : a.cols();
  return scale(s, 1.0 / static_cast<double>(count));
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("dot: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
  return sum(mul(reshape(a, {a.size()}), reshape(b, {b.size()})));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank_at_most_2(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.size() != n || beta.size() != n) {
    throw std::invalid_argument("layer_norm: shape mismatch " + shape_to_string(x.shape()) +
                                " vs " + shape_to_string(gamma.shape()));
  }
  auto xv = x.values(), gv = gamma.values(), bv = beta.values();
  std::vector<double> normalized(m * n), inv_std(m), values(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += xv[r * n + c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (xv[r * n + c] - mu) * (xv[r * n + c] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      normalized[r * n + c] = (xv[r * n + c] - mu) * inv_std[r];
      values[r * n + c] = gv[c] * normalized[r * n + c] + bv[c];
    }
  }
  Tensor out(x.shape(), std::move(values));
  if (recording({&x, &gamma, &beta})) {
    NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
    attach(out, [xn, gn, bn, on, normalized = std::move(normalized), inv_std = std::move(inv_std),
                 m, n] {
      if (on->grad.empty()) return;
      const double* go = on->grad.data();
      if (gn->requires_grad || bn->requires_grad) {
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) {
            if (gn->requires_grad) gn->ensure_grad()[c] += go[r * n + c] * normalized[r * n + c];
            if (bn->requires_grad) bn->ensure_grad()[c] += go[r * n + c];
          }
        }
      }
      if (xn->requires_grad) {
        auto gx = xn->ensure_grad();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < m; ++r) {
          double mean_g = 0.0, mean_gx = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            const double g = go[r * n + c] * gn->values[c];
            mean_g += g;
            mean_gx += g * normalized[r * n + c];
          }
          mean_g *= inv_n;
          mean_gx *= inv_n;
          for (std::size_t c = 0; c < n; ++c) {
            const double g = go[r * n + c] * gn->values[c];
            gx[r * n + c] += inv_std[r] * (g - mean_g - normalized[r * n + c] * mean_gx);
          }
        }
      }
    });
  }
  return out;
}

Tensor binary_cross_entropy(const Tensor& probability, double target, double positive_weight) {
  require_defined(probability, "binary_cross_entropy");
  if (probability.size() != 1) {
    throw std::invalid_argument("binary_cross_entropy: expected one probability, got " +
                                shape_to_string(probability.shape()));
  }
  const double raw = probability.item();
  const double p = std::clamp(raw, kProbabilityClamp, 1.0 - kProbabilityClamp);
  const bool clamped = p != raw;
  const double loss =
      -(positive_weight * target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
  Tensor out = Tensor::scalar(loss);
  if (recording({&probability})) {
    NodePtr pn = probability.node(), on = out.node();
    attach(out, [pn, on, p, clamped, target, positive_weight] {
      if (on->grad.empty() || clamped) return;
      pn->ensure_grad()[0] +=
          on->grad[0] * (-positive_weight * target / p + (1.0 - target) / (1.0 - p));
    });
  }
  return out;
}

Tensor l1_masked(const Tensor& a, std::span<const std::uint8_t> mask) {
  require_defined(a, "l1_masked");
  if (mask.size() != a.size()) {
    throw std::invalid_argument("l1_masked: mask of " + std::to_string(mask.size()) +
                                " entries for " + shape_to_string(a.shape()));
  }
  std::size_t count = 0;
  double total = 0.0;
  auto av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (mask[i]) {
      total += std::abs(av[i]);
      ++count;
    }
  }
  const double inv = count > 0 ? 1.0 / static_cast<double>(count) : 0.0;
  Tensor out = Tensor::scalar(total * inv);
  if (count > 0 && recording({&a})) {
    NodePtr an = a.node(), on = out.node();
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    attach(out, [an, on, m = std::move(m), inv] {
      if (on->grad.empty()) return;
      auto ga = an->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) {
        if (!m[i]) continue;
        const double v = an->values[i];
        const double sign = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
        ga[i] += on->grad[0] * inv * sign;
      }
    });
  }
  return out;
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace ctformer::grad
