#include "ctformer/grad/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctformer::grad {

namespace {

double finite_loss(const std::function<Tensor()>& loss_fn) {
  NoGradGuard no_grad;
  const double v = loss_fn().item();
  if (!std::isfinite(v)) throw std::runtime_error("check_gradients: loss is not finite");
  return v;
}

}  // namespace

GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn,
                                const std::vector<NamedTensor>& params,
                                const GradCheckOptions& options) {
  std::vector<Tensor> tensors;
  for (const NamedTensor& p : params) {
    Tensor t = p.tensor;
    t.set_requires_grad(true);
    t.zero_grad();
    tensors.push_back(t);
  }
  {
    Tape tape;
    Tensor loss = loss_fn();
    if (!std::isfinite(loss.item())) throw std::runtime_error("check_gradients: loss is not finite");
    tape.backward(loss);
  }

  GradCheckReport report;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    Tensor& t = tensors[k];
    std::vector<double> analytic(t.size(), 0.0);
    if (!t.grad().empty()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto values = t.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + options.epsilon;
      const double plus = finite_loss(loss_fn);
      values[i] = original - options.epsilon;
      const double minus = finite_loss(loss_fn);
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * options.epsilon);
      const double abs_err = std::abs(analytic[i] - numeric);
      const double denom =
          std::max({std::abs(analytic[i]), std::abs(numeric), options.denominator_floor});
      const double rel_err = abs_err / denom;
      ++report.entries_checked;
      report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
      if (rel_err > report.max_relative_error || report.entries_checked == 1) {
        report.max_relative_error = std::max(report.max_relative_error, rel_err);
        report.worst_parameter = params[k].name;
        report.worst_index = i;
        report.worst_analytic = analytic[i];
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace ctformer::grad
