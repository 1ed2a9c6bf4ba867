#include "sgcl/gradcheck.hpp"

#include <cmath>

namespace sgcl {

GradCheckReport grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                           double tol, double h) {
  if (tol <= 0.0) throw DataError("grad_check: tol must be positive");
  for (auto in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  Tensor loss = f();
  if (loss.size() != 1)
    throw ShapeError("grad_check: f must be scalar-valued, got " + shape_str(loss.shape()));
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto in : inputs) analytic.push_back(in.grad());

  GradCheckReport report;
  for (size_t t = 0; t < inputs.size(); ++t) {
    Tensor in = inputs[t];
    for (size_t i = 0; i < in.size(); ++i) {
      double orig = in.values()[i];
      in.values()[i] = orig + h;
      double fp = f().item();
      in.values()[i] = orig - h;
      double fm = f().item();
      in.values()[i] = orig;
      double fd = (fp - fm) / (2.0 * h);
      double ad = analytic[t][i];
      double rel = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_tensor = static_cast<int>(t);
        report.worst_elem = i;
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace sgcl
