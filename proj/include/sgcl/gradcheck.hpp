#pragma once

#include <functional>
#include <vector>

#include "sgcl/tensor.hpp"

namespace sgcl {

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = true;
  int worst_tensor = -1;
  size_t worst_elem = 0;
};

// Compares reverse-mode gradients of the scalar f() against central finite
// differences over every element of `inputs`. f must rebuild its tape from the
// current input values on each call. Relative error is |a-b| / max(1,|a|,|b|).
GradCheckReport grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                           double tol, double h = 1e-5);

}  // namespace sgcl
