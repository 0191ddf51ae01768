#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "orseq/tensor.hpp"

namespace orseq {

struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "name[i]: analytic=.. numeric=.."
};

/// Compares analytic gradients against central differences.
///
/// `loss(true)` must evaluate the loss and run backward into the `grad`
/// tensors (zeroed here beforehand); `loss(false)` must evaluate only. Every
/// element of every parameter is perturbed by ±h. The error per element is
/// |a - n| / max(|a|, |n|, floor), so components with magnitude below
/// `floor` are compared in absolute terms.
GradCheckReport check_gradients(std::span<const ParamRef> params,
                                const std::function<double(bool)>& loss, double h = 1e-5,
                                double floor = 1e-3);

}  // namespace orseq
