#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "ctcn/tensor.hpp"

namespace ctcn {

/// Compares the reverse-mode gradient of a scalar function against central
/// differences. Returns max over coordinates of
/// |analytic - numeric| / max(1, |analytic|).
/// Throws std::domain_error naming the coordinate if a non-finite value shows up.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& point, double step = 1e-5);

/// Same check over the parameters a closure reads. Parameter values are
/// perturbed in place and restored. `max_coords_per_tensor` (0 = all) picks
/// evenly spaced coordinates to bound cost on larger networks.
double finite_difference_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                               double step = 1e-5, std::size_t max_coords_per_tensor = 0);

}  // namespace ctcn
