#include "ctcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctcn {

namespace {

void require_finite(double v, const std::string& where) {
  if (!std::isfinite(v)) throw std::domain_error("non-finite value at " + where);
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

std::vector<std::size_t> pick_coords(std::size_t n, std::size_t limit) {
  std::vector<std::size_t> out;
  if (limit == 0 || limit >= n) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i;
    return out;
  }
  for (std::size_t i = 0; i < limit; ++i) out.push_back(i * n / limit);
  return out;
}

}  // namespace

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  Tensor x = Tensor::parameter(point.shape(), {point.data().begin(), point.data().end()});
  Tensor loss = f(x);
  loss.backward();
  std::vector<double> analytic(x.numel(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());

  for (std::size_t i = 0; i < analytic.size(); ++i) require_finite(analytic[i], "coordinate " + std::to_string(i));

  double worst = 0.0;
  std::vector<double> probe(point.data().begin(), point.data().end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const std::string where = "coordinate " + std::to_string(i);
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = f(Tensor(point.shape(), probe)).item();
    probe[i] = orig - step;
    const double down = f(Tensor(point.shape(), probe)).item();
    probe[i] = orig;
    require_finite(up, where);
    require_finite(down, where);
    require_finite(analytic[i], where);
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * step)));
  }
  return worst;
}

double finite_difference_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                               double step, std::size_t max_coords_per_tensor) {
  if (!(step > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  for (auto& p : params) p.zero_grad();
  f().backward();

  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = params[t];
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    auto values = p.mutable_data();
    for (std::size_t i : pick_coords(p.numel(), max_coords_per_tensor)) {
      const std::string where = "tensor " + std::to_string(t) + " coordinate " + std::to_string(i);
      const double orig = values[i];
      values[i] = orig + step;
      const double up = f().item();
      values[i] = orig - step;
      const double down = f().item();
      values[i] = orig;
      require_finite(up, where);
      require_finite(down, where);
      require_finite(analytic[i], where);
      worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * step)));
    }
  }
  for (auto& p : params) p.zero_grad();
  return worst;
}

}  // namespace ctcn
