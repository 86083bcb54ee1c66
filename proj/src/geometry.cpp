#include "urb/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "urb/errors.hpp"

namespace urb {

const char* norm_name(NormKind k) {
  switch (k) {
    case NormKind::linf: return "linf";
    case NormKind::l2: return "l2";
    case NormKind::l1: return "l1";
  }
  return "?";
}

NormKind norm_from_name(const std::string& s) {
  if (s == "linf") return NormKind::linf;
  if (s == "l2") return NormKind::l2;
  if (s == "l1") return NormKind::l1;
  throw ConfigError("unknown norm '" + s + "' (expected linf, l2, or l1)");
}

namespace detail {

double norm_linf_span(const double* d, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(d[i]));
  return m;
}

double norm_l2_span(const double* d, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += d[i] * d[i];
  return std::sqrt(s);
}

double norm_l1_span(const double* d, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(d[i]);
  return s;
}

void steepest_linf_span(const double* g, double* v, std::size_t n, double alpha) {
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = g[i] > 0.0 ? alpha : (g[i] < 0.0 ? -alpha : 0.0);
  }
}

void steepest_l2_span(const double* g, double* v, std::size_t n, double alpha) {
  const double nrm = norm_l2_span(g, n);
  if (nrm == 0.0) {
    std::fill(v, v + n, 0.0);
    return;
  }
  const double s = alpha / nrm;
  for (std::size_t i = 0; i < n; ++i) v[i] = s * g[i];
}

void steepest_l1_span(const double* g, const double* xpd, double* v, std::size_t n, double alpha,
                      int k1, int k2, Rng& rng) {
  if (k1 < 1 || k2 < k1) throw ConfigError("steepest_l1: need 1 <= k1 <= k2");
  // Draw k before looking at eligibility so RNG consumption never depends on
  // the data.
  const int k = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(k1),
                                                 static_cast<std::uint64_t>(k2)));
  std::fill(v, v + n, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ga = std::abs(g[a]), gb = std::abs(g[b]);
    if (ga != gb) return ga > gb;
    return a < b;
  });
  const double step = alpha / static_cast<double>(k);
  int taken = 0;
  for (std::size_t r = 0; r < n && taken < k; ++r) {
    const std::size_t i = order[r];
    if (g[i] == 0.0) break;  // remaining coordinates carry no descent signal
    const double s = g[i] > 0.0 ? step : -step;
    const double moved = xpd[i] + s;
    if (moved < 0.0 || moved > 1.0) continue;  // step would leave the image box
    v[i] = s;
    ++taken;
  }
}

void project_linf_span(double* d, std::size_t n, double eps) {
  for (std::size_t i = 0; i < n; ++i) d[i] = std::clamp(d[i], -eps, eps);
}

void project_l2_span(double* d, std::size_t n, double eps) {
  const double nrm = norm_l2_span(d, n);
  if (nrm <= eps) return;
  const double s = eps / nrm;
  for (std::size_t i = 0; i < n; ++i) d[i] *= s;
}

void project_l1_span(double* d, std::size_t n, double eps) {
  if (eps < 0.0) throw ConfigError("project_l1: negative radius");
  if (norm_l1_span(d, n) <= eps) return;
  if (eps == 0.0) {
    std::fill(d, d + n, 0.0);
    return;
  }
  std::vector<double> gamma(n);
  for (std::size_t i = 0; i < n; ++i) gamma[i] = std::abs(d[i]);
  std::sort(gamma.begin(), gamma.end(), std::greater<double>());
  double csum = 0.0;
  double eta = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    csum += gamma[j];
    const double cand = (csum - eps) / static_cast<double>(j + 1);
    if (gamma[j] - cand > 0.0) {
      eta = cand;
    } else {
      break;  // gamma is sorted, so the condition stays false from here on
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double mag = std::abs(d[i]) - eta;
    d[i] = mag > 0.0 ? (d[i] > 0.0 ? mag : -mag) : 0.0;
  }
}

void clamp_to_image_span(const double* x, double* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = std::clamp(x[i] + d[i], 0.0, 1.0) - x[i];
  }
}

}  // namespace detail

double norm_linf(const Tensor& d) { return detail::norm_linf_span(d.data.data(), d.numel()); }
double norm_l2(const Tensor& d) { return detail::norm_l2_span(d.data.data(), d.numel()); }
double norm_l1(const Tensor& d) { return detail::norm_l1_span(d.data.data(), d.numel()); }

double norm_of(const Tensor& d, NormKind k) {
  switch (k) {
    case NormKind::linf: return norm_linf(d);
    case NormKind::l2: return norm_l2(d);
    case NormKind::l1: return norm_l1(d);
  }
  return 0.0;
}

Tensor steepest_linf(const Tensor& grad, double alpha) {
  Tensor v(grad.shape);
  detail::steepest_linf_span(grad.data.data(), v.data.data(), grad.numel(), alpha);
  return v;
}

Tensor steepest_l2(const Tensor& grad, double alpha) {
  Tensor v(grad.shape);
  detail::steepest_l2_span(grad.data.data(), v.data.data(), grad.numel(), alpha);
  return v;
}

Tensor steepest_l1(const Tensor& grad, const Tensor& x_plus_delta, double alpha, int k1, int k2,
                   Rng& rng) {
  if (!grad.same_shape(x_plus_delta)) {
    throw DimensionError("steepest_l1: gradient and image shapes differ");
  }
  Tensor v(grad.shape);
  detail::steepest_l1_span(grad.data.data(), x_plus_delta.data.data(), v.data.data(), grad.numel(),
                           alpha, k1, k2, rng);
  return v;
}

Tensor project_linf(Tensor delta, double epsilon) {
  detail::project_linf_span(delta.data.data(), delta.numel(), epsilon);
  return delta;
}

Tensor project_l2(Tensor delta, double epsilon) {
  detail::project_l2_span(delta.data.data(), delta.numel(), epsilon);
  return delta;
}

Tensor project_l1(Tensor delta, double epsilon) {
  detail::project_l1_span(delta.data.data(), delta.numel(), epsilon);
  return delta;
}

Tensor project(Tensor delta, const BallSpec& ball) {
  switch (ball.norm) {
    case NormKind::linf: return project_linf(std::move(delta), ball.epsilon);
    case NormKind::l2: return project_l2(std::move(delta), ball.epsilon);
    case NormKind::l1: return project_l1(std::move(delta), ball.epsilon);
  }
  return delta;
}

Tensor random_in_ball(const BallSpec& ball, const std::vector<std::size_t>& shape, Rng& rng) {
  if (ball.epsilon < 0.0) throw ConfigError("random_in_ball: negative radius");
  Tensor out(shape);
  const std::size_t n = out.numel();
  switch (ball.norm) {
    case NormKind::linf: {
      for (std::size_t i = 0; i < n; ++i) out.data[i] = rng.uniform(-ball.epsilon, ball.epsilon);
      break;
    }
    case NormKind::l2: {
      // Direction from a standard Gaussian, radius eps * u^(1/n).
      for (std::size_t i = 0; i < n; ++i) out.data[i] = rng.normal();
      const double u = rng.uniform01();
      const double nrm = detail::norm_l2_span(out.data.data(), n);
      const double r = ball.epsilon * std::pow(u, 1.0 / static_cast<double>(n));
      const double s = nrm > 0.0 ? r / nrm : 0.0;
      for (std::size_t i = 0; i < n; ++i) out.data[i] *= s;
      break;
    }
    case NormKind::l1: {
      // Exponential magnitudes with random signs land uniformly on the l1
      // sphere after normalization; radius eps * u^(1/n).
      for (std::size_t i = 0; i < n; ++i) out.data[i] = rng.exponential();
      for (std::size_t i = 0; i < n; ++i) {
        if (rng.uniform01() < 0.5) out.data[i] = -out.data[i];
      }
      const double u = rng.uniform01();
      const double nrm = detail::norm_l1_span(out.data.data(), n);
      const double r = ball.epsilon * std::pow(u, 1.0 / static_cast<double>(n));
      const double s = nrm > 0.0 ? r / nrm : 0.0;
      for (std::size_t i = 0; i < n; ++i) out.data[i] *= s;
      break;
    }
  }
  return out;
}

Tensor clamp_to_image(const Tensor& x, Tensor delta) {
  if (!x.same_shape(delta)) throw DimensionError("clamp_to_image: shape mismatch");
  detail::clamp_to_image_span(x.data.data(), delta.data.data(), x.numel());
  return delta;
}

}  // namespace urb
