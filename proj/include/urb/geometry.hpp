#pragma once

#include <cstddef>
#include <vector>

#include "urb/rng.hpp"
#include "urb/tensor.hpp"

namespace urb {

enum class NormKind { linf, l2, l1 };

const char* norm_name(NormKind k);
NormKind norm_from_name(const std::string& s);

struct BallSpec {
  NormKind norm = NormKind::linf;
  double epsilon = 0.0;
};

// Span-level kernels operate on flat slices so batched callers can address
// per-example rows without copying. The Tensor wrappers below are the public
// entry points.
namespace detail {

double norm_linf_span(const double* d, std::size_t n);
double norm_l2_span(const double* d, std::size_t n);
double norm_l1_span(const double* d, std::size_t n);

// v = alpha * sign(g); sign(0) = 0.
void steepest_linf_span(const double* g, double* v, std::size_t n, double alpha);
// v = alpha * g / ||g||_2; zero gradient yields the zero vector.
void steepest_l2_span(const double* g, double* v, std::size_t n, double alpha);
// Enhanced top-k coordinate step: draw k ~ U{k1..k2} (the draw always happens,
// keeping RNG consumption independent of eligibility), rank coordinates by
// |g| descending with index ascending as tie-break, skip coordinates whose
// step of magnitude alpha/k would push the pixel value xpd outside [0,1],
// take the first min(k, eligible) survivors at alpha/k each.
void steepest_l1_span(const double* g, const double* xpd, double* v, std::size_t n, double alpha,
                      int k1, int k2, Rng& rng);

void project_linf_span(double* d, std::size_t n, double eps);
void project_l2_span(double* d, std::size_t n, double eps);
// Euclidean projection onto the l1 ball by sort-and-threshold; identity when
// already inside.
void project_l1_span(double* d, std::size_t n, double eps);

// d <- clamp(x + d, 0, 1) - x, elementwise; guarantees x + d lands in [0,1]
// exactly and never grows |d_i|.
void clamp_to_image_span(const double* x, double* d, std::size_t n);

}  // namespace detail

double norm_linf(const Tensor& d);
double norm_l2(const Tensor& d);
double norm_l1(const Tensor& d);
double norm_of(const Tensor& d, NormKind k);

Tensor steepest_linf(const Tensor& grad, double alpha);
Tensor steepest_l2(const Tensor& grad, double alpha);
Tensor steepest_l1(const Tensor& grad, const Tensor& x_plus_delta, double alpha, int k1, int k2,
                   Rng& rng);

Tensor project_linf(Tensor delta, double epsilon);
Tensor project_l2(Tensor delta, double epsilon);
Tensor project_l1(Tensor delta, double epsilon);
Tensor project(Tensor delta, const BallSpec& ball);

// Uniform sample from the given lp ball. Draw order per call is fixed:
//   linf: n uniforms on [-eps, eps]
//   l2:   n standard normals, then one uniform for the radius
//   l1:   n exponentials, then n sign coins, then one uniform for the radius
Tensor random_in_ball(const BallSpec& ball, const std::vector<std::size_t>& shape, Rng& rng);

Tensor clamp_to_image(const Tensor& x, Tensor delta);

}  // namespace urb
