#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "urb/geometry.hpp"
#include "urb/models.hpp"
#include "urb/rng.hpp"
#include "urb/tensor.hpp"

namespace urb {

struct PerturbationSpec {
  BallSpec ball;
  double alpha = 0.0;
  int iterations = 1;
  int restarts = 1;
  int k1 = 5, k2 = 20;    // l1 coordinate-step draw range
  double momentum = 0.0;  // mim only
};

struct AttackOutcome {
  Tensor delta;
  double loss = 0.0;
  double norm_linf = 0.0;
  double norm_l2 = 0.0;
  double norm_l1 = 0.0;
  bool misclassified = false;
  int restarts_used = 0;
};

// Per-(restart, iteration, example) record of the candidate race inside the
// union engine; used to audit argmax selection.
struct MsdStepTrace {
  std::vector<double> candidate_loss;  // one per perturbation spec
  int chosen = -1;
  double chosen_loss = 0.0;
};

struct MsdTrace {
  int restarts = 0, iterations = 0, batch = 0, n_specs = 0;
  std::vector<MsdStepTrace> steps;  // index ((r * iterations) + t) * batch + e

  const MsdStepTrace& at(int r, int t, int e) const {
    return steps[static_cast<std::size_t>((r * iterations + t) * batch + e)];
  }
};

// Union steepest-descent engine over a whole batch in lockstep. Per
// iteration, each ball contributes a candidate (steepest step, ball
// projection, image clamp from the zero-perturbation baseline of this
// iterate); the candidate with the strictly largest per-example loss wins,
// earlier specs winning ties. Restart 0 starts at zero; restart r >= 1 starts
// from a random point in ball (r-1) mod n_specs, clamped. Each example keeps
// its best restart by (misclassified, loss) lexicographic order. A single
// spec makes this plain PGD: the candidate race collapses and no extra
// forward passes run.
std::vector<AttackOutcome> msd_attack(const ModelSpec& model, const ParameterSet& params,
                                      const Tensor& x, const std::vector<int>& y,
                                      const std::vector<PerturbationSpec>& specs, int iterations,
                                      int restarts, const std::vector<Rng>& example_rng,
                                      MsdTrace* trace = nullptr);

// Projected gradient descent in one ball; x is a single example (1xCxHxW).
AttackOutcome pgd(const ModelSpec& model, const ParameterSet& params, const Tensor& x, int y,
                  const PerturbationSpec& spec, const Rng& rng);

// One signed step of size epsilon, clamped to the image box.
AttackOutcome fgsm(const ModelSpec& model, const ParameterSet& params, const Tensor& x, int y,
                   double epsilon);

// Momentum iterative method in the linf ball; momentum 0 reduces to PGD.
AttackOutcome mim(const ModelSpec& model, const ParameterSet& params, const Tensor& x, int y,
                  const PerturbationSpec& spec, const Rng& rng);

// Gradient-free l2 probe: per trial, fresh Gaussian noise at a ladder of ten
// scales spanning 0.1*eps to 2*eps, projected into the ball and the image
// box; first misclassification wins. restarts_used reports trials consumed.
AttackOutcome gaussian_noise_attack(const ModelSpec& model, const ParameterSet& params,
                                    const Tensor& x, int y, const BallSpec& ball, int trials,
                                    const Rng& rng);

// Gradient-free l1 probe: per trial, one pixel permutation and one set of
// salt/pepper values; nested prefixes at a ladder of flip fractions. A
// misclassifying prefix is greedily thinned in flip order. Success requires
// the final l1 norm inside epsilon; the returned delta is always feasible.
AttackOutcome salt_pepper_attack(const ModelSpec& model, const ParameterSet& params,
                                 const Tensor& x, int y, double epsilon, int trials,
                                 const Rng& rng);

// Gradient-free l1 minimizer: seed from a misclassifying salt-and-pepper
// sample (feasibility not required at the seed), then repeatedly sweep the
// perturbed pixels in random order, keeping each reset to the clean value
// that preserves misclassification, until a sweep changes nothing. Best
// feasible result across restarts by lowest l1 norm; falls back to zero when
// no restart lands inside the ball.
AttackOutcome pointwise_attack(const ModelSpec& model, const ParameterSet& params, const Tensor& x,
                               int y, double epsilon, int restarts, const Rng& rng);

namespace detail {

// delta for flipping the first `count` pixels of `perm` to their salt/pepper
// values; the rest stay clean.
Tensor sp_flip_delta(const Tensor& x, const std::vector<std::size_t>& perm,
                     const std::vector<double>& values, std::size_t count);

// g <- mu * g + grad / ||grad||_1 (zero gradient adds nothing).
void mim_momentum_update(std::vector<double>& g, const double* grad, std::size_t n, double mu);

}  // namespace detail

}  // namespace urb
