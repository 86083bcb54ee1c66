#include "urb/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "urb/autodiff.hpp"
#include "urb/errors.hpp"

namespace urb {

namespace {

struct EvalOne {
  double loss = 0.0;
  bool miscl = false;
};

EvalOne eval_one(const ModelSpec& model, const ParameterSet& params, const Tensor& xadv, int y) {
  const Tensor logits = model_logits(model, params, xadv);
  EvalOne r;
  r.loss = per_example_ce(logits, {y})[0];
  r.miscl = argmax_rows(logits)[0] != y;
  return r;
}

Tensor add_rows(const Tensor& x, const std::vector<double>& delta) {
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] + delta[i];
  return out;
}

void require_single(const Tensor& x, const char* who) {
  if (x.shape.size() != 4 || x.shape[0] != 1) {
    throw DimensionError(std::string(who) + ": expected a single 1xCxHxW example, got " +
                         shape_str(x.shape));
  }
}

AttackOutcome make_outcome(Tensor delta, double loss, bool miscl, int restarts_used) {
  AttackOutcome out;
  out.norm_linf = norm_linf(delta);
  out.norm_l2 = norm_l2(delta);
  out.norm_l1 = norm_l1(delta);
  out.delta = std::move(delta);
  out.loss = loss;
  out.misclassified = miscl;
  out.restarts_used = restarts_used;
  return out;
}

std::vector<std::size_t> fisher_yates(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, i - 1));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

// Ten-rung geometric ladders used by the probe attacks.
double gaussian_scale(double eps, int rung) {
  return eps * 0.1 * std::pow(20.0, static_cast<double>(rung) / 9.0);
}

double flip_fraction(int rung) { return 0.02 * std::pow(50.0, static_cast<double>(rung) / 9.0); }

constexpr double kFeasibilitySlack = 1.0 + 1e-9;

}  // namespace

namespace detail {

Tensor sp_flip_delta(const Tensor& x, const std::vector<std::size_t>& perm,
                     const std::vector<double>& values, std::size_t count) {
  if (perm.size() != x.numel() || values.size() != x.numel()) {
    throw DimensionError("sp_flip_delta: permutation/value length mismatch");
  }
  if (count > perm.size()) throw IndexError("sp_flip_delta: count exceeds pixel count");
  Tensor delta(x.shape);
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t idx = perm[r];
    delta.data[idx] = values[r] - x.data[idx];
  }
  return delta;
}

void mim_momentum_update(std::vector<double>& g, const double* grad, std::size_t n, double mu) {
  const double nrm = norm_l1_span(grad, n);
  if (nrm == 0.0) {
    for (std::size_t i = 0; i < n; ++i) g[i] *= mu;
    return;
  }
  for (std::size_t i = 0; i < n; ++i) g[i] = mu * g[i] + grad[i] / nrm;
}

}  // namespace detail

std::vector<AttackOutcome> msd_attack(const ModelSpec& model, const ParameterSet& params,
                                      const Tensor& x, const std::vector<int>& y,
                                      const std::vector<PerturbationSpec>& specs, int iterations,
                                      int restarts, const std::vector<Rng>& example_rng,
                                      MsdTrace* trace) {
  if (x.shape.size() != 4) {
    throw DimensionError("msd_attack: input must be BxCxHxW, got " + shape_str(x.shape));
  }
  const std::size_t B = x.shape[0];
  const std::size_t n = x.numel() / std::max<std::size_t>(B, 1);
  if (B == 0) throw DimensionError("msd_attack: empty batch");
  if (y.size() != B) throw DimensionError("msd_attack: label count vs batch");
  if (example_rng.size() != B) throw DimensionError("msd_attack: rng count vs batch");
  if (specs.empty()) throw ConfigError("msd_attack: no perturbation specs");
  if (iterations < 0 || restarts < 1) {
    throw ConfigError("msd_attack: need iterations >= 0 and restarts >= 1");
  }
  const std::size_t S = specs.size();

  if (trace) {
    trace->restarts = restarts;
    trace->iterations = iterations;
    trace->batch = static_cast<int>(B);
    trace->n_specs = static_cast<int>(S);
    trace->steps.assign(static_cast<std::size_t>(restarts) * static_cast<std::size_t>(iterations) *
                            B,
                        MsdStepTrace{});
  }

  std::vector<double> delta(B * n, 0.0);
  std::vector<std::vector<double>> cand(S, std::vector<double>(B * n));
  std::vector<double> vstep(n);
  Tensor xadv(x.shape);

  std::vector<char> best_init(B, 0), best_miscl(B, 0);
  std::vector<double> best_loss(B, 0.0);
  std::vector<double> best_delta(B * n, 0.0);

  const bool need_losses_always = S > 1 || trace != nullptr;

  for (int r = 0; r < restarts; ++r) {
    std::vector<Rng> streams;
    streams.reserve(B);
    for (std::size_t e = 0; e < B; ++e) streams.push_back(example_rng[e].fork(static_cast<std::uint64_t>(r)));

    if (r == 0) {
      std::fill(delta.begin(), delta.end(), 0.0);
    } else {
      const BallSpec& ball = specs[static_cast<std::size_t>(r - 1) % S].ball;
      for (std::size_t e = 0; e < B; ++e) {
        const Tensor de = random_in_ball(ball, {n}, streams[e]);
        std::copy(de.data.begin(), de.data.end(), delta.begin() + static_cast<std::ptrdiff_t>(e * n));
        detail::clamp_to_image_span(x.data.data() + e * n, delta.data() + e * n, n);
      }
    }

    for (int t = 0; t < iterations; ++t) {
      for (std::size_t i = 0; i < B * n; ++i) xadv.data[i] = x.data[i] + delta[i];
      Tape tape;
      const ForwardHandles fwd = model_forward(model, params, tape, &xadv, true, false);
      const NodeId loss_node = tape.softmax_cross_entropy(fwd.logits, y);
      tape.backward(loss_node);
      const Tensor* gp = tape.grad_if(fwd.input);
      const Tensor gzero = gp ? Tensor({1}) : Tensor(x.shape);
      const double* g = gp ? gp->data.data() : gzero.data.data();

      for (std::size_t si = 0; si < S; ++si) {
        const PerturbationSpec& s = specs[si];
        std::vector<double>& c = cand[si];
        c = delta;
        for (std::size_t e = 0; e < B; ++e) {
          const double* ge = g + e * n;
          const double* xe = x.data.data() + e * n;
          double* ce = c.data() + e * n;
          switch (s.ball.norm) {
            case NormKind::linf:
              detail::steepest_linf_span(ge, vstep.data(), n, s.alpha);
              break;
            case NormKind::l2:
              detail::steepest_l2_span(ge, vstep.data(), n, s.alpha);
              break;
            case NormKind::l1:
              detail::steepest_l1_span(ge, xadv.data.data() + e * n, vstep.data(), n, s.alpha,
                                       s.k1, s.k2, streams[e]);
              break;
          }
          for (std::size_t i = 0; i < n; ++i) ce[i] += vstep[i];
          switch (s.ball.norm) {
            case NormKind::linf:
              detail::project_linf_span(ce, n, s.ball.epsilon);
              break;
            case NormKind::l2:
              detail::project_l2_span(ce, n, s.ball.epsilon);
              break;
            case NormKind::l1:
              detail::project_l1_span(ce, n, s.ball.epsilon);
              break;
          }
          detail::clamp_to_image_span(xe, ce, n);
        }
      }

      if (need_losses_always) {
        std::vector<std::vector<double>> closs(S);
        for (std::size_t si = 0; si < S; ++si) {
          const Tensor cx = add_rows(x, cand[si]);
          closs[si] = per_example_ce(model_logits(model, params, cx), y);
        }
        for (std::size_t e = 0; e < B; ++e) {
          std::size_t win = 0;
          double wloss = closs[0][e];
          for (std::size_t si = 1; si < S; ++si) {
            if (closs[si][e] > wloss) {
              win = si;
              wloss = closs[si][e];
            }
          }
          std::copy(cand[win].begin() + static_cast<std::ptrdiff_t>(e * n),
                    cand[win].begin() + static_cast<std::ptrdiff_t>((e + 1) * n),
                    delta.begin() + static_cast<std::ptrdiff_t>(e * n));
          if (trace) {
            MsdStepTrace& st =
                trace->steps[(static_cast<std::size_t>(r) * static_cast<std::size_t>(iterations) +
                              static_cast<std::size_t>(t)) *
                                 B +
                             e];
            st.candidate_loss.resize(S);
            for (std::size_t si = 0; si < S; ++si) st.candidate_loss[si] = closs[si][e];
            st.chosen = static_cast<int>(win);
            st.chosen_loss = wloss;
          }
        }
      } else {
        delta.swap(cand[0]);
      }
    }

    for (std::size_t i = 0; i < B * n; ++i) xadv.data[i] = x.data[i] + delta[i];
    const Tensor logits = model_logits(model, params, xadv);
    const std::vector<double> losses = per_example_ce(logits, y);
    const std::vector<int> preds = argmax_rows(logits);
    for (std::size_t e = 0; e < B; ++e) {
      const bool miscl = preds[e] != y[e];
      const bool better = !best_init[e] || (miscl && !best_miscl[e]) ||
                          (miscl == static_cast<bool>(best_miscl[e]) && losses[e] > best_loss[e]);
      if (better) {
        best_init[e] = 1;
        best_miscl[e] = miscl ? 1 : 0;
        best_loss[e] = losses[e];
        std::copy(delta.begin() + static_cast<std::ptrdiff_t>(e * n),
                  delta.begin() + static_cast<std::ptrdiff_t>((e + 1) * n),
                  best_delta.begin() + static_cast<std::ptrdiff_t>(e * n));
      }
    }
  }

  std::vector<AttackOutcome> out;
  out.reserve(B);
  for (std::size_t e = 0; e < B; ++e) {
    Tensor de({1, x.shape[1], x.shape[2], x.shape[3]});
    std::copy(best_delta.begin() + static_cast<std::ptrdiff_t>(e * n),
              best_delta.begin() + static_cast<std::ptrdiff_t>((e + 1) * n), de.data.begin());
    out.push_back(make_outcome(std::move(de), best_loss[e], best_miscl[e] != 0, restarts));
  }
  return out;
}

AttackOutcome pgd(const ModelSpec& model, const ParameterSet& params, const Tensor& x, int y,
                  const PerturbationSpec& spec, const Rng& rng) {
  require_single(x, "pgd");
  std::vector<Rng> ex{rng};
  return msd_attack(model, params, x, {y}, {spec}, spec.iterations, spec.restarts, ex)[0];
}

AttackOutcome fgsm(const ModelSpec& model, const ParameterSet& params, const Tensor& x, int y,
                   double epsilon) {
  require_single(x, "fgsm");
  PerturbationSpec spec;
  spec.ball = {NormKind::linf, epsilon};
  spec.alpha = epsilon;
  spec.iterations = 1;
  spec.restarts = 1;
  return pgd(model, params, x, y, spec, Rng::seeded(0));
}

AttackOutcome mim(const ModelSpec& model, const ParameterSet& params, const Tensor& x, int y,
                  const PerturbationSpec& spec, const Rng& rng) {
  require_single(x, "mim");
  if (spec.ball.norm != NormKind::linf) throw ConfigError("mim: linf ball only");
  if (spec.momentum < 0.0 || spec.momentum >= 1.0) throw ConfigError("mim: momentum in [0,1)");
  if (spec.iterations < 0 || spec.restarts < 1) {
    throw ConfigError("mim: need iterations >= 0 and restarts >= 1");
  }
  const std::size_t n = x.numel();

  bool best_init = false, best_miscl = false;
  double best_loss = 0.0;
  std::vector<double> best_delta(n, 0.0);

  std::vector<double> delta(n), gmom(n);
  Tensor xadv(x.shape);
  for (int r = 0; r < spec.restarts; ++r) {
    Rng stream = rng.fork(static_cast<std::uint64_t>(r));
    std::fill(gmom.begin(), gmom.end(), 0.0);
    if (r == 0) {
      std::fill(delta.begin(), delta.end(), 0.0);
    } else {
      const Tensor de = random_in_ball(spec.ball, {n}, stream);
      std::copy(de.data.begin(), de.data.end(), delta.begin());
      detail::clamp_to_image_span(x.data.data(), delta.data(), n);
    }

    for (int t = 0; t < spec.iterations; ++t) {
      for (std::size_t i = 0; i < n; ++i) xadv.data[i] = x.data[i] + delta[i];
      Tape tape;
      const ForwardHandles fwd = model_forward(model, params, tape, &xadv, true, false);
      const NodeId loss_node = tape.softmax_cross_entropy(fwd.logits, {y});
      tape.backward(loss_node);
      const Tensor* gp = tape.grad_if(fwd.input);
      if (gp) {
        detail::mim_momentum_update(gmom, gp->data.data(), n, spec.momentum);
      } else {
        for (std::size_t i = 0; i < n; ++i) gmom[i] *= spec.momentum;
      }
      for (std::size_t i = 0; i < n; ++i) {
        delta[i] += gmom[i] > 0.0 ? spec.alpha : (gmom[i] < 0.0 ? -spec.alpha : 0.0);
      }
      detail::project_linf_span(delta.data(), n, spec.ball.epsilon);
      detail::clamp_to_image_span(x.data.data(), delta.data(), n);
    }

    for (std::size_t i = 0; i < n; ++i) xadv.data[i] = x.data[i] + delta[i];
    const EvalOne ev = eval_one(model, params, xadv, y);
    const bool better = !best_init || (ev.miscl && !best_miscl) ||
                        (ev.miscl == best_miscl && ev.loss > best_loss);
    if (better) {
      best_init = true;
      best_miscl = ev.miscl;
      best_loss = ev.loss;
      best_delta = delta;
    }
  }

  Tensor de(x.shape, std::vector<double>(best_delta.begin(), best_delta.end()));
  return make_outcome(std::move(de), best_loss, best_miscl, spec.restarts);
}

AttackOutcome gaussian_noise_attack(const ModelSpec& model, const ParameterSet& params,
                                    const Tensor& x, int y, const BallSpec& ball, int trials,
                                    const Rng& rng) {
  require_single(x, "gaussian_noise_attack");
  if (ball.norm != NormKind::l2) throw ConfigError("gaussian_noise_attack: l2 ball only");
  if (trials < 0) throw ConfigError("gaussian_noise_attack: negative trials");
  const std::size_t n = x.numel();

  const EvalOne clean = eval_one(model, params, x, y);
  if (clean.miscl) return make_outcome(Tensor(x.shape), clean.loss, true, 0);

  Tensor best(x.shape);
  double best_loss = clean.loss;

  Tensor delta(x.shape);
  Tensor xadv(x.shape);
  for (int t = 0; t < trials; ++t) {
    Rng stream = rng.fork(static_cast<std::uint64_t>(t));
    for (int j = 0; j < 10; ++j) {
      const double sigma = gaussian_scale(ball.epsilon, j);
      for (std::size_t i = 0; i < n; ++i) delta.data[i] = sigma * stream.normal();
      detail::project_l2_span(delta.data.data(), n, ball.epsilon);
      detail::clamp_to_image_span(x.data.data(), delta.data.data(), n);
      for (std::size_t i = 0; i < n; ++i) xadv.data[i] = x.data[i] + delta.data[i];
      const EvalOne ev = eval_one(model, params, xadv, y);
      if (ev.miscl) return make_outcome(std::move(delta), ev.loss, true, t + 1);
      if (ev.loss > best_loss) {
        best_loss = ev.loss;
        best = delta;
      }
    }
  }
  return make_outcome(std::move(best), best_loss, false, trials);
}

AttackOutcome salt_pepper_attack(const ModelSpec& model, const ParameterSet& params,
                                 const Tensor& x, int y, double epsilon, int trials,
                                 const Rng& rng) {
  require_single(x, "salt_pepper_attack");
  if (epsilon < 0.0) throw ConfigError("salt_pepper_attack: negative epsilon");
  if (trials < 0) throw ConfigError("salt_pepper_attack: negative trials");
  const std::size_t n = x.numel();
  const double budget = epsilon * kFeasibilitySlack;

  const EvalOne clean = eval_one(model, params, x, y);
  if (clean.miscl) return make_outcome(Tensor(x.shape), clean.loss, true, 0);

  // Best feasible candidate by (misclassified, loss); starts at delta = 0.
  Tensor best(x.shape);
  double best_loss = clean.loss;
  bool best_miscl = false;

  Tensor xadv(x.shape);
  auto eval_delta = [&](const Tensor& d) {
    for (std::size_t i = 0; i < n; ++i) xadv.data[i] = x.data[i] + d.data[i];
    return eval_one(model, params, xadv, y);
  };

  for (int t = 0; t < trials; ++t) {
    Rng stream = rng.fork(static_cast<std::uint64_t>(t));
    const std::vector<std::size_t> perm = fisher_yates(n, stream);
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = stream.uniform01() < 0.5 ? 0.0 : 1.0;

    for (int j = 0; j < 10; ++j) {
      const std::size_t m =
          std::min<std::size_t>(n, static_cast<std::size_t>(
                                       std::ceil(flip_fraction(j) * static_cast<double>(n))));
      Tensor delta = detail::sp_flip_delta(x, perm, values, m);
      EvalOne ev = eval_delta(delta);
      if (!ev.miscl) {
        if (norm_l1(delta) <= budget && ev.loss > best_loss && !best_miscl) {
          best_loss = ev.loss;
          best = delta;
        }
        continue;
      }
      // Misclassifying prefix: thin it greedily in flip order, then stop the
      // ladder (larger prefixes only add mass).
      for (std::size_t rr = 0; rr < m; ++rr) {
        const std::size_t idx = perm[rr];
        if (delta.data[idx] == 0.0) continue;
        const double old = delta.data[idx];
        delta.data[idx] = 0.0;
        if (!eval_delta(delta).miscl) delta.data[idx] = old;
      }
      ev = eval_delta(delta);
      if (ev.miscl && norm_l1(delta) <= budget) {
        return make_outcome(std::move(delta), ev.loss, true, t + 1);
      }
      break;
    }
  }
  return make_outcome(std::move(best), best_loss, best_miscl, trials);
}

AttackOutcome pointwise_attack(const ModelSpec& model, const ParameterSet& params, const Tensor& x,
                               int y, double epsilon, int restarts, const Rng& rng) {
  require_single(x, "pointwise_attack");
  if (epsilon < 0.0) throw ConfigError("pointwise_attack: negative epsilon");
  if (restarts < 0) throw ConfigError("pointwise_attack: negative restarts");
  const std::size_t n = x.numel();
  const double budget = epsilon * kFeasibilitySlack;

  const EvalOne clean = eval_one(model, params, x, y);
  if (clean.miscl) return make_outcome(Tensor(x.shape), clean.loss, true, 0);

  Tensor xadv(x.shape);
  auto eval_delta = [&](const Tensor& d) {
    for (std::size_t i = 0; i < n; ++i) xadv.data[i] = x.data[i] + d.data[i];
    return eval_one(model, params, xadv, y);
  };

  bool have_best = false;
  Tensor best_delta(x.shape);
  double best_l1 = 0.0, best_final_loss = 0.0;

  for (int r = 0; r < restarts; ++r) {
    Rng stream = rng.fork(static_cast<std::uint64_t>(r));

    // Seed: any misclassifying salt-and-pepper sample, feasibility not
    // required yet.
    Tensor delta(x.shape);
    bool found = false;
    for (int t = 0; t < 10 && !found; ++t) {
      Rng tstream = stream.fork(static_cast<std::uint64_t>(t));
      const std::vector<std::size_t> perm = fisher_yates(n, tstream);
      std::vector<double> values(n);
      for (std::size_t i = 0; i < n; ++i) values[i] = tstream.uniform01() < 0.5 ? 0.0 : 1.0;
      for (int j = 0; j < 10; ++j) {
        const std::size_t m =
            std::min<std::size_t>(n, static_cast<std::size_t>(
                                         std::ceil(flip_fraction(j) * static_cast<double>(n))));
        Tensor cand = detail::sp_flip_delta(x, perm, values, m);
        if (eval_delta(cand).miscl) {
          delta = std::move(cand);
          found = true;
          break;
        }
      }
    }
    if (!found) continue;

    // Greedy minimization: sweep the perturbed pixels in random order,
    // keeping every reset that preserves misclassification.
    while (true) {
      std::vector<std::size_t> perturbed;
      for (std::size_t i = 0; i < n; ++i) {
        if (delta.data[i] != 0.0) perturbed.push_back(i);
      }
      if (perturbed.empty()) break;
      for (std::size_t i = perturbed.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(stream.uniform_int(0, i - 1));
        std::swap(perturbed[i - 1], perturbed[j]);
      }
      bool changed = false;
      for (const std::size_t idx : perturbed) {
        const double old = delta.data[idx];
        delta.data[idx] = 0.0;
        if (eval_delta(delta).miscl) {
          changed = true;
        } else {
          delta.data[idx] = old;
        }
      }
      if (!changed) break;
    }

    const double l1 = norm_l1(delta);
    if (l1 <= budget && (!have_best || l1 < best_l1)) {
      have_best = true;
      best_l1 = l1;
      best_final_loss = eval_delta(delta).loss;
      best_delta = std::move(delta);
    }
  }

  if (!have_best) return make_outcome(Tensor(x.shape), clean.loss, false, restarts);
  return make_outcome(std::move(best_delta), best_final_loss, true, restarts);
}

}  // namespace urb
