#include "urb/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "urb/autodiff.hpp"
#include "urb/errors.hpp"

namespace urb {

namespace {

constexpr std::uint64_t kInitTag = Rng::tag("init");
constexpr std::uint64_t kAdvTag = Rng::tag("adv");
constexpr std::uint64_t kShuffleTag = Rng::tag("shuffle");

struct BatchGrads {
  double loss = 0.0;
  std::vector<Tensor> grads;  // aligned with ParameterSet entries
};

// Forward/backward at the given batch; returns mean loss and parameter
// gradients.
BatchGrads param_grads(const ModelSpec& model, const ParameterSet& params, const Tensor& xb,
                       const std::vector<int>& yb) {
  Tape tape;
  const ForwardHandles fwd = model_forward(model, params, tape, &xb, false, true);
  const NodeId loss = tape.softmax_cross_entropy(fwd.logits, yb);
  tape.backward(loss);
  BatchGrads out;
  out.loss = tape.value(loss).data[0];
  out.grads.reserve(fwd.params.size());
  for (const NodeId pid : fwd.params) out.grads.push_back(tape.grad_or_zeros(pid));
  return out;
}

Tensor gather_batch(const Dataset& data, const std::vector<std::size_t>& order, std::size_t lo,
                    std::size_t hi, std::vector<int>& labels_out) {
  const auto shape = data.input_shape();
  const std::size_t per = shape[0] * shape[1] * shape[2];
  Tensor xb({hi - lo, shape[0], shape[1], shape[2]});
  labels_out.resize(hi - lo);
  for (std::size_t i = lo; i < hi; ++i) {
    const std::size_t src = order[i];
    std::copy(data.inputs.data.begin() + static_cast<std::ptrdiff_t>(src * per),
              data.inputs.data.begin() + static_cast<std::ptrdiff_t>((src + 1) * per),
              xb.data.begin() + static_cast<std::ptrdiff_t>((i - lo) * per));
    labels_out[i - lo] = data.labels[src];
  }
  return xb;
}

Tensor apply_deltas(const Tensor& xb, const std::vector<AttackOutcome>& outs) {
  Tensor xadv(xb.shape);
  const std::size_t B = xb.shape[0];
  const std::size_t per = xb.numel() / B;
  for (std::size_t e = 0; e < B; ++e) {
    const Tensor& d = outs[e].delta;
    for (std::size_t i = 0; i < per; ++i) {
      xadv.data[e * per + i] = xb.data[e * per + i] + d.data[i];
    }
  }
  return xadv;
}

int engine_iterations(const TrainConfig& cfg) {
  if (cfg.msd_iterations > 0) return cfg.msd_iterations;
  int t = 0;
  for (const PerturbationSpec& s : cfg.specs) t = std::max(t, s.iterations);
  return t;
}

int engine_restarts(const std::vector<PerturbationSpec>& specs) {
  int r = 1;
  for (const PerturbationSpec& s : specs) r = std::max(r, s.restarts);
  return r;
}

double clean_accuracy(const ModelSpec& model, const ParameterSet& params, const Dataset& data,
                      int batch) {
  const std::size_t N = data.size();
  const auto shape = data.input_shape();
  const std::size_t per = shape[0] * shape[1] * shape[2];
  std::size_t correct = 0;
  for (std::size_t lo = 0; lo < N; lo += static_cast<std::size_t>(batch)) {
    const std::size_t hi = std::min(N, lo + static_cast<std::size_t>(batch));
    Tensor xb({hi - lo, shape[0], shape[1], shape[2]});
    std::copy(data.inputs.data.begin() + static_cast<std::ptrdiff_t>(lo * per),
              data.inputs.data.begin() + static_cast<std::ptrdiff_t>(hi * per), xb.data.begin());
    const std::vector<int> preds = argmax_rows(model_logits(model, params, xb));
    for (std::size_t i = lo; i < hi; ++i) {
      if (preds[i - lo] == data.labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(N);
}

}  // namespace

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::clean: return "clean";
    case Strategy::single: return "single";
    case Strategy::max_loss: return "max";
    case Strategy::avg: return "avg";
    case Strategy::msd: return "msd";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& s) {
  if (s == "clean") return Strategy::clean;
  if (s == "single") return Strategy::single;
  if (s == "max") return Strategy::max_loss;
  if (s == "avg") return Strategy::avg;
  if (s == "msd") return Strategy::msd;
  throw ConfigError("unknown training strategy '" + s + "'");
}

double schedule_lr(const std::vector<std::pair<double, double>>& schedule, double t) {
  if (schedule.empty()) throw ConfigError("schedule_lr: empty schedule");
  for (std::size_t i = 1; i < schedule.size(); ++i) {
    if (!(schedule[i].first > schedule[i - 1].first)) {
      throw ConfigError("schedule_lr: breakpoints must be strictly increasing");
    }
  }
  if (t <= schedule.front().first) return schedule.front().second;
  if (t >= schedule.back().first) return schedule.back().second;
  for (std::size_t i = 1; i < schedule.size(); ++i) {
    if (t <= schedule[i].first) {
      const auto [t0, v0] = schedule[i - 1];
      const auto [t1, v1] = schedule[i];
      const double w = (t - t0) / (t1 - t0);
      return v0 + w * (v1 - v0);
    }
  }
  return schedule.back().second;
}

void SgdMomentum::step(ParameterSet& params, const std::vector<Tensor>& grads, double lr,
                       double momentum, double weight_decay) {
  if (grads.size() != params.entries.size()) throw DimensionError("sgd: grad count mismatch");
  if (velocity.empty()) {
    for (const auto& [name, t] : params.entries) velocity.emplace_back(t.shape);
  }
  for (std::size_t p = 0; p < params.entries.size(); ++p) {
    Tensor& w = params.entries[p].second;
    Tensor& v = velocity[p];
    const Tensor& g = grads[p];
    if (!w.same_shape(g)) throw DimensionError("sgd: grad shape mismatch");
    for (std::size_t i = 0; i < w.data.size(); ++i) {
      const double gi = g.data[i] + weight_decay * w.data[i];
      v.data[i] = momentum * v.data[i] + gi;
      w.data[i] -= lr * v.data[i];
    }
  }
}

void Adam::step(ParameterSet& params, const std::vector<Tensor>& grads, double lr,
                double weight_decay) {
  if (grads.size() != params.entries.size()) throw DimensionError("adam: grad count mismatch");
  if (m.empty()) {
    for (const auto& [name, tns] : params.entries) {
      m.emplace_back(tns.shape);
      v.emplace_back(tns.shape);
    }
  }
  t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t p = 0; p < params.entries.size(); ++p) {
    Tensor& w = params.entries[p].second;
    const Tensor& g = grads[p];
    if (!w.same_shape(g)) throw DimensionError("adam: grad shape mismatch");
    for (std::size_t i = 0; i < w.data.size(); ++i) {
      const double gi = g.data[i] + weight_decay * w.data[i];
      m[p].data[i] = beta1 * m[p].data[i] + (1.0 - beta1) * gi;
      v[p].data[i] = beta2 * v[p].data[i] + (1.0 - beta2) * gi * gi;
      const double mhat = m[p].data[i] / bc1;
      const double vhat = v[p].data[i] / bc2;
      w.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

std::pair<ParameterSet, TrainLog> train(const TrainConfig& cfg, const ModelSpec& model,
                                        const Dataset& data,
                                        const std::function<void(const EpochRecord&)>& on_epoch) {
  if (cfg.epochs < 0) throw ConfigError("train: negative epochs");
  if (cfg.batch < 1) throw ConfigError("train: batch must be >= 1");
  if (cfg.strategy == Strategy::single && cfg.specs.size() != 1) {
    throw ConfigError("train: strategy 'single' needs exactly one perturbation spec");
  }
  if (cfg.strategy != Strategy::clean && cfg.specs.empty()) {
    throw ConfigError("train: adversarial strategy with no perturbation specs");
  }
  if (data.size() == 0) throw ConfigError("train: empty dataset");

  const Rng root = Rng::seeded(cfg.seed);
  ParameterSet params = init_params(model, root.fork(kInitTag).key());
  const Rng adv_root = root.fork(kAdvTag);
  const Rng shuffle_root = root.fork(kShuffleTag);

  SgdMomentum sgd;
  Adam adam;
  TrainLog log;

  const std::size_t N = data.size();
  const std::size_t steps =
      (N + static_cast<std::size_t>(cfg.batch) - 1) / static_cast<std::size_t>(cfg.batch);
  const int adv_iters = engine_iterations(cfg);
  const int adv_restarts = engine_restarts(cfg.specs);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto wall0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = shuffle_root.fork(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = N; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng.uniform_int(0, i - 1));
      std::swap(order[i - 1], order[j]);
    }
    const Rng adv_epoch = adv_root.fork(static_cast<std::uint64_t>(epoch));

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    double last_lr = cfg.lr;

    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t lo = s * static_cast<std::size_t>(cfg.batch);
      const std::size_t hi = std::min(N, lo + static_cast<std::size_t>(cfg.batch));
      std::vector<int> yb;
      const Tensor xb = gather_batch(data, order, lo, hi, yb);
      const std::size_t B = hi - lo;

      const double t_frac = static_cast<double>(epoch) +
                            static_cast<double>(s + 1) / static_cast<double>(steps);
      const double lr = cfg.schedule.empty() ? cfg.lr : schedule_lr(cfg.schedule, t_frac);
      last_lr = lr;

      const Rng adv_step = adv_epoch.fork(static_cast<std::uint64_t>(s));

      double batch_loss = 0.0;
      std::vector<Tensor> grads;
      if (cfg.strategy == Strategy::clean) {
        BatchGrads bg = param_grads(model, params, xb, yb);
        batch_loss = bg.loss;
        grads = std::move(bg.grads);
      } else if (cfg.strategy == Strategy::single || cfg.strategy == Strategy::msd) {
        std::vector<Rng> ex_rng;
        ex_rng.reserve(B);
        for (std::size_t e = 0; e < B; ++e) ex_rng.push_back(adv_step.fork(e));
        const std::vector<AttackOutcome> outs =
            msd_attack(model, params, xb, yb, cfg.specs, adv_iters, adv_restarts, ex_rng);
        const Tensor xadv = apply_deltas(xb, outs);
        BatchGrads bg = param_grads(model, params, xadv, yb);
        batch_loss = bg.loss;
        grads = std::move(bg.grads);
      } else {
        // max and avg run one singleton engine per ball.
        const std::size_t S = cfg.specs.size();
        std::vector<std::vector<AttackOutcome>> per_spec(S);
        for (std::size_t si = 0; si < S; ++si) {
          std::vector<Rng> ex_rng;
          ex_rng.reserve(B);
          for (std::size_t e = 0; e < B; ++e) ex_rng.push_back(adv_step.fork(e).fork(si));
          per_spec[si] = msd_attack(model, params, xb, yb, {cfg.specs[si]},
                                    cfg.specs[si].iterations, cfg.specs[si].restarts, ex_rng);
        }
        if (cfg.strategy == Strategy::max_loss) {
          std::vector<AttackOutcome> winners;
          winners.reserve(B);
          for (std::size_t e = 0; e < B; ++e) {
            std::size_t win = 0;
            for (std::size_t si = 1; si < S; ++si) {
              if (per_spec[si][e].loss > per_spec[win][e].loss) win = si;
            }
            winners.push_back(per_spec[win][e]);
          }
          const Tensor xadv = apply_deltas(xb, winners);
          BatchGrads bg = param_grads(model, params, xadv, yb);
          batch_loss = bg.loss;
          grads = std::move(bg.grads);
        } else {
          // avg: mean of the per-ball gradients, one optimizer step.
          for (std::size_t si = 0; si < S; ++si) {
            const Tensor xadv = apply_deltas(xb, per_spec[si]);
            BatchGrads bg = param_grads(model, params, xadv, yb);
            batch_loss += bg.loss / static_cast<double>(S);
            if (grads.empty()) {
              grads = std::move(bg.grads);
              for (Tensor& g : grads) {
                for (double& v : g.data) v /= static_cast<double>(S);
              }
            } else {
              for (std::size_t p = 0; p < grads.size(); ++p) {
                for (std::size_t i = 0; i < grads[p].data.size(); ++i) {
                  grads[p].data[i] += bg.grads[p].data[i] / static_cast<double>(S);
                }
              }
            }
          }
        }
      }

      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch + 1) +
                           ", batch " + std::to_string(s + 1));
      }

      if (cfg.optimizer == OptimizerKind::sgd) {
        sgd.step(params, grads, lr, cfg.momentum, cfg.weight_decay);
      } else {
        adam.step(params, grads, lr, cfg.weight_decay);
      }

      loss_sum += batch_loss * static_cast<double>(B);
      loss_count += B;
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.clean_acc = clean_accuracy(model, params, data, cfg.batch);
    rec.adv_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    rec.lr = last_lr;
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }

  return {std::move(params), std::move(log)};
}

}  // namespace urb
