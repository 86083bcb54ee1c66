#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "urb/adversary.hpp"
#include "urb/data_io.hpp"
#include "urb/models.hpp"

namespace urb {

enum class Strategy { clean, single, max_loss, avg, msd };
enum class OptimizerKind { sgd, adam };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& s);

struct TrainConfig {
  Strategy strategy = Strategy::clean;
  std::vector<PerturbationSpec> specs;  // adversary per strategy; empty for clean
  int msd_iterations = 0;               // 0: max over spec iterations
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 1e-3;
  // Piecewise-linear schedule (epoch, lr); evaluated at fractional epochs and
  // clamped at the endpoints. Empty means constant lr.
  std::vector<std::pair<double, double>> schedule;
  double momentum = 0.9;      // sgd
  double weight_decay = 0.0;
  int epochs = 1;
  int batch = 100;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double clean_acc = 0.0;
  double adv_loss = 0.0;  // mean training loss over the epoch's batches
  double lr = 0.0;        // lr at the last step of the epoch
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

// lr at fractional epoch t for a piecewise-linear schedule with strictly
// increasing breakpoints; clamped to the first/last values outside the range.
double schedule_lr(const std::vector<std::pair<double, double>>& schedule, double t);

// SGD with momentum: g' = g + wd*w; v = mu*v + g'; w -= lr*v.
struct SgdMomentum {
  std::vector<Tensor> velocity;
  void step(ParameterSet& params, const std::vector<Tensor>& grads, double lr, double momentum,
            double weight_decay);
};

// Adam with bias correction; decay is coupled (L2 added to the gradient).
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<Tensor> m, v;
  void step(ParameterSet& params, const std::vector<Tensor>& grads, double lr,
            double weight_decay);
};

// Outer minimization over inner maximization: each batch is replaced by
// adversarial examples per the strategy, and the parameter gradient is taken
// at the attacked points. Non-finite loss raises NumericError naming the
// epoch and batch.
std::pair<ParameterSet, TrainLog> train(
    const TrainConfig& cfg, const ModelSpec& model, const Dataset& data,
    const std::function<void(const EpochRecord&)>& on_epoch = nullptr);

}  // namespace urb
