#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "urb/adversary.hpp"
#include "urb/data_io.hpp"

namespace urb {

enum class AttackKind { pgd, fgsm, mim, gaussian, salt_pepper, pointwise };

struct AttackSuiteEntry {
  std::string id;
  AttackKind kind = AttackKind::pgd;
  NormKind group = NormKind::linf;  // ball the success check uses
  PerturbationSpec spec;
  int trials = 10;  // gaussian / salt_pepper sampling budget
};

struct AttackSuite {
  std::vector<AttackSuiteEntry> entries;
  void validate() const;  // unique ids, sane parameters
};

// Per-model robustness summary. Accuracies are all derived from clean_correct
// and the per-attack success bitmap; an attack succeeds on an example only if
// it misclassifies and its returned delta passes the post-hoc norm check
// |delta|_p <= eps * (1 + 1e-9).
struct UnionReport {
  std::size_t n_examples = 0;
  double clean_accuracy = 0.0;
  std::vector<std::pair<std::string, double>> attack_accuracy;  // suite order
  std::vector<std::pair<NormKind, double>> group_accuracy;      // groups present
  double union_accuracy = 0.0;
  std::vector<std::uint8_t> clean_correct;
  std::vector<std::vector<std::uint8_t>> success;  // [attack][example]
  std::vector<NormKind> entry_group;               // suite group per attack
};

// Dispatch one suite entry against one example.
AttackOutcome run_suite_entry(const ModelSpec& model, const ParameterSet& params, const Tensor& x,
                              int y, const AttackSuiteEntry& entry, const Rng& rng);

// Full union evaluation. Deterministic for a fixed seed regardless of
// `threads`: work is partitioned per example with per-slot writes and
// per-example RNG streams.
UnionReport evaluate(const ModelSpec& model, const ParameterSet& params, const Dataset& data,
                     const AttackSuite& suite, std::uint64_t seed, int threads = 1);

// Recomputes every accuracy from the bitmap and checks the ordering
// invariants (union <= each group <= its attacks <= clean); throws
// NumericError on any violation.
void verify_union_report(const UnionReport& report);

// Robust accuracy at each radius of an increasing grid, reusing the suite
// with epsilon replaced and step sizes scaled proportionally. An example
// counts as robust at grid[i] if it is clean-correct and no attack succeeds
// at any radius <= grid[i], so the curve is non-increasing by construction.
std::vector<std::pair<double, double>> robustness_curve(const ModelSpec& model,
                                                        const ParameterSet& params,
                                                        const Dataset& data,
                                                        const AttackSuite& suite,
                                                        const std::vector<double>& grid,
                                                        std::uint64_t seed, int threads = 1);

struct FilterSparsityReport {
  std::vector<double> ratios;  // per first-layer filter: max|w| / (sum|w| - max|w| + 1e-12)
  double threshold = 10.0;
  int flagged = 0;
};

// Dominance ratios of the first convolution's filters; errors if the first
// parameter tensor is not a 4-d convolution kernel.
FilterSparsityReport filter_sparsity_report(const ParameterSet& params, double threshold = 10.0);

}  // namespace urb
