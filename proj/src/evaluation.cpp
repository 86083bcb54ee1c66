#include "urb/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "urb/autodiff.hpp"
#include "urb/errors.hpp"
#include "urb/parallel.hpp"

namespace urb {

namespace {

constexpr double kFeasibilitySlack = 1.0 + 1e-9;

bool attack_succeeds(const AttackOutcome& out, const AttackSuiteEntry& entry) {
  if (!out.misclassified) return false;
  const double nrm = norm_of(out.delta, entry.group);
  return nrm <= entry.spec.ball.epsilon * kFeasibilitySlack;
}

// Groups in canonical order, restricted to those the suite uses.
std::vector<NormKind> groups_present(const AttackSuite& suite) {
  std::vector<NormKind> out;
  for (const NormKind k : {NormKind::linf, NormKind::l2, NormKind::l1}) {
    for (const auto& e : suite.entries) {
      if (e.group == k) {
        out.push_back(k);
        break;
      }
    }
  }
  return out;
}

AttackSuiteEntry scaled_entry(const AttackSuiteEntry& base, double eps) {
  AttackSuiteEntry e = base;
  if (base.spec.ball.epsilon > 0.0) {
    e.spec.alpha = base.spec.alpha * (eps / base.spec.ball.epsilon);
  }
  e.spec.ball.epsilon = eps;
  return e;
}

}  // namespace

void AttackSuite::validate() const {
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (e.id.empty()) throw ConfigError("attack suite: empty id");
    if (!ids.insert(e.id).second) throw ConfigError("attack suite: duplicate id '" + e.id + "'");
    if (e.spec.ball.epsilon < 0.0) throw ConfigError("attack suite: negative epsilon in '" + e.id + "'");
    if (e.kind == AttackKind::gaussian && e.group != NormKind::l2) {
      throw ConfigError("attack suite: gaussian entry '" + e.id + "' must be in the l2 group");
    }
    if ((e.kind == AttackKind::salt_pepper || e.kind == AttackKind::pointwise) &&
        e.group != NormKind::l1) {
      throw ConfigError("attack suite: entry '" + e.id + "' must be in the l1 group");
    }
    if ((e.kind == AttackKind::fgsm || e.kind == AttackKind::mim) && e.group != NormKind::linf) {
      throw ConfigError("attack suite: entry '" + e.id + "' must be in the linf group");
    }
  }
}

AttackOutcome run_suite_entry(const ModelSpec& model, const ParameterSet& params, const Tensor& x,
                              int y, const AttackSuiteEntry& entry, const Rng& rng) {
  switch (entry.kind) {
    case AttackKind::pgd:
      return pgd(model, params, x, y, entry.spec, rng);
    case AttackKind::fgsm:
      return fgsm(model, params, x, y, entry.spec.ball.epsilon);
    case AttackKind::mim:
      return mim(model, params, x, y, entry.spec, rng);
    case AttackKind::gaussian:
      return gaussian_noise_attack(model, params, x, y, entry.spec.ball, entry.trials, rng);
    case AttackKind::salt_pepper:
      return salt_pepper_attack(model, params, x, y, entry.spec.ball.epsilon, entry.trials, rng);
    case AttackKind::pointwise:
      return pointwise_attack(model, params, x, y, entry.spec.ball.epsilon, entry.spec.restarts,
                              rng);
  }
  throw ConfigError("run_suite_entry: unknown attack kind");
}

UnionReport evaluate(const ModelSpec& model, const ParameterSet& params, const Dataset& data,
                     const AttackSuite& suite, std::uint64_t seed, int threads) {
  suite.validate();
  const std::size_t N = data.size();
  const std::size_t A = suite.entries.size();
  if (N == 0) throw ConfigError("evaluate: empty dataset");

  UnionReport rep;
  rep.n_examples = N;
  rep.clean_correct.assign(N, 0);
  rep.success.assign(A, std::vector<std::uint8_t>(N, 0));
  for (const auto& e : suite.entries) rep.entry_group.push_back(e.group);

  const Rng root = Rng::seeded(seed);
  parallel_for(N, threads, [&](std::size_t e) {
    const Tensor x = data.example(e);
    const int y = data.label(e);
    const std::vector<int> pred = argmax_rows(model_logits(model, params, x));
    rep.clean_correct[e] = pred[0] == y ? 1 : 0;
    const Rng ex_root = root.fork(e);
    for (std::size_t a = 0; a < A; ++a) {
      const Rng arng = ex_root.fork(a).fork(0);
      const AttackOutcome out = run_suite_entry(model, params, x, y, suite.entries[a], arng);
      rep.success[a][e] = attack_succeeds(out, suite.entries[a]) ? 1 : 0;
    }
  });

  // All accuracies derive from the bitmap.
  std::size_t clean_n = 0;
  for (std::size_t e = 0; e < N; ++e) clean_n += rep.clean_correct[e];
  rep.clean_accuracy = static_cast<double>(clean_n) / static_cast<double>(N);

  for (std::size_t a = 0; a < A; ++a) {
    std::size_t ok = 0;
    for (std::size_t e = 0; e < N; ++e) ok += rep.clean_correct[e] && !rep.success[a][e];
    rep.attack_accuracy.push_back(
        {suite.entries[a].id, static_cast<double>(ok) / static_cast<double>(N)});
  }

  for (const NormKind g : groups_present(suite)) {
    std::size_t ok = 0;
    for (std::size_t e = 0; e < N; ++e) {
      bool robust = rep.clean_correct[e] != 0;
      for (std::size_t a = 0; a < A && robust; ++a) {
        if (suite.entries[a].group == g && rep.success[a][e]) robust = false;
      }
      ok += robust ? 1 : 0;
    }
    rep.group_accuracy.push_back({g, static_cast<double>(ok) / static_cast<double>(N)});
  }

  std::size_t ok = 0;
  for (std::size_t e = 0; e < N; ++e) {
    bool robust = rep.clean_correct[e] != 0;
    for (std::size_t a = 0; a < A && robust; ++a) {
      if (rep.success[a][e]) robust = false;
    }
    ok += robust ? 1 : 0;
  }
  rep.union_accuracy = static_cast<double>(ok) / static_cast<double>(N);

  verify_union_report(rep);
  return rep;
}

void verify_union_report(const UnionReport& rep) {
  const std::size_t N = rep.n_examples;
  const std::size_t A = rep.success.size();
  if (N == 0 || rep.clean_correct.size() != N || rep.entry_group.size() != A ||
      rep.attack_accuracy.size() != A) {
    throw NumericError("union report: inconsistent dimensions");
  }
  for (std::size_t a = 0; a < A; ++a) {
    if (rep.success[a].size() != N) {
      throw NumericError("union report: success bitmap row length mismatch");
    }
  }
  // the group table must list exactly the groups the entries name, in
  // canonical order
  {
    std::vector<NormKind> want;
    for (const NormKind g : {NormKind::linf, NormKind::l2, NormKind::l1}) {
      for (const NormKind eg : rep.entry_group) {
        if (eg == g) {
          want.push_back(g);
          break;
        }
      }
    }
    bool match = want.size() == rep.group_accuracy.size();
    for (std::size_t i = 0; match && i < want.size(); ++i) {
      match = rep.group_accuracy[i].first == want[i];
    }
    if (!match) throw NumericError("union report: group list does not match entry groups");
  }
  auto frac = [&](std::size_t c) { return static_cast<double>(c) / static_cast<double>(N); };

  std::size_t clean_n = 0;
  for (std::size_t e = 0; e < N; ++e) clean_n += rep.clean_correct[e] ? 1 : 0;
  if (frac(clean_n) != rep.clean_accuracy) {
    throw NumericError("union report: clean accuracy does not match bitmap");
  }

  for (std::size_t a = 0; a < A; ++a) {
    std::size_t ok = 0;
    for (std::size_t e = 0; e < N; ++e) ok += rep.clean_correct[e] && !rep.success[a][e];
    if (frac(ok) != rep.attack_accuracy[a].second) {
      throw NumericError("union report: accuracy mismatch for attack '" +
                         rep.attack_accuracy[a].first + "'");
    }
    if (rep.attack_accuracy[a].second > rep.clean_accuracy) {
      throw NumericError("union report: attack accuracy above clean accuracy");
    }
  }

  for (const auto& [g, acc] : rep.group_accuracy) {
    std::size_t ok = 0;
    for (std::size_t e = 0; e < N; ++e) {
      bool robust = rep.clean_correct[e] != 0;
      for (std::size_t a = 0; a < A && robust; ++a) {
        if (rep.entry_group[a] == g && rep.success[a][e]) robust = false;
      }
      ok += robust ? 1 : 0;
    }
    if (frac(ok) != acc) {
      throw NumericError(std::string("union report: group accuracy mismatch for ") +
                         norm_name(g));
    }
    for (std::size_t a = 0; a < A; ++a) {
      if (rep.entry_group[a] == g && acc > rep.attack_accuracy[a].second) {
        throw NumericError("union report: group accuracy above member attack accuracy");
      }
    }
  }

  std::size_t ok = 0;
  for (std::size_t e = 0; e < N; ++e) {
    bool robust = rep.clean_correct[e] != 0;
    for (std::size_t a = 0; a < A && robust; ++a) {
      if (rep.success[a][e]) robust = false;
    }
    ok += robust ? 1 : 0;
  }
  if (frac(ok) != rep.union_accuracy) {
    throw NumericError("union report: union accuracy does not match bitmap");
  }
  for (const auto& [g, acc] : rep.group_accuracy) {
    if (rep.union_accuracy > acc) {
      throw NumericError("union report: union accuracy above a group accuracy");
    }
  }
  if (rep.union_accuracy > rep.clean_accuracy) {
    throw NumericError("union report: union accuracy above clean accuracy");
  }
}

std::vector<std::pair<double, double>> robustness_curve(
    const ModelSpec& model, const ParameterSet& params, const Dataset& data,
    const AttackSuite& suite, const std::vector<double>& grid, std::uint64_t seed, int threads) {
  suite.validate();
  if (suite.entries.empty()) throw ConfigError("robustness_curve: empty attack suite");
  if (grid.empty()) throw ConfigError("robustness_curve: empty grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0.0) throw ConfigError("robustness_curve: negative epsilon");
    if (i && !(grid[i] > grid[i - 1])) {
      throw ConfigError("robustness_curve: grid must be strictly increasing");
    }
  }

  const std::size_t N = data.size();
  if (N == 0) throw ConfigError("robustness_curve: empty dataset");
  const std::size_t G = grid.size();
  const std::size_t A = suite.entries.size();

  // min_success[e]: first grid index any attack succeeds at, G if none,
  // SIZE_MAX sentinel for clean-incorrect.
  std::vector<std::size_t> min_success(N, G);
  const Rng root = Rng::seeded(seed);
  parallel_for(N, threads, [&](std::size_t e) {
    const Tensor x = data.example(e);
    const int y = data.label(e);
    if (argmax_rows(model_logits(model, params, x))[0] != y) {
      min_success[e] = std::numeric_limits<std::size_t>::max();
      return;
    }
    const Rng ex_root = root.fork(e);
    for (std::size_t i = 0; i < G; ++i) {
      bool hit = false;
      for (std::size_t a = 0; a < A && !hit; ++a) {
        const AttackSuiteEntry entry = scaled_entry(suite.entries[a], grid[i]);
        const Rng arng = ex_root.fork(a).fork(i);
        const AttackOutcome out = run_suite_entry(model, params, x, y, entry, arng);
        hit = attack_succeeds(out, entry);
      }
      if (hit) {
        min_success[e] = i;
        return;
      }
    }
  });

  std::vector<std::pair<double, double>> curve;
  curve.reserve(G);
  for (std::size_t i = 0; i < G; ++i) {
    std::size_t robust = 0;
    for (std::size_t e = 0; e < N; ++e) {
      if (min_success[e] != std::numeric_limits<std::size_t>::max() && min_success[e] > i) {
        ++robust;
      }
    }
    curve.push_back({grid[i], static_cast<double>(robust) / static_cast<double>(N)});
  }
  for (std::size_t i = 1; i < G; ++i) {
    if (curve[i].second > curve[i - 1].second) {
      throw NumericError("robustness_curve: non-monotone curve");
    }
  }
  return curve;
}

FilterSparsityReport filter_sparsity_report(const ParameterSet& params, double threshold) {
  if (params.entries.empty()) throw DimensionError("filter_sparsity_report: no parameters");
  const auto& [name, w] = params.entries.front();
  if (w.shape.size() != 4) {
    throw DimensionError("filter_sparsity_report: first layer '" + name +
                         "' is not a convolution kernel");
  }
  FilterSparsityReport rep;
  rep.threshold = threshold;
  const std::size_t F = w.shape[0];
  const std::size_t per = w.numel() / F;
  for (std::size_t f = 0; f < F; ++f) {
    const double* fw = w.data.data() + f * per;
    double mx = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const double a = std::abs(fw[i]);
      mx = std::max(mx, a);
      sum += a;
    }
    const double ratio = mx / (sum - mx + 1e-12);
    rep.ratios.push_back(ratio);
    if (ratio > threshold) ++rep.flagged;
  }
  return rep;
}

}  // namespace urb
