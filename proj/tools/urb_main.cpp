#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "urb/config.hpp"
#include "urb/errors.hpp"
#include "urb/parallel.hpp"

namespace {

using namespace urb;

std::string f17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string f4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// Lines go to stdout and, when set, a log file.
struct Sink {
  std::ofstream file;

  void open(const std::string& path) {
    file.open(path, std::ios::trunc);
    if (!file) throw ConfigError("cannot open log file '" + path + "'");
  }
  void line(const std::string& s) {
    std::cout << s << "\n";
    if (file.is_open()) file << s << "\n";
  }
  void flush() {
    std::cout.flush();
    if (file.is_open()) file.flush();
  }
};

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
  int limit = 0;
};

Config load_config(const CommonArgs& args, const char* seed_key) {
  Config cfg = Config::from_file(args.config_path);
  for (const std::string& kv : args.sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw UsageError("--set expects key=value, got '" + kv + "'");
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed_given) cfg.set(seed_key, std::to_string(args.seed));
  if (args.limit > 0) cfg.set("data.limit", std::to_string(args.limit));
  return cfg;
}

int cmd_train(const CommonArgs& args, const std::string& out_path, const std::string& log_path) {
  Config cfg = load_config(args, "train.seed");
  Sink sink;
  if (!log_path.empty()) sink.open(log_path);

  const Dataset data = dataset_from_config(cfg, "train");
  const ModelSpec model = model_spec_from_config(cfg, data.input_shape());
  const TrainConfig tc = train_config_from_config(cfg);

  sink.line("record type=train_begin strategy=" + std::string(strategy_name(tc.strategy)) +
            " epochs=" + std::to_string(tc.epochs) + " batch=" + std::to_string(tc.batch) +
            " n=" + std::to_string(data.size()) + " seed=" + std::to_string(tc.seed));
  auto [params, log] = train(tc, model, data, [&](const EpochRecord& r) {
    sink.line("record type=epoch epoch=" + std::to_string(r.epoch) +
              " clean_acc=" + f17(r.clean_acc) + " adv_loss=" + f17(r.adv_loss) +
              " lr=" + f17(r.lr) + " seconds=" + f4(r.seconds));
    sink.flush();
  });
  save_checkpoint(params, model, out_path);
  sink.line("record type=train_done epochs=" + std::to_string(tc.epochs) +
            " params=" + std::to_string(params.param_count()) + " checkpoint=" + out_path);
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& ckpt_path) {
  Config cfg = load_config(args, "eval.seed");
  auto [params, model] = load_checkpoint(ckpt_path);
  const Dataset data = dataset_from_config(cfg, "test");
  const AttackSuite suite = suite_from_config(cfg);
  const std::uint64_t seed = cfg.get_u64("eval.seed", 0);

  const UnionReport rep = evaluate(model, params, data, suite, seed, args.threads);

  Sink sink;
  sink.line("# model " + model.descriptor() + "  n=" + std::to_string(rep.n_examples) +
            "  seed=" + std::to_string(seed));
  char buf[128];
  std::snprintf(buf, sizeof buf, "# %-12s %-5s %s", "attack", "group", "accuracy");
  sink.line(buf);
  std::snprintf(buf, sizeof buf, "# %-12s %-5s %s", "clean", "-", f4(rep.clean_accuracy).c_str());
  sink.line(buf);
  for (std::size_t a = 0; a < suite.entries.size(); ++a) {
    std::snprintf(buf, sizeof buf, "# %-12s %-5s %s", suite.entries[a].id.c_str(),
                  norm_name(suite.entries[a].group), f4(rep.attack_accuracy[a].second).c_str());
    sink.line(buf);
  }
  for (const auto& [g, acc] : rep.group_accuracy) {
    const std::string label = std::string("union(") + norm_name(g) + ")";
    std::snprintf(buf, sizeof buf, "# %-12s %-5s %s", label.c_str(), norm_name(g),
                  f4(acc).c_str());
    sink.line(buf);
  }
  if (!suite.entries.empty()) {
    std::snprintf(buf, sizeof buf, "# %-12s %-5s %s", "union(all)", "-",
                  f4(rep.union_accuracy).c_str());
    sink.line(buf);
  }

  sink.line("record type=clean acc=" + f17(rep.clean_accuracy) +
            " n=" + std::to_string(rep.n_examples));
  for (std::size_t a = 0; a < suite.entries.size(); ++a) {
    sink.line("record type=attack id=" + suite.entries[a].id +
              " group=" + norm_name(suite.entries[a].group) +
              " acc=" + f17(rep.attack_accuracy[a].second));
  }
  for (const auto& [g, acc] : rep.group_accuracy) {
    sink.line("record type=group group=" + std::string(norm_name(g)) + " acc=" + f17(acc));
  }
  if (!suite.entries.empty()) {
    sink.line("record type=union acc=" + f17(rep.union_accuracy));
  }
  return 0;
}

int cmd_attack(const CommonArgs& args, const std::string& ckpt_path, const std::string& attack_id) {
  Config cfg = load_config(args, "eval.seed");
  auto [params, model] = load_checkpoint(ckpt_path);
  const Dataset data = dataset_from_config(cfg, "test");
  const std::uint64_t seed = cfg.get_u64("eval.seed", 0);
  const Rng root = Rng::seeded(seed);
  const std::size_t N = data.size();

  std::vector<AttackOutcome> outcomes(N);
  double check_epsilon = 0.0;
  NormKind check_norm = NormKind::linf;

  if (attack_id == "msd") {
    std::vector<PerturbationSpec> specs;
    for (const NormKind k : {NormKind::linf, NormKind::l2, NormKind::l1}) {
      specs.push_back(perturbation_from_config(cfg, k));
    }
    int iters = cfg.get_int("train.msd_iterations", 0);
    if (iters <= 0) {
      for (const auto& s : specs) iters = std::max(iters, s.iterations);
    }
    int restarts = 1;
    for (const auto& s : specs) restarts = std::max(restarts, s.restarts);
    parallel_for(N, args.threads, [&](std::size_t e) {
      const Tensor x = data.example(e);
      std::vector<Rng> ex{root.fork(e)};
      outcomes[e] =
          msd_attack(model, params, x, {data.label(e)}, specs, iters, restarts, ex)[0];
    });
  } else {
    const auto entry = suite_entry_from_config(cfg, attack_id);
    if (!entry) throw ConfigError("unknown attack id '" + attack_id + "'");
    check_epsilon = entry->spec.ball.epsilon;
    check_norm = entry->group;
    parallel_for(N, args.threads, [&](std::size_t e) {
      outcomes[e] =
          run_suite_entry(model, params, data.example(e), data.label(e), *entry, root.fork(e));
    });
  }

  Sink sink;
  std::size_t successes = 0;
  for (std::size_t e = 0; e < N; ++e) {
    const AttackOutcome& o = outcomes[e];
    bool success = o.misclassified;
    if (attack_id != "msd") {
      const double nrm = o.delta.numel() ? norm_of(o.delta, check_norm) : 0.0;
      success = success && nrm <= check_epsilon * (1.0 + 1e-9);
    }
    if (success) ++successes;
    sink.line("record type=outcome example=" + std::to_string(e) + " id=" + attack_id +
              " loss=" + f17(o.loss) + " linf=" + f17(o.norm_linf) + " l2=" + f17(o.norm_l2) +
              " l1=" + f17(o.norm_l1) + " misclassified=" + (o.misclassified ? "1" : "0") +
              " restarts_used=" + std::to_string(o.restarts_used));
  }
  sink.line("record type=attack_summary id=" + attack_id + " n=" + std::to_string(N) +
            " success_rate=" + f17(static_cast<double>(successes) / static_cast<double>(N)));
  return 0;
}

int cmd_curve(const CommonArgs& args, const std::string& ckpt_path, const std::string& norm,
              const std::string& grid_str, const std::string& out_path) {
  Config cfg = load_config(args, "eval.seed");
  auto [params, model] = load_checkpoint(ckpt_path);
  const Dataset data = dataset_from_config(cfg, "test");
  const NormKind group = norm_from_name(norm);

  AttackSuite family;
  for (const AttackSuiteEntry& e : suite_from_config(cfg).entries) {
    if (e.group == group) family.entries.push_back(e);
  }
  if (family.entries.empty()) {
    throw ConfigError("curve: eval.suite has no attacks in group '" + norm + "'");
  }

  std::vector<double> grid;
  for (const std::string& part : [&] {
         std::vector<std::string> parts;
         std::string cur;
         for (char c : grid_str) {
           if (c == ',') {
             parts.push_back(cur);
             cur.clear();
           } else {
             cur.push_back(c);
           }
         }
         parts.push_back(cur);
         return parts;
       }()) {
    try {
      std::size_t pos = 0;
      grid.push_back(std::stod(part, &pos));
      if (pos != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw UsageError("--grid expects comma-separated numbers, got '" + part + "'");
    }
  }

  const std::uint64_t seed = cfg.get_u64("eval.seed", 0);
  const auto curve = robustness_curve(model, params, data, family, grid, seed, args.threads);

  Sink sink;
  if (!out_path.empty()) sink.open(out_path);
  sink.line("epsilon,accuracy");
  for (const auto& [eps, acc] : curve) sink.line(f17(eps) + "," + f17(acc));
  return 0;
}

int cmd_inspect_filters(const std::string& ckpt_path, double threshold) {
  auto [params, model] = load_checkpoint(ckpt_path);
  const FilterSparsityReport rep = filter_sparsity_report(params, threshold);
  Sink sink;
  for (std::size_t f = 0; f < rep.ratios.size(); ++f) {
    sink.line("record type=filter index=" + std::to_string(f) + " ratio=" + f17(rep.ratios[f]) +
              " flagged=" + (rep.ratios[f] > rep.threshold ? "1" : "0"));
  }
  sink.line("record type=filter_summary filters=" + std::to_string(rep.ratios.size()) +
            " flagged=" + std::to_string(rep.flagged) + " threshold=" + f17(rep.threshold));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial robustness bench: union of lp perturbation models"};
  app.require_subcommand(1);

  CommonArgs targs, eargs, aargs, cargs;
  std::string train_out = "model.ckpt", train_log;
  std::string eval_ckpt, attack_ckpt, attack_id, curve_ckpt, curve_norm, curve_grid, curve_out;
  std::string inspect_ckpt;
  double inspect_threshold = 10.0;

  CLI::App* train = app.add_subcommand("train", "train a model per the config");
  train->add_option("--config", targs.config_path, "config file")->required();
  train->add_option("--out", train_out, "checkpoint output path");
  train->add_option("--log", train_log, "copy records to this file");
  train->add_option("--seed", targs.seed, "override train.seed")
      ->each([&](const std::string&) { targs.seed_given = true; });
  train->add_option("--threads", targs.threads, "worker threads (training math is unaffected)");
  train->add_option("--set", targs.sets, "override config key=value");

  CLI::App* eval = app.add_subcommand("eval", "union robustness evaluation");
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval->add_option("--config", eargs.config_path, "config file")->required();
  eval->add_option("--seed", eargs.seed, "override eval.seed")
      ->each([&](const std::string&) { eargs.seed_given = true; });
  eval->add_option("--threads", eargs.threads, "worker threads");
  eval->add_option("--limit", eargs.limit, "evaluate only the first N test examples");
  eval->add_option("--set", eargs.sets, "override config key=value");

  CLI::App* attack = app.add_subcommand("attack", "run one attack over the test set");
  attack->add_option("--checkpoint", attack_ckpt, "model checkpoint")->required();
  attack->add_option("--config", aargs.config_path, "config file")->required();
  attack->add_option("--attack", attack_id, "attack id (suite id or 'msd')")->required();
  attack->add_option("--seed", aargs.seed, "override eval.seed")
      ->each([&](const std::string&) { aargs.seed_given = true; });
  attack->add_option("--threads", aargs.threads, "worker threads");
  attack->add_option("--limit", aargs.limit, "attack only the first N test examples");
  attack->add_option("--set", aargs.sets, "override config key=value");

  CLI::App* curve = app.add_subcommand("curve", "robust accuracy vs radius");
  curve->add_option("--checkpoint", curve_ckpt, "model checkpoint")->required();
  curve->add_option("--config", cargs.config_path, "config file")->required();
  curve->add_option("--norm", curve_norm, "attack group: linf, l2, or l1")->required();
  curve->add_option("--grid", curve_grid, "comma-separated increasing radii")->required();
  curve->add_option("--out", curve_out, "also write the CSV here");
  curve->add_option("--seed", cargs.seed, "override eval.seed")
      ->each([&](const std::string&) { cargs.seed_given = true; });
  curve->add_option("--threads", cargs.threads, "worker threads");
  curve->add_option("--limit", cargs.limit, "use only the first N test examples");
  curve->add_option("--set", cargs.sets, "override config key=value");

  CLI::App* inspect = app.add_subcommand("inspect-filters", "first-layer dominance ratios");
  inspect->add_option("--checkpoint", inspect_ckpt, "model checkpoint")->required();
  inspect->add_option("--threshold", inspect_threshold, "dominance flag threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) return cmd_train(targs, train_out, train_log);
    if (eval->parsed()) return cmd_eval(eargs, eval_ckpt);
    if (attack->parsed()) return cmd_attack(aargs, attack_ckpt, attack_id);
    if (curve->parsed()) return cmd_curve(cargs, curve_ckpt, curve_norm, curve_grid, curve_out);
    if (inspect->parsed()) return cmd_inspect_filters(inspect_ckpt, inspect_threshold);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IndexError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
