#include "urb/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "urb/errors.hpp"

namespace urb {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad numeric value '" + v + "'");
  }
}

long long parse_ll(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad integer value '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long d = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::uint64_t>(d);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad unsigned value '" + v + "'");
  }
}

}  // namespace

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "data.dataset",      "data.n",            "data.test_n",       "data.classes",
      "data.margin",       "data.noise",        "data.seed",         "data.test_seed",
      "data.train_images", "data.train_labels", "data.test_images",  "data.test_labels",
      "data.train_limit",  "data.limit",

      "train.arch",        "train.hidden",      "train.conv1",       "train.conv2",
      "train.fc",          "train.classes",     "train.strategy",    "train.norms",
      "train.epochs",      "train.batch",       "train.seed",        "train.optimizer",
      "train.lr",          "train.lr_schedule", "train.momentum",    "train.weight_decay",
      "train.msd_iterations",

      "attack.linf.epsilon", "attack.linf.alpha", "attack.linf.iterations",
      "attack.linf.restarts", "attack.linf.mim_momentum",
      "attack.l2.epsilon",  "attack.l2.alpha",   "attack.l2.iterations", "attack.l2.restarts",
      "attack.l1.epsilon",  "attack.l1.alpha",   "attack.l1.iterations", "attack.l1.restarts",
      "attack.l1.k1",       "attack.l1.k2",

      "eval.suite",         "eval.seed",         "eval.gauss_trials", "eval.sp_trials",
      "eval.pw_restarts",
  };
  return keys;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str(), path);
}

Config Config::from_text(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" +
                        line + "'");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
  const auto& known = known_config_keys();
  if (std::find(known.begin(), known.end(), key) == known.end()) {
    throw ConfigError("unknown config key '" + key + "'");
  }
  for (auto& [k, v] : items_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  items_.push_back({key, value});
}

bool Config::has(const std::string& key) const { return find(key) != nullptr; }

const std::string* Config::find(const std::string& key) const {
  for (const auto& [k, v] : items_) {
    if (k == key) return &v;
  }
  return nullptr;
}

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

std::string Config::require_str(const std::string& key) const {
  const std::string* v = find(key);
  if (!v) throw ConfigError("missing required config key '" + key + "'");
  return *v;
}

double Config::get_double(const std::string& key, double fallback) const {
  const std::string* v = find(key);
  return v ? parse_double(key, *v) : fallback;
}

double Config::require_double(const std::string& key) const {
  return parse_double(key, require_str(key));
}

int Config::get_int(const std::string& key, int fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  const long long d = parse_ll(key, *v);
  return static_cast<int>(d);
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const std::string* v = find(key);
  return v ? parse_u64(key, *v) : fallback;
}

std::vector<std::string> Config::get_list(const std::string& key,
                                          const std::vector<std::string>& fallback) const {
  const std::string* v = find(key);
  return v ? split_list(*v) : fallback;
}

Dataset dataset_from_config(const Config& cfg, const std::string& role) {
  if (role != "train" && role != "test") throw ConfigError("dataset role must be train or test");
  const bool is_train = role == "train";
  const std::string kind = cfg.require_str("data.dataset");
  Dataset out;
  if (kind == "blobs" || kind == "rings") {
    const int n = is_train ? cfg.get_int("data.n", 1000) : cfg.get_int("data.test_n", 500);
    if (n < 1) throw ConfigError("config: dataset size must be positive");
    const std::uint64_t seed = cfg.get_u64("data.seed", 0);
    const std::uint64_t use_seed = is_train ? seed : cfg.get_u64("data.test_seed", seed + 1);
    if (kind == "blobs") {
      const int classes = cfg.get_int("data.classes", 2);
      const double margin = cfg.require_double("data.margin");
      const double noise = cfg.get_double("data.noise", 0.0);
      if (classes < 2) throw ConfigError("config: data.classes must be >= 2");
      out = synth_blobs(static_cast<std::size_t>(n), static_cast<std::size_t>(classes), margin,
                        noise, use_seed);
    } else {
      out = synth_rings(static_cast<std::size_t>(n), use_seed);
    }
    out.split = role;
  } else if (kind == "mnist") {
    const std::string img =
        cfg.require_str(is_train ? "data.train_images" : "data.test_images");
    const std::string lab =
        cfg.require_str(is_train ? "data.train_labels" : "data.test_labels");
    out = load_idx(img, lab, role);
  } else {
    throw ConfigError("config: unknown data.dataset '" + kind + "'");
  }
  const int limit = cfg.get_int(is_train ? "data.train_limit" : "data.limit", 0);
  if (limit < 0) throw ConfigError("config: negative dataset limit");
  if (limit > 0) out = out.take(static_cast<std::size_t>(limit));
  return out;
}

ModelSpec model_spec_from_config(const Config& cfg, const std::array<std::size_t, 3>& input) {
  ModelSpec spec;
  spec.input = input;
  const std::string arch = cfg.get_str("train.arch", "mnist_cnn");
  if (arch == "mlp") {
    spec.arch = Arch::mlp;
    spec.hidden.clear();
    for (const std::string& h : cfg.get_list("train.hidden", {"100"})) {
      const long long v = parse_ll("train.hidden", h);
      if (v < 1) throw ConfigError("config: train.hidden entries must be positive");
      spec.hidden.push_back(static_cast<std::size_t>(v));
    }
  } else if (arch == "mnist_cnn") {
    spec.arch = Arch::mnist_cnn;
    const int c1 = cfg.get_int("train.conv1", 32);
    const int c2 = cfg.get_int("train.conv2", 64);
    const int fc = cfg.get_int("train.fc", 1024);
    if (c1 < 1 || c2 < 1 || fc < 1) throw ConfigError("config: layer widths must be positive");
    spec.conv1 = static_cast<std::size_t>(c1);
    spec.conv2 = static_cast<std::size_t>(c2);
    spec.fc = static_cast<std::size_t>(fc);
  } else {
    throw ConfigError("config: unknown train.arch '" + arch + "'");
  }
  const int classes = cfg.get_int("train.classes", spec.arch == Arch::mnist_cnn ? 10 : 2);
  if (classes < 2) throw ConfigError("config: train.classes must be >= 2");
  spec.classes = static_cast<std::size_t>(classes);
  spec.param_shapes();  // validate
  return spec;
}

PerturbationSpec perturbation_from_config(const Config& cfg, NormKind k) {
  const std::string prefix = std::string("attack.") + norm_name(k) + ".";
  PerturbationSpec spec;
  spec.ball.norm = k;
  spec.ball.epsilon = cfg.require_double(prefix + "epsilon");
  spec.alpha = cfg.require_double(prefix + "alpha");
  spec.iterations = cfg.get_int(prefix + "iterations", 10);
  spec.restarts = cfg.get_int(prefix + "restarts", 1);
  if (spec.ball.epsilon < 0.0) throw ConfigError("config: " + prefix + "epsilon must be >= 0");
  if (spec.alpha <= 0.0) throw ConfigError("config: " + prefix + "alpha must be > 0");
  if (spec.iterations < 0) throw ConfigError("config: " + prefix + "iterations must be >= 0");
  if (spec.restarts < 1) throw ConfigError("config: " + prefix + "restarts must be >= 1");
  if (k == NormKind::l1) {
    spec.k1 = cfg.get_int("attack.l1.k1", 5);
    spec.k2 = cfg.get_int("attack.l1.k2", 20);
    if (spec.k1 < 1 || spec.k2 < spec.k1) throw ConfigError("config: need 1 <= k1 <= k2");
  }
  if (k == NormKind::linf) {
    spec.momentum = cfg.get_double("attack.linf.mim_momentum", 0.9);
    if (spec.momentum < 0.0 || spec.momentum >= 1.0) {
      throw ConfigError("config: attack.linf.mim_momentum must be in [0,1)");
    }
  }
  return spec;
}

TrainConfig train_config_from_config(const Config& cfg) {
  TrainConfig tc;
  tc.strategy = strategy_from_name(cfg.get_str("train.strategy", "clean"));
  tc.epochs = cfg.get_int("train.epochs", 1);
  tc.batch = cfg.get_int("train.batch", 100);
  tc.seed = cfg.get_u64("train.seed", 0);
  tc.lr = cfg.get_double("train.lr", 1e-3);
  tc.momentum = cfg.get_double("train.momentum", 0.9);
  tc.weight_decay = cfg.get_double("train.weight_decay", 0.0);
  tc.msd_iterations = cfg.get_int("train.msd_iterations", 0);

  const std::string opt = cfg.get_str("train.optimizer", "adam");
  if (opt == "adam") {
    tc.optimizer = OptimizerKind::adam;
  } else if (opt == "sgd") {
    tc.optimizer = OptimizerKind::sgd;
  } else {
    throw ConfigError("config: unknown train.optimizer '" + opt + "'");
  }

  const std::string* sched = cfg.find("train.lr_schedule");
  if (sched && !trim(*sched).empty()) {
    for (const std::string& part : split_list(*sched)) {
      const std::size_t colon = part.find(':');
      if (colon == std::string::npos) {
        throw ConfigError("config: train.lr_schedule entries must be epoch:lr, got '" + part +
                          "'");
      }
      tc.schedule.push_back({parse_double("train.lr_schedule", trim(part.substr(0, colon))),
                             parse_double("train.lr_schedule", trim(part.substr(colon + 1)))});
    }
    schedule_lr(tc.schedule, 0.0);  // validates monotone breakpoints
  }

  if (tc.strategy != Strategy::clean) {
    std::vector<std::string> norms = cfg.get_list("train.norms", {});
    if (norms.empty()) {
      throw ConfigError("config: adversarial train.strategy needs train.norms");
    }
    std::vector<NormKind> kinds;
    for (const std::string& n : norms) {
      const NormKind k = norm_from_name(n);
      if (std::find(kinds.begin(), kinds.end(), k) != kinds.end()) {
        throw ConfigError("config: duplicate norm in train.norms");
      }
      kinds.push_back(k);
    }
    // Canonical order fixes the tie-break priority inside the union engine.
    for (const NormKind k : {NormKind::linf, NormKind::l2, NormKind::l1}) {
      if (std::find(kinds.begin(), kinds.end(), k) != kinds.end()) {
        tc.specs.push_back(perturbation_from_config(cfg, k));
      }
    }
    if (tc.strategy == Strategy::single && tc.specs.size() != 1) {
      throw ConfigError("config: train.strategy=single needs exactly one norm");
    }
  }
  return tc;
}

std::optional<AttackSuiteEntry> suite_entry_from_config(const Config& cfg, const std::string& id) {
  AttackSuiteEntry e;
  e.id = id;
  if (id == "pgd_linf") {
    e.kind = AttackKind::pgd;
    e.group = NormKind::linf;
    e.spec = perturbation_from_config(cfg, NormKind::linf);
  } else if (id == "fgsm") {
    e.kind = AttackKind::fgsm;
    e.group = NormKind::linf;
    e.spec.ball = {NormKind::linf, cfg.require_double("attack.linf.epsilon")};
    e.spec.alpha = e.spec.ball.epsilon;
    e.spec.iterations = 1;
    e.spec.restarts = 1;
  } else if (id == "mim") {
    e.kind = AttackKind::mim;
    e.group = NormKind::linf;
    e.spec = perturbation_from_config(cfg, NormKind::linf);
  } else if (id == "pgd_l2") {
    e.kind = AttackKind::pgd;
    e.group = NormKind::l2;
    e.spec = perturbation_from_config(cfg, NormKind::l2);
  } else if (id == "gauss_l2") {
    e.kind = AttackKind::gaussian;
    e.group = NormKind::l2;
    e.spec.ball = {NormKind::l2, cfg.require_double("attack.l2.epsilon")};
    e.trials = cfg.get_int("eval.gauss_trials", 10);
    if (e.trials < 0) throw ConfigError("config: eval.gauss_trials must be >= 0");
  } else if (id == "pgd_l1") {
    e.kind = AttackKind::pgd;
    e.group = NormKind::l1;
    e.spec = perturbation_from_config(cfg, NormKind::l1);
  } else if (id == "sp_l1") {
    e.kind = AttackKind::salt_pepper;
    e.group = NormKind::l1;
    e.spec.ball = {NormKind::l1, cfg.require_double("attack.l1.epsilon")};
    e.trials = cfg.get_int("eval.sp_trials", 10);
    if (e.trials < 0) throw ConfigError("config: eval.sp_trials must be >= 0");
  } else if (id == "pw_l1") {
    e.kind = AttackKind::pointwise;
    e.group = NormKind::l1;
    e.spec.ball = {NormKind::l1, cfg.require_double("attack.l1.epsilon")};
    e.spec.restarts = cfg.get_int("eval.pw_restarts", 3);
    if (e.spec.restarts < 0) throw ConfigError("config: eval.pw_restarts must be >= 0");
  } else {
    return std::nullopt;
  }
  return e;
}

AttackSuite suite_from_config(const Config& cfg) {
  static const std::vector<std::string> default_suite = {
      "pgd_linf", "fgsm", "mim", "pgd_l2", "gauss_l2", "pgd_l1", "sp_l1", "pw_l1"};
  AttackSuite suite;
  for (const std::string& id : cfg.get_list("eval.suite", default_suite)) {
    const auto entry = suite_entry_from_config(cfg, id);
    if (!entry) throw ConfigError("config: unknown attack id '" + id + "' in eval.suite");
    suite.entries.push_back(*entry);
  }
  suite.validate();
  return suite;
}

}  // namespace urb
