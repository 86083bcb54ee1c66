#include "urb/models.hpp"

#include <cmath>
#include <sstream>

#include "urb/errors.hpp"
#include "urb/rng.hpp"

namespace urb {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::size_t parse_size(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw FormatError(std::string("model descriptor: bad ") + what + " value '" + s + "'");
  }
}

}  // namespace

std::vector<std::pair<std::string, std::vector<std::size_t>>> ModelSpec::param_shapes() const {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
  if (classes < 2) throw ConfigError("model: need at least 2 classes");
  if (arch == Arch::mlp) {
    std::size_t width = input_numel();
    for (std::size_t li = 0; li < hidden.size(); ++li) {
      if (hidden[li] == 0) throw ConfigError("model: zero-width hidden layer");
      const std::string tag = "fc" + std::to_string(li + 1);
      out.push_back({tag + ".weight", {width, hidden[li]}});
      out.push_back({tag + ".bias", {hidden[li]}});
      width = hidden[li];
    }
    out.push_back({"head.weight", {width, classes}});
    out.push_back({"head.bias", {classes}});
  } else {
    if (input[1] % 4 != 0 || input[2] % 4 != 0) {
      throw ConfigError("mnist_cnn: input height and width must be divisible by 4");
    }
    if (conv1 == 0 || conv2 == 0 || fc == 0) throw ConfigError("mnist_cnn: zero-width layer");
    out.push_back({"conv1.weight", {conv1, input[0], 5, 5}});
    out.push_back({"conv1.bias", {conv1}});
    out.push_back({"conv2.weight", {conv2, conv1, 5, 5}});
    out.push_back({"conv2.bias", {conv2}});
    const std::size_t flat = conv2 * (input[1] / 4) * (input[2] / 4);
    out.push_back({"fc1.weight", {flat, fc}});
    out.push_back({"fc1.bias", {fc}});
    out.push_back({"head.weight", {fc, classes}});
    out.push_back({"head.bias", {classes}});
  }
  return out;
}

std::string ModelSpec::descriptor() const {
  std::ostringstream os;
  os << (arch == Arch::mlp ? "mlp" : "mnist_cnn");
  os << ";in=" << input[0] << "x" << input[1] << "x" << input[2];
  os << ";classes=" << classes;
  if (arch == Arch::mlp) {
    os << ";hidden=";
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      if (i) os << ",";
      os << hidden[i];
    }
  } else {
    os << ";conv1=" << conv1 << ";conv2=" << conv2 << ";fc=" << fc;
  }
  return os.str();
}

ModelSpec ModelSpec::parse_descriptor(const std::string& text) {
  const std::vector<std::string> parts = split(text, ';');
  if (parts.empty()) throw FormatError("model descriptor: empty");
  ModelSpec spec;
  if (parts[0] == "mlp") {
    spec.arch = Arch::mlp;
    spec.hidden.clear();
  } else if (parts[0] == "mnist_cnn") {
    spec.arch = Arch::mnist_cnn;
  } else {
    throw FormatError("model descriptor: unknown architecture '" + parts[0] + "'");
  }
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const std::string& p = parts[i];
    const std::size_t eq = p.find('=');
    if (eq == std::string::npos) throw FormatError("model descriptor: bad field '" + p + "'");
    const std::string key = p.substr(0, eq);
    const std::string val = p.substr(eq + 1);
    if (key == "in") {
      const std::vector<std::string> dims = split(val, 'x');
      if (dims.size() != 3) throw FormatError("model descriptor: in= needs CxHxW");
      for (int d = 0; d < 3; ++d) {
        spec.input[static_cast<std::size_t>(d)] = parse_size(dims[static_cast<std::size_t>(d)], "in");
      }
    } else if (key == "classes") {
      spec.classes = parse_size(val, "classes");
    } else if (key == "hidden") {
      spec.hidden.clear();
      if (!val.empty()) {
        for (const std::string& h : split(val, ',')) spec.hidden.push_back(parse_size(h, "hidden"));
      }
    } else if (key == "conv1") {
      spec.conv1 = parse_size(val, "conv1");
    } else if (key == "conv2") {
      spec.conv2 = parse_size(val, "conv2");
    } else if (key == "fc") {
      spec.fc = parse_size(val, "fc");
    } else {
      throw FormatError("model descriptor: unknown field '" + key + "'");
    }
  }
  try {
    spec.param_shapes();  // validate
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model descriptor: ") + e.what());
  }
  return spec;
}

Tensor& ParameterSet::at(std::string_view name) {
  for (auto& [n, t] : entries) {
    if (n == name) return t;
  }
  throw IndexError("parameter '" + std::string(name) + "' not found");
}

const Tensor& ParameterSet::at(std::string_view name) const {
  for (const auto& [n, t] : entries) {
    if (n == name) return t;
  }
  throw IndexError("parameter '" + std::string(name) + "' not found");
}

std::size_t ParameterSet::param_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries) n += t.numel();
  return n;
}

ParameterSet init_params(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng = Rng::seeded(seed);
  ParameterSet out;
  for (const auto& [name, shape] : spec.param_shapes()) {
    Tensor t(shape);
    const bool is_weight = name.size() > 7 && name.substr(name.size() - 7) == ".weight";
    if (is_weight) {
      // fan_in: rows for affine (in x out), C*K*K for conv filters.
      const std::size_t fan_in =
          shape.size() == 4 ? shape[1] * shape[2] * shape[3] : shape[0];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (double& v : t.data) v = rng.uniform(-bound, bound);
    }
    out.entries.push_back({name, std::move(t)});
  }
  return out;
}

ForwardHandles model_forward(const ModelSpec& spec, const ParameterSet& params, Tape& tape,
                             const Tensor* x, bool x_grad, bool params_grad) {
  if (x == nullptr) throw DimensionError("model_forward: null input");
  if (x->shape.size() != 4) {
    throw DimensionError("model_forward: input must be BxCxHxW, got " + shape_str(x->shape));
  }
  if (x->shape[1] != spec.input[0] || x->shape[2] != spec.input[1] ||
      x->shape[3] != spec.input[2]) {
    throw DimensionError("model_forward: input shape " + shape_str(x->shape) +
                         " does not match model input " + std::to_string(spec.input[0]) + "x" +
                         std::to_string(spec.input[1]) + "x" + std::to_string(spec.input[2]));
  }
  const auto expected = spec.param_shapes();
  if (params.entries.size() != expected.size()) {
    throw DimensionError("model_forward: parameter count mismatch");
  }

  ForwardHandles h;
  h.input = tape.input_view(x, x_grad);
  h.params.reserve(params.entries.size());
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    if (params.entries[i].first != expected[i].first ||
        params.entries[i].second.shape != expected[i].second) {
      throw DimensionError("model_forward: parameter '" + params.entries[i].first +
                           "' does not match the architecture");
    }
    h.params.push_back(tape.input_view(&params.entries[i].second, params_grad));
  }

  auto pid = [&](std::size_t i) { return h.params[i]; };
  if (spec.arch == Arch::mlp) {
    NodeId cur = tape.flatten(h.input);
    std::size_t pi = 0;
    for (std::size_t li = 0; li < spec.hidden.size(); ++li) {
      cur = tape.relu(tape.affine(cur, pid(pi), pid(pi + 1)));
      pi += 2;
    }
    h.logits = tape.affine(cur, pid(pi), pid(pi + 1));
  } else {
    NodeId cur = tape.conv2d(h.input, pid(0), pid(1), 2);
    cur = tape.maxpool2x2(tape.relu(cur));
    cur = tape.conv2d(cur, pid(2), pid(3), 2);
    cur = tape.maxpool2x2(tape.relu(cur));
    cur = tape.flatten(cur);
    cur = tape.relu(tape.affine(cur, pid(4), pid(5)));
    h.logits = tape.affine(cur, pid(6), pid(7));
  }
  return h;
}

Tensor model_logits(const ModelSpec& spec, const ParameterSet& params, const Tensor& x) {
  Tape tape;
  const ForwardHandles h = model_forward(spec, params, tape, &x, false, false);
  return tape.value(h.logits);
}

}  // namespace urb
