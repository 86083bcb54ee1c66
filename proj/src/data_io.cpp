#include "urb/data_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "urb/errors.hpp"
#include "urb/rng.hpp"

namespace urb {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t read_u32be(const std::vector<unsigned char>& b, std::size_t off,
                         const std::string& path) {
  if (off + 4 > b.size()) throw FormatError("'" + path + "': truncated header");
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

void write_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_f64le(std::ostream& os, double d) {
  std::uint64_t v = 0;
  std::memcpy(&v, &d, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, std::string path)
      : bytes_(bytes), path_(std::move(path)) {}

  std::uint32_t u32le() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[off_ + static_cast<std::size_t>(i)];
    off_ += 4;
    return v;
  }

  double f64le() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | bytes_[off_ + static_cast<std::size_t>(i)];
    off_ += 8;
    double d = 0.0;
    std::memcpy(&d, &v, 8);
    return d;
  }

  std::string str(std::size_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + off_), len);
    off_ += len;
    return s;
  }

  bool exhausted() const { return off_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (off_ + n > bytes_.size()) throw FormatError("'" + path_ + "': truncated checkpoint");
  }
  const std::vector<unsigned char>& bytes_;
  std::string path_;
  std::size_t off_ = 0;
};

}  // namespace

std::array<std::size_t, 3> Dataset::input_shape() const {
  if (inputs.shape.size() != 4) {
    throw DimensionError("dataset inputs must be NxCxHxW, got " + shape_str(inputs.shape));
  }
  return {inputs.shape[1], inputs.shape[2], inputs.shape[3]};
}

Tensor Dataset::example(std::size_t i) const {
  if (i >= size()) throw IndexError("dataset example index out of range");
  const std::size_t per = inputs.numel() / inputs.shape[0];
  Tensor out({1, inputs.shape[1], inputs.shape[2], inputs.shape[3]});
  std::copy(inputs.data.begin() + static_cast<std::ptrdiff_t>(i * per),
            inputs.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * per), out.data.begin());
  return out;
}

int Dataset::label(std::size_t i) const {
  if (i >= size()) throw IndexError("dataset label index out of range");
  return labels[i];
}

Dataset Dataset::take(std::size_t n) const {
  if (n >= size()) return *this;
  const std::size_t per = inputs.numel() / inputs.shape[0];
  Dataset out;
  out.split = split;
  out.inputs = Tensor({n, inputs.shape[1], inputs.shape[2], inputs.shape[3]});
  std::copy(inputs.data.begin(), inputs.data.begin() + static_cast<std::ptrdiff_t>(n * per),
            out.inputs.data.begin());
  out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& split_tag) {
  const std::vector<unsigned char> img = read_file(images_path);
  const std::vector<unsigned char> lab = read_file(labels_path);

  const std::uint32_t img_magic = read_u32be(img, 0, images_path);
  if (img_magic != 2051) {
    throw FormatError("'" + images_path + "': bad image magic " + std::to_string(img_magic) +
                      " (expected 2051)");
  }
  const std::uint32_t n = read_u32be(img, 4, images_path);
  const std::uint32_t rows = read_u32be(img, 8, images_path);
  const std::uint32_t cols = read_u32be(img, 12, images_path);
  const std::size_t expect = 16 + std::size_t(n) * rows * cols;
  if (img.size() != expect) {
    throw FormatError("'" + images_path + "': size " + std::to_string(img.size()) +
                      " does not match header (" + std::to_string(expect) + ")");
  }

  const std::uint32_t lab_magic = read_u32be(lab, 0, labels_path);
  if (lab_magic != 2049) {
    throw FormatError("'" + labels_path + "': bad label magic " + std::to_string(lab_magic) +
                      " (expected 2049)");
  }
  const std::uint32_t ln = read_u32be(lab, 4, labels_path);
  if (lab.size() != 8 + std::size_t(ln)) {
    throw FormatError("'" + labels_path + "': size does not match header");
  }
  if (ln != n) {
    throw FormatError("image count " + std::to_string(n) + " vs label count " +
                      std::to_string(ln));
  }

  Dataset out;
  out.split = split_tag;
  out.inputs = Tensor({n, 1, rows, cols});
  for (std::size_t i = 0; i < std::size_t(n) * rows * cols; ++i) {
    out.inputs.data[i] = static_cast<double>(img[16 + i]) / 255.0;
  }
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.labels[i] = static_cast<int>(lab[8 + i]);
  return out;
}

Dataset synth_blobs(std::size_t n, std::size_t classes, double margin, double noise,
                    std::uint64_t seed) {
  if (classes < 2) throw ConfigError("synth_blobs: need at least 2 classes");
  if (margin <= 0.0 || noise < 0.0) {
    throw ConfigError("synth_blobs: need margin > 0 and noise >= 0");
  }
  const double spread = margin + 2.0 * noise;
  // Adjacent centers sit one chord apart on a circle around (0.5, 0.5).
  const double rc = spread / (2.0 * std::sin(std::numbers::pi / static_cast<double>(classes)));
  const double phase = std::atan2(0.6, 1.0);
  if (rc + noise > 0.5) {
    throw ConfigError("synth_blobs: margin/noise too large for the unit square");
  }

  Dataset out;
  out.split = "synth";
  out.inputs = Tensor({n, 1, 1, 2});
  out.labels.resize(n);
  Rng rng = Rng::seeded(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % classes;
    const double theta =
        phase + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
    const double cx = 0.5 + rc * std::cos(theta);
    const double cy = 0.5 + rc * std::sin(theta);
    const double r = noise * std::sqrt(rng.uniform01());
    const double ang = 2.0 * std::numbers::pi * rng.uniform01();
    out.inputs.data[2 * i] = cx + r * std::cos(ang);
    out.inputs.data[2 * i + 1] = cy + r * std::sin(ang);
    out.labels[i] = static_cast<int>(k);
  }
  return out;
}

Dataset synth_rings(std::size_t n, std::uint64_t seed) {
  Dataset out;
  out.split = "synth";
  out.inputs = Tensor({n, 1, 1, 2});
  out.labels.resize(n);
  Rng rng = Rng::seeded(seed);
  const double radii[2] = {0.16, 0.34};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % 2;
    const double r = radii[k] + rng.uniform(-0.02, 0.02);
    const double ang = 2.0 * std::numbers::pi * rng.uniform01();
    out.inputs.data[2 * i] = 0.5 + r * std::cos(ang);
    out.inputs.data[2 * i + 1] = 0.5 + r * std::sin(ang);
    out.labels[i] = static_cast<int>(k);
  }
  return out;
}

void save_checkpoint(const ParameterSet& params, const ModelSpec& spec, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write '" + path + "'");
  os.write("URBC", 4);
  write_u32le(os, 1);  // version
  const std::string desc = spec.descriptor();
  write_u32le(os, static_cast<std::uint32_t>(desc.size()));
  os.write(desc.data(), static_cast<std::streamsize>(desc.size()));
  write_u32le(os, static_cast<std::uint32_t>(params.entries.size()));
  for (const auto& [name, t] : params.entries) {
    write_u32le(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32le(os, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) write_u32le(os, static_cast<std::uint32_t>(d));
    for (double v : t.data) write_f64le(os, v);
  }
  if (!os) throw FormatError("write failed for '" + path + "'");
}

std::pair<ParameterSet, ModelSpec> load_checkpoint(const std::string& path) {
  const std::vector<unsigned char> bytes = read_file(path);
  ByteReader r(bytes, path);
  if (r.str(4) != "URBC") throw FormatError("'" + path + "': not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32le();
  if (version != 1) {
    throw FormatError("'" + path + "': unsupported checkpoint version " + std::to_string(version));
  }
  const std::string desc = r.str(r.u32le());
  const ModelSpec spec = ModelSpec::parse_descriptor(desc);
  const std::uint32_t count = r.u32le();

  ParameterSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32le());
    const std::uint32_t ndim = r.u32le();
    std::vector<std::size_t> shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) shape[d] = r.u32le();
    Tensor t(shape);
    for (double& v : t.data) v = r.f64le();
    params.entries.push_back({name, std::move(t)});
  }
  if (!r.exhausted()) throw FormatError("'" + path + "': trailing bytes after tensors");

  const auto expected = spec.param_shapes();
  if (params.entries.size() != expected.size()) {
    throw FormatError("'" + path + "': tensor count does not match architecture");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (params.entries[i].first != expected[i].first ||
        params.entries[i].second.shape != expected[i].second) {
      throw FormatError("'" + path + "': tensor '" + params.entries[i].first +
                        "' does not match architecture");
    }
  }
  return {std::move(params), spec};
}

}  // namespace urb
