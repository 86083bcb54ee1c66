#include "urb/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "urb/errors.hpp"

namespace urb {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void require_dim(const Tensor& t, std::size_t nd, const char* op) {
  if (t.shape.size() != nd) {
    throw DimensionError(std::string(op) + ": expected " + std::to_string(nd) +
                         "-d tensor, got shape " + shape_str(t.shape));
  }
}

// Scatter x (C,H,W slice, flat) into cols ((C*K*K) x (Ho*Wo), row-major) for a
// stride-1 cross-correlation with zero padding.
void im2col(const double* x, std::size_t C, std::size_t H, std::size_t W, std::size_t K, int pad,
            std::size_t Ho, std::size_t Wo, double* cols) {
  const std::size_t patch = C * K * K;
  std::fill(cols, cols + patch * Ho * Wo, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < K; ++ki) {
      for (std::size_t kj = 0; kj < K; ++kj) {
        double* row = cols + ((c * K + ki) * K + kj) * (Ho * Wo);
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + ki) - pad;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
          const double* src = x + (c * H + static_cast<std::size_t>(ih)) * W;
          for (std::size_t ow = 0; ow < Wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + kj) - pad;
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
            row[oh * Wo + ow] = src[iw];
          }
        }
      }
    }
  }
}

// Transpose of im2col: accumulate cols back into the padded image positions.
void col2im_accum(const double* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t K,
                  int pad, std::size_t Ho, std::size_t Wo, double* dx) {
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < K; ++ki) {
      for (std::size_t kj = 0; kj < K; ++kj) {
        const double* row = cols + ((c * K + ki) * K + kj) * (Ho * Wo);
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + ki) - pad;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
          double* dst = dx + (c * H + static_cast<std::size_t>(ih)) * W;
          for (std::size_t ow = 0; ow < Wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + kj) - pad;
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
            dst[iw] += row[oh * Wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace

TapeNode& Tape::at(NodeId id) {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw IndexError("tape node id " + std::to_string(id) + " out of range");
  }
  return nodes_[static_cast<std::size_t>(id)];
}

const TapeNode& Tape::at(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw IndexError("tape node id " + std::to_string(id) + " out of range");
  }
  return nodes_[static_cast<std::size_t>(id)];
}

NodeId Tape::push(TapeNode node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor& Tape::grad_slot(NodeId id) {
  TapeNode& n = at(id);
  if (n.grad.data.empty()) {
    n.grad = Tensor(n.val().shape);
  }
  return n.grad;
}

NodeId Tape::input(Tensor x, bool requires_grad) {
  TapeNode n;
  n.kind = OpKind::input;
  n.value = std::move(x);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

NodeId Tape::input_view(const Tensor* x, bool requires_grad) {
  if (x == nullptr) throw DimensionError("input_view: null tensor");
  TapeNode n;
  n.kind = OpKind::input;
  n.external = x;
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

NodeId Tape::affine(NodeId x, NodeId weight, NodeId bias) {
  const Tensor& X = at(x).val();
  const Tensor& W = at(weight).val();
  const Tensor& b = at(bias).val();
  require_dim(X, 2, "affine input");
  require_dim(W, 2, "affine weight");
  require_dim(b, 1, "affine bias");
  const std::size_t B = X.shape[0], I = X.shape[1], O = W.shape[1];
  if (W.shape[0] != I) {
    throw DimensionError("affine: input width " + std::to_string(I) + " vs weight rows " +
                         std::to_string(W.shape[0]));
  }
  if (b.shape[0] != O) {
    throw DimensionError("affine: bias length " + std::to_string(b.shape[0]) + " vs weight cols " +
                         std::to_string(O));
  }
  TapeNode n;
  n.kind = OpKind::affine;
  n.parents = {x, weight, bias};
  n.requires_grad = at(x).requires_grad || at(weight).requires_grad || at(bias).requires_grad;
  n.value = Tensor({B, O});
  ConstMatMap Xm(X.data.data(), static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(I));
  ConstMatMap Wm(W.data.data(), static_cast<Eigen::Index>(I), static_cast<Eigen::Index>(O));
  MatMap Ym(n.value.data.data(), static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(O));
  Ym.noalias() = Xm * Wm;
  for (std::size_t bi = 0; bi < B; ++bi) {
    double* row = n.value.data.data() + bi * O;
    for (std::size_t o = 0; o < O; ++o) row[o] += b.data[o];
  }
  return push(std::move(n));
}

NodeId Tape::conv2d(NodeId x, NodeId kernel, NodeId bias, int padding) {
  const Tensor& X = at(x).val();
  const Tensor& K = at(kernel).val();
  const Tensor& b = at(bias).val();
  require_dim(X, 4, "conv2d input");
  require_dim(K, 4, "conv2d kernel");
  require_dim(b, 1, "conv2d bias");
  if (padding < 0) throw DimensionError("conv2d: negative padding");
  const std::size_t B = X.shape[0], C = X.shape[1], H = X.shape[2], W = X.shape[3];
  const std::size_t F = K.shape[0], Kh = K.shape[2], Kw = K.shape[3];
  if (K.shape[1] != C) {
    throw DimensionError("conv2d: kernel channels " + std::to_string(K.shape[1]) +
                         " vs input channels " + std::to_string(C));
  }
  if (Kh != Kw) throw DimensionError("conv2d: kernel must be square");
  if (b.shape[0] != F) throw DimensionError("conv2d: bias length vs filter count");
  const std::size_t pad = static_cast<std::size_t>(padding);
  if (H + 2 * pad < Kh || W + 2 * pad < Kw) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  const std::size_t Ho = H + 2 * pad - Kh + 1;
  const std::size_t Wo = W + 2 * pad - Kw + 1;
  const std::size_t patch = C * Kh * Kw;

  TapeNode n;
  n.kind = OpKind::conv2d;
  n.parents = {x, kernel, bias};
  n.padding = padding;
  n.requires_grad =
      at(x).requires_grad || at(kernel).requires_grad || at(bias).requires_grad;
  n.value = Tensor({B, F, Ho, Wo});

  // Per-example im2col + GEMM: every example hits an identical GEMM shape, so
  // per-example outputs do not depend on the batch size they ride in.
  std::vector<double> cols(patch * Ho * Wo);
  ConstMatMap Km(K.data.data(), static_cast<Eigen::Index>(F), static_cast<Eigen::Index>(patch));
  for (std::size_t bi = 0; bi < B; ++bi) {
    im2col(X.data.data() + bi * C * H * W, C, H, W, Kh, padding, Ho, Wo, cols.data());
    ConstMatMap Cm(cols.data(), static_cast<Eigen::Index>(patch),
                   static_cast<Eigen::Index>(Ho * Wo));
    MatMap Ym(n.value.data.data() + bi * F * Ho * Wo, static_cast<Eigen::Index>(F),
              static_cast<Eigen::Index>(Ho * Wo));
    Ym.noalias() = Km * Cm;
    for (std::size_t f = 0; f < F; ++f) {
      double* row = n.value.data.data() + (bi * F + f) * Ho * Wo;
      const double bf = b.data[f];
      for (std::size_t i = 0; i < Ho * Wo; ++i) row[i] += bf;
    }
  }
  return push(std::move(n));
}

NodeId Tape::relu(NodeId x) {
  const Tensor& X = at(x).val();
  TapeNode n;
  n.kind = OpKind::relu;
  n.parents = {x, -1, -1};
  n.requires_grad = at(x).requires_grad;
  n.value = Tensor(X.shape);
  for (std::size_t i = 0; i < X.data.size(); ++i) {
    n.value.data[i] = X.data[i] > 0.0 ? X.data[i] : 0.0;
  }
  return push(std::move(n));
}

NodeId Tape::maxpool2x2(NodeId x) {
  const Tensor& X = at(x).val();
  require_dim(X, 4, "maxpool2x2 input");
  const std::size_t B = X.shape[0], C = X.shape[1], H = X.shape[2], W = X.shape[3];
  if (H % 2 != 0 || W % 2 != 0) {
    throw DimensionError("maxpool2x2: spatial dims must be even, got " + shape_str(X.shape));
  }
  const std::size_t Ho = H / 2, Wo = W / 2;
  TapeNode n;
  n.kind = OpKind::maxpool2x2;
  n.parents = {x, -1, -1};
  n.requires_grad = at(x).requires_grad;
  n.value = Tensor({B, C, Ho, Wo});
  n.argmax.assign(B * C * Ho * Wo, 0);
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* plane = X.data.data() + bc * H * W;
    for (std::size_t oh = 0; oh < Ho; ++oh) {
      for (std::size_t ow = 0; ow < Wo; ++ow) {
        const std::size_t base = (2 * oh) * W + 2 * ow;
        const std::size_t cand[4] = {base, base + 1, base + W, base + W + 1};
        std::size_t best = cand[0];
        double bv = plane[cand[0]];
        for (int j = 1; j < 4; ++j) {
          if (plane[cand[j]] > bv) {
            bv = plane[cand[j]];
            best = cand[j];
          }
        }
        const std::size_t out = bc * Ho * Wo + oh * Wo + ow;
        n.value.data[out] = bv;
        n.argmax[out] = static_cast<std::int32_t>(bc * H * W + best);
      }
    }
  }
  return push(std::move(n));
}

NodeId Tape::flatten(NodeId x) {
  const Tensor& X = at(x).val();
  if (X.shape.empty()) throw DimensionError("flatten: scalar input");
  TapeNode n;
  n.kind = OpKind::flatten;
  n.parents = {x, -1, -1};
  n.requires_grad = at(x).requires_grad;
  n.value = Tensor({X.shape[0], X.numel() / X.shape[0]}, X.data);
  return push(std::move(n));
}

NodeId Tape::softmax_cross_entropy(NodeId logits, const std::vector<int>& labels) {
  const Tensor& L = at(logits).val();
  require_dim(L, 2, "softmax_cross_entropy logits");
  const std::size_t B = L.shape[0], C = L.shape[1];
  if (labels.size() != B) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch " + std::to_string(B));
  }
  TapeNode n;
  n.kind = OpKind::softmax_ce;
  n.parents = {logits, -1, -1};
  n.requires_grad = at(logits).requires_grad;
  n.labels = labels;
  n.softmax.assign(B * C, 0.0);
  double total = 0.0;
  for (std::size_t bi = 0; bi < B; ++bi) {
    const int y = labels[bi];
    if (y < 0 || static_cast<std::size_t>(y) >= C) {
      throw IndexError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0," +
                       std::to_string(C) + ")");
    }
    const double* row = L.data.data() + bi * C;
    double mx = row[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < C; ++c) denom += std::exp(row[c] - mx);
    const double log_denom = std::log(denom);
    for (std::size_t c = 0; c < C; ++c) {
      n.softmax[bi * C + c] = std::exp(row[c] - mx) / denom;
    }
    total += log_denom - (row[static_cast<std::size_t>(y)] - mx);
  }
  n.value = Tensor({1}, {total / static_cast<double>(B)});
  return push(std::move(n));
}

void Tape::backward(NodeId loss) {
  const TapeNode& ln = at(loss);
  if (ln.val().numel() != 1) {
    throw DimensionError("backward: loss must be scalar, got shape " + shape_str(ln.val().shape));
  }
  if (backward_done()) throw IndexError("backward: already run on this tape");
  backward_loss_ = loss;
  grad_slot(loss).data[0] = 1.0;

  for (NodeId id = loss; id >= 0; --id) {
    TapeNode& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.data.empty()) continue;
    const Tensor& g = n.grad;
    switch (n.kind) {
      case OpKind::input:
        break;
      case OpKind::affine: {
        const Tensor& X = at(n.parents[0]).val();
        const Tensor& W = at(n.parents[1]).val();
        const std::size_t B = X.shape[0], I = X.shape[1], O = W.shape[1];
        ConstMatMap Gm(g.data.data(), static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(O));
        if (at(n.parents[0]).requires_grad) {
          ConstMatMap Wm(W.data.data(), static_cast<Eigen::Index>(I),
                         static_cast<Eigen::Index>(O));
          MatMap dX(grad_slot(n.parents[0]).data.data(), static_cast<Eigen::Index>(B),
                    static_cast<Eigen::Index>(I));
          dX.noalias() += Gm * Wm.transpose();
        }
        if (at(n.parents[1]).requires_grad) {
          ConstMatMap Xm(X.data.data(), static_cast<Eigen::Index>(B),
                         static_cast<Eigen::Index>(I));
          MatMap dW(grad_slot(n.parents[1]).data.data(), static_cast<Eigen::Index>(I),
                    static_cast<Eigen::Index>(O));
          dW.noalias() += Xm.transpose() * Gm;
        }
        if (at(n.parents[2]).requires_grad) {
          Tensor& db = grad_slot(n.parents[2]);
          for (std::size_t bi = 0; bi < B; ++bi) {
            const double* row = g.data.data() + bi * O;
            for (std::size_t o = 0; o < O; ++o) db.data[o] += row[o];
          }
        }
        break;
      }
      case OpKind::conv2d: {
        const Tensor& X = at(n.parents[0]).val();
        const Tensor& K = at(n.parents[1]).val();
        const std::size_t B = X.shape[0], C = X.shape[1], H = X.shape[2], W = X.shape[3];
        const std::size_t F = K.shape[0], Ks = K.shape[2];
        const std::size_t Ho = n.value.shape[2], Wo = n.value.shape[3];
        const std::size_t patch = C * Ks * Ks;
        const bool need_dx = at(n.parents[0]).requires_grad;
        const bool need_dk = at(n.parents[1]).requires_grad;
        const bool need_db = at(n.parents[2]).requires_grad;
        std::vector<double> cols(need_dk ? patch * Ho * Wo : 0);
        std::vector<double> dcols(need_dx ? patch * Ho * Wo : 0);
        ConstMatMap Km(K.data.data(), static_cast<Eigen::Index>(F),
                       static_cast<Eigen::Index>(patch));
        for (std::size_t bi = 0; bi < B; ++bi) {
          ConstMatMap Gm(g.data.data() + bi * F * Ho * Wo, static_cast<Eigen::Index>(F),
                         static_cast<Eigen::Index>(Ho * Wo));
          if (need_dk) {
            // Recompute im2col rather than keeping per-example buffers alive.
            im2col(X.data.data() + bi * C * H * W, C, H, W, Ks, n.padding, Ho, Wo, cols.data());
            ConstMatMap Cm(cols.data(), static_cast<Eigen::Index>(patch),
                           static_cast<Eigen::Index>(Ho * Wo));
            MatMap dK(grad_slot(n.parents[1]).data.data(), static_cast<Eigen::Index>(F),
                      static_cast<Eigen::Index>(patch));
            dK.noalias() += Gm * Cm.transpose();
          }
          if (need_dx) {
            MatMap dCm(dcols.data(), static_cast<Eigen::Index>(patch),
                       static_cast<Eigen::Index>(Ho * Wo));
            dCm.noalias() = Km.transpose() * Gm;
            col2im_accum(dcols.data(), C, H, W, Ks, n.padding, Ho, Wo,
                         grad_slot(n.parents[0]).data.data() + bi * C * H * W);
          }
          if (need_db) {
            Tensor& db = grad_slot(n.parents[2]);
            for (std::size_t f = 0; f < F; ++f) {
              const double* row = g.data.data() + (bi * F + f) * Ho * Wo;
              double s = 0.0;
              for (std::size_t i = 0; i < Ho * Wo; ++i) s += row[i];
              db.data[f] += s;
            }
          }
        }
        break;
      }
      case OpKind::relu: {
        if (!at(n.parents[0]).requires_grad) break;
        const Tensor& X = at(n.parents[0]).val();
        Tensor& dx = grad_slot(n.parents[0]);
        for (std::size_t i = 0; i < X.data.size(); ++i) {
          if (X.data[i] > 0.0) dx.data[i] += g.data[i];
        }
        break;
      }
      case OpKind::maxpool2x2: {
        if (!at(n.parents[0]).requires_grad) break;
        Tensor& dx = grad_slot(n.parents[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          dx.data[static_cast<std::size_t>(n.argmax[i])] += g.data[i];
        }
        break;
      }
      case OpKind::flatten: {
        if (!at(n.parents[0]).requires_grad) break;
        Tensor& dx = grad_slot(n.parents[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) dx.data[i] += g.data[i];
        break;
      }
      case OpKind::softmax_ce: {
        if (!at(n.parents[0]).requires_grad) break;
        const std::size_t B = n.labels.size();
        const std::size_t C = n.softmax.size() / B;
        const double u = g.data[0] / static_cast<double>(B);
        Tensor& dl = grad_slot(n.parents[0]);
        for (std::size_t bi = 0; bi < B; ++bi) {
          for (std::size_t c = 0; c < C; ++c) {
            double p = n.softmax[bi * C + c];
            if (c == static_cast<std::size_t>(n.labels[bi])) p -= 1.0;
            dl.data[bi * C + c] += u * p;
          }
        }
        break;
      }
    }
  }
}

const Tensor* Tape::grad_if(NodeId id) const {
  const TapeNode& n = at(id);
  return n.grad.data.empty() ? nullptr : &n.grad;
}

Tensor Tape::grad_or_zeros(NodeId id) const {
  const TapeNode& n = at(id);
  if (n.grad.data.empty()) return Tensor(n.val().shape);
  return n.grad;
}

Tensor input_gradient(Tape& tape, NodeId loss, NodeId input) {
  if (!tape.backward_done()) {
    tape.backward(loss);
  } else if (tape.backward_loss() != loss) {
    throw IndexError("input_gradient: tape was differentiated from a different loss node");
  }
  return tape.grad_or_zeros(input);
}

std::vector<double> per_example_ce(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.shape.size() != 2) {
    throw DimensionError("per_example_ce: logits must be 2-d, got " + shape_str(logits.shape));
  }
  const std::size_t B = logits.shape[0], C = logits.shape[1];
  if (labels.size() != B) throw DimensionError("per_example_ce: label count vs batch");
  std::vector<double> out(B);
  for (std::size_t bi = 0; bi < B; ++bi) {
    const int y = labels[bi];
    if (y < 0 || static_cast<std::size_t>(y) >= C) {
      throw IndexError("per_example_ce: label out of range");
    }
    const double* row = logits.data.data() + bi * C;
    double mx = row[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < C; ++c) denom += std::exp(row[c] - mx);
    out[bi] = std::log(denom) - (row[static_cast<std::size_t>(y)] - mx);
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.shape.size() != 2) {
    throw DimensionError("argmax_rows: logits must be 2-d, got " + shape_str(logits.shape));
  }
  const std::size_t B = logits.shape[0], C = logits.shape[1];
  if (C == 0) throw DimensionError("argmax_rows: zero classes");
  std::vector<int> out(B);
  for (std::size_t bi = 0; bi < B; ++bi) {
    const double* row = logits.data.data() + bi * C;
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[bi] = static_cast<int>(best);
  }
  return out;
}

}  // namespace urb
