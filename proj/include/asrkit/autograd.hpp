// include/asrkit/autograd.hpp

// Copyright 2026  asrkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef ASRKIT_AUTOGRAD_HPP_
#define ASRKIT_AUTOGRAD_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "asrkit/common.hpp"
#include "asrkit/tensor.hpp"

namespace asrkit {

enum class Op {
  kLeaf,
  kMatmul,
  kAdd,
  kMul,
  kConcat,
  kSlice,
  kTanh,
  kSigmoid,
  kRelu,
  kExp,
  kLog,
  kSoftmax,
  kLogSoftmax,
  kEmbeddingLookup,
  kConv2d,
  kMaxpool2d,
  kReduceSum,
  kReduceLogsumexp,
  kTranspose,
  kReshape,
  kScale,
  kLstmCell,
  kLstmSeq,
};

inline const char *OpName(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kRelu: return "relu";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSoftmax: return "softmax";
    case Op::kLogSoftmax: return "log_softmax";
    case Op::kEmbeddingLookup: return "embedding_lookup";
    case Op::kConv2d: return "conv2d";
    case Op::kMaxpool2d: return "maxpool2d";
    case Op::kReduceSum: return "reduce_sum";
    case Op::kReduceLogsumexp: return "reduce_logsumexp";
    case Op::kTranspose: return "transpose";
    case Op::kReshape: return "reshape";
    case Op::kScale: return "scale";
    case Op::kLstmCell: return "lstm_cell";
    case Op::kLstmSeq: return "lstm_seq";
  }
  return "?";
}

// Per-op attributes. One bag of optional fields rather than a variant per
// op; the Apply dispatcher validates whichever fields its op consumes.
struct OpAttrs {
  int axis = -1;               // concat/reduce axis; -1 means "all elements"
  int64_t begin = 0;           // slice lower bound (inclusive)
  int64_t end = 0;             // slice upper bound (exclusive)
  double scale = 1.0;          // scalar multiplier for kScale
  int hidden = 0;              // LSTM hidden size
  bool reverse = false;        // LSTM sequence direction
  std::vector<int64_t> ints;   // ids / reshape target / conv geometry
};

template <typename Real>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
template <typename Real>
struct Var {
  Tape<Real> *tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor<Real> &value() const;
  const Tensor<Real> &grad() const;
  const std::vector<int64_t> &shape() const { return value().shape(); }
};

// Reverse-mode tape. Operations evaluate eagerly; Backward replays the node
// list in reverse. Gradients are overwritten on every Backward call (each
// call starts from freshly zeroed buffers); ZeroGrads is the explicit reset
// for callers that inspect grads between passes.
template <typename Real>
class Tape {
 public:
  // Leaf holding its own copy of v.
  Var<Real> Leaf(Tensor<Real> v, bool requires_grad) {
    Node n;
    n.op = Op::kLeaf;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    return Push(std::move(n));
  }

  // Leaf that aliases caller-owned storage (model parameters). The pointee
  // must outlive the tape and stay unmodified until Backward has run.
  Var<Real> ExternalLeaf(const Tensor<Real> *v, bool requires_grad) {
    ASRKIT_CHECK(v != nullptr, ContractError, "ExternalLeaf: null tensor");
    Node n;
    n.op = Op::kLeaf;
    n.external = v;
    n.requires_grad = requires_grad;
    return Push(std::move(n));
  }

  Var<Real> Constant(Tensor<Real> v) { return Leaf(std::move(v), false); }

  const Tensor<Real> &ValueOf(int id) const {
    const Node &n = nodes_[static_cast<size_t>(id)];
    return n.external != nullptr ? *n.external : n.value;
  }

  const Tensor<Real> &GradOf(int id) const {
    const Node &n = nodes_[static_cast<size_t>(id)];
    ASRKIT_CHECK(n.requires_grad, ContractError,
                 "grad requested for a node that does not require grad");
    ASRKIT_CHECK(n.grad.rank() > 0, ContractError,
                 "grad requested before Backward");
    return n.grad;
  }

  size_t NumNodes() const { return nodes_.size(); }

  void ZeroGrads() {
    for (Node &n : nodes_) {
      if (n.grad.numel() > 0) n.grad.Fill(Real(0));
    }
  }

  // Generic entry point: validates shapes, computes the value, records the
  // node. The named wrappers below are thin sugar over this.
  Var<Real> Apply(Op op, const std::vector<Var<Real>> &inputs, OpAttrs attrs);

  // Propagates d(loss)/d(node) to every node with requires_grad. loss must
  // be a scalar (numel 1) living on this tape.
  void Backward(Var<Real> loss) {
    ASRKIT_CHECK(loss.tape == this && loss.id >= 0 &&
                     loss.id < static_cast<int>(nodes_.size()),
                 ContractError, "Backward: loss is not on this tape");
    ASRKIT_CHECK(ValueOf(loss.id).numel() == 1, ContractError,
                 "Backward: loss must be scalar, got shape "
                     << Tensor<Real>::ShapeString(ValueOf(loss.id).shape()));
    for (Node &n : nodes_) {
      if (!n.requires_grad) continue;
      if (n.grad.SameShape(ValueOf(IndexOf(n)))) {
        n.grad.Fill(Real(0));
      } else {
        n.grad = Tensor<Real>(ValueOf(IndexOf(n)).shape());
      }
    }
    Node &ln = nodes_[static_cast<size_t>(loss.id)];
    ASRKIT_CHECK(ln.requires_grad, ContractError,
                 "Backward: loss does not depend on any grad leaf");
    ln.grad[0] = Real(1);
    for (int id = loss.id; id >= 0; --id) {
      Node &n = nodes_[static_cast<size_t>(id)];
      if (!n.requires_grad || n.op == Op::kLeaf) continue;
      BackwardNode(n);
    }
  }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<int> in;
    Tensor<Real> value;
    const Tensor<Real> *external = nullptr;
    Tensor<Real> grad;
    Tensor<Real> aux;            // saved forward intermediates
    std::vector<int64_t> iaux;   // saved integer intermediates (argmaxes)
    OpAttrs attrs;
    bool requires_grad = false;
  };

  using EMat =
      Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapM = Eigen::Map<EMat>;
  using CMapM = Eigen::Map<const EMat>;

  static CMapM MatOf(const Tensor<Real> &t, int64_t rows, int64_t cols) {
    return CMapM(t.data(), rows, cols);
  }
  static MapM MatOf(Tensor<Real> *t, int64_t rows, int64_t cols) {
    return MapM(t->data(), rows, cols);
  }

  Var<Real> Push(Node n) {
    nodes_.push_back(std::move(n));
    return Var<Real>{this, static_cast<int>(nodes_.size()) - 1};
  }

  int IndexOf(const Node &n) const {
    return static_cast<int>(&n - nodes_.data());
  }

  Tensor<Real> &GradBuf(int id) { return nodes_[static_cast<size_t>(id)].grad; }
  bool NeedsGrad(int id) const {
    return nodes_[static_cast<size_t>(id)].requires_grad;
  }

  void BackwardNode(Node &n);

  // Forward helpers ----------------------------------------------------

  static void CheckRank2(const Tensor<Real> &t, const char *who) {
    ASRKIT_CHECK(t.rank() == 2, ShapeError,
                 who << ": expected rank-2 tensor, got "
                     << Tensor<Real>::ShapeString(t.shape()));
  }

  Tensor<Real> FwdMatmul(const Tensor<Real> &a, const Tensor<Real> &b) {
    CheckRank2(a, "matmul");
    CheckRank2(b, "matmul");
    ASRKIT_CHECK(a.dim(1) == b.dim(0), ShapeError,
                 "matmul: inner dims differ, "
                     << Tensor<Real>::ShapeString(a.shape()) << " x "
                     << Tensor<Real>::ShapeString(b.shape()));
    Tensor<Real> out({a.dim(0), b.dim(1)});
    MatOf(&out, a.dim(0), b.dim(1)).noalias() =
        MatOf(a, a.dim(0), a.dim(1)) * MatOf(b, b.dim(0), b.dim(1));
    return out;
  }

  // add supports equal shapes plus one broadcast form: [m,n] + [n] (bias
  // over the leading dimension). Anything else is a shape error by design.
  Tensor<Real> FwdAdd(const Tensor<Real> &a, const Tensor<Real> &b) {
    if (a.SameShape(b)) {
      Tensor<Real> out(a.shape());
      for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
      return out;
    }
    ASRKIT_CHECK(a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0),
                 ShapeError,
                 "add: shapes " << Tensor<Real>::ShapeString(a.shape())
                                << " and "
                                << Tensor<Real>::ShapeString(b.shape())
                                << " are neither equal nor [m,n]+[n]");
    Tensor<Real> out(a.shape());
    int64_t m = a.dim(0), k = a.dim(1);
    for (int64_t r = 0; r < m; ++r) {
      const Real *ar = a.data() + r * k;
      Real *orow = out.data() + r * k;
      for (int64_t c = 0; c < k; ++c) orow[c] = ar[c] + b[c];
    }
    return out;
  }

  Tensor<Real> FwdMul(const Tensor<Real> &a, const Tensor<Real> &b) {
    ASRKIT_CHECK(a.SameShape(b), ShapeError,
                 "mul: shapes differ, "
                     << Tensor<Real>::ShapeString(a.shape()) << " vs "
                     << Tensor<Real>::ShapeString(b.shape()));
    Tensor<Real> out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
  }

  Tensor<Real> FwdConcat(const Tensor<Real> &a, const Tensor<Real> &b,
                         int axis) {
    ASRKIT_CHECK(a.rank() == b.rank() && (a.rank() == 1 || a.rank() == 2),
                 ShapeError, "concat: rank-1/2 tensors of equal rank only");
    if (a.rank() == 1) {
      ASRKIT_CHECK(axis == 0, ShapeError, "concat: axis out of range");
      Tensor<Real> out({a.dim(0) + b.dim(0)});
      std::copy(a.data(), a.data() + a.numel(), out.data());
      std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
      return out;
    }
    ASRKIT_CHECK(axis == 0 || axis == 1, ShapeError,
                 "concat: axis out of range");
    int other = 1 - axis;
    ASRKIT_CHECK(a.dim(other) == b.dim(other), ShapeError,
                 "concat: non-concat dims differ, "
                     << Tensor<Real>::ShapeString(a.shape()) << " vs "
                     << Tensor<Real>::ShapeString(b.shape()));
    if (axis == 0) {
      Tensor<Real> out({a.dim(0) + b.dim(0), a.dim(1)});
      std::copy(a.data(), a.data() + a.numel(), out.data());
      std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
      return out;
    }
    Tensor<Real> out({a.dim(0), a.dim(1) + b.dim(1)});
    for (int64_t r = 0; r < a.dim(0); ++r) {
      std::copy(a.data() + r * a.dim(1), a.data() + (r + 1) * a.dim(1),
                out.data() + r * out.dim(1));
      std::copy(b.data() + r * b.dim(1), b.data() + (r + 1) * b.dim(1),
                out.data() + r * out.dim(1) + a.dim(1));
    }
    return out;
  }

  Tensor<Real> FwdSlice(const Tensor<Real> &x, int axis, int64_t begin,
                        int64_t end) {
    ASRKIT_CHECK(x.rank() == 1 || x.rank() == 2, ShapeError,
                 "slice: rank-1/2 tensors only");
    ASRKIT_CHECK(axis >= 0 && axis < x.rank(), ShapeError,
                 "slice: axis out of range");
    ASRKIT_CHECK(0 <= begin && begin < end && end <= x.dim(axis), ShapeError,
                 "slice: bounds [" << begin << ", " << end
                                   << ") invalid for dim " << x.dim(axis));
    if (x.rank() == 1) {
      Tensor<Real> out({end - begin});
      std::copy(x.data() + begin, x.data() + end, out.data());
      return out;
    }
    if (axis == 0) {
      Tensor<Real> out({end - begin, x.dim(1)});
      std::copy(x.data() + begin * x.dim(1), x.data() + end * x.dim(1),
                out.data());
      return out;
    }
    Tensor<Real> out({x.dim(0), end - begin});
    for (int64_t r = 0; r < x.dim(0); ++r) {
      std::copy(x.data() + r * x.dim(1) + begin,
                x.data() + r * x.dim(1) + end, out.data() + r * out.dim(1));
    }
    return out;
  }

  template <typename F>
  Tensor<Real> FwdElementwise(const Tensor<Real> &x, F f) {
    Tensor<Real> out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
    return out;
  }

  // Rows of a rank-1 tensor: one row spanning everything.
  static void RowView(const Tensor<Real> &x, int64_t *rows, int64_t *cols) {
    if (x.rank() == 1) {
      *rows = 1;
      *cols = x.dim(0);
    } else {
      *rows = x.dim(0);
      *cols = x.dim(1);
    }
  }

  Tensor<Real> FwdSoftmax(const Tensor<Real> &x, bool log_form) {
    ASRKIT_CHECK(x.rank() == 1 || x.rank() == 2, ShapeError,
                 "softmax: rank-1/2 tensors only");
    int64_t rows, cols;
    RowView(x, &rows, &cols);
    ASRKIT_CHECK(cols > 0, ShapeError, "softmax: empty rows");
    Tensor<Real> out(x.shape());
    for (int64_t r = 0; r < rows; ++r) {
      const Real *xr = x.data() + r * cols;
      Real *orow = out.data() + r * cols;
      Real m = xr[0];
      for (int64_t c = 1; c < cols; ++c) m = std::max(m, xr[c]);
      Real z = Real(0);
      for (int64_t c = 0; c < cols; ++c) z += std::exp(xr[c] - m);
      if (log_form) {
        Real lz = std::log(z);
        for (int64_t c = 0; c < cols; ++c) orow[c] = xr[c] - m - lz;
      } else {
        Real inv = Real(1) / z;
        for (int64_t c = 0; c < cols; ++c) orow[c] = std::exp(xr[c] - m) * inv;
      }
    }
    return out;
  }

  Tensor<Real> FwdEmbedding(const Tensor<Real> &table,
                            const std::vector<int64_t> &ids) {
    CheckRank2(table, "embedding_lookup");
    ASRKIT_CHECK(!ids.empty(), ShapeError, "embedding_lookup: no ids");
    int64_t v = table.dim(0), d = table.dim(1);
    Tensor<Real> out({static_cast<int64_t>(ids.size()), d});
    for (size_t n = 0; n < ids.size(); ++n) {
      int64_t id = ids[n];
      ASRKIT_CHECK(0 <= id && id < v, ShapeError,
                   "embedding_lookup: id " << id << " out of range [0, " << v
                                           << ")");
      std::copy(table.data() + id * d, table.data() + (id + 1) * d,
                out.data() + static_cast<int64_t>(n) * d);
    }
    return out;
  }

  // Spatial size: out = floor((in + pad_lo + pad_hi - kernel) / stride) + 1.
  static int64_t ConvOut(int64_t in, int64_t k, int64_t s, int64_t plo,
                         int64_t phi) {
    return (in + plo + phi - k) / s + 1;
  }

  // x: [C, H, W]; w: [Co, C, kh, kw]; b: [Co];
  // attrs.ints = {stride_h, stride_w, pad_t, pad_b, pad_l, pad_r}.
  Tensor<Real> FwdConv2d(const Tensor<Real> &x, const Tensor<Real> &w,
                         const Tensor<Real> &b, const OpAttrs &at) {
    ASRKIT_CHECK(x.rank() == 3 && w.rank() == 4 && b.rank() == 1, ShapeError,
                 "conv2d: expected x[C,H,W], w[Co,C,kh,kw], b[Co]");
    ASRKIT_CHECK(at.ints.size() == 6, ContractError,
                 "conv2d: attrs.ints must hold {sh, sw, pt, pb, pl, pr}");
    int64_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
    int64_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    ASRKIT_CHECK(w.dim(1) == c, ShapeError,
                 "conv2d: channel mismatch " << w.dim(1) << " vs " << c);
    ASRKIT_CHECK(b.dim(0) == co, ShapeError, "conv2d: bias size mismatch");
    int64_t sh = at.ints[0], sw = at.ints[1];
    int64_t pt = at.ints[2], pb = at.ints[3], pl = at.ints[4], pr = at.ints[5];
    ASRKIT_CHECK(sh > 0 && sw > 0, ContractError, "conv2d: stride must be >0");
    int64_t ho = ConvOut(h, kh, sh, pt, pb), wo = ConvOut(wd, kw, sw, pl, pr);
    ASRKIT_CHECK(ho > 0 && wo > 0, ShapeError,
                 "conv2d: kernel does not fit input");
    Tensor<Real> out({co, ho, wo});
    for (int64_t oc = 0; oc < co; ++oc) {
      for (int64_t oy = 0; oy < ho; ++oy) {
        for (int64_t ox = 0; ox < wo; ++ox) {
          Real acc = b[oc];
          for (int64_t ic = 0; ic < c; ++ic) {
            for (int64_t ky = 0; ky < kh; ++ky) {
              int64_t iy = oy * sh - pt + ky;
              if (iy < 0 || iy >= h) continue;
              const Real *xrow = x.data() + (ic * h + iy) * wd;
              const Real *wrow = w.data() + ((oc * c + ic) * kh + ky) * kw;
              for (int64_t kx = 0; kx < kw; ++kx) {
                int64_t ix = ox * sw - pl + kx;
                if (ix < 0 || ix >= wd) continue;
                acc += xrow[ix] * wrow[kx];
              }
            }
          }
          out[(oc * ho + oy) * wo + ox] = acc;
        }
      }
    }
    return out;
  }

  // x: [C, H, W]; attrs.ints = {kh, kw, sh, sw}; no padding. Ties resolve
  // to the first element in scan order so backward is deterministic.
  Tensor<Real> FwdMaxpool(const Tensor<Real> &x, const OpAttrs &at,
                          std::vector<int64_t> *argmax) {
    ASRKIT_CHECK(x.rank() == 3, ShapeError, "maxpool2d: expected x[C,H,W]");
    ASRKIT_CHECK(at.ints.size() == 4, ContractError,
                 "maxpool2d: attrs.ints must hold {kh, kw, sh, sw}");
    int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    int64_t kh = at.ints[0], kw = at.ints[1], sh = at.ints[2], sw = at.ints[3];
    ASRKIT_CHECK(kh > 0 && kw > 0 && sh > 0 && sw > 0, ContractError,
                 "maxpool2d: kernel and stride must be positive");
    int64_t ho = ConvOut(h, kh, sh, 0, 0), wo = ConvOut(w, kw, sw, 0, 0);
    ASRKIT_CHECK(ho > 0 && wo > 0, ShapeError,
                 "maxpool2d: kernel does not fit input");
    Tensor<Real> out({c, ho, wo});
    argmax->assign(static_cast<size_t>(c * ho * wo), 0);
    for (int64_t ic = 0; ic < c; ++ic) {
      for (int64_t oy = 0; oy < ho; ++oy) {
        for (int64_t ox = 0; ox < wo; ++ox) {
          Real best = -std::numeric_limits<Real>::infinity();
          int64_t besti = -1;
          for (int64_t ky = 0; ky < kh; ++ky) {
            int64_t iy = oy * sh + ky;
            if (iy >= h) break;
            for (int64_t kx = 0; kx < kw; ++kx) {
              int64_t ix = ox * sw + kx;
              if (ix >= w) break;
              int64_t flat = (ic * h + iy) * w + ix;
              if (x[flat] > best) {
                best = x[flat];
                besti = flat;
              }
            }
          }
          int64_t o = (ic * ho + oy) * wo + ox;
          out[o] = best;
          (*argmax)[static_cast<size_t>(o)] = besti;
        }
      }
    }
    return out;
  }

  Tensor<Real> FwdReduceSum(const Tensor<Real> &x) {
    Real acc = Real(0);
    for (int64_t i = 0; i < x.numel(); ++i) acc += x[i];
    return Tensor<Real>::Scalar(acc);
  }

  // axis -1: logsumexp over all elements -> [1]. axis 0 on [m,n] -> [1,n].
  // axis 1 on [m,n] -> [m,1]. Stabilized by the per-group max.
  Tensor<Real> FwdReduceLse(const Tensor<Real> &x, int axis) {
    ASRKIT_CHECK(x.numel() > 0, ShapeError, "reduce_logsumexp: empty input");
    if (axis == -1) {
      Real m = x[0];
      for (int64_t i = 1; i < x.numel(); ++i) m = std::max(m, x[i]);
      Real z = Real(0);
      for (int64_t i = 0; i < x.numel(); ++i) z += std::exp(x[i] - m);
      return Tensor<Real>::Scalar(m + std::log(z));
    }
    CheckRank2(x, "reduce_logsumexp");
    ASRKIT_CHECK(axis == 0 || axis == 1, ShapeError,
                 "reduce_logsumexp: axis out of range");
    int64_t m = x.dim(0), n = x.dim(1);
    if (axis == 1) {
      Tensor<Real> out({m, 1});
      for (int64_t r = 0; r < m; ++r) {
        const Real *xr = x.data() + r * n;
        Real mx = xr[0];
        for (int64_t c = 1; c < n; ++c) mx = std::max(mx, xr[c]);
        Real z = Real(0);
        for (int64_t c = 0; c < n; ++c) z += std::exp(xr[c] - mx);
        out[r] = mx + std::log(z);
      }
      return out;
    }
    Tensor<Real> out({1, n});
    for (int64_t c = 0; c < n; ++c) {
      Real mx = x[c];
      for (int64_t r = 1; r < m; ++r) mx = std::max(mx, x[r * n + c]);
      Real z = Real(0);
      for (int64_t r = 0; r < m; ++r) z += std::exp(x[r * n + c] - mx);
      out[c] = mx + std::log(z);
    }
    return out;
  }

  Tensor<Real> FwdTranspose(const Tensor<Real> &x) {
    CheckRank2(x, "transpose");
    Tensor<Real> out({x.dim(1), x.dim(0)});
    MatOf(&out, x.dim(1), x.dim(0)).noalias() =
        MatOf(x, x.dim(0), x.dim(1)).transpose();
    return out;
  }

  // Gate layout in all LSTM kernels: [input, forget, cell, output] blocks
  // of size H along the 4H axis.
  static void LstmPointwise(int64_t hsz, const Real *pre, const Real *cprev,
                            Real *ifgo, Real *cnew, Real *hnew) {
    for (int64_t j = 0; j < hsz; ++j) {
      Real ig = Real(1) / (Real(1) + std::exp(-pre[j]));
      Real fg = Real(1) / (Real(1) + std::exp(-pre[hsz + j]));
      Real gg = std::tanh(pre[2 * hsz + j]);
      Real og = Real(1) / (Real(1) + std::exp(-pre[3 * hsz + j]));
      Real c = fg * cprev[j] + ig * gg;
      ifgo[j] = ig;
      ifgo[hsz + j] = fg;
      ifgo[2 * hsz + j] = gg;
      ifgo[3 * hsz + j] = og;
      cnew[j] = c;
      hnew[j] = og * std::tanh(c);
    }
  }

  // Single step. x:[1,I] h:[1,H] c:[1,H] wx:[I,4H] wh:[H,4H] b:[4H].
  // Output [1, 2H] = new hidden ++ new cell. aux saves [1, 5H] = i,f,g,o,c.
  Tensor<Real> FwdLstmCell(const Tensor<Real> &x, const Tensor<Real> &h,
                           const Tensor<Real> &c, const Tensor<Real> &wx,
                           const Tensor<Real> &wh, const Tensor<Real> &b,
                           int hidden, Tensor<Real> *aux) {
    int64_t hsz = hidden;
    ASRKIT_CHECK(hsz > 0, ContractError, "lstm_cell: hidden size unset");
    ASRKIT_CHECK(x.rank() == 2 && x.dim(0) == 1, ShapeError,
                 "lstm_cell: x must be [1, I]");
    ASRKIT_CHECK(h.rank() == 2 && h.dim(0) == 1 && h.dim(1) == hsz, ShapeError,
                 "lstm_cell: h must be [1, H]");
    ASRKIT_CHECK(c.SameShape(h), ShapeError, "lstm_cell: c must match h");
    ASRKIT_CHECK(wx.rank() == 2 && wx.dim(0) == x.dim(1) &&
                     wx.dim(1) == 4 * hsz,
                 ShapeError, "lstm_cell: wx must be [I, 4H]");
    ASRKIT_CHECK(wh.rank() == 2 && wh.dim(0) == hsz && wh.dim(1) == 4 * hsz,
                 ShapeError, "lstm_cell: wh must be [H, 4H]");
    ASRKIT_CHECK(b.rank() == 1 && b.dim(0) == 4 * hsz, ShapeError,
                 "lstm_cell: b must be [4H]");
    Tensor<Real> pre({1, 4 * hsz});
    MapM pm(pre.data(), 1, 4 * hsz);
    pm.noalias() = MatOf(x, 1, x.dim(1)) * MatOf(wx, wx.dim(0), wx.dim(1));
    pm.noalias() += MatOf(h, 1, hsz) * MatOf(wh, hsz, 4 * hsz);
    for (int64_t j = 0; j < 4 * hsz; ++j) pre[j] += b[j];
    *aux = Tensor<Real>({1, 5 * hsz});
    Tensor<Real> out({1, 2 * hsz});
    LstmPointwise(hsz, pre.data(), c.data(), aux->data(),
                  aux->data() + 4 * hsz, out.data());
    std::copy(aux->data() + 4 * hsz, aux->data() + 5 * hsz,
              out.data() + hsz);
    return out;
  }

  // Whole sequence with zero initial state. x:[T,I] -> [T,H] of hidden
  // states in original time order; attrs.reverse runs right to left.
  // aux saves [T, 5H] rows of i,f,g,o,c at their time positions.
  Tensor<Real> FwdLstmSeq(const Tensor<Real> &x, const Tensor<Real> &wx,
                          const Tensor<Real> &wh, const Tensor<Real> &b,
                          int hidden, bool reverse, Tensor<Real> *aux) {
    int64_t hsz = hidden;
    ASRKIT_CHECK(hsz > 0, ContractError, "lstm_seq: hidden size unset");
    CheckRank2(x, "lstm_seq");
    int64_t t = x.dim(0), in = x.dim(1);
    ASRKIT_CHECK(t > 0, ShapeError, "lstm_seq: empty sequence");
    ASRKIT_CHECK(wx.rank() == 2 && wx.dim(0) == in && wx.dim(1) == 4 * hsz,
                 ShapeError, "lstm_seq: wx must be [I, 4H]");
    ASRKIT_CHECK(wh.rank() == 2 && wh.dim(0) == hsz && wh.dim(1) == 4 * hsz,
                 ShapeError, "lstm_seq: wh must be [H, 4H]");
    ASRKIT_CHECK(b.rank() == 1 && b.dim(0) == 4 * hsz, ShapeError,
                 "lstm_seq: b must be [4H]");
    // One gemm for every step's input contribution, then a sequential scan.
    Tensor<Real> gates({t, 4 * hsz});
    MatOf(&gates, t, 4 * hsz).noalias() =
        MatOf(x, t, in) * MatOf(wx, in, 4 * hsz);
    for (int64_t r = 0; r < t; ++r) {
      Real *row = gates.data() + r * 4 * hsz;
      for (int64_t j = 0; j < 4 * hsz; ++j) row[j] += b[j];
    }
    *aux = Tensor<Real>({t, 5 * hsz});
    Tensor<Real> out({t, hsz});
    std::vector<Real> hprev(static_cast<size_t>(hsz), Real(0));
    std::vector<Real> cprev(static_cast<size_t>(hsz), Real(0));
    Tensor<Real> pre({1, 4 * hsz});
    for (int64_t k = 0; k < t; ++k) {
      int64_t ti = reverse ? t - 1 - k : k;
      std::copy(gates.data() + ti * 4 * hsz, gates.data() + (ti + 1) * 4 * hsz,
                pre.data());
      MapM(pre.data(), 1, 4 * hsz).noalias() +=
          CMapM(hprev.data(), 1, hsz) * MatOf(wh, hsz, 4 * hsz);
      Real *arow = aux->data() + ti * 5 * hsz;
      LstmPointwise(hsz, pre.data(), cprev.data(), arow, arow + 4 * hsz,
                    out.data() + ti * hsz);
      std::copy(out.data() + ti * hsz, out.data() + (ti + 1) * hsz,
                hprev.data());
      std::copy(arow + 4 * hsz, arow + 5 * hsz, cprev.data());
    }
    return out;
  }

  // Backward helpers ----------------------------------------------------

  void AccumulateAdd(int id, const Tensor<Real> &delta) {
    if (!NeedsGrad(id)) return;
    Tensor<Real> &g = GradBuf(id);
    for (int64_t i = 0; i < delta.numel(); ++i) g[i] += delta[i];
  }

  void BackwardLstmPointwise(int64_t hsz, const Real *ifgo, const Real *cnew,
                             const Real *cprev, const Real *dh,
                             const Real *dc_in, Real *dpre, Real *dcprev) {
    for (int64_t j = 0; j < hsz; ++j) {
      Real ig = ifgo[j], fg = ifgo[hsz + j], gg = ifgo[2 * hsz + j],
           og = ifgo[3 * hsz + j];
      Real tc = std::tanh(cnew[j]);
      Real dc = dc_in[j] + dh[j] * og * (Real(1) - tc * tc);
      dpre[3 * hsz + j] = dh[j] * tc * og * (Real(1) - og);
      dpre[j] = dc * gg * ig * (Real(1) - ig);
      dpre[hsz + j] = dc * cprev[j] * fg * (Real(1) - fg);
      dpre[2 * hsz + j] = dc * ig * (Real(1) - gg * gg);
      dcprev[j] = dc * fg;
    }
  }

  std::vector<Node> nodes_;
};

template <typename Real>
Var<Real> Tape<Real>::Apply(Op op, const std::vector<Var<Real>> &inputs,
                            OpAttrs attrs) {
  for (const Var<Real> &v : inputs) {
    ASRKIT_CHECK(v.tape == this, ContractError,
                 OpName(op) << ": input from a different tape");
    ASRKIT_CHECK(v.id >= 0 && v.id < static_cast<int>(nodes_.size()),
                 ContractError, OpName(op) << ": invalid input id");
  }
  auto arity = [&](size_t want) {
    ASRKIT_CHECK(inputs.size() == want, ContractError,
                 OpName(op) << ": expected " << want << " inputs, got "
                            << inputs.size());
  };
  Node n;
  n.op = op;
  for (const Var<Real> &v : inputs) n.in.push_back(v.id);
  for (const Var<Real> &v : inputs) {
    n.requires_grad = n.requires_grad || NeedsGrad(v.id);
  }
  auto V = [&](size_t i) -> const Tensor<Real> & {
    return ValueOf(inputs[i].id);
  };
  switch (op) {
    case Op::kLeaf:
      throw ContractError("Apply: leaf is not an applicable op");
    case Op::kMatmul:
      arity(2);
      n.value = FwdMatmul(V(0), V(1));
      break;
    case Op::kAdd:
      arity(2);
      n.value = FwdAdd(V(0), V(1));
      break;
    case Op::kMul:
      arity(2);
      n.value = FwdMul(V(0), V(1));
      break;
    case Op::kConcat:
      arity(2);
      n.value = FwdConcat(V(0), V(1), attrs.axis);
      break;
    case Op::kSlice:
      arity(1);
      n.value = FwdSlice(V(0), attrs.axis, attrs.begin, attrs.end);
      break;
    case Op::kTanh:
      arity(1);
      n.value = FwdElementwise(V(0), [](Real v) { return std::tanh(v); });
      break;
    case Op::kSigmoid:
      arity(1);
      n.value = FwdElementwise(V(0), [](Real v) {
        return Real(1) / (Real(1) + std::exp(-v));
      });
      break;
    case Op::kRelu:
      arity(1);
      n.value = FwdElementwise(
          V(0), [](Real v) { return v > Real(0) ? v : Real(0); });
      break;
    case Op::kExp:
      arity(1);
      n.value = FwdElementwise(V(0), [](Real v) { return std::exp(v); });
      ASRKIT_CHECK(n.value.AllFinite(), NumericError,
                   "exp: overflow to non-finite value");
      break;
    case Op::kLog:
      arity(1);
      n.value = FwdElementwise(V(0), [](Real v) { return std::log(v); });
      ASRKIT_CHECK(n.value.AllFinite(), NumericError,
                   "log: non-finite result (non-positive input)");
      break;
    case Op::kSoftmax:
      arity(1);
      n.value = FwdSoftmax(V(0), false);
      break;
    case Op::kLogSoftmax:
      arity(1);
      n.value = FwdSoftmax(V(0), true);
      break;
    case Op::kEmbeddingLookup:
      arity(1);
      n.value = FwdEmbedding(V(0), attrs.ints);
      break;
    case Op::kConv2d:
      arity(3);
      n.value = FwdConv2d(V(0), V(1), V(2), attrs);
      break;
    case Op::kMaxpool2d:
      arity(1);
      n.value = FwdMaxpool(V(0), attrs, &n.iaux);
      break;
    case Op::kReduceSum:
      arity(1);
      n.value = FwdReduceSum(V(0));
      break;
    case Op::kReduceLogsumexp:
      arity(1);
      n.value = FwdReduceLse(V(0), attrs.axis);
      break;
    case Op::kTranspose:
      arity(1);
      n.value = FwdTranspose(V(0));
      break;
    case Op::kReshape: {
      arity(1);
      std::vector<int64_t> shape(attrs.ints.begin(), attrs.ints.end());
      Tensor<Real> out(shape);
      ASRKIT_CHECK(out.numel() == V(0).numel(), ShapeError,
                   "reshape: element count changes from "
                       << V(0).numel() << " to " << out.numel());
      std::copy(V(0).data(), V(0).data() + V(0).numel(), out.data());
      n.value = std::move(out);
      break;
    }
    case Op::kScale:
      arity(1);
      n.value = FwdElementwise(V(0), [&attrs](Real v) {
        return static_cast<Real>(attrs.scale) * v;
      });
      break;
    case Op::kLstmCell:
      arity(6);
      n.value = FwdLstmCell(V(0), V(1), V(2), V(3), V(4), V(5), attrs.hidden,
                            &n.aux);
      break;
    case Op::kLstmSeq:
      arity(4);
      n.value = FwdLstmSeq(V(0), V(1), V(2), V(3), attrs.hidden, attrs.reverse,
                           &n.aux);
      break;
  }
  n.attrs = std::move(attrs);
  return Push(std::move(n));
}

template <typename Real>
void Tape<Real>::BackwardNode(Node &n) {
  const Tensor<Real> &dy = n.grad;
  const Tensor<Real> &y = ValueOf(IndexOf(n));
  auto in = [&](size_t i) -> const Tensor<Real> & {
    return ValueOf(n.in[i]);
  };
  auto needs = [&](size_t i) { return NeedsGrad(n.in[i]); };
  auto gbuf = [&](size_t i) -> Tensor<Real> & { return GradBuf(n.in[i]); };

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kMatmul: {
      const Tensor<Real> &a = in(0), &b = in(1);
      if (needs(0)) {
        MatOf(&gbuf(0), a.dim(0), a.dim(1)).noalias() +=
            MatOf(dy, a.dim(0), b.dim(1)) *
            MatOf(b, b.dim(0), b.dim(1)).transpose();
      }
      if (needs(1)) {
        MatOf(&gbuf(1), b.dim(0), b.dim(1)).noalias() +=
            MatOf(a, a.dim(0), a.dim(1)).transpose() *
            MatOf(dy, a.dim(0), b.dim(1));
      }
      break;
    }
    case Op::kAdd: {
      const Tensor<Real> &a = in(0), &b = in(1);
      if (needs(0)) AccumulateAdd(n.in[0], dy);
      if (needs(1)) {
        if (a.SameShape(b)) {
          AccumulateAdd(n.in[1], dy);
        } else {
          Tensor<Real> &g = gbuf(1);
          int64_t m = a.dim(0), k = a.dim(1);
          for (int64_t r = 0; r < m; ++r) {
            const Real *dr = dy.data() + r * k;
            for (int64_t c = 0; c < k; ++c) g[c] += dr[c];
          }
        }
      }
      break;
    }
    case Op::kMul: {
      if (needs(0)) {
        Tensor<Real> &g = gbuf(0);
        const Tensor<Real> &b = in(1);
        for (int64_t i = 0; i < dy.numel(); ++i) g[i] += dy[i] * b[i];
      }
      if (needs(1)) {
        Tensor<Real> &g = gbuf(1);
        const Tensor<Real> &a = in(0);
        for (int64_t i = 0; i < dy.numel(); ++i) g[i] += dy[i] * a[i];
      }
      break;
    }
    case Op::kConcat: {
      const Tensor<Real> &a = in(0), &b = in(1);
      int axis = n.attrs.axis;
      if (a.rank() == 1 || axis == 0) {
        if (needs(0)) {
          Tensor<Real> &g = gbuf(0);
          for (int64_t i = 0; i < a.numel(); ++i) g[i] += dy[i];
        }
        if (needs(1)) {
          Tensor<Real> &g = gbuf(1);
          for (int64_t i = 0; i < b.numel(); ++i) g[i] += dy[a.numel() + i];
        }
      } else {
        int64_t m = a.dim(0), ca = a.dim(1), cb = b.dim(1);
        for (int64_t r = 0; r < m; ++r) {
          const Real *dr = dy.data() + r * (ca + cb);
          if (needs(0)) {
            Real *g = gbuf(0).data() + r * ca;
            for (int64_t c = 0; c < ca; ++c) g[c] += dr[c];
          }
          if (needs(1)) {
            Real *g = gbuf(1).data() + r * cb;
            for (int64_t c = 0; c < cb; ++c) g[c] += dr[ca + c];
          }
        }
      }
      break;
    }
    case Op::kSlice: {
      if (!needs(0)) break;
      const Tensor<Real> &x = in(0);
      Tensor<Real> &g = gbuf(0);
      int axis = n.attrs.axis;
      int64_t begin = n.attrs.begin;
      if (x.rank() == 1) {
        for (int64_t i = 0; i < dy.numel(); ++i) g[begin + i] += dy[i];
      } else if (axis == 0) {
        for (int64_t i = 0; i < dy.numel(); ++i) {
          g[begin * x.dim(1) + i] += dy[i];
        }
      } else {
        int64_t w = dy.dim(1);
        for (int64_t r = 0; r < x.dim(0); ++r) {
          Real *gr = g.data() + r * x.dim(1) + begin;
          const Real *dr = dy.data() + r * w;
          for (int64_t c = 0; c < w; ++c) gr[c] += dr[c];
        }
      }
      break;
    }
    case Op::kTanh: {
      if (!needs(0)) break;
      Tensor<Real> &g = gbuf(0);
      for (int64_t i = 0; i < dy.numel(); ++i) {
        g[i] += dy[i] * (Real(1) - y[i] * y[i]);
      }
      break;
    }
    case Op::kSigmoid: {
      if (!needs(0)) break;
      Tensor<Real> &g = gbuf(0);
      for (int64_t i = 0; i < dy.numel(); ++i) {
        g[i] += dy[i] * y[i] * (Real(1) - y[i]);
      }
      break;
    }
    case Op::kRelu: {
      if (!needs(0)) break;
      Tensor<Real> &g = gbuf(0);
      const Tensor<Real> &x = in(0);
      for (int64_t i = 0; i < dy.numel(); ++i) {
        if (x[i] > Real(0)) g[i] += dy[i];
      }
      break;
    }
    case Op::kExp: {
      if (!needs(0)) break;
      Tensor<Real> &g = gbuf(0);
      for (int64_t i = 0; i < dy.numel(); ++i) g[i] += dy[i] * y[i];
      break;
    }
    case Op::kLog: {
      if (!needs(0)) break;
      Tensor<Real> &g = gbuf(0);
      const Tensor<Real> &x = in(0);
      for (int64_t i = 0; i < dy.numel(); ++i) g[i] += dy[i] / x[i];
      break;
    }
    case Op::kSoftmax: {
      if (!needs(0)) break;
      Tensor<Real> &g = gbuf(0);
      int64_t rows, cols;
      RowView(y, &rows, &cols);
      for (int64_t r = 0; r < rows; ++r) {
        const Real *yr = y.data() + r * cols;
        const Real *dr = dy.data() + r * cols;
        Real dot = Real(0);
        for (int64_t c = 0; c < cols; ++c) dot += dr[c] * yr[c];
        Real *gr = g.data() + r * cols;
        for (int64_t c = 0; c < cols; ++c) gr[c] += yr[c] * (dr[c] - dot);
      }
      break;
    }
    case Op::kLogSoftmax: {
      if (!needs(0)) break;
      Tensor<Real> &g = gbuf(0);
      int64_t rows, cols;
      RowView(y, &rows, &cols);
      for (int64_t r = 0; r < rows; ++r) {
        const Real *yr = y.data() + r * cols;
        const Real *dr = dy.data() + r * cols;
        Real tot = Real(0);
        for (int64_t c = 0; c < cols; ++c) tot += dr[c];
        Real *gr = g.data() + r * cols;
        for (int64_t c = 0; c < cols; ++c) {
          gr[c] += dr[c] - std::exp(yr[c]) * tot;
        }
      }
      break;
    }
    case Op::kEmbeddingLookup: {
      if (!needs(0)) break;
      Tensor<Real> &g = gbuf(0);
      int64_t d = in(0).dim(1);
      for (size_t k = 0; k < n.attrs.ints.size(); ++k) {
        int64_t id = n.attrs.ints[k];
        Real *gr = g.data() + id * d;
        const Real *dr = dy.data() + static_cast<int64_t>(k) * d;
        for (int64_t c = 0; c < d; ++c) gr[c] += dr[c];
      }
      break;
    }
    case Op::kConv2d: {
      const Tensor<Real> &x = in(0), &w = in(1);
      int64_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
      int64_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
      int64_t sh = n.attrs.ints[0], sw = n.attrs.ints[1];
      int64_t pt = n.attrs.ints[2], pl = n.attrs.ints[4];
      int64_t ho = y.dim(1), wo = y.dim(2);
      for (int64_t oc = 0; oc < co; ++oc) {
        for (int64_t oy = 0; oy < ho; ++oy) {
          for (int64_t ox = 0; ox < wo; ++ox) {
            Real d = dy[(oc * ho + oy) * wo + ox];
            if (needs(2)) gbuf(2)[oc] += d;
            for (int64_t ic = 0; ic < c; ++ic) {
              for (int64_t ky = 0; ky < kh; ++ky) {
                int64_t iy = oy * sh - pt + ky;
                if (iy < 0 || iy >= h) continue;
                for (int64_t kx = 0; kx < kw; ++kx) {
                  int64_t ix = ox * sw - pl + kx;
                  if (ix < 0 || ix >= wd) continue;
                  int64_t xi = (ic * h + iy) * wd + ix;
                  int64_t wi = ((oc * c + ic) * kh + ky) * kw + kx;
                  if (needs(0)) gbuf(0)[xi] += d * w[wi];
                  if (needs(1)) gbuf(1)[wi] += d * x[xi];
                }
              }
            }
          }
        }
      }
      break;
    }
    case Op::kMaxpool2d: {
      if (!needs(0)) break;
      Tensor<Real> &g = gbuf(0);
      for (int64_t i = 0; i < y.numel(); ++i) {
        g[n.iaux[static_cast<size_t>(i)]] += dy[i];
      }
      break;
    }
    case Op::kReduceSum: {
      if (!needs(0)) break;
      Tensor<Real> &g = gbuf(0);
      Real d = dy[0];
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += d;
      break;
    }
    case Op::kReduceLogsumexp: {
      if (!needs(0)) break;
      Tensor<Real> &g = gbuf(0);
      const Tensor<Real> &x = in(0);
      int axis = n.attrs.axis;
      if (axis == -1) {
        Real out = y[0], d = dy[0];
        for (int64_t i = 0; i < x.numel(); ++i) {
          g[i] += d * std::exp(x[i] - out);
        }
      } else if (axis == 1) {
        int64_t m = x.dim(0), k = x.dim(1);
        for (int64_t r = 0; r < m; ++r) {
          Real out = y[r], d = dy[r];
          const Real *xr = x.data() + r * k;
          Real *gr = g.data() + r * k;
          for (int64_t c = 0; c < k; ++c) gr[c] += d * std::exp(xr[c] - out);
        }
      } else {
        int64_t m = x.dim(0), k = x.dim(1);
        for (int64_t c = 0; c < k; ++c) {
          Real out = y[c], d = dy[c];
          for (int64_t r = 0; r < m; ++r) {
            g[r * k + c] += d * std::exp(x[r * k + c] - out);
          }
        }
      }
      break;
    }
    case Op::kTranspose: {
      if (!needs(0)) break;
      const Tensor<Real> &x = in(0);
      MatOf(&gbuf(0), x.dim(0), x.dim(1)).noalias() +=
          MatOf(dy, y.dim(0), y.dim(1)).transpose();
      break;
    }
    case Op::kReshape: {
      if (!needs(0)) break;
      Tensor<Real> &g = gbuf(0);
      for (int64_t i = 0; i < dy.numel(); ++i) g[i] += dy[i];
      break;
    }
    case Op::kScale: {
      if (!needs(0)) break;
      Tensor<Real> &g = gbuf(0);
      Real s = static_cast<Real>(n.attrs.scale);
      for (int64_t i = 0; i < dy.numel(); ++i) g[i] += s * dy[i];
      break;
    }
    case Op::kLstmCell: {
      int64_t hsz = n.attrs.hidden;
      const Tensor<Real> &x = in(0), &h = in(1), &c = in(2);
      const Tensor<Real> &wx = in(3), &wh = in(4);
      Tensor<Real> dpre({1, 4 * hsz});
      std::vector<Real> dcprev(static_cast<size_t>(hsz));
      BackwardLstmPointwise(hsz, n.aux.data(), n.aux.data() + 4 * hsz,
                            c.data(), dy.data(), dy.data() + hsz, dpre.data(),
                            dcprev.data());
      if (needs(0)) {
        MatOf(&gbuf(0), 1, x.dim(1)).noalias() +=
            MatOf(dpre, 1, 4 * hsz) *
            MatOf(wx, wx.dim(0), wx.dim(1)).transpose();
      }
      if (needs(1)) {
        MatOf(&gbuf(1), 1, hsz).noalias() +=
            MatOf(dpre, 1, 4 * hsz) * MatOf(wh, hsz, 4 * hsz).transpose();
      }
      if (needs(2)) {
        Tensor<Real> &g = gbuf(2);
        for (int64_t j = 0; j < hsz; ++j) g[j] += dcprev[static_cast<size_t>(j)];
      }
      if (needs(3)) {
        MatOf(&gbuf(3), wx.dim(0), 4 * hsz).noalias() +=
            MatOf(x, 1, x.dim(1)).transpose() * MatOf(dpre, 1, 4 * hsz);
      }
      if (needs(4)) {
        MatOf(&gbuf(4), hsz, 4 * hsz).noalias() +=
            MatOf(h, 1, hsz).transpose() * MatOf(dpre, 1, 4 * hsz);
      }
      if (needs(5)) {
        Tensor<Real> &g = gbuf(5);
        for (int64_t j = 0; j < 4 * hsz; ++j) g[j] += dpre[j];
      }
      break;
    }
    case Op::kLstmSeq: {
      int64_t hsz = n.attrs.hidden;
      bool reverse = n.attrs.reverse;
      const Tensor<Real> &x = in(0), &wx = in(1), &wh = in(2);
      int64_t t = x.dim(0), insz = x.dim(1);
      // Gather per-step pre-activation gradients, then batch the weight and
      // input gradients into single gemms.
      Tensor<Real> dpre({t, 4 * hsz});
      Tensor<Real> hprev({t, hsz});
      std::vector<Real> dh(static_cast<size_t>(hsz));
      std::vector<Real> dhcarry(static_cast<size_t>(hsz), Real(0));
      std::vector<Real> dccarry(static_cast<size_t>(hsz), Real(0));
      std::vector<Real> cprev(static_cast<size_t>(hsz));
      std::vector<Real> dcprev(static_cast<size_t>(hsz));
      for (int64_t k = t - 1; k >= 0; --k) {
        int64_t ti = reverse ? t - 1 - k : k;
        int64_t tprev = reverse ? ti + 1 : ti - 1;
        const Real *arow = n.aux.data() + ti * 5 * hsz;
        if (k == 0) {
          std::fill(cprev.begin(), cprev.end(), Real(0));
          std::fill(hprev.data() + ti * hsz, hprev.data() + (ti + 1) * hsz,
                    Real(0));
        } else {
          const Real *aprev = n.aux.data() + tprev * 5 * hsz;
          for (int64_t j = 0; j < hsz; ++j) {
            Real cp = aprev[4 * hsz + j];
            cprev[static_cast<size_t>(j)] = cp;
            hprev.data()[ti * hsz + j] = aprev[3 * hsz + j] * std::tanh(cp);
          }
        }
        for (int64_t j = 0; j < hsz; ++j) {
          dh[static_cast<size_t>(j)] =
              dy[ti * hsz + j] + dhcarry[static_cast<size_t>(j)];
        }
        BackwardLstmPointwise(hsz, arow, arow + 4 * hsz, cprev.data(),
                              dh.data(), dccarry.data(),
                              dpre.data() + ti * 4 * hsz, dcprev.data());
        std::swap(dccarry, dcprev);
        MapM(dhcarry.data(), 1, hsz).noalias() =
            CMapM(dpre.data() + ti * 4 * hsz, 1, 4 * hsz) *
            MatOf(wh, hsz, 4 * hsz).transpose();
      }
      if (needs(0)) {
        MatOf(&gbuf(0), t, insz).noalias() +=
            MatOf(dpre, t, 4 * hsz) * MatOf(wx, insz, 4 * hsz).transpose();
      }
      if (needs(1)) {
        MatOf(&gbuf(1), insz, 4 * hsz).noalias() +=
            MatOf(x, t, insz).transpose() * MatOf(dpre, t, 4 * hsz);
      }
      if (needs(2)) {
        MatOf(&gbuf(2), hsz, 4 * hsz).noalias() +=
            MatOf(hprev, t, hsz).transpose() * MatOf(dpre, t, 4 * hsz);
      }
      if (needs(3)) {
        Tensor<Real> &g = gbuf(3);
        for (int64_t r = 0; r < t; ++r) {
          const Real *dr = dpre.data() + r * 4 * hsz;
          for (int64_t j = 0; j < 4 * hsz; ++j) g[j] += dr[j];
        }
      }
      break;
    }
  }
}

template <typename Real>
const Tensor<Real> &Var<Real>::value() const {
  ASRKIT_CHECK(valid(), ContractError, "Var::value on an empty handle");
  return tape->ValueOf(id);
}

template <typename Real>
const Tensor<Real> &Var<Real>::grad() const {
  ASRKIT_CHECK(valid(), ContractError, "Var::grad on an empty handle");
  return tape->GradOf(id);
}

// Named wrappers -------------------------------------------------------

template <typename Real>
Var<Real> Matmul(Var<Real> a, Var<Real> b) {
  return a.tape->Apply(Op::kMatmul, {a, b}, {});
}

template <typename Real>
Var<Real> Add(Var<Real> a, Var<Real> b) {
  return a.tape->Apply(Op::kAdd, {a, b}, {});
}

template <typename Real>
Var<Real> Mul(Var<Real> a, Var<Real> b) {
  return a.tape->Apply(Op::kMul, {a, b}, {});
}

template <typename Real>
Var<Real> Concat(Var<Real> a, Var<Real> b, int axis) {
  OpAttrs at;
  at.axis = axis;
  return a.tape->Apply(Op::kConcat, {a, b}, at);
}

template <typename Real>
Var<Real> Slice(Var<Real> x, int axis, int64_t begin, int64_t end) {
  OpAttrs at;
  at.axis = axis;
  at.begin = begin;
  at.end = end;
  return x.tape->Apply(Op::kSlice, {x}, at);
}

template <typename Real>
Var<Real> Tanh(Var<Real> x) {
  return x.tape->Apply(Op::kTanh, {x}, {});
}

template <typename Real>
Var<Real> Sigmoid(Var<Real> x) {
  return x.tape->Apply(Op::kSigmoid, {x}, {});
}

template <typename Real>
Var<Real> Relu(Var<Real> x) {
  return x.tape->Apply(Op::kRelu, {x}, {});
}

template <typename Real>
Var<Real> Exp(Var<Real> x) {
  return x.tape->Apply(Op::kExp, {x}, {});
}

template <typename Real>
Var<Real> Log(Var<Real> x) {
  return x.tape->Apply(Op::kLog, {x}, {});
}

template <typename Real>
Var<Real> Softmax(Var<Real> x) {
  return x.tape->Apply(Op::kSoftmax, {x}, {});
}

template <typename Real>
Var<Real> LogSoftmax(Var<Real> x) {
  return x.tape->Apply(Op::kLogSoftmax, {x}, {});
}

template <typename Real>
Var<Real> EmbeddingLookup(Var<Real> table, const std::vector<int64_t> &ids) {
  OpAttrs at;
  at.ints = ids;
  return table.tape->Apply(Op::kEmbeddingLookup, {table}, at);
}

template <typename Real>
Var<Real> Conv2d(Var<Real> x, Var<Real> w, Var<Real> b, int64_t stride_h,
                 int64_t stride_w, int64_t pad_t, int64_t pad_b, int64_t pad_l,
                 int64_t pad_r) {
  OpAttrs at;
  at.ints = {stride_h, stride_w, pad_t, pad_b, pad_l, pad_r};
  return x.tape->Apply(Op::kConv2d, {x, w, b}, at);
}

template <typename Real>
Var<Real> Maxpool2d(Var<Real> x, int64_t kh, int64_t kw, int64_t sh,
                    int64_t sw) {
  OpAttrs at;
  at.ints = {kh, kw, sh, sw};
  return x.tape->Apply(Op::kMaxpool2d, {x}, at);
}

template <typename Real>
Var<Real> ReduceSum(Var<Real> x) {
  return x.tape->Apply(Op::kReduceSum, {x}, {});
}

template <typename Real>
Var<Real> ReduceLogsumexp(Var<Real> x, int axis = -1) {
  OpAttrs at;
  at.axis = axis;
  return x.tape->Apply(Op::kReduceLogsumexp, {x}, at);
}

template <typename Real>
Var<Real> Transpose(Var<Real> x) {
  return x.tape->Apply(Op::kTranspose, {x}, {});
}

template <typename Real>
Var<Real> Reshape(Var<Real> x, std::vector<int64_t> shape) {
  OpAttrs at;
  at.ints = std::move(shape);
  return x.tape->Apply(Op::kReshape, {x}, at);
}

template <typename Real>
Var<Real> Scale(Var<Real> x, double s) {
  OpAttrs at;
  at.scale = s;
  return x.tape->Apply(Op::kScale, {x}, at);
}

// Returns [1, 2H]: new hidden in columns [0, H), new cell in [H, 2H).
template <typename Real>
Var<Real> LstmCell(Var<Real> x, Var<Real> h, Var<Real> c, Var<Real> wx,
                   Var<Real> wh, Var<Real> b, int hidden) {
  OpAttrs at;
  at.hidden = hidden;
  return x.tape->Apply(Op::kLstmCell, {x, h, c, wx, wh, b}, at);
}

// Returns [T, H] hidden states in original time order; zero initial state.
template <typename Real>
Var<Real> LstmSeq(Var<Real> x, Var<Real> wx, Var<Real> wh, Var<Real> b,
                  int hidden, bool reverse) {
  OpAttrs at;
  at.hidden = hidden;
  at.reverse = reverse;
  return x.tape->Apply(Op::kLstmSeq, {x, wx, wh, b}, at);
}

}  // namespace asrkit

#endif  // ASRKIT_AUTOGRAD_HPP_
