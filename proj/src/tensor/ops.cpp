#include "odn/tensor/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "odn/core/error.hpp"

namespace odn::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return ConstMatMap(t.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
ConstMatMap as_matrix(std::span<const double> s, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return ConstMatMap(s.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MatMap as_matrix(std::span<double> s, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MatMap(s.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

Tape& tape_of(std::initializer_list<Var> vars) {
  Tape* t = nullptr;
  for (const Var& v : vars) {
    if (!v) throw DimensionError("operation on an unbound Var");
    if (t && v.tape() != t) throw DimensionError("operands live on different tapes");
    t = v.tape();
  }
  return *t;
}

void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.shape().size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(v.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

void axpy(std::span<double> dst, std::span<const double> src, double alpha = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner extents differ, " + to_string(a.shape()) + " . " + to_string(b.shape()));
  }
  Tensor out({m, n});
  as_matrix(out.values(), m, n).noalias() = as_matrix(a.value(), m, k) * as_matrix(b.value(), k, n);
  return tape.record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape& t, std::size_t o) {
    auto g = as_matrix(t.upstream(o), m, n);
    if (auto ga = t.grad_buffer(a.id()); !ga.empty()) {
      as_matrix(ga, m, k).noalias() += g * as_matrix(t.value(b), k, n).transpose();
    }
    if (auto gb = t.grad_buffer(b.id()); !gb.empty()) {
      as_matrix(gb, k, n).noalias() += as_matrix(t.value(a), m, k).transpose() * g;
    }
  });
}

Var batched_matmul(Var a, Var b, bool transpose_b) {
  Tape& tape = tape_of({a, b});
  require_rank(a, 3, "batched_matmul");
  require_rank(b, 3, "batched_matmul");
  const std::size_t batch = a.shape()[0], m = a.shape()[1], k = a.shape()[2];
  const std::size_t n = transpose_b ? b.shape()[1] : b.shape()[2];
  const std::size_t bk = transpose_b ? b.shape()[2] : b.shape()[1];
  if (b.shape()[0] != batch || bk != k) {
    throw DimensionError("batched_matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const std::size_t b_rows = transpose_b ? n : k, b_cols = transpose_b ? k : n;
  Tensor out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    auto lhs = as_matrix(a.value(), m, k, i * m * k);
    auto rhs = as_matrix(b.value(), b_rows, b_cols, i * k * n);
    auto dst = as_matrix(out.values(), m, n, i * m * n);
    if (transpose_b) {
      dst.noalias() = lhs * rhs.transpose();
    } else {
      dst.noalias() = lhs * rhs;
    }
  }
  return tape.record("batched_matmul", std::move(out), {a, b},
                     [a, b, batch, m, k, n, b_rows, b_cols, transpose_b](Tape& t, std::size_t o) {
                       auto up = t.upstream(o);
                       auto ga = t.grad_buffer(a.id());
                       auto gb = t.grad_buffer(b.id());
                       for (std::size_t i = 0; i < batch; ++i) {
                         auto g = as_matrix(up, m, n, i * m * n);
                         auto rhs = as_matrix(t.value(b), b_rows, b_cols, i * k * n);
                         if (!ga.empty()) {
                           if (transpose_b) {
                             as_matrix(ga, m, k, i * m * k).noalias() += g * rhs;
                           } else {
                             as_matrix(ga, m, k, i * m * k).noalias() += g * rhs.transpose();
                           }
                         }
                         if (!gb.empty()) {
                           auto lhs = as_matrix(t.value(a), m, k, i * m * k);
                           if (transpose_b) {
                             as_matrix(gb, n, k, i * k * n).noalias() += g.transpose() * lhs;
                           } else {
                             as_matrix(gb, k, n, i * k * n).noalias() += lhs.transpose() * g;
                           }
                         }
                       }
                     });
}

Var add(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  axpy(out.values(), b.value().values());
  return tape.record("add", std::move(out), {a, b}, [a, b](Tape& t, std::size_t o) {
    auto g = t.upstream(o);
    if (auto ga = t.grad_buffer(a.id()); !ga.empty()) axpy(ga, g);
    if (auto gb = t.grad_buffer(b.id()); !gb.empty()) axpy(gb, g);
  });
}

Var sub(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  axpy(out.values(), b.value().values(), -1.0);
  return tape.record("sub", std::move(out), {a, b}, [a, b](Tape& t, std::size_t o) {
    auto g = t.upstream(o);
    if (auto ga = t.grad_buffer(a.id()); !ga.empty()) axpy(ga, g);
    if (auto gb = t.grad_buffer(b.id()); !gb.empty()) axpy(gb, g, -1.0);
  });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return tape.record("mul", std::move(out), {a, b}, [a, b](Tape& t, std::size_t o) {
    auto g = t.upstream(o);
    if (auto ga = t.grad_buffer(a.id()); !ga.empty()) {
      const auto bv = t.value(b).values();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (auto gb = t.grad_buffer(b.id()); !gb.empty()) {
      const auto av = t.value(a).values();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var x, double factor) {
  Tape& tape = tape_of({x});
  Tensor out = x.value();
  for (double& v : out.values()) v *= factor;
  return tape.record("scale", std::move(out), {x}, [x, factor](Tape& t, std::size_t o) {
    if (auto gx = t.grad_buffer(x.id()); !gx.empty()) axpy(gx, t.upstream(o), factor);
  });
}

Var add_bias(Var x, Var bias) {
  Tape& tape = tape_of({x, bias});
  require_rank(bias, 1, "add_bias");
  const std::size_t n = bias.shape()[0];
  if (x.shape().back() != n) {
    throw DimensionError("add_bias: bias " + to_string(bias.shape()) + " does not match " + to_string(x.shape()));
  }
  const std::size_t rows = x.value().size() / n;
  Tensor out = x.value();
  as_matrix(out.values(), rows, n).rowwise() += as_matrix(bias.value(), 1, n).row(0);
  return tape.record("add_bias", std::move(out), {x, bias}, [x, bias, rows, n](Tape& t, std::size_t o) {
    auto g = t.upstream(o);
    if (auto gx = t.grad_buffer(x.id()); !gx.empty()) axpy(gx, g);
    if (auto gb = t.grad_buffer(bias.id()); !gb.empty()) {
      as_matrix(gb, 1, n) += as_matrix(g, rows, n).colwise().sum();
    }
  });
}

Var unary_apply(Var x, Unary f) {
  Tape& tape = tape_of({x});
  Tensor out = x.value();
  auto v = out.values();
  switch (f) {
    case Unary::relu:
      for (double& e : v) e = e > 0.0 ? e : 0.0;
      break;
    case Unary::tanh:
      for (double& e : v) e = std::tanh(e);
      break;
    case Unary::sigmoid:
      for (double& e : v) e = 1.0 / (1.0 + std::exp(-e));
      break;
    case Unary::exp:
      for (double& e : v) e = std::exp(e);
      break;
    case Unary::log:
      for (double& e : v) {
        if (!(e > 0.0)) throw DomainError("log of non-positive value " + std::to_string(e));
        e = std::log(e);
      }
      break;
    case Unary::abs:
      for (double& e : v) e = std::fabs(e);
      break;
    case Unary::square:
      for (double& e : v) e = e * e;
      break;
  }
  return tape.record("unary", std::move(out), {x}, [x, f](Tape& t, std::size_t o) {
    auto gx = t.grad_buffer(x.id());
    if (gx.empty()) return;
    const auto g = t.upstream(o);
    const auto in = t.value(x).values();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double xi = in[i];
      double d = 0.0;
      switch (f) {
        case Unary::relu: d = xi > 0.0 ? 1.0 : 0.0; break;
        case Unary::tanh: { const double th = std::tanh(xi); d = 1.0 - th * th; break; }
        case Unary::sigmoid: { const double s = 1.0 / (1.0 + std::exp(-xi)); d = s * (1.0 - s); break; }
        case Unary::exp: d = std::exp(xi); break;
        case Unary::log: d = 1.0 / xi; break;
        case Unary::abs: d = xi > 0.0 ? 1.0 : (xi < 0.0 ? -1.0 : 0.0); break;
        case Unary::square: d = 2.0 * xi; break;
      }
      gx[i] += g[i] * d;
    }
  });
}

Var sum(Var x) {
  Tape& tape = tape_of({x});
  const auto v = x.value().values();
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  return tape.record("sum", Tensor::scalar(s), {x}, [x](Tape& t, std::size_t o) {
    auto gx = t.grad_buffer(x.id());
    const double g = t.upstream(o)[0];
    for (double& e : gx) e += g;
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var reshape(Var x, Shape shape) {
  Tape& tape = tape_of({x});
  Tensor out = x.value().reshaped(std::move(shape));
  return tape.record("reshape", std::move(out), {x}, [x](Tape& t, std::size_t o) {
    if (auto gx = t.grad_buffer(x.id()); !gx.empty()) axpy(gx, t.upstream(o));
  });
}

namespace {
// Maps each output flat index of a permutation to its input flat index.
std::vector<std::size_t> permutation_map(const Shape& in, const std::vector<std::size_t>& axes, Shape& out_shape) {
  const std::size_t rank = in.size();
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank - 1; i-- > 0;) in_stride[i] = in_stride[i + 1] * in[i + 1];
  out_shape.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in[axes[i]];
  const std::size_t n = numel(in);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < rank; ++i) src += idx[i] * in_stride[axes[i]];
    map[flat] = src;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  return map;
}
}  // namespace

Var permute(Var x, std::vector<std::size_t> axes) {
  Tape& tape = tape_of({x});
  const Shape& in = x.shape();
  std::vector<std::size_t> sorted = axes;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted.size() != in.size() || sorted[i] != i) {
      throw DimensionError("permute: axes do not form a permutation of rank " + std::to_string(in.size()));
    }
  }
  Shape out_shape;
  auto map = permutation_map(in, axes, out_shape);
  Tensor out(out_shape);
  const auto src = x.value().values();
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = src[map[i]];
  return tape.record("permute", std::move(out), {x}, [x, map = std::move(map)](Tape& t, std::size_t o) {
    auto gx = t.grad_buffer(x.id());
    if (gx.empty()) return;
    const auto g = t.upstream(o);
    for (std::size_t i = 0; i < map.size(); ++i) gx[map[i]] += g[i];
  });
}

Var concat(std::span<const Var> xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("concat of zero tensors");
  Tape& tape = *xs.front().tape();
  const Shape& first = xs.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + to_string(first));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& v : xs) {
    if (v.tape() != &tape) throw DimensionError("concat: operands live on different tapes");
    const Shape& s = v.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) throw DimensionError("concat: incompatible shapes " + to_string(first) + " and " + to_string(s));
    widths.push_back(s[axis] * inner);
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  Tensor out(out_shape);
  const std::size_t row = total * inner;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double* src = xs[k].value().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src + o * widths[k], widths[k], out.data() + o * row + offset);
    }
    offset += widths[k];
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return tape.record("concat", std::move(out), xs,
                     [inputs, widths, outer, row](Tape& t, std::size_t o) {
                       const auto g = t.upstream(o);
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < inputs.size(); ++k) {
                         auto gx = t.grad_buffer(inputs[k].id());
                         if (!gx.empty()) {
                           for (std::size_t r = 0; r < outer; ++r) {
                             for (std::size_t j = 0; j < widths[k]; ++j) {
                               gx[r * widths[k] + j] += g[r * row + off + j];
                             }
                           }
                         }
                         off += widths[k];
                       }
                     });
}

Var gru_cell(Var x, Var h, Var w, Var u, Var bias) {
  Tape& tape = tape_of({x, h, w, u, bias});
  require_rank(x, 2, "gru_cell");
  require_rank(h, 2, "gru_cell");
  const std::size_t b = x.shape()[0], din = x.shape()[1], dh = h.shape()[1];
  if (h.shape()[0] != b || w.shape() != Shape{din, 3 * dh} || u.shape() != Shape{dh, 3 * dh} ||
      bias.shape() != Shape{3 * dh}) {
    throw DimensionError("gru_cell: inconsistent shapes x" + to_string(x.shape()) + " h" + to_string(h.shape()) +
                         " W" + to_string(w.shape()) + " U" + to_string(u.shape()) + " b" +
                         to_string(bias.shape()));
  }
  const std::size_t g3 = 3 * dh;
  auto X = as_matrix(x.value(), b, din);
  auto Hp = as_matrix(h.value(), b, dh);
  auto W = as_matrix(w.value(), din, g3);
  auto U = as_matrix(u.value(), dh, g3);

  RowMat gates = X * W;  // b x 3dh
  gates.rowwise() += as_matrix(bias.value(), 1, g3).row(0);
  gates.leftCols(2 * dh).noalias() += Hp * U.leftCols(2 * dh);

  RowMat z = (1.0 + (-gates.leftCols(dh).array()).exp()).inverse().matrix();
  RowMat r = (1.0 + (-gates.middleCols(dh, dh).array()).exp()).inverse().matrix();
  RowMat rh = (r.array() * Hp.array()).matrix();
  RowMat cand = gates.rightCols(dh);
  cand.noalias() += rh * U.rightCols(dh);
  cand = cand.array().tanh().matrix();

  Tensor out({b, dh});
  as_matrix(out.values(), b, dh) = ((1.0 - z.array()) * Hp.array() + z.array() * cand.array()).matrix();

  return tape.record(
      "gru_cell", std::move(out), {x, h, w, u, bias},
      [x, h, w, u, bias, b, din, dh, z = std::move(z), r = std::move(r), rh = std::move(rh),
       cand = std::move(cand)](Tape& t, std::size_t o) {
        const std::size_t g3 = 3 * dh;
        auto G = as_matrix(t.upstream(o), b, dh);
        auto Hp = as_matrix(t.value(h), b, dh);
        auto W = as_matrix(t.value(w), din, g3);
        auto U = as_matrix(t.value(u), dh, g3);

        // gradients w.r.t. pre-activations, packed like the gates
        RowMat dpre(b, g3);
        dpre.leftCols(dh) = (G.array() * (cand.array() - Hp.array()) * z.array() * (1.0 - z.array())).matrix();
        dpre.rightCols(dh) = (G.array() * z.array() * (1.0 - cand.array().square())).matrix();
        RowMat drh = dpre.rightCols(dh) * U.rightCols(dh).transpose();
        dpre.middleCols(dh, dh) = (drh.array() * Hp.array() * r.array() * (1.0 - r.array())).matrix();

        if (auto gx = t.grad_buffer(x.id()); !gx.empty()) {
          as_matrix(gx, b, din).noalias() += dpre * W.transpose();
        }
        if (auto gh = t.grad_buffer(h.id()); !gh.empty()) {
          auto GH = as_matrix(gh, b, dh);
          GH += (G.array() * (1.0 - z.array())).matrix();
          GH += (drh.array() * r.array()).matrix();
          GH.noalias() += dpre.leftCols(2 * dh) * U.leftCols(2 * dh).transpose();
        }
        if (auto gw = t.grad_buffer(w.id()); !gw.empty()) {
          as_matrix(gw, din, g3).noalias() += as_matrix(t.value(x), b, din).transpose() * dpre;
        }
        if (auto gu = t.grad_buffer(u.id()); !gu.empty()) {
          auto GU = as_matrix(gu, dh, g3);
          GU.leftCols(2 * dh).noalias() += Hp.transpose() * dpre.leftCols(2 * dh);
          GU.rightCols(dh).noalias() += rh.transpose() * dpre.rightCols(dh);
        }
        if (auto gb = t.grad_buffer(bias.id()); !gb.empty()) {
          as_matrix(gb, 1, g3) += dpre.colwise().sum();
        }
      });
}

namespace {

struct ConvGeometry {
  std::size_t batch, cin, height, width, cout, k, pad, stride, out_h, out_w;
  std::size_t patch() const { return cin * k * k; }
  std::size_t pixels() const { return out_h * out_w; }
};

// col[(c, ky, kx), (oy, ox)] = x[c, oy*s + ky - p, ox*s + kx - p]
void im2col(const ConvGeometry& g, const double* x, double* col) {
  const std::size_t P = g.pixels();
  for (std::size_t c = 0; c < g.cin; ++c) {
    const double* plane = x + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* dst = col + ((c * g.k + ky) * g.k + kx) * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          double* drow = dst + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill_n(drow, g.out_w, 0.0);
            continue;
          }
          const double* srow = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            drow[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? 0.0 : srow[ix];
          }
        }
      }
    }
  }
}

// col[(oy, ox), (c, ky, kx)]: the transpose of im2col, one patch per pixel
void im2col_patch_major(const ConvGeometry& g, const double* x, double* col) {
  const std::size_t K = g.patch(), k = g.k, plane_size = g.height * g.width;
  const long H = static_cast<long>(g.height), W = static_cast<long>(g.width), pad = static_cast<long>(g.pad);
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    const long y0 = static_cast<long>(oy * g.stride) - pad;
    const bool rows_inside = y0 >= 0 && y0 + static_cast<long>(k) <= H;
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const long x0 = static_cast<long>(ox * g.stride) - pad;
      double* dst = col + (oy * g.out_w + ox) * K;
      if (rows_inside && x0 >= 0 && x0 + static_cast<long>(k) <= W) {
        const double* src = x + y0 * W + x0;
        for (std::size_t c = 0; c < g.cin; ++c, src += plane_size) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            const double* row = src + ky * g.width;
            for (std::size_t kx = 0; kx < k; ++kx) *dst++ = row[kx];
          }
        }
        continue;
      }
      for (std::size_t c = 0; c < g.cin; ++c) {
        const double* plane = x + c * plane_size;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = y0 + static_cast<long>(ky);
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = x0 + static_cast<long>(kx);
            *dst++ = (iy >= 0 && iy < H && ix >= 0 && ix < W) ? plane[iy * W + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* col, double* x) {
  const std::size_t P = g.pixels();
  for (std::size_t c = 0; c < g.cin; ++c) {
    double* plane = x + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* src = col + ((c * g.k + ky) * g.k + kx) * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          double* drow = plane + static_cast<std::size_t>(iy) * g.width;
          const double* srow = src + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.width)) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

// Stride-1 "same" convolution without a column matrix. The input is copied
// channels-last into a zero-bordered buffer; for a fixed kernel row the patch
// of every output pixel is then a contiguous run, and consecutive pixels are
// evenly spaced, so each kernel row is one GEMM over overlapping columns.
// Outputs are computed on the padded width and the extra columns dropped.
class ImplicitConv {
 public:
  // weight(o, c, ky, kx) with o < out, c < in
  template <class Weight>
  ImplicitConv(std::size_t in, std::size_t out, std::size_t h, std::size_t w, std::size_t k, Weight weight)
      : in_(in), out_(out), h_(h), w_(w), k_(k), pad_(k / 2), wp_(w + 2 * pad_),
        padded_(((h + 2 * pad_) * wp_ + k) * in, 0.0), prod_(static_cast<Eigen::Index>(out),
                                                            static_cast<Eigen::Index>(h * wp_)) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      Eigen::MatrixXd m(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(k * in));
      for (std::size_t o = 0; o < out; ++o)
        for (std::size_t kx = 0; kx < k; ++kx)
          for (std::size_t c = 0; c < in; ++c) m(o, kx * in + c) = weight(o, c, ky, kx);
      rows_.push_back(std::move(m));
    }
  }

  // out (+)= conv(x) (+ bias); x is [in x h x w], out is [out x h x w]
  void apply(const double* x, double* out, const double* bias, bool accumulate) {
    const std::size_t plane = h_ * w_;
    for (std::size_t y = 0; y < h_; ++y) {
      for (std::size_t xx = 0; xx < w_; ++xx) {
        double* d = padded_.data() + ((y + pad_) * wp_ + xx + pad_) * in_;
        const double* src = x + y * w_ + xx;
        for (std::size_t c = 0; c < in_; ++c) d[c] = src[c * plane];
      }
    }
    using Strided = Eigen::Map<const Eigen::MatrixXd, 0, Eigen::OuterStride<>>;
    for (std::size_t ky = 0; ky < k_; ++ky) {
      Strided cols(padded_.data() + ky * wp_ * in_, static_cast<Eigen::Index>(k_ * in_),
                   static_cast<Eigen::Index>(h_ * wp_), Eigen::OuterStride<>(static_cast<Eigen::Index>(in_)));
      if (ky == 0) prod_.noalias() = rows_[0] * cols;
      else prod_.noalias() += rows_[ky] * cols;
    }
    for (std::size_t o = 0; o < out_; ++o) {
      const double b = bias ? bias[o] : 0.0;
      double* dst = out + o * plane;
      for (std::size_t y = 0; y < h_; ++y) {
        for (std::size_t xx = 0; xx < w_; ++xx) {
          const double v = prod_(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(y * wp_ + xx)) + b;
          if (accumulate) dst[y * w_ + xx] += v;
          else dst[y * w_ + xx] = v;
        }
      }
    }
  }

 private:
  std::size_t in_, out_, h_, w_, k_, pad_, wp_;
  AlignedBuffer padded_;
  Eigen::MatrixXd prod_;
  std::vector<Eigen::MatrixXd> rows_;
};

}  // namespace

Var conv2d(Var x, Var w, Var bias, std::size_t stride) {
  Tape& tape = tape_of({x, w, bias});
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  if (stride != 1 && stride != 2) throw DimensionError("conv2d: stride must be 1 or 2");
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (ws[1] != xs[1]) {
    throw DimensionError("conv2d: input has " + std::to_string(xs[1]) + " channels, kernel " + to_string(ws) +
                         " expects " + std::to_string(ws[1]));
  }
  if (ws[2] != ws[3] || ws[2] % 2 == 0) throw DimensionError("conv2d: kernel must be square with odd size");
  if (bias.shape() != Shape{ws[0]}) throw DimensionError("conv2d: bias must have one entry per output channel");
  ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[2] / 2, stride, 0, 0};
  if (g.height < g.k || g.width < g.k) {
    throw DimensionError("conv2d: spatial extent smaller than the kernel in " + to_string(xs));
  }
  g.out_h = (g.height + 2 * g.pad - g.k) / stride + 1;
  g.out_w = (g.width + 2 * g.pad - g.k) / stride + 1;

  const bool direct = g.k == 1 && stride == 1;  // 1x1 kernel: the input already is the column matrix
  const std::size_t P = g.pixels(), K = g.patch();
  Tensor out({g.batch, g.cout, g.out_h, g.out_w});
  const std::size_t in_stride = g.cin * g.height * g.width;
  const auto wv = w.value().values();
  if (stride == 1) {
    ImplicitConv conv(g.cin, g.cout, g.height, g.width, g.k, [&](std::size_t o, std::size_t c, std::size_t ky, std::size_t kx) {
      return wv[((o * g.cin + c) * g.k + ky) * g.k + kx];
    });
    for (std::size_t n = 0; n < g.batch; ++n) {
      conv.apply(x.value().data() + n * in_stride, out.data() + n * g.cout * P, bias.value().data(), false);
    }
  } else {
    const Eigen::MatrixXd Wt = as_matrix(w.value(), g.cout, K);
    auto Bv = as_matrix(bias.value(), g.cout, 1);
    AlignedBuffer col(K * P);
    Eigen::MatrixXd prod(g.cout, P);
    for (std::size_t n = 0; n < g.batch; ++n) {
      im2col_patch_major(g, x.value().data() + n * in_stride, col.data());
      prod.noalias() = Wt * Eigen::Map<const Eigen::MatrixXd>(col.data(), static_cast<Eigen::Index>(K),
                                                             static_cast<Eigen::Index>(P));
      auto dst = as_matrix(out.values(), g.cout, P, n * g.cout * P);
      dst = prod;
      dst.colwise() += Bv.col(0);
    }
  }

  return tape.record("conv2d", std::move(out), {x, w, bias}, [x, w, bias, g, direct](Tape& t, std::size_t o) {
    const std::size_t P = g.pixels(), K = g.patch();
    const std::size_t in_stride = g.cin * g.height * g.width;
    const auto up = t.upstream(o);
    auto gx = t.grad_buffer(x.id());
    auto gw = t.grad_buffer(w.id());
    auto gb = t.grad_buffer(bias.id());
    auto Wm = as_matrix(t.value(w), g.cout, K);
    AlignedBuffer col(direct ? 0 : K * P);
    // stride 1: the input gradient is a same-padded convolution of the
    // upstream gradient with the spatially flipped, transposed kernel
    std::optional<ImplicitConv> flipped;
    const auto wv = t.value(w).values();
    if (!gx.empty() && g.stride == 1) {
      flipped.emplace(g.cout, g.cin, g.height, g.width, g.k, [&](std::size_t c, std::size_t o, std::size_t ky, std::size_t kx) {
        return wv[((o * g.cin + c) * g.k + (g.k - 1 - ky)) * g.k + (g.k - 1 - kx)];
      });
    }
    AlignedBuffer dcol(flipped || gx.empty() ? 0 : K * P);
    for (std::size_t n = 0; n < g.batch; ++n) {
      auto G = as_matrix(up, g.cout, P, n * g.cout * P);
      if (!gb.empty()) as_matrix(gb, g.cout, 1) += G.rowwise().sum();
      const double* xin = t.value(x).data() + n * in_stride;
      if (!gw.empty()) {
        if (direct) {
          as_matrix(gw, g.cout, K).noalias() += G * as_matrix(std::span<const double>(xin, K * P), K, P).transpose();
        } else {
          im2col(g, xin, col.data());
          as_matrix(gw, g.cout, K).noalias() += G * as_matrix(std::span<const double>(col), K, P).transpose();
        }
      }
      if (!gx.empty()) {
        if (flipped) {
          flipped->apply(up.data() + n * g.cout * P, gx.data() + n * in_stride, nullptr, true);
        } else {
          as_matrix(std::span<double>(dcol), K, P).noalias() = Wm.transpose() * G;
          col2im(g, dcol.data(), gx.data() + n * in_stride);
        }
      }
    }
  });
}

Var upsample_nearest(Var x) {
  Tape& tape = tape_of({x});
  require_rank(x, 4, "upsample_nearest");
  const Shape& s = x.shape();
  const std::size_t planes = s[0] * s[1], H = s[2], W = s[3];
  Tensor out({s[0], s[1], 2 * H, 2 * W});
  const double* src = x.value().data();
  double* dst = out.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < H; ++y) {
      double* r0 = dst + (p * 2 * H + 2 * y) * 2 * W;
      double* r1 = r0 + 2 * W;
      const double* sr = src + (p * H + y) * W;
      for (std::size_t c = 0; c < W; ++c) {
        r0[2 * c] = r0[2 * c + 1] = r1[2 * c] = r1[2 * c + 1] = sr[c];
      }
    }
  }
  return tape.record("upsample_nearest", std::move(out), {x}, [x, planes, H, W](Tape& t, std::size_t o) {
    auto gx = t.grad_buffer(x.id());
    if (gx.empty()) return;
    const auto g = t.upstream(o);
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t y = 0; y < H; ++y) {
        const double* r0 = g.data() + (p * 2 * H + 2 * y) * 2 * W;
        const double* r1 = r0 + 2 * W;
        double* dr = gx.data() + (p * H + y) * W;
        for (std::size_t c = 0; c < W; ++c) dr[c] += r0[2 * c] + r0[2 * c + 1] + r1[2 * c] + r1[2 * c + 1];
      }
    }
  });
}

}  // namespace odn::ops
