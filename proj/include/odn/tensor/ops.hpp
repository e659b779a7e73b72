#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "odn/tensor/tape.hpp"

namespace odn::ops {

/// [m x k] . [k x n] -> [m x n]
Var matmul(Var a, Var b);
/// [B x m x k] . [B x k x n] -> [B x m x n]; with transpose_b the right
/// operand is [B x n x k].
Var batched_matmul(Var a, Var b, bool transpose_b = false);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
/// Adds `bias` (length = last extent of x) to every row of x.
Var add_bias(Var x, Var bias);

enum class Unary { relu, tanh, sigmoid, exp, log, abs, square };
Var unary_apply(Var x, Unary f);
inline Var relu(Var x) { return unary_apply(x, Unary::relu); }
inline Var tanh(Var x) { return unary_apply(x, Unary::tanh); }
inline Var sigmoid(Var x) { return unary_apply(x, Unary::sigmoid); }
inline Var exp(Var x) { return unary_apply(x, Unary::exp); }
inline Var log(Var x) { return unary_apply(x, Unary::log); }
inline Var abs(Var x) { return unary_apply(x, Unary::abs); }
inline Var square(Var x) { return unary_apply(x, Unary::square); }

Var sum(Var x);
Var mean(Var x);

Var reshape(Var x, Shape shape);
Var permute(Var x, std::vector<std::size_t> axes);
Var concat(std::span<const Var> xs, std::size_t axis);

/// One GRU step with gates packed [update | reset | candidate]:
///   z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br)
///   n = tanh(x Wn + (r*h) Un + bn), h' = (1 - z) * h + z * n
/// x: [b x d_in], h: [b x d_h], w: [d_in x 3d_h], u: [d_h x 3d_h], bias: [3d_h].
Var gru_cell(Var x, Var h, Var w, Var u, Var bias);

/// Cross-correlation of x [b x c_in x H x W] with w [c_out x c_in x k x k],
/// zero padding k/2, stride 1 or 2; bias [c_out].
Var conv2d(Var x, Var w, Var bias, std::size_t stride = 1);

/// Nearest-neighbour 2x upsampling of [b x c x H x W].
Var upsample_nearest(Var x);

}  // namespace odn::ops
