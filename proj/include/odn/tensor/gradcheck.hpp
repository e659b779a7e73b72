#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "odn/core/rng.hpp"
#include "odn/tensor/tape.hpp"

namespace odn {

/// Largest |analytic - central| / max(1e-8, |analytic| + |central|) over all
/// coordinates of x. `f` must build a scalar on the tape it is given.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h = 1e-5);

/// Same measure for a model loss over its parameters. When `max_per_param`
/// is nonzero, that many seeded coordinates are probed per parameter.
double grad_check_parameters(const std::function<Var(Tape&)>& loss, std::span<Parameter* const> params,
                             double h = 1e-5, std::size_t max_per_param = 0, std::uint64_t seed = 0);

}  // namespace odn
