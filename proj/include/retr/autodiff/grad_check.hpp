// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "retr/autodiff/tape.hpp"

namespace retr::ad {

/// A scalar objective evaluated over a parameter list. The callable must
/// produce the same value whether the parameters are tape leaves or plain
/// constants; grad_check evaluates it both ways.
using ScalarFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients against central finite differences
/// (f(p+eps) - f(p-eps)) / 2eps for every entry of every parameter, and
/// returns the maximum of |g_ad - g_fd| / max(1, |g_fd|). eps must lie in
/// (0, 1e-2]. A non-finite objective at any probe throws, naming the
/// offending parameter and entry.
double grad_check(const ScalarFn& f, const std::vector<Tensor>& params, double eps);

}  // namespace retr::ad
