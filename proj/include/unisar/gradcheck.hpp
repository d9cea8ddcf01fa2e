#pragma once

#include "unisar/autograd.hpp"

#include <functional>
#include <string>

namespace unisar {

/// Evaluates a scalar loss at the current parameter values. When called with
/// `accumulate` set it must also add d(loss)/d(theta) into every Parameter::grad.
using LossFunction = std::function<double(bool accumulate)>;

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t entries_checked = 0;
};

struct GradCheckOptions {
    double eps = 1e-5;
    /// Use the Richardson estimate (4·D(eps) − D(2·eps)) / 3 instead of the
    /// plain central difference D(eps). Diagnostic only.
    bool extrapolate = false;
    /// Runs after the analytic gradient is collected; test hook for corrupting it.
    std::function<void(ParameterStore&)> after_gradient;
};

/// Compares reverse-mode gradients with central differences
/// (f(θ+eps) − f(θ−eps)) / (2·eps) for every entry of every parameter.
/// Relative error uses the denominator max(|analytic|, |numeric|, 1e-8).
/// Throws std::domain_error when the loss is not finite at the probe point.
GradCheckResult grad_check(const LossFunction& loss, ParameterStore& params, const GradCheckOptions& options = {});

/// Convenience overload for losses built on a single tape.
GradCheckResult grad_check(const std::function<Var(Tape&)>& build, ParameterStore& params,
                           const GradCheckOptions& options = {});

} // namespace unisar
