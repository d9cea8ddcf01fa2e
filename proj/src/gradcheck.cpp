#include "unisar/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace unisar {

GradCheckResult grad_check(const LossFunction& loss, ParameterStore& params, const GradCheckOptions& options) {
    params.zero_grad();
    const double base = loss(true);
    if (!std::isfinite(base)) throw std::domain_error("loss is not finite at the probe point");
    if (options.after_gradient) options.after_gradient(params);

    GradCheckResult result;
    const double eps = options.eps;
    for (auto& p : params) {
        Matrix& value = p->value;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double orig = value[i];
            auto central = [&](double h) {
                value[i] = orig + h;
                const double plus = loss(false);
                value[i] = orig - h;
                const double minus = loss(false);
                value[i] = orig;
                return (plus - minus) / (2.0 * h);
            };
            const double numeric =
                options.extrapolate ? (4.0 * central(eps) - central(2.0 * eps)) / 3.0 : central(eps);
            const double analytic = p->grad[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            const double rel = std::abs(analytic - numeric) / denom;
            ++result.entries_checked;
            if (!(rel <= result.max_relative_error)) {
                result.max_relative_error = rel;
                result.worst_parameter = p->name;
                result.worst_index = i;
                result.worst_analytic = analytic;
                result.worst_numeric = numeric;
            }
        }
    }
    return result;
}

GradCheckResult grad_check(const std::function<Var(Tape&)>& build, ParameterStore& params,
                           const GradCheckOptions& options) {
    LossFunction fn = [&build](bool accumulate) {
        Tape tape(accumulate);
        Var out = build(tape);
        const double value = out.scalar();
        if (accumulate) tape.backward(out);
        return value;
    };
    return grad_check(fn, params, options);
}

} // namespace unisar
