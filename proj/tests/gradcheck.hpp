#ifndef BITSTAIN_TESTS_GRADCHECK_HPP
#define BITSTAIN_TESTS_GRADCHECK_HPP

// Central finite-difference gradient checking, independent of the tape.

#include <cmath>
#include <functional>
#include <vector>

#include "bitstain/core/tensor.hpp"

namespace bitstain::testing {

struct GradCheckResult {
    int checked = 0;
    int passed = 0;
    double worst = 0.0;  // worst relative error seen
    bool ok(double need_fraction = 1.0) const {
        return checked > 0 && passed >= static_cast<int>(std::ceil(need_fraction * checked));
    }
};

// Compares tape gradients of `loss_fn()` against central differences for the
// listed leaf tensors. `loss_fn` must rebuild the graph from the leaves on
// every call. Checks every entry of every leaf unless `max_per_leaf` > 0.
inline GradCheckResult gradcheck(const std::function<core::Tensor()>& loss_fn,
                                 const std::vector<core::Tensor>& leaves,
                                 double step = 1e-5, double rel_tol = 1e-3,
                                 double abs_floor = 1e-8, int max_per_leaf = 0,
                                 unsigned stride_seed = 1) {
    GradCheckResult res;
    core::Tensor loss = loss_fn();
    core::zero_grad(leaves);
    core::backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (const auto& leaf : leaves) analytic.push_back(leaf.grad());

    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& vals = leaves[li].raw_values();
        const std::size_t n = vals.size();
        std::size_t stride = 1;
        if (max_per_leaf > 0 && n > static_cast<std::size_t>(max_per_leaf)) {
            stride = n / static_cast<std::size_t>(max_per_leaf);
            if (stride == 0) stride = 1;
        }
        for (std::size_t i = stride_seed % stride; i < n; i += stride) {
            const double keep = vals[i];
            vals[i] = keep + step;
            const double up = loss_fn().item();
            vals[i] = keep - step;
            const double down = loss_fn().item();
            vals[i] = keep;
            const double fd = (up - down) / (2.0 * step);
            const double an = analytic[li][i];
            const double denom = std::max({std::abs(fd), std::abs(an), abs_floor});
            const double rel = std::abs(fd - an) / denom;
            res.checked += 1;
            if (rel <= rel_tol || std::abs(fd - an) <= abs_floor) res.passed += 1;
            if (rel > res.worst) res.worst = rel;
        }
    }
    return res;
}

}  // namespace bitstain::testing

#endif
