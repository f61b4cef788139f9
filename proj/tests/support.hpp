#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

#include "patchwork/autodiff.hpp"
#include "patchwork/rng.hpp"
#include "patchwork/tensor.hpp"

namespace testsupport {

using patchwork::real_t;
using patchwork::Shape;
using patchwork::Tape;
using patchwork::Tensor;

inline Tensor random_tensor(Shape shape, std::uint64_t seed, real_t lo = -1, real_t hi = 1) {
    patchwork::Rng rng(seed);
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<real_t>(rng.uniform(lo, hi));
    return t;
}

// Central finite differences against the analytic gradients of `f`, which
// must rebuild its graph from the given leaves on every call. Returns the
// worst relative error over all elements of all leaves.
inline double gradcheck(const std::function<Tensor(Tape*)>& f, std::vector<Tensor*> leaves,
                        double h = 1e-5) {
    Tape tape;
    for (auto* leaf : leaves) {
        leaf->clear_trace();
        tape.watch(*leaf);
    }
    Tensor loss = f(&tape);
    tape.backward(loss);

    std::vector<std::vector<real_t>> analytic;
    analytic.reserve(leaves.size());
    for (auto* leaf : leaves) {
        auto g = tape.grad(*leaf);
        analytic.emplace_back(g.begin(), g.end());
    }
    for (auto* leaf : leaves) leaf->clear_trace();

    double worst = 0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto vals = leaves[li]->values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const real_t keep = vals[i];
            vals[i] = keep + static_cast<real_t>(h);
            const double up = f(nullptr).item();
            vals[i] = keep - static_cast<real_t>(h);
            const double dn = f(nullptr).item();
            vals[i] = keep;
            const double numeric = (up - dn) / (2 * h);
            const double a = analytic[li][i];
            const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

// Quadratic-time DFT, the oracle for the fast transform. Forward sign is
// negative; inverse includes the 1/N factor.
inline std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x, bool inverse) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0, 0);
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k * j) / static_cast<double>(n);
            acc += x[j] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = inverse ? acc / static_cast<double>(n) : acc;
    }
    return out;
}

inline double max_abs_diff(std::span<const real_t> a, std::span<const real_t> b) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
    return worst;
}

} // namespace testsupport
