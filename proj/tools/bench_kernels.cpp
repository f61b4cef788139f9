#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include "patchwork/kernels.hpp"
#include "patchwork/reference.hpp"
#include "patchwork/rng.hpp"

using namespace patchwork;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<real_t>(rng.uniform(-1.0, 1.0));
    return t;
}

double time_best_ms(const std::function<Tensor()>& fn, int reps) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        Tensor out = fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
        if (out.size() == 0) std::puts("unexpected empty output");
    }
    return best;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    auto av = a.values();
    auto bv = b.values();
    double worst = 0;
    for (std::size_t i = 0; i < av.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(av[i]) - static_cast<double>(bv[i])));
    return worst;
}

void report(const std::string& name, const std::string& shape, const std::function<Tensor()>& parallel,
            const std::function<Tensor()>& serial, int reps) {
    const Tensor a = parallel();
    const Tensor b = serial();
    const double diff = max_abs_diff(a, b);
    const double par_ms = time_best_ms(parallel, reps);
    const double ser_ms = time_best_ms(serial, reps);
    std::printf("%-16s %-28s %10.2f %10.2f %8.2fx   %.3g\n", name.c_str(), shape.c_str(), ser_ms, par_ms,
                ser_ms / par_ms, diff);
}

} // namespace

int main() {
    std::printf("%-16s %-28s %10s %10s %9s   %s\n", "op", "input", "serial ms", "openmp ms", "speedup",
                "max |diff|");

    {
        Tensor x = random_tensor({2, 8, 64, 64}, 1);
        Tensor w = random_tensor({16, 8, 3, 3}, 2);
        Tensor b = random_tensor({16}, 3);
        const Coords stride{1, 1}, pad{1, 1};
        report("conv2d", "[2,8,64,64] k3", [&] { return ops::conv_nd(x, w, b, stride, pad, nullptr); },
               [&] { return ref::conv_nd(x, w, b, stride, pad); }, 5);
    }
    {
        Tensor x = random_tensor({1, 4, 16, 16, 16}, 4);
        Tensor w = random_tensor({8, 4, 3, 3, 3}, 5);
        Tensor b = random_tensor({8}, 6);
        const Coords stride{1, 1, 1}, pad{1, 1, 1};
        report("conv3d", "[1,4,16,16,16] k3", [&] { return ops::conv_nd(x, w, b, stride, pad, nullptr); },
               [&] { return ref::conv_nd(x, w, b, stride, pad); }, 3);
    }
    {
        Tensor x = random_tensor({2, 16, 32, 32}, 7);
        Tensor w = random_tensor({16, 8, 2, 2}, 8);
        const Coords stride{2, 2};
        report("tconv2d", "[2,16,32,32] k2 s2", [&] { return ops::transpose_conv_nd(x, w, stride, nullptr); },
               [&] { return ref::transpose_conv_nd(x, w, stride); }, 5);
    }
    {
        Tensor x = random_tensor({2, 16, 64, 64}, 9);
        const Coords window{2, 2}, stride{2, 2};
        report("maxpool2d", "[2,16,64,64] w2 s2",
               [&] { return ops::pool_nd(x, ops::PoolKind::max, window, stride, nullptr); },
               [&] { return ref::pool_nd(x, ops::PoolKind::max, window, stride); }, 5);
        report("avgpool2d", "[2,16,64,64] w2 s2",
               [&] { return ops::pool_nd(x, ops::PoolKind::average, window, stride, nullptr); },
               [&] { return ref::pool_nd(x, ops::PoolKind::average, window, stride); }, 5);
    }
    {
        Tensor x = random_tensor({16, 2048}, 10);
        Tensor w = random_tensor({2048, 256}, 11);
        Tensor b = random_tensor({256}, 12);
        report("dense", "[16,2048]x[2048,256]", [&] { return ops::dense(x, w, b, nullptr); },
               [&] { return ref::dense(x, w, b); }, 5);
    }
    return 0;
}
