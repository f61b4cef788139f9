#include "patchwork/fft.hpp"

#include <cmath>
#include <numbers>

namespace patchwork {

namespace {

bool is_pow2(std::size_t n) { return n && (n & (n - 1)) == 0; }

// Iterative radix-2, in place, unnormalized. sign -1 = forward.
void fft_pow2(std::vector<cplx>& v, double sign) {
    const std::size_t n = v.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(v[i], v[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
        const cplx wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cplx u = v[i + k];
                const cplx t = v[i + k + len / 2] * w;
                v[i + k] = u + t;
                v[i + k + len / 2] = u - t;
                w *= wl;
            }
        }
    }
}

// Bluestein's chirp-z for arbitrary lengths, unnormalized.
void fft_bluestein(std::vector<cplx>& v, double sign) {
    const std::size_t n = v.size();
    std::size_t m = 1;
    while (m < 2 * n - 1) m <<= 1;

    // chirp[k] = exp(sign * i * pi * k^2 / n); k^2 taken mod 2n keeps the
    // argument small for accuracy.
    std::vector<cplx> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double q = static_cast<double>((static_cast<unsigned long long>(k) * k) % (2 * n));
        const double ang = sign * std::numbers::pi * q / static_cast<double>(n);
        chirp[k] = cplx(std::cos(ang), std::sin(ang));
    }

    std::vector<cplx> a(m, cplx(0, 0)), b(m, cplx(0, 0));
    for (std::size_t k = 0; k < n; ++k) a[k] = v[k] * chirp[k];
    b[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) b[k] = b[m - k] = std::conj(chirp[k]);

    fft_pow2(a, -1.0);
    fft_pow2(b, -1.0);
    for (std::size_t k = 0; k < m; ++k) a[k] *= b[k];
    fft_pow2(a, 1.0);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < n; ++k) v[k] = a[k] * inv_m * chirp[k];
}

void fft_dir(std::vector<cplx>& v, double sign) {
    if (v.size() < 2) return;
    if (is_pow2(v.size()))
        fft_pow2(v, sign);
    else
        fft_bluestein(v, sign);
}

} // namespace

void fft(std::vector<cplx>& v, bool inverse) {
    fft_dir(v, inverse ? 1.0 : -1.0);
    if (inverse) {
        const double s = 1.0 / static_cast<double>(v.size());
        for (auto& z : v) z *= s;
    }
}

void fft_nd(std::vector<cplx>& grid, const Coords& extents, bool inverse) {
    if (product(extents) != static_cast<std::int64_t>(grid.size()))
        throw DimensionError("fft: grid length does not match extents");
    const auto strides = row_major_strides(extents);
    const double sign = inverse ? 1.0 : -1.0;

    for (std::size_t axis = 0; axis < extents.size(); ++axis) {
        const auto n = extents[axis];
        if (n < 2) continue;
        const auto stride = strides[axis];
        const auto lines = static_cast<std::int64_t>(grid.size()) / n;
        std::vector<cplx> line(static_cast<std::size_t>(n));
        for (std::int64_t l = 0; l < lines; ++l) {
            // decompose line index into coords with this axis removed
            std::int64_t rem = l, base = 0;
            for (std::size_t a = extents.size(); a-- > 0;) {
                if (a == axis) continue;
                base += (rem % extents[a]) * strides[a];
                rem /= extents[a];
            }
            for (std::int64_t i = 0; i < n; ++i) line[static_cast<std::size_t>(i)] = grid[static_cast<std::size_t>(base + i * stride)];
            fft_dir(line, sign);
            for (std::int64_t i = 0; i < n; ++i) grid[static_cast<std::size_t>(base + i * stride)] = line[static_cast<std::size_t>(i)];
        }
    }
    if (inverse) {
        const double s = 1.0 / static_cast<double>(grid.size());
        for (auto& z : grid) z *= s;
    }
}

} // namespace patchwork
