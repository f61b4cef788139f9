#pragma once

#include <complex>
#include <vector>

#include "patchwork/ndindex.hpp"

namespace patchwork {

using cplx = std::complex<double>;

// 1-D transform of any length (radix-2 when possible, Bluestein otherwise).
// Forward is unnormalized; inverse carries the full 1/N factor.
void fft(std::vector<cplx>& v, bool inverse);

// Separable transform along every axis of a row-major grid. Same scaling
// convention: inverse divides by the total element count.
void fft_nd(std::vector<cplx>& grid, const Coords& extents, bool inverse);

} // namespace patchwork
