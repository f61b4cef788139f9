#pragma once

#include <cstdint>
#include <vector>

#include "patchwork/errors.hpp"

namespace patchwork {

using Coords = std::vector<std::int64_t>;

// Row-major strides: stride of the last axis is 1.
inline Coords row_major_strides(const Coords& extents) {
    Coords s(extents.size(), 1);
    for (std::size_t i = extents.size(); i-- > 1;)
        s[i - 1] = s[i] * extents[i];
    return s;
}

inline std::int64_t flat_offset(const Coords& coords, const Coords& strides) {
    std::int64_t off = 0;
    for (std::size_t i = 0; i < coords.size(); ++i) off += coords[i] * strides[i];
    return off;
}

inline Coords unflatten(std::int64_t flat, const Coords& extents) {
    Coords c(extents.size(), 0);
    for (std::size_t i = extents.size(); i-- > 0;) {
        c[i] = flat % extents[i];
        flat /= extents[i];
    }
    return c;
}

// Odometer increment over an extent box; returns false after the last coord.
inline bool advance(Coords& coords, const Coords& extents) {
    for (std::size_t i = coords.size(); i-- > 0;) {
        if (++coords[i] < extents[i]) return true;
        coords[i] = 0;
    }
    return false;
}

// Advances every axis except the last; callers process the last axis as a
// contiguous strip. coords.back() is left untouched.
inline bool advance_outer(Coords& coords, const Coords& extents) {
    for (std::size_t i = coords.size() - 1; i-- > 0;) {
        if (++coords[i] < extents[i]) return true;
        coords[i] = 0;
    }
    return false;
}

inline std::int64_t product(const Coords& extents) {
    std::int64_t n = 1;
    for (auto e : extents) n *= e;
    return n;
}

} // namespace patchwork
