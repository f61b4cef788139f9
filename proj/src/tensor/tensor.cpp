#include "patchwork/tensor.hpp"

#include <sstream>

namespace patchwork {

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ",";
        out << shape[i];
    }
    out << "]";
    return out.str();
}

} // namespace patchwork
