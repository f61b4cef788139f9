#include "patchwork/optim.hpp"

namespace patchwork {

void backward(Tape& tape, const Tensor& loss, ParamStore& params) {
    tape.backward(loss);
    for (auto& p : params.params()) {
        const auto g = tape.grad(p.value);
        for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
    }
}

void sgd_step(ParamStore& params, real_t lr, real_t momentum) {
    if (lr <= 0) throw ConfigError("sgd: learning rate must be > 0, got " + std::to_string(lr));
    if (momentum < 0 || momentum >= 1)
        throw ConfigError("sgd: momentum must be in [0,1), got " + std::to_string(momentum));
    for (auto& p : params.params()) {
        auto values = p.value.values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            p.momentum[i] = momentum * p.momentum[i] + p.grad[i];
            values[i] -= lr * p.momentum[i];
            p.grad[i] = 0;
        }
    }
}

} // namespace patchwork
