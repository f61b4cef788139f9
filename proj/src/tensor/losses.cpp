#include "patchwork/losses.hpp"

#include <algorithm>
#include <cmath>

namespace patchwork {

namespace {

constexpr real_t kDiceEps = real_t(1e-7);
constexpr real_t kLogClip = real_t(1e-12);

void require_same_shape(const Tensor& pred, const Tensor& target, const char* what) {
    if (pred.shape() != target.shape())
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(pred.shape()) +
                             " vs " + shape_str(target.shape()));
}

} // namespace

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "dice") return LossKind::dice;
    if (name == "mse") return LossKind::mse;
    if (name == "cross_entropy") return LossKind::cross_entropy;
    throw ConfigError("loss: unknown kind '" + name + "', expected dice|mse|cross_entropy");
}

std::string loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::dice: return "dice";
        case LossKind::mse: return "mse";
        case LossKind::cross_entropy: return "cross_entropy";
    }
    return "?";
}

Tensor dice_loss(const Tensor& pred, const Tensor& target, Tape* tape) {
    require_same_shape(pred, target, "dice");
    const auto& s = pred.shape();
    if (s.size() < 2) throw DimensionError("dice: need [batch, classes, ...], got " + shape_str(s));
    const auto B = s[0], C = s[1];
    std::int64_t inner = 1;
    for (std::size_t i = 2; i < s.size(); ++i) inner *= s[i];

    const real_t* p = pred.values().data();
    const real_t* t = target.values().data();
    for (std::int64_t i = 0; i < pred.size(); ++i)
        if (p[i] < real_t(-1e-9) || p[i] > real_t(1) + real_t(1e-9))
            throw ValidationError("dice: prediction value " + std::to_string(p[i]) + " outside [0,1]");

    // Per-class sums pooled over batch and space.
    std::vector<real_t> num(static_cast<std::size_t>(C)), den(static_cast<std::size_t>(C));
    for (std::int64_t c = 0; c < C; ++c) {
        real_t pg = 0, ps = 0, ts = 0;
        for (std::int64_t b = 0; b < B; ++b) {
            const auto base = (b * C + c) * inner;
            for (std::int64_t i = 0; i < inner; ++i) {
                pg += p[base + i] * t[base + i];
                ps += p[base + i];
                ts += t[base + i];
            }
        }
        num[static_cast<std::size_t>(c)] = 2 * pg + kDiceEps;
        den[static_cast<std::size_t>(c)] = ps + ts + kDiceEps;
    }
    real_t dice = 0;
    for (std::int64_t c = 0; c < C; ++c) dice += num[static_cast<std::size_t>(c)] / den[static_cast<std::size_t>(c)];
    Tensor out = Tensor::scalar(real_t(1) - dice / static_cast<real_t>(C));

    if (tape) {
        Tensor tc = target;
        tape->record_op({pred}, out, [tc, num, den, B, C, inner](std::span<const real_t> og,
                                                                 const std::vector<std::span<real_t>>& in_grads) {
            if (in_grads[0].empty()) return;
            real_t* gp = in_grads[0].data();
            const real_t* t = tc.values().data();
            const real_t g0 = og[0];
#pragma omp parallel for schedule(static)
            for (std::int64_t c = 0; c < C; ++c) {
                const real_t n = num[static_cast<std::size_t>(c)];
                const real_t d = den[static_cast<std::size_t>(c)];
                for (std::int64_t b = 0; b < B; ++b) {
                    const auto base = (b * C + c) * inner;
                    for (std::int64_t i = 0; i < inner; ++i)
                        gp[base + i] += -g0 / static_cast<real_t>(C) * (2 * t[base + i] * d - n) / (d * d);
                }
            }
        });
    }
    return out;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target, Tape* tape) {
    require_same_shape(pred, target, "mse");
    const auto n = pred.size();
    const real_t* p = pred.values().data();
    const real_t* t = target.values().data();
    real_t acc = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const real_t d = p[i] - t[i];
        acc += d * d;
    }
    Tensor out = Tensor::scalar(acc / static_cast<real_t>(n));

    if (tape) {
        Tensor pc = pred;
        Tensor tc = target;
        tape->record_op({pred}, out, [pc, tc, n](std::span<const real_t> og,
                                                 const std::vector<std::span<real_t>>& in_grads) {
            if (in_grads[0].empty()) return;
            real_t* gp = in_grads[0].data();
            const real_t* p = pc.values().data();
            const real_t* t = tc.values().data();
            const real_t scale = og[0] * 2 / static_cast<real_t>(n);
#pragma omp parallel for schedule(static)
            for (std::int64_t i = 0; i < n; ++i) gp[i] += scale * (p[i] - t[i]);
        });
    }
    return out;
}

Tensor cross_entropy_loss(const Tensor& pred, const Tensor& target, Tape* tape) {
    require_same_shape(pred, target, "cross_entropy");
    if (pred.shape().size() != 2)
        throw DimensionError("cross_entropy: need [batch, classes], got " + shape_str(pred.shape()));
    const auto B = pred.shape()[0];
    const auto n = pred.size();
    const real_t* p = pred.values().data();
    const real_t* t = target.values().data();
    real_t acc = 0;
    for (std::int64_t i = 0; i < n; ++i) acc -= t[i] * std::log(std::max(p[i], kLogClip));
    Tensor out = Tensor::scalar(acc / static_cast<real_t>(B));

    if (tape) {
        Tensor pc = pred;
        Tensor tc = target;
        tape->record_op({pred}, out, [pc, tc, B, n](std::span<const real_t> og,
                                                    const std::vector<std::span<real_t>>& in_grads) {
            if (in_grads[0].empty()) return;
            real_t* gp = in_grads[0].data();
            const real_t* p = pc.values().data();
            const real_t* t = tc.values().data();
            const real_t scale = og[0] / static_cast<real_t>(B);
#pragma omp parallel for schedule(static)
            for (std::int64_t i = 0; i < n; ++i)
                gp[i] += -scale * t[i] / std::max(p[i], kLogClip);
        });
    }
    return out;
}

Tensor compute_loss(const Tensor& pred, const Tensor& target, LossKind kind, Tape* tape) {
    switch (kind) {
        case LossKind::dice: return dice_loss(pred, target, tape);
        case LossKind::mse: return mse_loss(pred, target, tape);
        case LossKind::cross_entropy: return cross_entropy_loss(pred, target, tape);
    }
    throw ContractError("loss: unhandled kind");
}

} // namespace patchwork
