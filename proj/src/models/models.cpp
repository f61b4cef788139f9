#include "patchwork/models.hpp"

#include <cmath>
#include <vector>

#include "patchwork/rng.hpp"

namespace patchwork {

Architecture architecture_from_string(const std::string& name) {
    if (name == "unet") return Architecture::unet;
    if (name == "resunet") return Architecture::resunet;
    if (name == "uinc") return Architecture::uinc;
    if (name == "fcn") return Architecture::fcn;
    if (name == "vgg11") return Architecture::vgg11;
    if (name == "vgg13") return Architecture::vgg13;
    if (name == "vgg16") return Architecture::vgg16;
    if (name == "vgg19") return Architecture::vgg19;
    throw ConfigError("model: unknown architecture '" + name +
                      "', expected unet|resunet|uinc|fcn|vgg11|vgg13|vgg16|vgg19");
}

std::string architecture_name(Architecture a) {
    switch (a) {
        case Architecture::unet: return "unet";
        case Architecture::resunet: return "resunet";
        case Architecture::uinc: return "uinc";
        case Architecture::fcn: return "fcn";
        case Architecture::vgg11: return "vgg11";
        case Architecture::vgg13: return "vgg13";
        case Architecture::vgg16: return "vgg16";
        case Architecture::vgg19: return "vgg19";
    }
    return "?";
}

Task task_from_string(const std::string& name) {
    if (name == "segmentation") return Task::segmentation;
    if (name == "regression") return Task::regression;
    if (name == "classification") return Task::classification;
    throw ConfigError("task: unknown '" + name + "', expected segmentation|regression|classification");
}

std::string task_name(Task t) {
    switch (t) {
        case Task::segmentation: return "segmentation";
        case Task::regression: return "regression";
        case Task::classification: return "classification";
    }
    return "?";
}

FinalActivation final_activation_from_string(const std::string& name) {
    if (name == "softmax") return FinalActivation::softmax;
    if (name == "sigmoid") return FinalActivation::sigmoid;
    if (name == "none") return FinalActivation::none;
    throw ConfigError("model: unknown final_activation '" + name + "', expected softmax|sigmoid|none");
}

std::string final_activation_name(FinalActivation a) {
    switch (a) {
        case FinalActivation::softmax: return "softmax";
        case FinalActivation::sigmoid: return "sigmoid";
        case FinalActivation::none: return "none";
    }
    return "?";
}

namespace {

bool is_vgg(Architecture a) {
    return a == Architecture::vgg11 || a == Architecture::vgg13 ||
           a == Architecture::vgg16 || a == Architecture::vgg19;
}

bool is_encoder_decoder(Architecture a) { return !is_vgg(a); }

constexpr real_t kNormEps = real_t(1e-5);
constexpr real_t kBnMomentum = real_t(0.1);
constexpr real_t kLeakySlope = real_t(0.01);

using Layer = std::function<Tensor(const Tensor&, bool training, Tape*)>;

struct Builder {
    ParamStore* store;
    Rng rng;
    std::int64_t dims;

    Builder(ParamStore* s, std::uint64_t seed, std::int64_t d) : store(s), rng(seed), dims(d) {}

    Tensor kaiming(Shape shape, std::int64_t fan_in) {
        Tensor t(std::move(shape));
        const real_t limit = std::sqrt(real_t(6) / static_cast<real_t>(fan_in));
        for (auto& v : t.values()) v = static_cast<real_t>(rng.uniform(-limit, limit));
        return t;
    }

    Layer conv(const std::string& name, std::int64_t cin, std::int64_t cout,
               std::int64_t k, std::int64_t stride_v = 1, bool bias = true) {
        Shape ws{cout, cin};
        ws.insert(ws.end(), static_cast<std::size_t>(dims), k);
        std::int64_t fan_in = cin;
        for (std::int64_t d = 0; d < dims; ++d) fan_in *= k;
        store->add(name + ".w", kaiming(std::move(ws), fan_in));
        if (bias) store->add(name + ".b", Tensor({cout}, 0));
        const auto stride = ops::uniform_coords(dims, stride_v);
        const auto padding = ops::uniform_coords(dims, (k - 1) / 2);
        ParamStore* s = store;
        return [s, name, bias, stride, padding](const Tensor& x, bool, Tape* tape) {
            return ops::conv_nd(x, s->get(name + ".w").value,
                                bias ? s->get(name + ".b").value : Tensor{}, stride, padding, tape);
        };
    }

    Layer tconv(const std::string& name, std::int64_t cin, std::int64_t cout, std::int64_t k,
                std::int64_t stride_v) {
        Shape ws{cin, cout};
        ws.insert(ws.end(), static_cast<std::size_t>(dims), k);
        std::int64_t fan_in = cin;
        for (std::int64_t d = 0; d < dims; ++d) fan_in *= k;
        store->add(name + ".w", kaiming(std::move(ws), fan_in));
        const auto stride = ops::uniform_coords(dims, stride_v);
        ParamStore* s = store;
        return [s, name, stride](const Tensor& x, bool, Tape* tape) {
            return ops::transpose_conv_nd(x, s->get(name + ".w").value, stride, tape);
        };
    }

    Layer inorm(const std::string& name, std::int64_t c) {
        store->add(name + ".g", Tensor({c}, 1));
        store->add(name + ".b", Tensor({c}, 0));
        ParamStore* s = store;
        return [s, name](const Tensor& x, bool, Tape* tape) {
            return ops::instance_norm(x, s->get(name + ".g").value, s->get(name + ".b").value, kNormEps, tape);
        };
    }

    Layer bnorm(const std::string& name, std::int64_t c) {
        store->add(name + ".g", Tensor({c}, 1));
        store->add(name + ".b", Tensor({c}, 0));
        auto& rv = store->buffer(name + ".rv", static_cast<std::size_t>(c));
        std::fill(rv.begin(), rv.end(), real_t(1));
        store->buffer(name + ".rm", static_cast<std::size_t>(c));
        ParamStore* s = store;
        const auto n = static_cast<std::size_t>(c);
        return [s, name, n](const Tensor& x, bool training, Tape* tape) {
            return ops::batch_norm(x, s->get(name + ".g").value, s->get(name + ".b").value,
                                   s->buffer(name + ".rm", n), s->buffer(name + ".rv", n),
                                   kBnMomentum, kNormEps, training, tape);
        };
    }
};

Tensor leaky(const Tensor& x, Tape* tape) { return ops::leaky_relu(x, kLeakySlope, tape); }

// Two conv+norm+activation units; the residual variant re-adds the block
// input (1x1-projected when channel counts differ) before the last activation.
Layer unet_block(Builder& b, const std::string& name, std::int64_t cin, std::int64_t cout, bool residual) {
    auto c1 = b.conv(name + ".c1", cin, cout, 3);
    auto n1 = b.inorm(name + ".n1", cout);
    auto c2 = b.conv(name + ".c2", cout, cout, 3);
    auto n2 = b.inorm(name + ".n2", cout);
    if (!residual) {
        return [c1, n1, c2, n2](const Tensor& x, bool t, Tape* tape) {
            auto h = leaky(n1(c1(x, t, tape), t, tape), tape);
            return leaky(n2(c2(h, t, tape), t, tape), tape);
        };
    }
    Layer proj;
    if (cin != cout) proj = b.conv(name + ".proj", cin, cout, 1);
    return [c1, n1, c2, n2, proj](const Tensor& x, bool t, Tape* tape) {
        auto h = leaky(n1(c1(x, t, tape), t, tape), tape);
        h = n2(c2(h, t, tape), t, tape);
        auto shortcut = proj ? proj(x, t, tape) : x;
        return leaky(ops::add(h, shortcut, tape), tape);
    };
}

// Parallel 1x1 / 3x3 / 5x5 conv paths concatenated channel-wise. Each path
// gets cout/3 channels, remainder to the 3x3 path; paths with zero channels
// are dropped for tiny filter counts.
Layer inception_block(Builder& b, const std::string& name, std::int64_t cin, std::int64_t cout) {
    const std::int64_t c1 = cout / 3;
    const std::int64_t c5 = cout / 3;
    const std::int64_t c3 = cout - c1 - c5;
    struct Path {
        Layer conv, norm;
    };
    std::vector<Path> paths;
    const std::int64_t ks[] = {1, 3, 5};
    const std::int64_t cs[] = {c1, c3, c5};
    for (int p = 0; p < 3; ++p) {
        if (cs[p] == 0) continue;
        Path path;
        path.conv = b.conv(name + ".p" + std::to_string(ks[p]) + ".c", cin, cs[p], ks[p]);
        path.norm = b.inorm(name + ".p" + std::to_string(ks[p]) + ".n", cs[p]);
        paths.push_back(std::move(path));
    }
    return [paths](const Tensor& x, bool t, Tape* tape) {
        std::vector<Tensor> outs;
        outs.reserve(paths.size());
        for (const auto& p : paths) outs.push_back(leaky(p.norm(p.conv(x, t, tape), t, tape), tape));
        return outs.size() == 1 ? outs[0] : ops::concat(outs, 1, tape);
    };
}

Tensor apply_final(const Tensor& x, FinalActivation act, Tape* tape) {
    switch (act) {
        case FinalActivation::softmax: return ops::softmax(x, 1, tape);
        case FinalActivation::sigmoid: return ops::sigmoid(x, tape);
        case FinalActivation::none: return x;
    }
    return x;
}

void check_input(const Tensor& x, const ArchSpec& spec, bool check_divisibility) {
    if (static_cast<std::int64_t>(x.shape().size()) != spec.dims + 2)
        throw DimensionError("model: expected rank " + std::to_string(spec.dims + 2) +
                             " input [batch, channels, spatial...], got " + shape_str(x.shape()));
    if (x.shape()[1] != spec.in_channels)
        throw DimensionError("model: expected " + std::to_string(spec.in_channels) +
                             " input channels, got " + std::to_string(x.shape()[1]));
    if (check_divisibility) {
        const std::int64_t div = std::int64_t(1) << (spec.depth - 1);
        for (std::size_t a = 2; a < x.shape().size(); ++a)
            if (x.shape()[a] % div != 0)
                throw ConfigError("model: spatial extent " + std::to_string(x.shape()[a]) +
                                  " of axis " + std::to_string(a - 2) + " must be divisible by " +
                                  std::to_string(div) + " (2^(depth-1))");
    }
}

using BlockFn = Layer (*)(Builder&, const std::string&, std::int64_t, std::int64_t, bool);

ModelGraph build_encoder_decoder(const ArchSpec& spec, Task task, std::uint64_t seed) {
    ModelGraph m;
    m.spec = spec;
    m.task = task;
    m.params = std::make_unique<ParamStore>();
    Builder b(m.params.get(), seed, spec.dims);

    const bool residual = spec.architecture == Architecture::resunet;
    const bool inception = spec.architecture == Architecture::uinc;
    const bool fcn = spec.architecture == Architecture::fcn;

    auto make_block = [&](const std::string& name, std::int64_t cin, std::int64_t cout) {
        return inception ? inception_block(b, name, cin, cout) : unet_block(b, name, cin, cout, residual);
    };

    std::vector<std::int64_t> chans(static_cast<std::size_t>(spec.depth));
    for (std::int64_t i = 0; i < spec.depth; ++i) chans[static_cast<std::size_t>(i)] = spec.base_filters << i;

    std::vector<Layer> enc;
    for (std::int64_t i = 0; i < spec.depth; ++i)
        enc.push_back(make_block("enc" + std::to_string(i),
                                 i == 0 ? spec.in_channels : chans[static_cast<std::size_t>(i - 1)],
                                 chans[static_cast<std::size_t>(i)]));

    std::vector<Layer> ups, dec;
    std::int64_t head_in = 0;
    if (fcn) {
        for (auto c : chans) head_in += c;
    } else {
        for (std::int64_t i = spec.depth - 2; i >= 0; --i) {
            ups.push_back(b.tconv("dec" + std::to_string(i) + ".up", chans[static_cast<std::size_t>(i + 1)],
                                  chans[static_cast<std::size_t>(i)], 2, 2));
            dec.push_back(make_block("dec" + std::to_string(i), 2 * chans[static_cast<std::size_t>(i)],
                                     chans[static_cast<std::size_t>(i)]));
        }
        head_in = chans[0];
    }
    auto head = b.conv("head", head_in, spec.classes, 1);

    const auto dims = spec.dims;
    const auto depth = spec.depth;
    const auto final_act = spec.final_activation;
    const auto arch_spec = spec;
    m.program = [enc, ups, dec, head, fcn, dims, depth, final_act, arch_spec](const Tensor& x, bool t, Tape* tape) {
        check_input(x, arch_spec, true);
        const auto pool_w = ops::uniform_coords(dims, 2);

        std::vector<Tensor> skips;
        Tensor h = x;
        for (std::int64_t i = 0; i < depth; ++i) {
            if (i > 0) h = ops::pool_nd(h, ops::PoolKind::max, pool_w, pool_w, tape);
            h = enc[static_cast<std::size_t>(i)](h, t, tape);
            skips.push_back(h);
        }

        if (fcn) {
            // upsample every level back to input resolution and fuse
            std::vector<Tensor> maps;
            for (std::int64_t i = 0; i < depth; ++i) {
                Tensor f = skips[static_cast<std::size_t>(i)];
                if (i > 0) f = ops::upsample_nearest(f, ops::uniform_coords(dims, std::int64_t(1) << i), tape);
                maps.push_back(f);
            }
            h = ops::concat(maps, 1, tape);
        } else {
            for (std::size_t d = 0; d < ups.size(); ++d) {
                h = ups[d](h, t, tape);
                const auto& skip = skips[static_cast<std::size_t>(depth - 2 - static_cast<std::int64_t>(d))];
                h = dec[d](ops::concat({skip, h}, 1, tape), t, tape);
            }
        }
        h = head(h, t, tape);
        return apply_final(h, final_act, tape);
    };
    return m;
}

ModelGraph build_vgg(const ArchSpec& spec, Task task, std::uint64_t seed) {
    ModelGraph m;
    m.spec = spec;
    m.task = task;
    m.params = std::make_unique<ParamStore>();
    Builder b(m.params.get(), seed, spec.dims);

    // canonical stage lists; 0 marks a pooling step
    std::vector<std::int64_t> cfg;
    switch (spec.architecture) {
        case Architecture::vgg11: cfg = {64, 0, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512, 0}; break;
        case Architecture::vgg13: cfg = {64, 64, 0, 128, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512, 0}; break;
        case Architecture::vgg16: cfg = {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0}; break;
        case Architecture::vgg19: cfg = {64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512, 0}; break;
        default: throw ContractError("vgg builder called with a non-vgg architecture");
    }

    struct Stage {
        Layer conv, norm; // norm empty unless batch_norm
        bool pool = false;
    };
    std::vector<Stage> stages;
    std::int64_t cin = spec.in_channels;
    int idx = 0;
    for (auto c : cfg) {
        Stage s;
        if (c == 0) {
            s.pool = true;
        } else {
            const auto cout = std::max<std::int64_t>(1, c * spec.base_filters / 64);
            s.conv = b.conv("conv" + std::to_string(idx), cin, cout, 3);
            if (spec.batch_norm) s.norm = b.bnorm("bn" + std::to_string(idx), cout);
            cin = cout;
            ++idx;
        }
        stages.push_back(std::move(s));
    }

    const auto hidden = 64 * spec.base_filters;
    // dense weights are [in, out]
    m.params->add("fc1.w", b.kaiming(Shape{cin, hidden}, cin));
    m.params->add("fc1.b", Tensor({hidden}, 0));
    m.params->add("fc2.w", b.kaiming(Shape{hidden, hidden}, hidden));
    m.params->add("fc2.b", Tensor({hidden}, 0));
    m.params->add("fc3.w", b.kaiming(Shape{hidden, spec.classes}, hidden));
    m.params->add("fc3.b", Tensor({spec.classes}, 0));

    ParamStore* s = m.params.get();
    const auto dims = spec.dims;
    const auto final_act = spec.final_activation;
    const auto arch_spec = spec;
    const auto feat = cin;
    m.program = [stages, s, dims, final_act, arch_spec, feat](const Tensor& x, bool t, Tape* tape) {
        check_input(x, arch_spec, false);
        const auto pool_w = ops::uniform_coords(dims, 2);
        Tensor h = x;
        for (const auto& stage : stages) {
            if (stage.pool) {
                h = ops::pool_nd(h, ops::PoolKind::max, pool_w, pool_w, tape);
                continue;
            }
            h = stage.conv(h, t, tape);
            if (stage.norm) h = stage.norm(h, t, tape);
            h = ops::relu(h, tape);
        }
        h = ops::pool_nd(h, ops::PoolKind::global_average, {}, {}, tape);
        h = ops::reshape(h, {h.shape()[0], feat}, tape);
        h = ops::relu(ops::dense(h, s->get("fc1.w").value, s->get("fc1.b").value, tape), tape);
        h = ops::relu(ops::dense(h, s->get("fc2.w").value, s->get("fc2.b").value, tape), tape);
        h = ops::dense(h, s->get("fc3.w").value, s->get("fc3.b").value, tape);
        return apply_final(h, final_act, tape);
    };
    return m;
}

} // namespace

void ArchSpec::validate() const {
    if (dims != 2 && dims != 3) throw ConfigError("model: dims must be 2 or 3, got " + std::to_string(dims));
    if (in_channels < 1) throw ConfigError("model: in_channels must be >= 1");
    if (classes < 1) throw ConfigError("model: classes must be >= 1");
    if (base_filters < 1) throw ConfigError("model: base_filters must be >= 1");
    if (is_encoder_decoder(architecture) && depth < 2)
        throw ConfigError("model: depth must be >= 2 for encoder-decoder architectures, got " + std::to_string(depth));
    if (batch_norm && !is_vgg(architecture))
        throw ConfigError("model: batch_norm is only supported for vgg architectures");
}

ModelGraph build_model(const ArchSpec& spec, Task task, std::uint64_t seed) {
    spec.validate();
    if (is_vgg(spec.architecture)) {
        if (task == Task::segmentation)
            throw ConfigError("model: " + architecture_name(spec.architecture) +
                              " supports regression or classification, not segmentation");
        return build_vgg(spec, task, seed);
    }
    if (task != Task::segmentation)
        throw ConfigError("model: " + architecture_name(spec.architecture) + " supports only segmentation");
    return build_encoder_decoder(spec, task, seed);
}

} // namespace patchwork
