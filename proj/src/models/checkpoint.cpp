#include <cstdint>
#include <cstring>
#include <fstream>

#include "patchwork/models.hpp"

// Checkpoint layout (all integers and doubles little-endian):
//   magic "PWCK" | u32 format version | artifact version string
//   architecture string | i64 dims,in_channels,classes,base_filters,depth
//   final_activation string | u8 batch_norm | task string
//   i64 epoch | f64 val_loss
//   u32 param count  { name string | u32 rank | i64 extents[rank] | u64 n | f64 values[n] }
//   u32 buffer count { name string | u64 n | f64 values[n] }
// Strings are u32 length + bytes. Values are stored as f64 regardless of the
// build's scalar type.

namespace patchwork {

namespace {

constexpr char kMagic[4] = {'P', 'W', 'C', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError("checkpoint: truncated file " + path);
    return v;
}

std::string get_string(std::istream& in, const std::string& path) {
    const auto n = get<std::uint32_t>(in, path);
    if (n > (1u << 20)) throw FormatError("checkpoint: implausible string length in " + path);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw FormatError("checkpoint: truncated file " + path);
    return s;
}

} // namespace

void save_checkpoint(const std::string& path, const ModelGraph& model, const CheckpointMeta& meta) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");

    out.write(kMagic, 4);
    put<std::uint32_t>(out, kFormatVersion);
    put_string(out, kArtifactVersion);
    put_string(out, architecture_name(model.spec.architecture));
    put<std::int64_t>(out, model.spec.dims);
    put<std::int64_t>(out, model.spec.in_channels);
    put<std::int64_t>(out, model.spec.classes);
    put<std::int64_t>(out, model.spec.base_filters);
    put<std::int64_t>(out, model.spec.depth);
    put_string(out, final_activation_name(model.spec.final_activation));
    put<std::uint8_t>(out, model.spec.batch_norm ? 1 : 0);
    put_string(out, task_name(model.task));
    put<std::int64_t>(out, meta.epoch);
    put<double>(out, meta.val_loss);

    const auto& params = model.params->params();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put_string(out, p.name);
        const auto& shape = p.value.shape();
        put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
        for (auto e : shape) put<std::int64_t>(out, e);
        put<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.size()));
        for (auto v : p.value.values()) put<double>(out, static_cast<double>(v));
    }
    const auto& buffers = model.params->buffers();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(buffers.size()));
    for (const auto& [name, data] : buffers) {
        put_string(out, name);
        put<std::uint64_t>(out, static_cast<std::uint64_t>(data.size()));
        for (auto v : data) put<double>(out, static_cast<double>(v));
    }
    out.flush();
    if (!out) throw IoError("checkpoint: write failed for '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open '" + path + "'");

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("checkpoint: '" + path + "' is not a checkpoint file (bad magic)");
    const auto version = get<std::uint32_t>(in, path);
    if (version != kFormatVersion)
        throw FormatError("checkpoint: format version " + std::to_string(version) +
                          " unsupported, this build reads version " + std::to_string(kFormatVersion));

    LoadedCheckpoint loaded;
    loaded.meta.artifact_version = get_string(in, path);

    ArchSpec spec;
    spec.architecture = architecture_from_string(get_string(in, path));
    spec.dims = get<std::int64_t>(in, path);
    spec.in_channels = get<std::int64_t>(in, path);
    spec.classes = get<std::int64_t>(in, path);
    spec.base_filters = get<std::int64_t>(in, path);
    spec.depth = get<std::int64_t>(in, path);
    spec.final_activation = final_activation_from_string(get_string(in, path));
    spec.batch_norm = get<std::uint8_t>(in, path) != 0;
    const Task task = task_from_string(get_string(in, path));
    loaded.meta.epoch = get<std::int64_t>(in, path);
    loaded.meta.val_loss = get<double>(in, path);

    loaded.model = build_model(spec, task, 0);

    const auto n_params = get<std::uint32_t>(in, path);
    if (n_params != loaded.model.params->params().size())
        throw FormatError("checkpoint: expected " + std::to_string(loaded.model.params->params().size()) +
                          " parameters for this architecture, file has " + std::to_string(n_params));
    for (std::uint32_t i = 0; i < n_params; ++i) {
        const auto name = get_string(in, path);
        auto& param = loaded.model.params->get(name);
        const auto rank = get<std::uint32_t>(in, path);
        Shape shape(rank);
        for (auto& e : shape) e = get<std::int64_t>(in, path);
        if (shape != param.value.shape())
            throw FormatError("checkpoint: parameter '" + name + "' has shape " + shape_str(shape) +
                              ", architecture expects " + shape_str(param.value.shape()));
        const auto n = get<std::uint64_t>(in, path);
        if (n != static_cast<std::uint64_t>(param.value.size()))
            throw FormatError("checkpoint: parameter '" + name + "' length mismatch");
        auto vals = param.value.values();
        for (std::uint64_t j = 0; j < n; ++j) vals[j] = static_cast<real_t>(get<double>(in, path));
    }
    const auto n_buffers = get<std::uint32_t>(in, path);
    if (n_buffers != loaded.model.params->buffers().size())
        throw FormatError("checkpoint: buffer count mismatch");
    for (std::uint32_t i = 0; i < n_buffers; ++i) {
        const auto name = get_string(in, path);
        const auto n = get<std::uint64_t>(in, path);
        auto& buf = loaded.model.params->buffer(name, static_cast<std::size_t>(n));
        if (buf.size() != n) throw FormatError("checkpoint: buffer '" + name + "' length mismatch");
        for (std::uint64_t j = 0; j < n; ++j) buf[j] = static_cast<real_t>(get<double>(in, path));
    }
    return loaded;
}

} // namespace patchwork
