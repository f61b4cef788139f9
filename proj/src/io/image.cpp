#include "patchwork/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "patchwork/ndindex.hpp"

namespace patchwork {

void ImageGeometry::validate(std::size_t rank) const {
    if (spacing.size() != rank || origin.size() != rank)
        throw DimensionError("geometry rank mismatch: spacing " + std::to_string(spacing.size()) +
                             ", origin " + std::to_string(origin.size()) + ", extents " +
                             std::to_string(rank));
    for (std::size_t i = 0; i < spacing.size(); ++i)
        if (!(spacing[i] > 0))
            throw ValidationError("spacing must be strictly positive, got " +
                                  std::to_string(spacing[i]) + " on axis " + std::to_string(i));
}

std::int64_t Image::plane_size() const { return product(extents); }

std::span<real_t> Image::channel(std::int64_t c) {
    const auto n = static_cast<std::size_t>(plane_size());
    return {values.data() + static_cast<std::size_t>(c) * n, n};
}

std::span<const real_t> Image::channel(std::int64_t c) const {
    const auto n = static_cast<std::size_t>(plane_size());
    return {values.data() + static_cast<std::size_t>(c) * n, n};
}

void Image::validate() const {
    if (extents.empty()) throw DimensionError("image must have at least one axis");
    for (auto e : extents)
        if (e < 1) throw DimensionError("image extents must be positive, got " + std::to_string(e));
    if (channels < 1) throw DimensionError("image channels must be positive, got " + std::to_string(channels));
    geometry.validate(extents.size());
    if (values.size() != static_cast<std::size_t>(channels * plane_size()))
        throw DimensionError("image value count " + std::to_string(values.size()) +
                             " does not match channels x extents = " +
                             std::to_string(channels * plane_size()));
}

Image make_image(Coords extents, std::int64_t channels) {
    Image img;
    img.extents = std::move(extents);
    img.channels = channels;
    img.geometry.spacing.assign(img.extents.size(), 1.0);
    img.geometry.origin.assign(img.extents.size(), 0.0);
    img.values.assign(static_cast<std::size_t>(channels * img.plane_size()), real_t(0));
    img.validate();
    return img;
}

namespace {

std::string lower_ext(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot);
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return std::move(ss).str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to " + path);
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t offset, const std::string& msg) {
    throw ParseError(path + ": byte " + std::to_string(offset) + ": " + msg);
}

// ---- MetaImage ----
// Text header of "Key = Value" lines terminated by ElementDataFile = LOCAL,
// followed by the raw little-endian sample buffer, x axis fastest. In-memory
// axis order is the reverse of the header's x,y,z listing.

enum class ElementType { u8, i16, u16, i32, f32, f64 };

std::size_t element_size(ElementType t) {
    switch (t) {
        case ElementType::u8: return 1;
        case ElementType::i16:
        case ElementType::u16: return 2;
        case ElementType::i32:
        case ElementType::f32: return 4;
        case ElementType::f64: return 8;
    }
    return 0;
}

ElementType element_type_from(const std::string& name, const std::string& path, std::size_t offset) {
    if (name == "MET_UCHAR") return ElementType::u8;
    if (name == "MET_SHORT") return ElementType::i16;
    if (name == "MET_USHORT") return ElementType::u16;
    if (name == "MET_INT") return ElementType::i32;
    if (name == "MET_FLOAT") return ElementType::f32;
    if (name == "MET_DOUBLE") return ElementType::f64;
    throw FormatError(path + ": byte " + std::to_string(offset) + ": unsupported ElementType " + name);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream ss(s);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

template <typename T>
real_t decode_scalar(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<real_t>(v);
}

Image read_mha(const std::string& path) {
    const std::string bytes = read_file(path);

    std::int64_t ndims = -1;
    std::int64_t file_channels = 1;
    std::vector<std::int64_t> dim_size;
    std::vector<double> spacing_file, offset_file;
    ElementType etype = ElementType::f64;
    bool have_type = false, have_data = false;
    std::size_t data_start = 0;

    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto eol = bytes.find('\n', pos);
        if (eol == std::string::npos) parse_fail(path, pos, "header line without newline");
        std::string line = bytes.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto eq = line.find('=');
        if (eq == std::string::npos) parse_fail(path, pos, "expected 'Key = Value', got '" + line + "'");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        try {
            if (key == "NDims") {
                ndims = std::stoll(value);
            } else if (key == "DimSize") {
                for (const auto& t : split_ws(value)) dim_size.push_back(std::stoll(t));
            } else if (key == "ElementSpacing") {
                for (const auto& t : split_ws(value)) spacing_file.push_back(std::stod(t));
            } else if (key == "Offset" || key == "Position" || key == "Origin") {
                offset_file.clear();
                for (const auto& t : split_ws(value)) offset_file.push_back(std::stod(t));
            } else if (key == "ElementNumberOfChannels") {
                file_channels = std::stoll(value);
            } else if (key == "ElementType") {
                etype = element_type_from(value, path, pos);
                have_type = true;
            } else if (key == "ElementDataFile") {
                if (value != "LOCAL")
                    throw FormatError(path + ": only ElementDataFile = LOCAL is supported, got " + value);
                have_data = true;
                data_start = eol + 1;
            }
            // unknown keys (BinaryData, CompressedData=False, ...) are ignored
        } catch (const std::invalid_argument&) {
            parse_fail(path, pos, "cannot parse value '" + value + "' for key " + key);
        } catch (const std::out_of_range&) {
            parse_fail(path, pos, "value out of range for key " + key);
        }
        pos = eol + 1;
        if (have_data) break;
    }

    if (!have_data) parse_fail(path, bytes.size(), "missing ElementDataFile = LOCAL");
    if (ndims < 1) parse_fail(path, 0, "missing or invalid NDims");
    if (!have_type) parse_fail(path, 0, "missing ElementType");
    if (static_cast<std::int64_t>(dim_size.size()) != ndims)
        parse_fail(path, 0, "DimSize has " + std::to_string(dim_size.size()) + " entries, NDims is " +
                             std::to_string(ndims));
    if (spacing_file.empty()) spacing_file.assign(static_cast<std::size_t>(ndims), 1.0);
    if (offset_file.empty()) offset_file.assign(static_cast<std::size_t>(ndims), 0.0);
    if (static_cast<std::int64_t>(spacing_file.size()) != ndims)
        parse_fail(path, 0, "ElementSpacing entry count does not match NDims");
    if (static_cast<std::int64_t>(offset_file.size()) != ndims)
        parse_fail(path, 0, "Offset entry count does not match NDims");
    if (file_channels < 1) parse_fail(path, 0, "ElementNumberOfChannels must be positive");

    Image img;
    img.extents.assign(dim_size.rbegin(), dim_size.rend());
    img.channels = file_channels;
    img.geometry.spacing.assign(spacing_file.rbegin(), spacing_file.rend());
    img.geometry.origin.assign(offset_file.rbegin(), offset_file.rend());
    for (auto e : img.extents)
        if (e < 1) parse_fail(path, 0, "DimSize entries must be positive");
    img.geometry.validate(img.extents.size());

    const auto plane = img.plane_size();
    const auto n_samples = static_cast<std::size_t>(plane * file_channels);
    const auto esz = element_size(etype);
    if (bytes.size() - data_start != n_samples * esz)
        parse_fail(path, data_start,
                   "payload holds " + std::to_string(bytes.size() - data_start) + " bytes, expected " +
                       std::to_string(n_samples * esz));

    img.values.resize(n_samples);
    const char* src = bytes.data() + data_start;
    // file samples are channel-interleaved per voxel; store channel-planar
    for (std::int64_t v = 0; v < plane; ++v) {
        for (std::int64_t c = 0; c < file_channels; ++c) {
            const char* p = src + static_cast<std::size_t>(v * file_channels + c) * esz;
            real_t s = 0;
            switch (etype) {
                case ElementType::u8: s = decode_scalar<std::uint8_t>(p); break;
                case ElementType::i16: s = decode_scalar<std::int16_t>(p); break;
                case ElementType::u16: s = decode_scalar<std::uint16_t>(p); break;
                case ElementType::i32: s = decode_scalar<std::int32_t>(p); break;
                case ElementType::f32: s = decode_scalar<float>(p); break;
                case ElementType::f64: s = decode_scalar<double>(p); break;
            }
            img.values[static_cast<std::size_t>(c * plane + v)] = s;
        }
    }
    return img;
}

void write_mha(const Image& img, const std::string& path) {
    img.validate();
    const auto rank = img.extents.size();
    std::ostringstream h;
    h << "ObjectType = Image\n";
    h << "NDims = " << rank << "\n";
    h << "BinaryData = True\n";
    h << "BinaryDataByteOrderMSB = False\n";
    h << "DimSize =";
    for (std::size_t i = rank; i-- > 0;) h << " " << img.extents[i];
    h << "\nElementSpacing =";
    for (std::size_t i = rank; i-- > 0;) h << " " << std::defaultfloat << img.geometry.spacing[i];
    h << "\nOffset =";
    for (std::size_t i = rank; i-- > 0;) h << " " << img.geometry.origin[i];
    h << "\n";
    if (img.channels > 1) h << "ElementNumberOfChannels = " << img.channels << "\n";
    h << "ElementType = MET_DOUBLE\n";
    h << "ElementDataFile = LOCAL\n";

    std::string out = std::move(h).str();
    const auto plane = img.plane_size();
    out.reserve(out.size() + img.values.size() * sizeof(double));
    for (std::int64_t v = 0; v < plane; ++v)
        for (std::int64_t c = 0; c < img.channels; ++c) {
            const double s = static_cast<double>(img.values[static_cast<std::size_t>(c * plane + v)]);
            char buf[sizeof(double)];
            std::memcpy(buf, &s, sizeof(double));
            out.append(buf, sizeof(double));
        }
    write_file(path, out);
}

// ---- PNM (binary P5 grayscale / P6 RGB, 8-bit) ----

struct PnmHeader {
    int magic;
    std::int64_t width, height, maxval;
    std::size_t data_start;
};

PnmHeader read_pnm_header(const std::string& bytes, const std::string& path) {
    std::size_t pos = 0;
    auto skip = [&] {
        while (pos < bytes.size()) {
            if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&]() -> std::int64_t {
        skip();
        const auto start = pos;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (pos == start) parse_fail(path, start, "expected a number");
        return std::stoll(bytes.substr(start, pos - start));
    };

    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        parse_fail(path, 0, "not a binary P5/P6 file");
    PnmHeader h;
    h.magic = bytes[1] - '0';
    pos = 2;
    h.width = number();
    h.height = number();
    h.maxval = number();
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        parse_fail(path, pos, "expected single whitespace before pixel data");
    ++pos;
    h.data_start = pos;
    if (h.width < 1 || h.height < 1) parse_fail(path, 0, "image dimensions must be positive");
    if (h.maxval < 1 || h.maxval > 255)
        throw FormatError(path + ": only 8-bit data supported, maxval is " + std::to_string(h.maxval));
    return h;
}

Image read_pnm(const std::string& path) {
    const std::string bytes = read_file(path);
    const auto h = read_pnm_header(bytes, path);
    const std::int64_t channels = h.magic == 5 ? 1 : 3;
    const auto n = static_cast<std::size_t>(h.width * h.height * channels);
    if (bytes.size() - h.data_start != n)
        parse_fail(path, h.data_start,
                   "payload holds " + std::to_string(bytes.size() - h.data_start) + " bytes, expected " +
                       std::to_string(n));
    Image img = make_image({h.height, h.width}, channels);
    const auto plane = img.plane_size();
    const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + h.data_start);
    for (std::int64_t v = 0; v < plane; ++v)
        for (std::int64_t c = 0; c < channels; ++c)
            img.values[static_cast<std::size_t>(c * plane + v)] =
                static_cast<real_t>(src[v * channels + c]);
    return img;
}

void write_pnm(const Image& img, const std::string& path, int magic) {
    img.validate();
    if (img.extents.size() != 2)
        throw DimensionError("pnm files are 2D, image has rank " + std::to_string(img.extents.size()));
    const std::int64_t want = magic == 5 ? 1 : 3;
    if (img.channels != want)
        throw DimensionError(std::string(magic == 5 ? ".pgm" : ".ppm") + " requires " +
                             std::to_string(want) + " channel(s), image has " +
                             std::to_string(img.channels));
    for (auto v : img.values) {
        if (!(v >= 0 && v <= 255) || v != std::floor(v))
            throw ValidationError("pnm samples must be integers in [0,255], got " + std::to_string(double(v)));
    }
    std::ostringstream h;
    h << "P" << magic << "\n" << img.extents[1] << " " << img.extents[0] << "\n255\n";
    std::string out = std::move(h).str();
    const auto plane = img.plane_size();
    out.reserve(out.size() + img.values.size());
    for (std::int64_t v = 0; v < plane; ++v)
        for (std::int64_t c = 0; c < img.channels; ++c)
            out.push_back(static_cast<char>(static_cast<unsigned char>(
                img.values[static_cast<std::size_t>(c * plane + v)])));
    write_file(path, out);
}

} // namespace

Image read_image(const std::string& path) {
    const auto ext = lower_ext(path);
    if (ext == ".mha") return read_mha(path);
    if (ext == ".pgm" || ext == ".ppm") return read_pnm(path);
    throw FormatError("unsupported image extension '" + ext + "' for " + path);
}

void write_image(const Image& image, const std::string& path) {
    const auto ext = lower_ext(path);
    if (ext == ".mha") return write_mha(image, path);
    if (ext == ".pgm") return write_pnm(image, path, 5);
    if (ext == ".ppm") return write_pnm(image, path, 6);
    throw FormatError("unsupported image extension '" + ext + "' for " + path);
}

} // namespace patchwork
