#include "bsb/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "bsb/error.hpp"

namespace bsb {

namespace {

constexpr std::array<char, 4> kMagic = {'B', 'S', 'B', 'T'};
constexpr std::uint32_t kMaxDims = 16;
constexpr std::size_t kReadChunk = 1 << 20;

template <typename T>
void put_le(std::ostream& out, T value) {
    std::array<char, sizeof(T)> bytes{};
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        bytes[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xffu);
    }
    out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in, const char* what) {
    std::array<unsigned char, sizeof(T)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw FormatError(std::string("truncated BSBT header while reading ") + what);
    }
    std::uint64_t value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        value |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    }
    return static_cast<T>(value);
}

std::uint64_t checked_product(const std::vector<std::uint64_t>& dims) {
    if (dims.empty()) {
        throw FormatError("tensor must have at least one dimension");
    }
    std::uint64_t product = 1;
    for (auto d : dims) {
        if (d == 0) {
            throw FormatError("tensor extent of 0");
        }
        if (product > std::numeric_limits<std::uint64_t>::max() / d) {
            throw FormatError("tensor extents overflow");
        }
        product *= d;
    }
    return product;
}

std::uint32_t float_bits(float f) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &f, sizeof(bits));
    return bits;
}

float bits_float(std::uint32_t bits) {
    float f = 0;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
}

void expect_dims(const TensorContainer& t, DType dtype, std::size_t ndim, const char* what) {
    if (t.dtype != dtype || t.dims.size() != ndim) {
        throw FormatError(std::string(what) + " expects a " + std::to_string(ndim) + "-D " +
                          dtype_name(dtype) + " tensor, got " + std::to_string(t.dims.size()) + "-D " +
                          dtype_name(t.dtype));
    }
}

int to_int_extent(std::uint64_t extent) {
    if (extent > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
        throw FormatError("tensor extent too large");
    }
    return static_cast<int>(extent);
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw NotFoundError("cannot open " + path.string());
    }
    return in;
}

} // namespace

std::size_t dtype_size(DType dtype) {
    switch (dtype) {
    case DType::f32:
        return 4;
    case DType::u8:
        return 1;
    }
    throw FormatError("unsupported dtype");
}

const char* dtype_name(DType dtype) {
    switch (dtype) {
    case DType::f32:
        return "f32";
    case DType::u8:
        return "u8";
    }
    return "unknown";
}

std::uint64_t TensorHeader::element_count() const { return checked_product(dims); }

TensorContainer TensorContainer::from_f32(std::vector<std::uint64_t> dims, std::span<const float> values) {
    TensorContainer t{DType::f32, std::move(dims), {}};
    t.payload.resize(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = float_bits(values[i]);
        for (std::size_t b = 0; b < 4; ++b) {
            t.payload[4 * i + b] = static_cast<std::uint8_t>((bits >> (8 * b)) & 0xffu);
        }
    }
    t.validate();
    return t;
}

TensorContainer TensorContainer::from_u8(std::vector<std::uint64_t> dims, std::span<const std::uint8_t> values) {
    TensorContainer t{DType::u8, std::move(dims), {values.begin(), values.end()}};
    t.validate();
    return t;
}

std::uint64_t TensorContainer::element_count() const { return checked_product(dims); }

void TensorContainer::validate() const {
    const auto count = checked_product(dims);
    if (payload.size() / dtype_size(dtype) != count || payload.size() % dtype_size(dtype) != 0) {
        throw FormatError("payload holds " + std::to_string(payload.size()) + " bytes but extents need " +
                          std::to_string(count * dtype_size(dtype)));
    }
}

std::vector<float> TensorContainer::to_f32() const {
    if (dtype != DType::f32) {
        throw FormatError("tensor is not f32");
    }
    std::vector<float> out(payload.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits = 0;
        for (std::size_t b = 0; b < 4; ++b) {
            bits |= static_cast<std::uint32_t>(payload[4 * i + b]) << (8 * b);
        }
        out[i] = bits_float(bits);
    }
    return out;
}

const std::vector<std::uint8_t>& TensorContainer::to_u8() const {
    if (dtype != DType::u8) {
        throw FormatError("tensor is not u8");
    }
    return payload;
}

void write_tensor(const TensorContainer& tensor, std::ostream& sink) {
    tensor.validate();
    sink.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(sink, kTensorVersion);
    put_le<std::uint32_t>(sink, static_cast<std::uint32_t>(tensor.dtype));
    put_le<std::uint32_t>(sink, static_cast<std::uint32_t>(tensor.dims.size()));
    for (auto d : tensor.dims) {
        put_le<std::uint64_t>(sink, d);
    }
    sink.write(reinterpret_cast<const char*>(tensor.payload.data()),
               static_cast<std::streamsize>(tensor.payload.size()));
    if (!sink) {
        throw Error("failed to write BSBT stream");
    }
}

TensorHeader read_tensor_header(std::istream& source) {
    std::array<char, 4> magic{};
    source.read(magic.data(), magic.size());
    if (source.gcount() != 4 || magic != kMagic) {
        throw FormatError("bad magic: not a BSBT stream");
    }
    const auto version = get_le<std::uint32_t>(source, "version");
    if (version != kTensorVersion) {
        throw FormatError("unsupported BSBT version " + std::to_string(version));
    }
    const auto dtype = get_le<std::uint32_t>(source, "dtype");
    if (dtype != static_cast<std::uint32_t>(DType::f32) && dtype != static_cast<std::uint32_t>(DType::u8)) {
        throw FormatError("unsupported BSBT dtype " + std::to_string(dtype));
    }
    const auto ndim = get_le<std::uint32_t>(source, "ndim");
    if (ndim == 0 || ndim > kMaxDims) {
        throw FormatError("unsupported BSBT rank " + std::to_string(ndim));
    }
    TensorHeader header{static_cast<DType>(dtype), {}};
    header.dims.reserve(ndim);
    for (std::uint32_t i = 0; i < ndim; ++i) {
        header.dims.push_back(get_le<std::uint64_t>(source, "extent"));
    }
    checked_product(header.dims);
    return header;
}

TensorContainer read_tensor(std::istream& source) {
    auto header = read_tensor_header(source);
    const auto count = header.element_count();
    const auto elem = dtype_size(header.dtype);
    if (count > std::numeric_limits<std::uint64_t>::max() / elem) {
        throw FormatError("tensor payload size overflows");
    }
    const auto expected = count * elem;

    // Chunked so a corrupt header cannot trigger one huge allocation.
    TensorContainer t{header.dtype, std::move(header.dims), {}};
    std::uint64_t remaining = expected;
    while (remaining > 0) {
        const auto chunk = static_cast<std::size_t>(std::min<std::uint64_t>(remaining, kReadChunk));
        const auto offset = t.payload.size();
        t.payload.resize(offset + chunk);
        source.read(reinterpret_cast<char*>(t.payload.data() + offset), static_cast<std::streamsize>(chunk));
        const auto got = static_cast<std::size_t>(source.gcount());
        if (got != chunk) {
            throw FormatError("truncated payload: expected " + std::to_string(expected) + " bytes, got " +
                              std::to_string(offset + got));
        }
        remaining -= chunk;
    }
    if (source.peek() != std::char_traits<char>::eof()) {
        throw FormatError("trailing bytes after BSBT payload");
    }
    return t;
}

void write_tensor_file(const TensorContainer& tensor, const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot open " + tmp.string() + " for writing");
        }
        write_tensor(tensor, out);
        out.close();
        if (!out) {
            throw Error("failed to write " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

TensorContainer read_tensor_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    try {
        return read_tensor(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

TensorHeader read_tensor_header_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    try {
        return read_tensor_header(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

TensorContainer to_tensor(const FeatureImage& image) {
    return TensorContainer::from_f32({static_cast<std::uint64_t>(image.height()),
                                      static_cast<std::uint64_t>(image.width()),
                                      static_cast<std::uint64_t>(image.dim())},
                                     image.data());
}

TensorContainer to_tensor(const VertexFeatureField& field) {
    return TensorContainer::from_f32({field.size(), static_cast<std::uint64_t>(field.dim())}, field.data());
}

TensorContainer to_tensor(const Mask2D& mask) {
    return TensorContainer::from_u8(
        {static_cast<std::uint64_t>(mask.height()), static_cast<std::uint64_t>(mask.width())}, mask.bits());
}

TensorContainer to_tensor(const Mask3D& mask) { return TensorContainer::from_u8({mask.size()}, mask.bits()); }

FeatureImage feature_image_from_tensor(const TensorContainer& tensor) {
    expect_dims(tensor, DType::f32, 3, "feature image");
    return FeatureImage(to_int_extent(tensor.dims[1]), to_int_extent(tensor.dims[0]), to_int_extent(tensor.dims[2]),
                        tensor.to_f32());
}

VertexFeatureField vertex_features_from_tensor(const TensorContainer& tensor) {
    expect_dims(tensor, DType::f32, 2, "vertex feature field");
    return VertexFeatureField::from_rows(tensor.dims[0], to_int_extent(tensor.dims[1]), tensor.to_f32());
}

Mask2D mask2d_from_tensor(const TensorContainer& tensor) {
    expect_dims(tensor, DType::u8, 2, "2D mask");
    return Mask2D(to_int_extent(tensor.dims[1]), to_int_extent(tensor.dims[0]), tensor.to_u8());
}

Mask3D mask3d_from_tensor(const TensorContainer& tensor) {
    expect_dims(tensor, DType::u8, 1, "3D mask");
    return Mask3D(tensor.to_u8());
}

FeatureImage load_feature_image(const std::filesystem::path& path) {
    return feature_image_from_tensor(read_tensor_file(path));
}

VertexFeatureField load_vertex_features(const std::filesystem::path& path) {
    return vertex_features_from_tensor(read_tensor_file(path));
}

Mask2D load_mask2d(const std::filesystem::path& path) { return mask2d_from_tensor(read_tensor_file(path)); }

Mask3D load_mask3d(const std::filesystem::path& path) { return mask3d_from_tensor(read_tensor_file(path)); }

} // namespace bsb
