#pragma once

// BSBT container: "BSBT" magic, u32 version (1), u32 dtype (1 = f32, 2 = u8),
// u32 ndim, ndim x u64 extents, then the row-major payload. All integers and
// f32 payload elements are little-endian regardless of host.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "bsb/types.hpp"

namespace bsb {

enum class DType : std::uint32_t { f32 = 1, u8 = 2 };

inline constexpr std::uint32_t kTensorVersion = 1;

std::size_t dtype_size(DType dtype);
const char* dtype_name(DType dtype);

struct TensorHeader {
    DType dtype = DType::f32;
    std::vector<std::uint64_t> dims;

    std::uint64_t element_count() const;
    std::size_t encoded_size() const { return 16 + 8 * dims.size(); }
};

// Payload is kept in its little-endian wire form so equality is bitwise.
struct TensorContainer {
    DType dtype = DType::f32;
    std::vector<std::uint64_t> dims;
    std::vector<std::uint8_t> payload;

    static TensorContainer from_f32(std::vector<std::uint64_t> dims, std::span<const float> values);
    static TensorContainer from_u8(std::vector<std::uint64_t> dims, std::span<const std::uint8_t> values);

    std::uint64_t element_count() const;
    std::vector<float> to_f32() const;
    const std::vector<std::uint8_t>& to_u8() const;
    void validate() const;

    friend bool operator==(const TensorContainer&, const TensorContainer&) = default;
};

void write_tensor(const TensorContainer& tensor, std::ostream& sink);
TensorContainer read_tensor(std::istream& source);
TensorHeader read_tensor_header(std::istream& source);

void write_tensor_file(const TensorContainer& tensor, const std::filesystem::path& path);
TensorContainer read_tensor_file(const std::filesystem::path& path);
TensorHeader read_tensor_header_file(const std::filesystem::path& path);

TensorContainer to_tensor(const FeatureImage& image);
TensorContainer to_tensor(const VertexFeatureField& field);
TensorContainer to_tensor(const Mask2D& mask);
TensorContainer to_tensor(const Mask3D& mask);

FeatureImage feature_image_from_tensor(const TensorContainer& tensor);
VertexFeatureField vertex_features_from_tensor(const TensorContainer& tensor);
Mask2D mask2d_from_tensor(const TensorContainer& tensor);
Mask3D mask3d_from_tensor(const TensorContainer& tensor);

FeatureImage load_feature_image(const std::filesystem::path& path);
VertexFeatureField load_vertex_features(const std::filesystem::path& path);
Mask2D load_mask2d(const std::filesystem::path& path);
Mask3D load_mask3d(const std::filesystem::path& path);

} // namespace bsb
