#include "bsb/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bsb/error.hpp"

namespace bsb {

namespace {

void check_finite(std::span<const float> values, const char* what) {
    for (float v : values) {
        if (!std::isfinite(v)) {
            throw ValidationError(std::string(what) + " contains NaN or Inf");
        }
    }
}

void check_binary(const std::vector<std::uint8_t>& bits, const char* what) {
    for (auto b : bits) {
        if (b > 1) {
            throw ValidationError(std::string(what) + " has a value outside {0,1}");
        }
    }
}

std::size_t count_ones(const std::vector<std::uint8_t>& bits) {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

} // namespace

FeatureImage::FeatureImage(int width, int height, int dim)
    : FeatureImage(width, height, dim,
                   std::vector<float>(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0) *
                                      std::max(dim, 0))) {}

FeatureImage::FeatureImage(int width, int height, int dim, std::vector<float> data)
    : source_width(width), source_height(height), width_(width), height_(height), dim_(dim),
      data_(std::move(data)) {
    if (width < 1 || height < 1 || dim < 1) {
        throw ValidationError("feature image extents must be positive");
    }
    if (data_.size() != static_cast<std::size_t>(width) * height * dim) {
        throw ValidationError("feature image payload does not match its extents");
    }
    check_finite(data_, "feature image");
}

std::span<const float> FeatureImage::at(Pixel p) const {
    const auto offset = (static_cast<std::size_t>(p.y) * width_ + p.x) * dim_;
    return {data_.data() + offset, static_cast<std::size_t>(dim_)};
}

std::span<float> FeatureImage::at(Pixel p) {
    const auto offset = (static_cast<std::size_t>(p.y) * width_ + p.x) * dim_;
    return {data_.data() + offset, static_cast<std::size_t>(dim_)};
}

VertexFeatureField::VertexFeatureField(std::size_t count, int dim)
    : dim_(dim), data_(count * static_cast<std::size_t>(std::max(dim, 0))), valid_(count, 0) {
    if (dim < 1) {
        throw ValidationError("vertex feature dimension must be positive");
    }
}

VertexFeatureField::VertexFeatureField(std::size_t count, int dim, std::vector<float> data,
                                       std::vector<std::uint8_t> valid)
    : dim_(dim), data_(std::move(data)), valid_(std::move(valid)) {
    if (dim < 1) {
        throw ValidationError("vertex feature dimension must be positive");
    }
    if (data_.size() != count * static_cast<std::size_t>(dim) || valid_.size() != count) {
        throw ValidationError("vertex feature payload does not match its extents");
    }
    for (std::size_t v = 0; v < count; ++v) {
        auto row = std::span<const float>(data_).subspan(v * dim_, dim_);
        if (valid_[v] > 1) {
            throw ValidationError("vertex validity flag outside {0,1}");
        }
        if (valid_[v]) {
            check_finite(row, "vertex feature field");
        } else if (std::any_of(row.begin(), row.end(), [](float x) { return x != 0.0f; })) {
            throw ValidationError("invalid vertex rows must be all-zero");
        }
    }
}

VertexFeatureField VertexFeatureField::from_rows(std::size_t count, int dim, std::vector<float> data) {
    if (dim < 1 || data.size() != count * static_cast<std::size_t>(dim)) {
        throw ValidationError("vertex feature payload does not match its extents");
    }
    std::vector<std::uint8_t> valid(count, 0);
    for (std::size_t v = 0; v < count; ++v) {
        auto row = std::span<const float>(data).subspan(v * dim, dim);
        valid[v] = std::any_of(row.begin(), row.end(), [](float x) { return x != 0.0f; }) ? 1 : 0;
    }
    return VertexFeatureField(count, dim, std::move(data), std::move(valid));
}

std::size_t VertexFeatureField::valid_count() const { return count_ones(valid_); }

std::span<const float> VertexFeatureField::at(VertexId v) const {
    return {data_.data() + static_cast<std::size_t>(v) * dim_, static_cast<std::size_t>(dim_)};
}

void VertexFeatureField::set(VertexId v, std::span<const float> feature) {
    if (feature.size() != static_cast<std::size_t>(dim_)) {
        throw ValidationError("feature dimension mismatch");
    }
    check_finite(feature, "vertex feature");
    std::copy(feature.begin(), feature.end(), data_.begin() + static_cast<std::ptrdiff_t>(v) * dim_);
    valid_[v] = 1;
}

void VertexFeatureField::invalidate(VertexId v) {
    std::fill_n(data_.begin() + static_cast<std::ptrdiff_t>(v) * dim_, dim_, 0.0f);
    valid_[v] = 0;
}

Mask2D::Mask2D(int width, int height)
    : Mask2D(width, height,
             std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0))) {}

Mask2D::Mask2D(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
    if (width < 1 || height < 1) {
        throw ValidationError("mask extents must be positive");
    }
    if (bits_.size() != static_cast<std::size_t>(width) * height) {
        throw ValidationError("mask payload does not match its extents");
    }
    check_binary(bits_, "2D mask");
}

std::size_t Mask2D::count() const { return count_ones(bits_); }

bool Mask2D::subset_of(const Mask2D& other) const {
    if (width_ != other.width_ || height_ != other.height_) {
        return false;
    }
    for (std::size_t i = 0; i < bits_.size(); ++i) {
        if (bits_[i] && !other.bits_[i]) {
            return false;
        }
    }
    return true;
}

Mask3D::Mask3D(std::size_t count) : bits_(count, 0) {}

Mask3D::Mask3D(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) { check_binary(bits_, "3D mask"); }

Mask3D Mask3D::from_indices(std::size_t count, std::span<const VertexId> indices) {
    Mask3D mask(count);
    for (auto v : indices) {
        if (v >= count) {
            throw ValidationError("vertex index " + std::to_string(v) + " out of range");
        }
        mask.set(v);
    }
    return mask;
}

std::size_t Mask3D::count() const { return count_ones(bits_); }

std::vector<VertexId> Mask3D::indices() const {
    std::vector<VertexId> out;
    for (std::size_t v = 0; v < bits_.size(); ++v) {
        if (bits_[v]) {
            out.push_back(static_cast<VertexId>(v));
        }
    }
    return out;
}

} // namespace bsb
