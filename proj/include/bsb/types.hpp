#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace bsb {

struct Pixel {
    int x = 0;
    int y = 0;

    friend bool operator==(const Pixel&, const Pixel&) = default;
};

using VertexId = std::uint32_t;

// Dense per-pixel feature field, stored row-major as [y][x][channel].
class FeatureImage {
public:
    FeatureImage() = default;
    FeatureImage(int width, int height, int dim);
    FeatureImage(int width, int height, int dim, std::vector<float> data);

    int width() const { return width_; }
    int height() const { return height_; }
    int dim() const { return dim_; }
    bool contains(Pixel p) const { return p.x >= 0 && p.y >= 0 && p.x < width_ && p.y < height_; }

    std::span<const float> at(Pixel p) const;
    std::span<float> at(Pixel p);
    const std::vector<float>& data() const { return data_; }

    // Spatial size of the backbone output before upsampling (metadata only).
    int source_width = 0;
    int source_height = 0;

private:
    int width_ = 0;
    int height_ = 0;
    int dim_ = 0;
    std::vector<float> data_;
};

// Per-vertex features. Rows of invalid vertices are all-zero.
class VertexFeatureField {
public:
    VertexFeatureField() = default;
    VertexFeatureField(std::size_t count, int dim);
    VertexFeatureField(std::size_t count, int dim, std::vector<float> data, std::vector<std::uint8_t> valid);

    // Validity inferred from non-zero rows, which is how the field round-trips through BSBT.
    static VertexFeatureField from_rows(std::size_t count, int dim, std::vector<float> data);

    std::size_t size() const { return valid_.size(); }
    int dim() const { return dim_; }
    bool valid(VertexId v) const { return valid_[v] != 0; }
    std::size_t valid_count() const;

    std::span<const float> at(VertexId v) const;
    void set(VertexId v, std::span<const float> feature);
    void invalidate(VertexId v);
    const std::vector<float>& data() const { return data_; }

private:
    int dim_ = 0;
    std::vector<float> data_;
    std::vector<std::uint8_t> valid_;
};

class Mask2D {
public:
    Mask2D() = default;
    Mask2D(int width, int height);
    Mask2D(int width, int height, std::vector<std::uint8_t> bits);

    int width() const { return width_; }
    int height() const { return height_; }
    bool contains(Pixel p) const { return p.x >= 0 && p.y >= 0 && p.x < width_ && p.y < height_; }
    bool test(Pixel p) const { return bits_[index(p)] != 0; }
    void set(Pixel p, bool on = true) { bits_[index(p)] = on ? 1 : 0; }
    std::size_t count() const;
    bool empty() const { return count() == 0; }
    bool subset_of(const Mask2D& other) const;
    const std::vector<std::uint8_t>& bits() const { return bits_; }

    friend bool operator==(const Mask2D&, const Mask2D&) = default;

private:
    std::size_t index(Pixel p) const { return static_cast<std::size_t>(p.y) * width_ + p.x; }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

class Mask3D {
public:
    Mask3D() = default;
    explicit Mask3D(std::size_t count);
    explicit Mask3D(std::vector<std::uint8_t> bits);

    static Mask3D from_indices(std::size_t count, std::span<const VertexId> indices);

    std::size_t size() const { return bits_.size(); }
    bool test(VertexId v) const { return bits_[v] != 0; }
    void set(VertexId v, bool on = true) { bits_[v] = on ? 1 : 0; }
    std::size_t count() const;
    bool empty() const { return count() == 0; }
    std::vector<VertexId> indices() const;
    const std::vector<std::uint8_t>& bits() const { return bits_; }

    friend bool operator==(const Mask3D&, const Mask3D&) = default;

private:
    std::vector<std::uint8_t> bits_;
};

} // namespace bsb
