#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "bsb/matcher.hpp"
#include "bsb/mesh.hpp"
#include "bsb/providers.hpp"
#include "bsb/types.hpp"

namespace bsb {

// Integer label per pixel; 0 is background.
struct LabelField2D {
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> labels;

    std::int32_t at(Pixel p) const { return labels[static_cast<std::size_t>(p.y) * width + p.x]; }
    void validate() const;
};

struct LabelField3D {
    std::vector<std::int32_t> labels;

    void validate() const;
};

// Labels are read from a u8 or integral f32 BSBT tensor: [h, w] for 2D, [n] for 3D.
LabelField2D load_label_field_2d(const std::filesystem::path& path);
LabelField3D load_label_field_3d(const std::filesystem::path& path);

// part = pixels sharing the clicked label, object = all labelled pixels.
class SyntheticSeg2D final : public Seg2DProvider {
public:
    explicit SyntheticSeg2D(LabelField2D labels);
    Seg2DResult query(Pixel p) const override;

private:
    LabelField2D labels_;
};

// Vertices sharing the clicked vertex's label.
class SyntheticSeg3D final : public Seg3DProvider {
public:
    explicit SyntheticSeg3D(LabelField3D labels);
    Mask3D query(VertexId v) const override;

private:
    LabelField3D labels_;
};

enum class KeyMatch { exact, nearest };

// Precomputed promptable-segmenter outputs. Manifest schema:
//   {"width": W, "height": H,
//    "entries": [{"pixel": [x, y] | "region": "key.bsbt", "object": "o.bsbt", "part": "p.bsbt"}, ...]}
// Paths are relative to the manifest. A pixel key matches itself; a region key
// matches every pixel inside it. Nearest mode falls back to the closest key
// (Euclidean pixel distance, manifest order on ties).
class FileBackedSeg2D final : public Seg2DProvider {
public:
    FileBackedSeg2D(const std::filesystem::path& manifest, KeyMatch mode);
    Seg2DResult query(Pixel p) const override;

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t entry_count() const { return entries_.size(); }

private:
    struct Entry {
        std::optional<Pixel> pixel;
        std::optional<Mask2D> region;
        std::filesystem::path object;
        std::filesystem::path part;
    };

    std::size_t resolve(Pixel p) const;
    Mask2D load(const std::filesystem::path& path) const;

    int width_ = 0;
    int height_ = 0;
    KeyMatch mode_;
    std::vector<Entry> entries_;
    mutable std::mutex mutex_;
    mutable std::map<std::size_t, Seg2DResult> cache_;
};

// Precomputed 3D click-segmenter outputs. Manifest schema:
//   {"vertex_count": n, "entries": [{"vertex": v, "mask": "m.bsbt"}, ...]}
// Nearest mode picks the indexed vertex with the fewest adjacency hops from the
// query (lower index on ties) and needs the mesh.
class FileBackedSeg3D final : public Seg3DProvider {
public:
    FileBackedSeg3D(const std::filesystem::path& manifest, KeyMatch mode, const Mesh* mesh = nullptr);
    Mask3D query(VertexId v) const override;

private:
    VertexId resolve(VertexId v) const;

    std::size_t vertex_count_ = 0;
    KeyMatch mode_;
    const Mesh* mesh_ = nullptr;
    std::map<VertexId, std::filesystem::path> entries_;
    mutable std::mutex mutex_;
    mutable std::map<VertexId, Mask3D> cache_;
};

inline constexpr double kDefaultFloodfillThreshold = 0.85;

// Grows the clicked vertex's connected region over vertices whose feature is
// at least `threshold` cosine-similar to the seed's. Reference stand-in for a
// learned click segmenter. Holds references; field and mesh must outlive it.
class FloodfillSeg3D final : public Seg3DProvider {
public:
    FloodfillSeg3D(const VertexFeatureField& field, const Mesh& mesh, double threshold = kDefaultFloodfillThreshold);
    Mask3D query(VertexId v) const override;

    double threshold() const { return threshold_; }

private:
    const VertexFeatureField& field_;
    const Mesh& mesh_;
    double threshold_;
};

// Data a provider spec may bind to. Members may be null when unavailable.
struct ProviderBindings {
    std::filesystem::path base_dir;
    const Mesh* mesh = nullptr;
    const VertexFeatureField* vertex_features = nullptr;
};

// "synthetic:<labels.bsbt>" | "files:<manifest.json>[:exact|:nearest]"
std::unique_ptr<Seg2DProvider> make_seg2d(const std::string& spec, const ProviderBindings& bindings = {});
// "synthetic:<labels.bsbt>" | "files:<manifest.json>[:exact|:nearest]" | "floodfill:<tau>"
std::unique_ptr<Seg3DProvider> make_seg3d(const std::string& spec, const ProviderBindings& bindings);

struct Correspondence {
    MatchResult match;
    Mask3D part3d;  // empty (all zero) when there is no match
};

// Matches the click and segments the shape at the matched vertex.
Correspondence correspond(const ClickContext& ctx, const Seg2DProvider& seg2d, const Seg3DProvider& seg3d);

} // namespace bsb
