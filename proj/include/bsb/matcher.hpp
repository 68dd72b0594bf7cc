#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsb/providers.hpp"
#include "bsb/types.hpp"

namespace bsb {

inline constexpr std::size_t kDefaultCandidates = 100;

// Cosine similarity in double precision, clamped to [-1, 1]. Throws on
// dimension mismatch or a zero-norm input.
double cosine(std::span<const float> a, std::span<const float> b);
float cosine_similarity(std::span<const float> a, std::span<const float> b);

float mask_iou(const Mask2D& a, const Mask2D& b);
float mask_iou(const Mask3D& a, const Mask3D& b);

// Everything one pixel click needs. Non-owning: the referenced data must
// outlive the context.
struct ClickContext {
    const FeatureImage& image_features;
    Pixel click;
    const Mask2D& part_mask;
    const Mask2D& object_mask;
    const VertexFeatureField& vertex_features;
    std::size_t k = kDefaultCandidates;

    void validate() const;
};

struct ScoredVertex {
    VertexId vertex = 0;
    double similarity = 0;
};

// The k valid vertices most similar to the clicked pixel, best first; ties go
// to the lower index. Zero-norm vertex rows are never candidates.
std::vector<ScoredVertex> top_k_candidates(const ClickContext& ctx);

// Most similar object-mask pixel to vertex v; ties go to row-major order.
Pixel nearest_pixel(VertexId v, const ClickContext& ctx);

struct CandidateReport {
    VertexId vertex = 0;
    double similarity = 0;
    Pixel nearest_pixel;
    bool in_part = false;
    std::optional<float> iou;
    std::string diagnostic;  // set when the segmenter failed on nearest_pixel
};

struct MatchResult {
    std::optional<VertexId> vertex;
    std::optional<Pixel> pixel;
    std::optional<float> iou;
    std::vector<CandidateReport> candidates;

    bool matched() const { return vertex.has_value(); }
};

// Best Segmentation Buddies: among the top-k candidates whose nearest pixel
// falls inside the clicked part mask, return the one whose segment at that
// pixel overlaps the part mask most. No survivor means no match.
MatchResult bsb_match(const ClickContext& ctx, const Seg2DProvider& seg2d);

// Highest-similarity vertex (same ranking and ties as top_k_candidates).
VertexId nn_baseline(const ClickContext& ctx);

// Uniform pick among the top-k candidates.
VertexId random_candidate_baseline(const ClickContext& ctx, std::uint64_t seed);

// Shape-to-image direction: the vertex click and its 3D segment select image pixels.
struct ReverseContext {
    const FeatureImage& image_features;
    const VertexFeatureField& vertex_features;
    VertexId vertex = 0;
    const Mask3D& region;              // 3D segment of the clicked vertex
    const Mask2D* pixel_scope = nullptr;  // candidate pixels restricted to this mask when set
    std::size_t k = kDefaultCandidates;

    void validate() const;
};

struct ScoredPixel {
    Pixel pixel;
    double similarity = 0;
};

struct ReverseCandidateReport {
    Pixel pixel;
    double similarity = 0;
    VertexId nearest_vertex = 0;
    bool in_region = false;
    std::optional<float> iou;
    std::string diagnostic;
};

struct ReverseMatchResult {
    std::optional<Pixel> pixel;
    std::optional<VertexId> vertex;  // nearest vertex of the selected pixel
    std::optional<float> iou;
    std::vector<ReverseCandidateReport> candidates;

    bool matched() const { return pixel.has_value(); }
};

std::vector<ScoredPixel> top_k_pixels(const ReverseContext& ctx);
VertexId nearest_vertex(Pixel q, const ReverseContext& ctx);

ReverseMatchResult bsb_match_reverse(const ReverseContext& ctx, const Seg3DProvider& seg3d);

} // namespace bsb
