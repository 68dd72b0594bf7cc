#pragma once

#include <span>
#include <vector>

#include "bsb/mesh.hpp"
#include "bsb/rasterizer.hpp"
#include "bsb/types.hpp"

namespace bsb {

struct ViewFeatures {
    Camera camera;
    FeatureImage features;  // sized camera.width x camera.height
};

using ViewFeatureSet = std::vector<ViewFeatures>;

void validate_views(const ViewFeatureSet& views);

// Lifts per-view pixel features onto vertices: each vertex takes the mean of
// the features found at its projected pixel over every view where it is
// visible. Vertices seen by no view are invalid (zero rows). The result does
// not depend on the order of views.
VertexFeatureField distill_features(const Mesh& mesh, const ViewFeatureSet& views);

// Per-vertex cosine similarity to query; invalid or zero-norm vertices get -inf.
std::vector<float> feature_heatmap(const VertexFeatureField& field, std::span<const float> query);

} // namespace bsb
