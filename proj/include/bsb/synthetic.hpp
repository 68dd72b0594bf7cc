#pragma once

// Planted scenes: an image of vertical label bands and a planar grid mesh
// whose vertex bands share the image's first `parts` labels. Features are
// one-hot per label, so the correct correspondence is known by construction.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsb/mesh.hpp"
#include "bsb/segmenters.hpp"
#include "bsb/types.hpp"

namespace bsb::synth {

struct SceneSpec {
    int width = 16;
    int height = 16;
    int parts = 3;          // labels 1..parts appear in both image and mesh
    int missing_parts = 0;  // labels parts+1.. appear only in the image
    int grid = 8;           // mesh is grid x grid vertices
    int dim = 8;            // needs parts + missing_parts + 1 channels
    // Angle between a part's pixel feature and its vertex feature (modality gap).
    double gap_degrees = 0;
    // Decoys: vertices inside part (decoy_target % parts) + 1 whose feature is
    // 0.6 * e_target + 0.8 * e_host, so they outrank every true part vertex for
    // a click in decoy_target once cos(gap) < 0.6, yet map back to the host part.
    int decoys = 0;
    int decoy_target = 1;
    double pixel_noise = 0;
    double vertex_noise = 0;
    std::uint64_t seed = 1;
};

struct Scene {
    FeatureImage image_features;
    LabelField2D image_labels;
    Mesh mesh;
    LabelField3D vertex_labels;
    VertexFeatureField vertex_features;
    std::vector<VertexId> decoy_vertices;
};

Scene make_scene(const SceneSpec& spec);

Mesh make_grid_mesh(int grid);

// A representative click inside the band of a label (band center).
Pixel band_center(const Scene& scene, int label);

Mask2D label_mask(const LabelField2D& labels, int label);
Mask2D foreground_mask(const LabelField2D& labels);
Mask3D label_mask(const LabelField3D& labels, int label);

// Writes the scene's tensors, mesh and label fields under dir (created if
// needed) and returns a manifest case entry clicking at `click`. gt_part lists
// the vertices with the clicked label (empty for an image-only label).
nlohmann::json write_case(const Scene& scene, const std::filesystem::path& dir, const std::string& name,
                          Pixel click);

// Family of decoy manifests used for baseline and ablation comparisons:
// cases with 0..max_decoys decoys, one click per shared part.
std::vector<SceneSpec> decoy_family(int max_decoys, std::uint64_t seed);

// Writes one case per decoy_family spec (click at the decoy target's band
// center) and dir/manifest.json; returns the manifest.
nlohmann::json write_decoy_manifest(const std::filesystem::path& dir, int max_decoys, std::uint64_t seed);

// Writes the scene plus dir/bundle.json, a session bundle with synthetic
// providers; returns the bundle.
nlohmann::json write_session_bundle(const Scene& scene, const std::filesystem::path& dir);

} // namespace bsb::synth
