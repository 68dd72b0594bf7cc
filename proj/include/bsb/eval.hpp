#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsb/manifest.hpp"
#include "bsb/matcher.hpp"
#include "bsb/mesh.hpp"
#include "bsb/providers.hpp"
#include "bsb/rasterizer.hpp"
#include "bsb/segmenters.hpp"

namespace bsb {

struct Region {
    Mask2D mask;
    bool has_counterpart = true;
};

struct CorrespondenceCase {
    std::string name;
    FeatureImage image_features;
    Mask2D part_mask;
    Mask2D object_mask;
    VertexFeatureField vertex_features;
    Mesh mesh;
    Pixel click;
    std::vector<VertexId> gt_part;
    std::shared_ptr<const Seg2DProvider> seg2d;  // null when the case carries none
    std::vector<Region> regions;
    nlohmann::json view;

    ClickContext context(std::size_t k) const {
        return ClickContext{image_features, click, part_mask, object_mask, vertex_features, k};
    }
    bool in_gt(VertexId v) const;
};

CorrespondenceCase load_case(const CaseRef& ref, const std::filesystem::path& base_dir);

// Manifest cases loaded up front; a case that fails to load keeps its name and error.
struct LoadedCase {
    std::string name;
    std::shared_ptr<const CorrespondenceCase> data;
    std::string load_error;
};

std::vector<LoadedCase> load_cases(const DatasetManifest& manifest);

enum class Method { bsb, nn, random };

Method parse_method(const std::string& name);
const char* method_name(Method m);

enum class Outcome { hit, miss, no_match, error };

const char* outcome_name(Outcome o);

struct CaseOutcome {
    std::string name;
    Outcome outcome = Outcome::miss;
    std::optional<VertexId> vertex;
    std::optional<float> iou;
    std::string diagnostic;
};

// success_rate = hits / cases. No-match and per-case errors count as misses
// and are also reported separately.
struct EvalReport {
    Method method = Method::bsb;
    std::size_t k = kDefaultCandidates;
    std::uint64_t seed = 0;
    std::vector<CaseOutcome> cases;
    std::size_t hits = 0;
    std::size_t misses = 0;
    std::size_t no_matches = 0;
    std::size_t errors = 0;
    double success_rate = 0;

    nlohmann::json to_json() const;
};

EvalReport eval_success_rate(std::span<const LoadedCase> cases, Method method, std::size_t k, std::uint64_t seed);
EvalReport eval_success_rate(const DatasetManifest& manifest, Method method, std::size_t k, std::uint64_t seed);

struct AblationRow {
    std::size_t k = 0;
    double success_rate = 0;
    std::size_t hits = 0;
    std::size_t no_matches = 0;
};

std::vector<AblationRow> ablate_k(std::span<const LoadedCase> cases, const std::vector<std::size_t>& ks);
nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows, std::size_t case_count);

// Mean achieved IoU of BSB matches for pixels sampled uniformly over each
// case's annotated regions, split by whether the region has a 3D counterpart.
// No-match contributes 0. A mean over no samples is absent.
struct FidelityStats {
    std::optional<double> matched_mean;
    std::optional<double> unmatched_mean;
    std::size_t matched_samples = 0;
    std::size_t unmatched_samples = 0;

    nlohmann::json to_json() const;
};

FidelityStats fidelity_iou_stats(std::span<const LoadedCase> cases, std::size_t samples_per_image, std::uint64_t seed,
                                 std::size_t k = kDefaultCandidates);

// A rendered view of the shape with its image-space data.
struct ProjectedView {
    Camera camera;
    FeatureImage features;
    std::shared_ptr<const Seg2DProvider> seg2d;
};

// Click at the projection of `vertex` in `view`; gt_part is every vertex
// sharing the vertex's label. Throws ValidationError when the vertex is not
// visible in the view.
CorrespondenceCase build_projected_click_case(const Mesh& mesh, const LabelField3D& gt_labels,
                                              const ProjectedView& view, const VertexFeatureField& vertex_features,
                                              VertexId vertex, const std::string& name);

struct ProjectedCaseRecipe {
    std::size_t vertices_per_shape = 10;
    std::size_t views_per_vertex = 2;
    std::uint64_t seed = 0;
};

// Picks a random part, samples vertices from it, and emits one case per
// (vertex, randomly chosen visible view). Vertices never visible are dropped.
std::vector<CorrespondenceCase> generate_projected_cases(const Mesh& mesh, const LabelField3D& gt_labels,
                                                         const std::vector<ProjectedView>& views,
                                                         const VertexFeatureField& vertex_features,
                                                         const ProjectedCaseRecipe& recipe);

} // namespace bsb
