#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsb/types.hpp"

namespace bsb {

struct RegionRef {
    std::filesystem::path mask;
    bool has_counterpart = true;
};

// One evaluation case as referenced on disk. Paths are absolute after loading.
struct CaseRef {
    std::string name;
    std::filesystem::path image_features;
    std::filesystem::path part_mask;
    std::filesystem::path object_mask;
    std::filesystem::path vertex_features;
    std::filesystem::path mesh;
    Pixel click;
    std::vector<VertexId> gt_part;  // empty: the clicked region has no 3D counterpart
    std::optional<std::string> seg2d;
    std::optional<std::string> seg3d;
    std::vector<RegionRef> regions;
    nlohmann::json view;  // optional provenance, passed through untouched
};

struct DatasetManifest {
    std::filesystem::path base_dir;
    std::vector<CaseRef> cases;
};

// Parses and validates a manifest: every referenced container must exist and
// agree with the others (mask and feature image sizes, vertex counts, feature
// dimensions), clicks must lie in the image and gt indices below n.
DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base_dir);

nlohmann::json to_json(const CaseRef& c, const std::filesystem::path& base_dir);

} // namespace bsb
