#include "bsb/manifest.hpp"

#include <fstream>

#include "bsb/error.hpp"
#include "bsb/mesh.hpp"
#include "bsb/tensor_io.hpp"

namespace bsb {

namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const json& value) {
    const std::filesystem::path p(value.get<std::string>());
    return p.is_absolute() ? p : base / p;
}

std::string relative_to(const std::filesystem::path& p, const std::filesystem::path& base) {
    return std::filesystem::relative(p, base).generic_string();
}

void validate_case(const CaseRef& c) {
    const auto where = [&](const std::string& msg) { return "case '" + c.name + "': " + msg; };
    const auto image = read_tensor_header_file(c.image_features);
    if (image.dtype != DType::f32 || image.dims.size() != 3) {
        throw ValidationError(where("image_features must be an [h, w, d] f32 tensor"));
    }
    const auto h = image.dims[0];
    const auto w = image.dims[1];
    for (const auto* path : {&c.part_mask, &c.object_mask}) {
        const auto mask = read_tensor_header_file(*path);
        if (mask.dtype != DType::u8 || mask.dims != std::vector<std::uint64_t>{h, w}) {
            throw ValidationError(where(path->string() + " does not match the feature image size"));
        }
    }
    const auto vf = read_tensor_header_file(c.vertex_features);
    if (vf.dtype != DType::f32 || vf.dims.size() != 2 || vf.dims[1] != image.dims[2]) {
        throw ValidationError(where("vertex_features must be an [n, d] f32 tensor with the image's d"));
    }
    const auto n = load_mesh(c.mesh).vertex_count();
    if (vf.dims[0] != n) {
        throw ValidationError(where("vertex_features rows differ from the mesh vertex count"));
    }
    if (c.click.x < 0 || c.click.y < 0 || static_cast<std::uint64_t>(c.click.x) >= w ||
        static_cast<std::uint64_t>(c.click.y) >= h) {
        throw ValidationError(where("click (" + std::to_string(c.click.x) + ", " + std::to_string(c.click.y) +
                                    ") outside the image"));
    }
    for (auto v : c.gt_part) {
        if (v >= n) {
            throw ValidationError(where("gt_part index " + std::to_string(v) + " out of range"));
        }
    }
    for (const auto& r : c.regions) {
        const auto mask = read_tensor_header_file(r.mask);
        if (mask.dtype != DType::u8 || mask.dims != std::vector<std::uint64_t>{h, w}) {
            throw ValidationError(where(r.mask.string() + " does not match the feature image size"));
        }
    }
}

} // namespace

DatasetManifest parse_manifest(const json& doc, const std::filesystem::path& base_dir) {
    DatasetManifest manifest{base_dir, {}};
    try {
        for (const auto& e : doc.at("cases")) {
            CaseRef c;
            c.name = e.value("name", "case_" + std::to_string(manifest.cases.size()));
            c.image_features = resolve(base_dir, e.at("image_features"));
            c.part_mask = resolve(base_dir, e.at("part_mask"));
            c.object_mask = resolve(base_dir, e.at("object_mask"));
            c.vertex_features = resolve(base_dir, e.at("vertex_features"));
            c.mesh = resolve(base_dir, e.at("mesh"));
            const auto click = e.at("click").get<std::vector<int>>();
            if (click.size() != 2) {
                throw FormatError("click must be [x, y]");
            }
            c.click = {click[0], click[1]};
            c.gt_part = e.at("gt_part").get<std::vector<VertexId>>();
            if (e.contains("seg2d")) {
                c.seg2d = e.at("seg2d").get<std::string>();
            }
            if (e.contains("seg3d")) {
                c.seg3d = e.at("seg3d").get<std::string>();
            }
            if (e.contains("regions")) {
                for (const auto& r : e.at("regions")) {
                    c.regions.push_back({resolve(base_dir, r.at("mask")), r.value("has_counterpart", true)});
                }
            }
            if (e.contains("view")) {
                c.view = e.at("view");
            }
            manifest.cases.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest schema violation: ") + e.what());
    }
    for (const auto& c : manifest.cases) {
        validate_case(c);
    }
    return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw NotFoundError("cannot open manifest " + path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return parse_manifest(doc, path.parent_path());
}

json to_json(const CaseRef& c, const std::filesystem::path& base_dir) {
    json out{{"name", c.name},
             {"image_features", relative_to(c.image_features, base_dir)},
             {"part_mask", relative_to(c.part_mask, base_dir)},
             {"object_mask", relative_to(c.object_mask, base_dir)},
             {"vertex_features", relative_to(c.vertex_features, base_dir)},
             {"mesh", relative_to(c.mesh, base_dir)},
             {"click", {c.click.x, c.click.y}},
             {"gt_part", c.gt_part}};
    if (c.seg2d) {
        out["seg2d"] = *c.seg2d;
    }
    if (c.seg3d) {
        out["seg3d"] = *c.seg3d;
    }
    if (!c.regions.empty()) {
        json regions = json::array();
        for (const auto& r : c.regions) {
            regions.push_back({{"mask", relative_to(r.mask, base_dir)}, {"has_counterpart", r.has_counterpart}});
        }
        out["regions"] = regions;
    }
    if (!c.view.is_null()) {
        out["view"] = c.view;
    }
    return out;
}

} // namespace bsb
