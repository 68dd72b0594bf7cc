#include "bsb/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "bsb/error.hpp"
#include "bsb/tensor_io.hpp"

namespace bsb::synth {

namespace {

double gaussian(std::mt19937_64& rng) {
    // Box-Muller on raw engine output keeps scenes identical across standard libraries.
    const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t bound) {
    const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % bound;
    std::uint64_t x = rng();
    while (x >= limit) {
        x = rng();
    }
    return static_cast<std::size_t>(x % bound);
}

TensorContainer labels_tensor(const std::vector<std::int32_t>& labels, std::vector<std::uint64_t> dims) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(labels.size());
    for (auto l : labels) {
        if (l > 255) {
            throw ValidationError("synthetic label exceeds u8 range");
        }
        bytes.push_back(static_cast<std::uint8_t>(l));
    }
    return TensorContainer::from_u8(std::move(dims), bytes);
}

} // namespace

Mesh make_grid_mesh(int grid) {
    if (grid < 2) {
        throw ValidationError("grid mesh needs at least 2x2 vertices");
    }
    std::vector<Vec3f> vertices;
    std::vector<Face> faces;
    const float step = 1.0f / static_cast<float>(grid - 1);
    for (int r = 0; r < grid; ++r) {
        for (int c = 0; c < grid; ++c) {
            vertices.push_back({-0.5f + c * step, 0.5f - r * step, 0.0f});
        }
    }
    for (int r = 0; r + 1 < grid; ++r) {
        for (int c = 0; c + 1 < grid; ++c) {
            const auto v = static_cast<VertexId>(r * grid + c);
            const auto g = static_cast<VertexId>(grid);
            faces.push_back({v, v + g, v + 1});
            faces.push_back({v + 1, v + g, v + g + 1});
        }
    }
    return Mesh(std::move(vertices), std::move(faces));
}

Scene make_scene(const SceneSpec& spec) {
    const int bands = spec.parts + spec.missing_parts;
    if (spec.parts < 1 || spec.missing_parts < 0 || spec.dim < bands + 1) {
        throw ValidationError("scene needs parts >= 1 and dim >= parts + missing_parts + 1");
    }
    if (spec.grid < spec.parts || spec.width < bands || spec.height < 1) {
        throw ValidationError("scene is too small for its bands");
    }
    if (spec.decoys > 0 && (spec.decoy_target < 1 || spec.decoy_target > spec.parts || spec.parts < 2)) {
        throw ValidationError("decoys need a shared target part and a second part to host them");
    }
    std::mt19937_64 rng(spec.seed);
    const int gap_channel = bands;

    const bool border = spec.width >= bands + 2 && spec.height >= 3;
    const int x0 = border ? 1 : 0;
    const int inner_w = spec.width - 2 * x0;
    LabelField2D labels{spec.width, spec.height, std::vector<std::int32_t>(spec.width * spec.height, 0)};
    FeatureImage image(spec.width, spec.height, spec.dim);
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            const bool inside = !border || (x >= 1 && y >= 1 && x < spec.width - 1 && y < spec.height - 1);
            if (!inside) {
                continue;
            }
            const int band = (x - x0) * bands / inner_w;
            labels.labels[static_cast<std::size_t>(y) * spec.width + x] = band + 1;
            auto f = image.at({x, y});
            f[band] = 1.0f;
            if (spec.pixel_noise > 0) {
                for (auto& c : f) {
                    c += static_cast<float>(spec.pixel_noise * gaussian(rng));
                }
            }
        }
    }

    auto mesh = make_grid_mesh(spec.grid);
    const auto n = mesh.vertex_count();
    LabelField3D vertex_labels{std::vector<std::int32_t>(n)};
    const double gap = spec.gap_degrees * std::numbers::pi / 180.0;
    VertexFeatureField field(n, spec.dim);
    std::vector<float> row(static_cast<std::size_t>(spec.dim));
    for (std::size_t v = 0; v < n; ++v) {
        const int col = static_cast<int>(v) % spec.grid;
        const int label = 1 + col * spec.parts / spec.grid;
        vertex_labels.labels[v] = label;
        std::fill(row.begin(), row.end(), 0.0f);
        row[label - 1] = static_cast<float>(std::cos(gap));
        row[gap_channel] = static_cast<float>(std::sin(gap));
        if (spec.vertex_noise > 0) {
            for (auto& c : row) {
                c += static_cast<float>(spec.vertex_noise * gaussian(rng));
            }
        }
        field.set(static_cast<VertexId>(v), row);
    }

    std::vector<VertexId> decoys;
    if (spec.decoys > 0) {
        const int host = spec.decoy_target % spec.parts + 1;
        std::vector<VertexId> hosts;
        for (std::size_t v = 0; v < n; ++v) {
            if (vertex_labels.labels[v] == host) {
                hosts.push_back(static_cast<VertexId>(v));
            }
        }
        if (static_cast<int>(hosts.size()) < spec.decoys) {
            throw ValidationError("not enough host vertices for the requested decoys");
        }
        for (int i = 0; i < spec.decoys; ++i) {
            std::swap(hosts[i], hosts[i + uniform_index(rng, hosts.size() - i)]);
        }
        hosts.resize(spec.decoys);
        std::sort(hosts.begin(), hosts.end());
        for (std::size_t i = 0; i < hosts.size(); ++i) {
            std::fill(row.begin(), row.end(), 0.0f);
            // Distinct similarities keep the decoys strictly ahead of each other.
            const double a = 0.6 + 0.01 * static_cast<double>(i) / static_cast<double>(hosts.size());
            row[spec.decoy_target - 1] = static_cast<float>(a);
            row[host - 1] = static_cast<float>(std::sqrt(1.0 - a * a));
            field.set(hosts[i], row);
        }
        decoys = std::move(hosts);
    }
    return Scene{std::move(image), std::move(labels), std::move(mesh), std::move(vertex_labels), std::move(field),
                 std::move(decoys)};
}

Pixel band_center(const Scene& scene, int label) {
    const auto& labels = scene.image_labels;
    int lo = labels.width;
    int hi = -1;
    for (int x = 0; x < labels.width; ++x) {
        if (labels.at({x, labels.height / 2}) == label) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    }
    if (hi < 0) {
        throw ValidationError("label " + std::to_string(label) + " not present in the image");
    }
    return {(lo + hi) / 2, labels.height / 2};
}

Mask2D label_mask(const LabelField2D& labels, int label) {
    Mask2D m(labels.width, labels.height);
    for (int y = 0; y < labels.height; ++y) {
        for (int x = 0; x < labels.width; ++x) {
            if (labels.at({x, y}) == label) {
                m.set({x, y});
            }
        }
    }
    return m;
}

Mask2D foreground_mask(const LabelField2D& labels) {
    Mask2D m(labels.width, labels.height);
    for (int y = 0; y < labels.height; ++y) {
        for (int x = 0; x < labels.width; ++x) {
            if (labels.at({x, y}) > 0) {
                m.set({x, y});
            }
        }
    }
    return m;
}

Mask3D label_mask(const LabelField3D& labels, int label) {
    Mask3D m(labels.labels.size());
    for (std::size_t v = 0; v < labels.labels.size(); ++v) {
        if (labels.labels[v] == label) {
            m.set(static_cast<VertexId>(v));
        }
    }
    return m;
}

nlohmann::json write_case(const Scene& scene, const std::filesystem::path& dir, const std::string& name,
                          Pixel click) {
    namespace fs = std::filesystem;
    const auto case_dir = dir / name;
    fs::create_directories(case_dir);
    const auto& labels = scene.image_labels;
    const int label = labels.at(click);
    if (label == 0) {
        throw ValidationError("click lies on the background");
    }
    const auto rel = [&](const std::string& file) { return (fs::path(name) / file).generic_string(); };

    write_tensor_file(to_tensor(scene.image_features), case_dir / "image_features.bsbt");
    write_tensor_file(to_tensor(scene.vertex_features), case_dir / "vertex_features.bsbt");
    write_tensor_file(to_tensor(label_mask(labels, label)), case_dir / "part_mask.bsbt");
    write_tensor_file(to_tensor(foreground_mask(labels)), case_dir / "object_mask.bsbt");
    write_tensor_file(labels_tensor(labels.labels, {static_cast<std::uint64_t>(labels.height),
                                                    static_cast<std::uint64_t>(labels.width)}),
                      case_dir / "labels.bsbt");
    write_tensor_file(labels_tensor(scene.vertex_labels.labels, {scene.vertex_labels.labels.size()}),
                      case_dir / "vertex_labels.bsbt");
    {
        std::ofstream obj(case_dir / "mesh.obj");
        write_obj(scene.mesh, obj);
    }

    nlohmann::json regions = nlohmann::json::array();
    int max_label = 0;
    for (auto l : labels.labels) {
        max_label = std::max(max_label, l);
    }
    const auto shared = [&](int l) {
        return std::find(scene.vertex_labels.labels.begin(), scene.vertex_labels.labels.end(), l) !=
               scene.vertex_labels.labels.end();
    };
    for (int l = 1; l <= max_label; ++l) {
        const auto file = "region_" + std::to_string(l) + ".bsbt";
        write_tensor_file(to_tensor(label_mask(labels, l)), case_dir / file);
        regions.push_back({{"mask", rel(file)}, {"has_counterpart", shared(l)}});
    }

    nlohmann::json gt = nlohmann::json::array();
    for (std::size_t v = 0; v < scene.vertex_labels.labels.size(); ++v) {
        if (scene.vertex_labels.labels[v] == label) {
            gt.push_back(v);
        }
    }
    return {{"name", name},
            {"image_features", rel("image_features.bsbt")},
            {"part_mask", rel("part_mask.bsbt")},
            {"object_mask", rel("object_mask.bsbt")},
            {"vertex_features", rel("vertex_features.bsbt")},
            {"mesh", rel("mesh.obj")},
            {"click", {click.x, click.y}},
            {"gt_part", gt},
            {"seg2d", "synthetic:" + rel("labels.bsbt")},
            {"seg3d", "synthetic:" + rel("vertex_labels.bsbt")},
            {"regions", regions}};
}

std::vector<SceneSpec> decoy_family(int max_decoys, std::uint64_t seed) {
    std::vector<SceneSpec> specs;
    for (int decoys = 0; decoys <= max_decoys; ++decoys) {
        for (int target = 1; target <= 3; ++target) {
            SceneSpec s;
            s.width = 18;
            s.height = 12;
            s.parts = 3;
            s.grid = 6;
            s.dim = 6;
            s.gap_degrees = 60;
            s.decoys = decoys;
            s.decoy_target = target;
            s.seed = seed + static_cast<std::uint64_t>(decoys * 16 + target);
            specs.push_back(s);
        }
    }
    return specs;
}

namespace {

void write_json(const nlohmann::json& doc, const std::filesystem::path& path) {
    std::ofstream out(path);
    out << doc.dump(2) << '\n';
    if (!out) {
        throw Error("cannot write " + path.string());
    }
}

} // namespace

nlohmann::json write_decoy_manifest(const std::filesystem::path& dir, int max_decoys, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    nlohmann::json cases = nlohmann::json::array();
    for (const auto& spec : decoy_family(max_decoys, seed)) {
        const auto scene = make_scene(spec);
        const auto name = "d" + std::to_string(spec.decoys) + "_t" + std::to_string(spec.decoy_target);
        cases.push_back(write_case(scene, dir, name, band_center(scene, spec.decoy_target)));
    }
    nlohmann::json manifest{{"cases", cases}};
    write_json(manifest, dir / "manifest.json");
    return manifest;
}

nlohmann::json write_session_bundle(const Scene& scene, const std::filesystem::path& dir) {
    const auto entry = write_case(scene, dir, "scene", band_center(scene, 1));
    nlohmann::json bundle{{"image_features", entry["image_features"]},
                          {"vertex_features", entry["vertex_features"]},
                          {"mesh", entry["mesh"]},
                          {"seg2d", entry["seg2d"]},
                          {"seg3d", entry["seg3d"]}};
    write_json(bundle, dir / "bundle.json");
    return bundle;
}

} // namespace bsb::synth
