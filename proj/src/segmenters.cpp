#include "bsb/segmenters.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>

#include <json.hpp>

#include "bsb/error.hpp"
#include "bsb/tensor_io.hpp"

namespace bsb {

namespace {

using nlohmann::json;

std::vector<std::int32_t> labels_from_tensor(const TensorContainer& t) {
    std::vector<std::int32_t> out;
    out.reserve(static_cast<std::size_t>(t.element_count()));
    if (t.dtype == DType::u8) {
        for (auto b : t.to_u8()) {
            out.push_back(b);
        }
        return out;
    }
    for (float f : t.to_f32()) {
        if (!(f >= 0) || f != std::floor(f) || f > static_cast<float>(std::numeric_limits<std::int32_t>::max())) {
            throw FormatError("label tensor must hold non-negative integers");
        }
        out.push_back(static_cast<std::int32_t>(f));
    }
    return out;
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw NotFoundError("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::pair<std::string, KeyMatch> split_mode(const std::string& rest) {
    for (const auto& [suffix, mode] : {std::pair{":exact", KeyMatch::exact}, std::pair{":nearest", KeyMatch::nearest}}) {
        const std::string s(suffix);
        if (rest.size() > s.size() && rest.compare(rest.size() - s.size(), s.size(), s) == 0) {
            return {rest.substr(0, rest.size() - s.size()), mode};
        }
    }
    return {rest, KeyMatch::exact};
}

std::pair<std::string, std::string> split_spec(const std::string& spec) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos || colon + 1 == spec.size()) {
        throw ValidationError("provider spec '" + spec + "' must look like kind:argument");
    }
    return {spec.substr(0, colon), spec.substr(colon + 1)};
}

} // namespace

void LabelField2D::validate() const {
    if (width < 1 || height < 1 || labels.size() != static_cast<std::size_t>(width) * height) {
        throw ValidationError("label field extents do not match its labels");
    }
    for (auto l : labels) {
        if (l < 0) {
            throw ValidationError("labels must be non-negative");
        }
    }
}

void LabelField3D::validate() const {
    if (labels.empty()) {
        throw ValidationError("3D label field is empty");
    }
    for (auto l : labels) {
        if (l < 0) {
            throw ValidationError("labels must be non-negative");
        }
    }
}

LabelField2D load_label_field_2d(const std::filesystem::path& path) {
    const auto t = read_tensor_file(path);
    if (t.dims.size() != 2) {
        throw FormatError(path.string() + ": 2D label field must be a [h, w] tensor");
    }
    LabelField2D field{static_cast<int>(t.dims[1]), static_cast<int>(t.dims[0]), labels_from_tensor(t)};
    field.validate();
    return field;
}

LabelField3D load_label_field_3d(const std::filesystem::path& path) {
    const auto t = read_tensor_file(path);
    if (t.dims.size() != 1) {
        throw FormatError(path.string() + ": 3D label field must be a [n] tensor");
    }
    LabelField3D field{labels_from_tensor(t)};
    field.validate();
    return field;
}

SyntheticSeg2D::SyntheticSeg2D(LabelField2D labels) : labels_(std::move(labels)) { labels_.validate(); }

Seg2DResult SyntheticSeg2D::query(Pixel p) const {
    if (p.x < 0 || p.y < 0 || p.x >= labels_.width || p.y >= labels_.height) {
        throw ValidationError("query pixel outside the label field");
    }
    const auto label = labels_.at(p);
    if (label == 0) {
        throw ValidationError("query pixel lies on the background label");
    }
    Seg2DResult r{Mask2D(labels_.width, labels_.height), Mask2D(labels_.width, labels_.height)};
    for (int y = 0; y < labels_.height; ++y) {
        for (int x = 0; x < labels_.width; ++x) {
            const auto l = labels_.at({x, y});
            if (l > 0) {
                r.object.set({x, y});
            }
            if (l == label) {
                r.part.set({x, y});
            }
        }
    }
    return r;
}

SyntheticSeg3D::SyntheticSeg3D(LabelField3D labels) : labels_(std::move(labels)) { labels_.validate(); }

Mask3D SyntheticSeg3D::query(VertexId v) const {
    if (v >= labels_.labels.size()) {
        throw ValidationError("query vertex out of range");
    }
    Mask3D mask(labels_.labels.size());
    for (std::size_t u = 0; u < labels_.labels.size(); ++u) {
        if (labels_.labels[u] == labels_.labels[v]) {
            mask.set(static_cast<VertexId>(u));
        }
    }
    return mask;
}

FileBackedSeg2D::FileBackedSeg2D(const std::filesystem::path& manifest, KeyMatch mode) : mode_(mode) {
    const auto doc = read_json(manifest);
    const auto base = manifest.parent_path();
    try {
        width_ = doc.at("width").get<int>();
        height_ = doc.at("height").get<int>();
        for (const auto& e : doc.at("entries")) {
            Entry entry;
            if (e.contains("pixel")) {
                const auto xy = e.at("pixel").get<std::vector<int>>();
                if (xy.size() != 2) {
                    throw FormatError("pixel key must be [x, y]");
                }
                entry.pixel = Pixel{xy[0], xy[1]};
            } else if (e.contains("region")) {
                entry.region = load(resolve_path(base, e.at("region").get<std::string>()));
            } else {
                throw FormatError("entry needs a pixel or region key");
            }
            entry.object = resolve_path(base, e.at("object").get<std::string>());
            entry.part = resolve_path(base, e.at("part").get<std::string>());
            entries_.push_back(std::move(entry));
        }
    } catch (const json::exception& e) {
        throw FormatError(manifest.string() + ": " + e.what());
    }
    if (width_ < 1 || height_ < 1) {
        throw FormatError(manifest.string() + ": width and height must be positive");
    }
}

Mask2D FileBackedSeg2D::load(const std::filesystem::path& path) const {
    auto mask = load_mask2d(path);
    if (mask.width() != width_ || mask.height() != height_) {
        throw ValidationError(path.string() + ": mask size differs from the manifest's image size");
    }
    return mask;
}

std::size_t FileBackedSeg2D::resolve(Pixel p) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if ((e.pixel && *e.pixel == p) || (e.region && e.region->contains(p) && e.region->test(p))) {
            return i;
        }
    }
    if (mode_ == KeyMatch::exact || entries_.empty()) {
        throw NotFoundError("no segmentation stored for pixel (" + std::to_string(p.x) + ", " +
                            std::to_string(p.y) + ")");
    }
    std::size_t best = 0;
    auto best_d2 = std::numeric_limits<long long>::max();
    const auto dist2 = [&](Pixel q) {
        const long long dx = q.x - p.x;
        const long long dy = q.y - p.y;
        return dx * dx + dy * dy;
    };
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        auto d2 = std::numeric_limits<long long>::max();
        if (e.pixel) {
            d2 = dist2(*e.pixel);
        } else {
            for (int y = 0; y < e.region->height(); ++y) {
                for (int x = 0; x < e.region->width(); ++x) {
                    if (e.region->test({x, y})) {
                        d2 = std::min(d2, dist2({x, y}));
                    }
                }
            }
        }
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    return best;
}

Seg2DResult FileBackedSeg2D::query(Pixel p) const {
    if (p.x < 0 || p.y < 0 || p.x >= width_ || p.y >= height_) {
        throw ValidationError("query pixel outside the image");
    }
    const auto index = resolve(p);
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(index); it != cache_.end()) {
            return it->second;
        }
    }
    Seg2DResult result{load(entries_[index].object), load(entries_[index].part)};
    std::lock_guard lock(mutex_);
    return cache_.try_emplace(index, std::move(result)).first->second;
}

FileBackedSeg3D::FileBackedSeg3D(const std::filesystem::path& manifest, KeyMatch mode, const Mesh* mesh)
    : mode_(mode), mesh_(mesh) {
    const auto doc = read_json(manifest);
    const auto base = manifest.parent_path();
    try {
        vertex_count_ = doc.at("vertex_count").get<std::size_t>();
        for (const auto& e : doc.at("entries")) {
            const auto v = e.at("vertex").get<VertexId>();
            if (v >= vertex_count_) {
                throw FormatError("entry vertex " + std::to_string(v) + " out of range");
            }
            entries_.emplace(v, resolve_path(base, e.at("mask").get<std::string>()));
        }
    } catch (const json::exception& e) {
        throw FormatError(manifest.string() + ": " + e.what());
    }
    if (mesh_ && mesh_->vertex_count() != vertex_count_) {
        throw ValidationError(manifest.string() + ": vertex_count differs from the mesh");
    }
    if (mode_ == KeyMatch::nearest && !mesh_) {
        throw ValidationError("nearest-key 3D lookup needs the mesh");
    }
}

VertexId FileBackedSeg3D::resolve(VertexId v) const {
    if (entries_.contains(v)) {
        return v;
    }
    if (mode_ == KeyMatch::exact) {
        throw NotFoundError("no segmentation stored for vertex " + std::to_string(v));
    }
    // BFS layer by layer so the lowest index wins within the first layer that hits.
    std::vector<std::uint8_t> seen(vertex_count_, 0);
    std::vector<VertexId> layer{v};
    seen[v] = 1;
    while (!layer.empty()) {
        std::vector<VertexId> next;
        for (auto u : layer) {
            for (auto w : mesh_->neighbors(u)) {
                if (!seen[w]) {
                    seen[w] = 1;
                    next.push_back(w);
                }
            }
        }
        std::optional<VertexId> best;
        for (auto w : next) {
            if (entries_.contains(w) && (!best || w < *best)) {
                best = w;
            }
        }
        if (best) {
            return *best;
        }
        layer = std::move(next);
    }
    throw NotFoundError("no stored segmentation reachable from vertex " + std::to_string(v));
}

Mask3D FileBackedSeg3D::query(VertexId v) const {
    if (v >= vertex_count_) {
        throw ValidationError("query vertex out of range");
    }
    const auto key = resolve(v);
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) {
            return it->second;
        }
    }
    const auto& path = entries_.at(key);
    auto mask = load_mask3d(path);
    if (mask.size() != vertex_count_) {
        throw ValidationError(path.string() + ": mask length differs from vertex_count");
    }
    std::lock_guard lock(mutex_);
    return cache_.try_emplace(key, std::move(mask)).first->second;
}

FloodfillSeg3D::FloodfillSeg3D(const VertexFeatureField& field, const Mesh& mesh, double threshold)
    : field_(field), mesh_(mesh), threshold_(threshold) {
    if (field.size() != mesh.vertex_count()) {
        throw ValidationError("vertex feature count differs from the mesh");
    }
    if (!(threshold >= -1.0 && threshold <= 1.0)) {
        throw ValidationError("flood-fill threshold must lie in [-1, 1]");
    }
}

Mask3D FloodfillSeg3D::query(VertexId v) const {
    if (v >= field_.size() || !field_.valid(v)) {
        throw ValidationError("flood-fill seed vertex has no valid feature");
    }
    const auto seed = field_.at(v);
    return connected_component(mesh_, v, [&](VertexId u) {
        if (u == v) {
            return true;
        }
        if (!field_.valid(u)) {
            return false;
        }
        const auto f = field_.at(u);
        if (std::all_of(f.begin(), f.end(), [](float x) { return x == 0.0f; })) {
            return false;
        }
        return cosine(f, seed) >= threshold_;
    });
}

std::unique_ptr<Seg2DProvider> make_seg2d(const std::string& spec, const ProviderBindings& bindings) {
    const auto [kind, arg] = split_spec(spec);
    if (kind == "synthetic") {
        return std::make_unique<SyntheticSeg2D>(load_label_field_2d(resolve_path(bindings.base_dir, arg)));
    }
    if (kind == "files") {
        const auto [path, mode] = split_mode(arg);
        return std::make_unique<FileBackedSeg2D>(resolve_path(bindings.base_dir, path), mode);
    }
    throw ValidationError("unknown 2D provider kind '" + kind + "'");
}

std::unique_ptr<Seg3DProvider> make_seg3d(const std::string& spec, const ProviderBindings& bindings) {
    const auto [kind, arg] = split_spec(spec);
    if (kind == "synthetic") {
        return std::make_unique<SyntheticSeg3D>(load_label_field_3d(resolve_path(bindings.base_dir, arg)));
    }
    if (kind == "files") {
        const auto [path, mode] = split_mode(arg);
        return std::make_unique<FileBackedSeg3D>(resolve_path(bindings.base_dir, path), mode, bindings.mesh);
    }
    if (kind == "floodfill") {
        if (!bindings.mesh || !bindings.vertex_features) {
            throw ValidationError("floodfill provider needs the mesh and vertex features");
        }
        double tau = 0;
        try {
            std::size_t used = 0;
            tau = std::stod(arg, &used);
            if (used != arg.size()) {
                throw std::invalid_argument(arg);
            }
        } catch (const std::logic_error&) {
            throw ValidationError("floodfill threshold '" + arg + "' is not a number");
        }
        return std::make_unique<FloodfillSeg3D>(*bindings.vertex_features, *bindings.mesh, tau);
    }
    throw ValidationError("unknown 3D provider kind '" + kind + "'");
}

Correspondence correspond(const ClickContext& ctx, const Seg2DProvider& seg2d, const Seg3DProvider& seg3d) {
    Correspondence out{bsb_match(ctx, seg2d), Mask3D(ctx.vertex_features.size())};
    if (out.match.vertex) {
        out.part3d = seg3d.query(*out.match.vertex);
        if (out.part3d.size() != ctx.vertex_features.size()) {
            throw ValidationError("3D segmenter returned a mask of the wrong length");
        }
    }
    return out;
}

} // namespace bsb
