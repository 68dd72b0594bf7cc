#include "bsb/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <tuple>

#include "bsb/error.hpp"
#include "bsb/matcher.hpp"
#include "bsb/parallel.hpp"

namespace bsb {

namespace {

bool view_less(const ViewFeatures& a, const ViewFeatures& b) {
    const auto key = [](const Camera& c) {
        return std::make_tuple(c.elevation, c.azimuth, c.radius, c.fov, c.width, c.height);
    };
    const auto ka = key(a.camera);
    const auto kb = key(b.camera);
    if (ka != kb) {
        return ka < kb;
    }
    const auto& da = a.features.data();
    const auto& db = b.features.data();
    if (da.size() != db.size()) {
        return da.size() < db.size();
    }
    // Raw bit order: any total order works, it only has to ignore input position.
    return std::memcmp(da.data(), db.data(), da.size() * sizeof(float)) < 0;
}

} // namespace

void validate_views(const ViewFeatureSet& views) {
    if (views.empty()) {
        throw ValidationError("distillation needs at least one view");
    }
    const int dim = views.front().features.dim();
    for (const auto& v : views) {
        v.camera.validate();
        if (v.features.dim() != dim) {
            throw ValidationError("views disagree on feature dimension");
        }
        if (v.features.width() != v.camera.width || v.features.height() != v.camera.height) {
            throw ValidationError("view feature image size differs from its camera render size");
        }
    }
}

VertexFeatureField distill_features(const Mesh& mesh, const ViewFeatureSet& views) {
    validate_views(views);
    const auto n = mesh.vertex_count();
    const int dim = views.front().features.dim();

    // Canonical view order makes the f64 sums independent of input order.
    std::vector<std::size_t> order(views.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return view_less(views[a], views[b]); });

    // Views are rendered a chunk at a time in parallel, then folded into f64
    // accumulators serially in canonical order.
    std::vector<double> acc(n * static_cast<std::size_t>(dim), 0.0);
    std::vector<std::uint32_t> counts(n, 0);
    const std::size_t chunk = std::max<std::size_t>(1, 2 * static_cast<std::size_t>(thread_budget()));
    std::vector<std::vector<std::optional<Pixel>>> hits(chunk);
    for (std::size_t begin = 0; begin < order.size(); begin += chunk) {
        const auto end = std::min(order.size(), begin + chunk);
        parallel_for(end - begin, [&](std::size_t i) {
            const auto& view = views[order[begin + i]];
            const auto map = render(mesh, view.camera);
            auto& row = hits[i];
            row.assign(n, std::nullopt);
            for (std::size_t v = 0; v < n; ++v) {
                if (map.visible[v]) {
                    row[v] = projected_pixel(view.camera, mesh.vertices()[v]);
                }
            }
        });
        for (std::size_t i = 0; i < end - begin; ++i) {
            const auto& features = views[order[begin + i]].features;
            for (std::size_t v = 0; v < n; ++v) {
                if (!hits[i][v]) {
                    continue;
                }
                const auto f = features.at(*hits[i][v]);
                double* a = acc.data() + v * static_cast<std::size_t>(dim);
                for (int c = 0; c < dim; ++c) {
                    a[c] += f[c];
                }
                ++counts[v];
            }
        }
    }

    VertexFeatureField field(n, dim);
    std::vector<float> mean(static_cast<std::size_t>(dim));
    for (std::size_t v = 0; v < n; ++v) {
        if (counts[v] == 0) {
            continue;
        }
        const double* a = acc.data() + v * static_cast<std::size_t>(dim);
        for (int c = 0; c < dim; ++c) {
            mean[c] = static_cast<float>(a[c] / static_cast<double>(counts[v]));
        }
        field.set(static_cast<VertexId>(v), mean);
    }
    return field;
}

std::vector<float> feature_heatmap(const VertexFeatureField& field, std::span<const float> query) {
    if (query.size() != static_cast<std::size_t>(field.dim())) {
        throw ValidationError("query dimension differs from the vertex features");
    }
    if (std::all_of(query.begin(), query.end(), [](float x) { return x == 0.0f; })) {
        throw ValidationError("heatmap query has zero norm");
    }
    std::vector<float> out(field.size(), -std::numeric_limits<float>::infinity());
    for (std::size_t v = 0; v < field.size(); ++v) {
        const auto id = static_cast<VertexId>(v);
        if (!field.valid(id)) {
            continue;
        }
        const auto row = field.at(id);
        if (std::any_of(row.begin(), row.end(), [](float x) { return x != 0.0f; })) {
            out[v] = cosine_similarity(query, row);
        }
    }
    return out;
}

} // namespace bsb
