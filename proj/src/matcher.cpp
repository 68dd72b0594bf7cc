#include "bsb/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <utility>

#include "bsb/error.hpp"
#include "bsb/parallel.hpp"

namespace bsb {

namespace {

double dot(std::span<const float> a, std::span<const float> b) {
    double sum = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return sum;
}

double norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

// Every similarity in this file goes through here so that precomputed norms and
// the public cosine() agree bit-for-bit.
double score(std::span<const float> a, std::span<const float> b, double na, double nb) {
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

struct FeatureRow {
    Pixel pixel;
    std::span<const float> feature;
    double norm;
};

// Non-zero pixels of a mask (or the whole image), row-major.
std::vector<FeatureRow> pixel_rows(const FeatureImage& image, const Mask2D* scope) {
    std::vector<FeatureRow> rows;
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const Pixel p{x, y};
            if (scope && !scope->test(p)) {
                continue;
            }
            const auto f = image.at(p);
            const double n = norm(f);
            if (n > 0) {
                rows.push_back({p, f, n});
            }
        }
    }
    return rows;
}

Pixel argmax_pixel(std::span<const float> query, double query_norm, const std::vector<FeatureRow>& rows) {
    std::size_t best = 0;
    double best_score = score(query, rows[0].feature, query_norm, rows[0].norm);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double s = score(query, rows[i].feature, query_norm, rows[i].norm);
        if (s > best_score) {
            best_score = s;
            best = i;
        }
    }
    return rows[best].pixel;
}

// Valid, non-zero vertex rows with their norms, ascending index.
struct VertexRows {
    std::vector<VertexId> ids;
    std::vector<double> norms;
};

VertexRows vertex_rows(const VertexFeatureField& field) {
    VertexRows rows;
    for (std::size_t v = 0; v < field.size(); ++v) {
        const auto id = static_cast<VertexId>(v);
        if (!field.valid(id)) {
            continue;
        }
        const double n = norm(field.at(id));
        if (n > 0) {
            rows.ids.push_back(id);
            rows.norms.push_back(n);
        }
    }
    return rows;
}

std::span<const float> click_feature(const ClickContext& ctx, double& feature_norm) {
    const auto f = ctx.image_features.at(ctx.click);
    feature_norm = norm(f);
    if (!(feature_norm > 0)) {
        throw ValidationError("clicked pixel has a zero-norm feature");
    }
    return f;
}

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % bound;
    std::uint64_t x = rng();
    while (x >= limit) {
        x = rng();
    }
    return x % bound;
}

template <typename Mask>
float iou_of(const Mask& a, const Mask& b) {
    std::size_t inter = 0;
    std::size_t uni = 0;
    const auto& ab = a.bits();
    const auto& bb = b.bits();
    for (std::size_t i = 0; i < ab.size(); ++i) {
        inter += ab[i] & bb[i];
        uni += ab[i] | bb[i];
    }
    if (uni == 0) {
        return 0.0f;
    }
    return static_cast<float>(static_cast<double>(inter) / static_cast<double>(uni));
}

} // namespace

double cosine(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw ValidationError("cosine similarity of vectors with different dimensions");
    }
    const double na = norm(a);
    const double nb = norm(b);
    if (!(na > 0) || !(nb > 0)) {
        throw ValidationError("cosine similarity of a zero-norm vector");
    }
    return score(a, b, na, nb);
}

float cosine_similarity(std::span<const float> a, std::span<const float> b) {
    return static_cast<float>(cosine(a, b));
}

float mask_iou(const Mask2D& a, const Mask2D& b) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw ValidationError("mask_iou on masks of different sizes");
    }
    return iou_of(a, b);
}

float mask_iou(const Mask3D& a, const Mask3D& b) {
    if (a.size() != b.size()) {
        throw ValidationError("mask_iou on vertex masks of different sizes");
    }
    return iou_of(a, b);
}

void ClickContext::validate() const {
    const int w = image_features.width();
    const int h = image_features.height();
    for (const Mask2D* m : {&part_mask, &object_mask}) {
        if (m->width() != w || m->height() != h) {
            throw ValidationError("mask size differs from the feature image");
        }
    }
    if (!image_features.contains(click)) {
        throw ValidationError("click (" + std::to_string(click.x) + ", " + std::to_string(click.y) +
                              ") outside the image");
    }
    if (!part_mask.test(click)) {
        throw ValidationError("clicked pixel is not inside its part mask");
    }
    if (!part_mask.subset_of(object_mask)) {
        throw ValidationError("part mask is not contained in the object mask");
    }
    if (vertex_features.dim() != image_features.dim()) {
        throw ValidationError("pixel and vertex features have different dimensions");
    }
    if (k < 1) {
        throw ValidationError("candidate count k must be at least 1");
    }
}

std::vector<ScoredVertex> top_k_candidates(const ClickContext& ctx) {
    ctx.validate();
    double pn = 0;
    const auto pf = click_feature(ctx, pn);
    const auto rows = vertex_rows(ctx.vertex_features);
    if (rows.ids.empty()) {
        throw ValidationError("no valid vertex features to match against");
    }
    std::vector<ScoredVertex> scored;
    scored.reserve(rows.ids.size());
    for (std::size_t i = 0; i < rows.ids.size(); ++i) {
        scored.push_back({rows.ids[i], score(pf, ctx.vertex_features.at(rows.ids[i]), pn, rows.norms[i])});
    }
    const auto keep = std::min(ctx.k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                      [](const ScoredVertex& a, const ScoredVertex& b) {
                          return a.similarity > b.similarity || (a.similarity == b.similarity && a.vertex < b.vertex);
                      });
    scored.resize(keep);
    return scored;
}

Pixel nearest_pixel(VertexId v, const ClickContext& ctx) {
    if (v >= ctx.vertex_features.size() || !ctx.vertex_features.valid(v)) {
        throw ValidationError("vertex " + std::to_string(v) + " has no valid feature");
    }
    const auto rows = pixel_rows(ctx.image_features, &ctx.object_mask);
    if (rows.empty()) {
        throw ValidationError("object mask is empty");
    }
    const auto vf = ctx.vertex_features.at(v);
    const double vn = norm(vf);
    if (!(vn > 0)) {
        throw ValidationError("vertex " + std::to_string(v) + " has a zero-norm feature");
    }
    return argmax_pixel(vf, vn, rows);
}

MatchResult bsb_match(const ClickContext& ctx, const Seg2DProvider& seg2d) {
    const auto candidates = top_k_candidates(ctx);
    const auto rows = pixel_rows(ctx.image_features, &ctx.object_mask);
    if (rows.empty()) {
        throw ValidationError("object mask is empty");
    }

    MatchResult result;
    result.candidates.resize(candidates.size());
    parallel_for(candidates.size(), [&](std::size_t i) {
        const auto v = candidates[i].vertex;
        const auto vf = ctx.vertex_features.at(v);
        auto& report = result.candidates[i];
        report.vertex = v;
        report.similarity = candidates[i].similarity;
        report.nearest_pixel = argmax_pixel(vf, norm(vf), rows);
        report.in_part = ctx.part_mask.test(report.nearest_pixel);
    });

    // Segmenter calls only for survivors, in rank order, memoized per pixel.
    const bool memoize = seg2d.capabilities().memoizable;
    std::map<std::pair<int, int>, std::optional<Mask2D>> cache;
    std::map<std::pair<int, int>, std::string> failures;
    for (auto& report : result.candidates) {
        if (!report.in_part) {
            continue;
        }
        const auto key = std::make_pair(report.nearest_pixel.y, report.nearest_pixel.x);
        auto it = memoize ? cache.find(key) : cache.end();
        if (it == cache.end()) {
            std::optional<Mask2D> mask;
            try {
                auto seg = seg2d.query(report.nearest_pixel);
                if (seg.part.width() != ctx.part_mask.width() || seg.part.height() != ctx.part_mask.height()) {
                    throw ValidationError("segmenter returned a mask of the wrong size");
                }
                mask = std::move(seg.part);
            } catch (const Error& e) {
                failures[key] = e.what();
            }
            it = cache.insert_or_assign(key, std::move(mask)).first;
        }
        if (!it->second) {
            report.diagnostic = "segmenter failed: " + failures[key];
            continue;
        }
        report.iou = mask_iou(ctx.part_mask, *it->second);
        if (!result.vertex || *report.iou > *result.iou) {
            result.vertex = report.vertex;
            result.pixel = report.nearest_pixel;
            result.iou = report.iou;
        }
    }
    return result;
}

VertexId nn_baseline(const ClickContext& ctx) {
    auto narrowed = ctx;
    narrowed.k = 1;
    return top_k_candidates(narrowed).front().vertex;
}

VertexId random_candidate_baseline(const ClickContext& ctx, std::uint64_t seed) {
    const auto candidates = top_k_candidates(ctx);
    std::mt19937_64 rng(seed);
    return candidates[bounded(rng, candidates.size())].vertex;
}

void ReverseContext::validate() const {
    if (vertex >= vertex_features.size()) {
        throw ValidationError("vertex " + std::to_string(vertex) + " out of range");
    }
    if (!vertex_features.valid(vertex)) {
        throw ValidationError("clicked vertex has no valid feature");
    }
    if (region.size() != vertex_features.size()) {
        throw ValidationError("3D region size differs from the vertex count");
    }
    if (pixel_scope &&
        (pixel_scope->width() != image_features.width() || pixel_scope->height() != image_features.height())) {
        throw ValidationError("pixel scope mask size differs from the feature image");
    }
    if (vertex_features.dim() != image_features.dim()) {
        throw ValidationError("pixel and vertex features have different dimensions");
    }
    if (k < 1) {
        throw ValidationError("candidate count k must be at least 1");
    }
}

std::vector<ScoredPixel> top_k_pixels(const ReverseContext& ctx) {
    ctx.validate();
    const auto vf = ctx.vertex_features.at(ctx.vertex);
    const double vn = norm(vf);
    if (!(vn > 0)) {
        throw ValidationError("clicked vertex has a zero-norm feature");
    }
    const auto rows = pixel_rows(ctx.image_features, ctx.pixel_scope);
    if (rows.empty()) {
        throw ValidationError("no pixels with a non-zero feature in scope");
    }
    // Row order doubles as the tie-break: a stable sort keeps row-major order among equals.
    std::vector<ScoredPixel> scored;
    scored.reserve(rows.size());
    for (const auto& r : rows) {
        scored.push_back({r.pixel, score(vf, r.feature, vn, r.norm)});
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const ScoredPixel& a, const ScoredPixel& b) { return a.similarity > b.similarity; });
    scored.resize(std::min(ctx.k, scored.size()));
    return scored;
}

VertexId nearest_vertex(Pixel q, const ReverseContext& ctx) {
    if (!ctx.image_features.contains(q)) {
        throw ValidationError("pixel outside the image");
    }
    const auto qf = ctx.image_features.at(q);
    const double qn = norm(qf);
    if (!(qn > 0)) {
        throw ValidationError("pixel has a zero-norm feature");
    }
    const auto rows = vertex_rows(ctx.vertex_features);
    if (rows.ids.empty()) {
        throw ValidationError("no valid vertex features");
    }
    std::size_t best = 0;
    double best_score = score(qf, ctx.vertex_features.at(rows.ids[0]), qn, rows.norms[0]);
    for (std::size_t i = 1; i < rows.ids.size(); ++i) {
        const double s = score(qf, ctx.vertex_features.at(rows.ids[i]), qn, rows.norms[i]);
        if (s > best_score) {
            best_score = s;
            best = i;
        }
    }
    return rows.ids[best];
}

ReverseMatchResult bsb_match_reverse(const ReverseContext& ctx, const Seg3DProvider& seg3d) {
    const auto candidates = top_k_pixels(ctx);
    const auto rows = vertex_rows(ctx.vertex_features);

    ReverseMatchResult result;
    result.candidates.resize(candidates.size());
    parallel_for(candidates.size(), [&](std::size_t i) {
        auto& report = result.candidates[i];
        report.pixel = candidates[i].pixel;
        report.similarity = candidates[i].similarity;
        const auto qf = ctx.image_features.at(report.pixel);
        const double qn = norm(qf);
        std::size_t best = 0;
        double best_score = score(qf, ctx.vertex_features.at(rows.ids[0]), qn, rows.norms[0]);
        for (std::size_t j = 1; j < rows.ids.size(); ++j) {
            const double s = score(qf, ctx.vertex_features.at(rows.ids[j]), qn, rows.norms[j]);
            if (s > best_score) {
                best_score = s;
                best = j;
            }
        }
        report.nearest_vertex = rows.ids[best];
        report.in_region = ctx.region.test(report.nearest_vertex);
    });

    const bool memoize = seg3d.capabilities().memoizable;
    std::map<VertexId, std::optional<Mask3D>> cache;
    std::map<VertexId, std::string> failures;
    for (auto& report : result.candidates) {
        if (!report.in_region) {
            continue;
        }
        const auto u = report.nearest_vertex;
        auto it = memoize ? cache.find(u) : cache.end();
        if (it == cache.end()) {
            std::optional<Mask3D> mask;
            try {
                auto m = seg3d.query(u);
                if (m.size() != ctx.region.size()) {
                    throw ValidationError("3D segmenter returned a mask of the wrong size");
                }
                mask = std::move(m);
            } catch (const Error& e) {
                failures[u] = e.what();
            }
            it = cache.insert_or_assign(u, std::move(mask)).first;
        }
        if (!it->second) {
            report.diagnostic = "segmenter failed: " + failures[u];
            continue;
        }
        report.iou = mask_iou(ctx.region, *it->second);
        if (!result.pixel || *report.iou > *result.iou) {
            result.pixel = report.pixel;
            result.vertex = u;
            result.iou = report.iou;
        }
    }
    return result;
}

} // namespace bsb
