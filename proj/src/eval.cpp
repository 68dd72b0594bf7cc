#include "bsb/eval.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "bsb/error.hpp"
#include "bsb/parallel.hpp"
#include "bsb/tensor_io.hpp"

namespace bsb {

namespace {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::size_t pick(std::mt19937_64& rng, std::size_t bound) {
    const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % bound;
    std::uint64_t x = rng();
    while (x >= limit) {
        x = rng();
    }
    return static_cast<std::size_t>(x % bound);
}

CaseOutcome evaluate(const CorrespondenceCase& c, Method method, std::size_t k, std::uint64_t seed) {
    CaseOutcome out{c.name, Outcome::miss, std::nullopt, std::nullopt, {}};
    const auto ctx = c.context(k);
    switch (method) {
    case Method::bsb: {
        if (!c.seg2d) {
            throw ValidationError("case has no 2D segmentation provider");
        }
        const auto result = bsb_match(ctx, *c.seg2d);
        if (!result.vertex) {
            out.outcome = Outcome::no_match;
            return out;
        }
        out.vertex = result.vertex;
        out.iou = result.iou;
        break;
    }
    case Method::nn:
        out.vertex = nn_baseline(ctx);
        break;
    case Method::random:
        out.vertex = random_candidate_baseline(ctx, seed);
        break;
    }
    out.outcome = c.in_gt(*out.vertex) ? Outcome::hit : Outcome::miss;
    return out;
}

std::optional<double> mean_of(const std::vector<double>& values) {
    if (values.empty()) {
        return std::nullopt;
    }
    double sum = 0;
    for (double v : values) {
        sum += v;
    }
    return sum / static_cast<double>(values.size());
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

} // namespace

bool CorrespondenceCase::in_gt(VertexId v) const {
    return std::find(gt_part.begin(), gt_part.end(), v) != gt_part.end();
}

CorrespondenceCase load_case(const CaseRef& ref, const std::filesystem::path& base_dir) {
    CorrespondenceCase c{ref.name,
                         load_feature_image(ref.image_features),
                         load_mask2d(ref.part_mask),
                         load_mask2d(ref.object_mask),
                         load_vertex_features(ref.vertex_features),
                         load_mesh(ref.mesh),
                         ref.click,
                         ref.gt_part,
                         nullptr,
                         {},
                         ref.view};
    if (ref.seg2d) {
        c.seg2d = make_seg2d(*ref.seg2d, {base_dir, &c.mesh, &c.vertex_features});
    }
    for (const auto& r : ref.regions) {
        c.regions.push_back({load_mask2d(r.mask), r.has_counterpart});
    }
    return c;
}

std::vector<LoadedCase> load_cases(const DatasetManifest& manifest) {
    std::vector<LoadedCase> out(manifest.cases.size());
    parallel_for(manifest.cases.size(), [&](std::size_t i) {
        const auto& ref = manifest.cases[i];
        out[i].name = ref.name;
        try {
            out[i].data = std::make_shared<const CorrespondenceCase>(load_case(ref, manifest.base_dir));
        } catch (const Error& e) {
            out[i].load_error = e.what();
        }
    });
    return out;
}

Method parse_method(const std::string& name) {
    if (name == "bsb") {
        return Method::bsb;
    }
    if (name == "nn") {
        return Method::nn;
    }
    if (name == "random") {
        return Method::random;
    }
    throw ValidationError("unknown method '" + name + "' (expected bsb, nn or random)");
}

const char* method_name(Method m) {
    switch (m) {
    case Method::bsb:
        return "bsb";
    case Method::nn:
        return "nn";
    case Method::random:
        return "random";
    }
    return "unknown";
}

const char* outcome_name(Outcome o) {
    switch (o) {
    case Outcome::hit:
        return "hit";
    case Outcome::miss:
        return "miss";
    case Outcome::no_match:
        return "no_match";
    case Outcome::error:
        return "error";
    }
    return "unknown";
}

EvalReport eval_success_rate(std::span<const LoadedCase> cases, Method method, std::size_t k, std::uint64_t seed) {
    if (cases.empty()) {
        throw ValidationError("evaluation needs at least one case");
    }
    EvalReport report;
    report.method = method;
    report.k = k;
    report.seed = seed;
    report.cases.resize(cases.size());
    parallel_for(cases.size(), [&](std::size_t i) {
        auto& out = report.cases[i];
        if (!cases[i].data) {
            out = {cases[i].name, Outcome::error, std::nullopt, std::nullopt, cases[i].load_error};
            return;
        }
        try {
            out = evaluate(*cases[i].data, method, k, splitmix64(seed + i));
        } catch (const Error& e) {
            out = {cases[i].name, Outcome::error, std::nullopt, std::nullopt, e.what()};
        }
    });
    for (const auto& c : report.cases) {
        switch (c.outcome) {
        case Outcome::hit:
            ++report.hits;
            break;
        case Outcome::no_match:
            ++report.no_matches;
            ++report.misses;
            break;
        case Outcome::error:
            ++report.errors;
            ++report.misses;
            break;
        case Outcome::miss:
            ++report.misses;
            break;
        }
    }
    report.success_rate = static_cast<double>(report.hits) / static_cast<double>(report.cases.size());
    return report;
}

EvalReport eval_success_rate(const DatasetManifest& manifest, Method method, std::size_t k, std::uint64_t seed) {
    const auto cases = load_cases(manifest);
    return eval_success_rate(cases, method, k, seed);
}

json EvalReport::to_json() const {
    json per_case = json::array();
    for (const auto& c : cases) {
        json entry{{"name", c.name}, {"outcome", outcome_name(c.outcome)}};
        entry["vertex"] = c.vertex ? json(*c.vertex) : json(nullptr);
        entry["iou"] = c.iou ? json(*c.iou) : json(nullptr);
        if (!c.diagnostic.empty()) {
            entry["diagnostic"] = c.diagnostic;
        }
        per_case.push_back(entry);
    }
    return {{"method", method_name(method)}, {"k", k},           {"seed", seed},
            {"cases", per_case},             {"case_count", cases.size()}, {"hits", hits},
            {"misses", misses},              {"no_matches", no_matches},   {"errors", errors},
            {"success_rate", success_rate}};
}

std::vector<AblationRow> ablate_k(std::span<const LoadedCase> cases, const std::vector<std::size_t>& ks) {
    if (ks.empty() || !std::is_sorted(ks.begin(), ks.end())) {
        throw ValidationError("ablation needs a non-empty ascending list of k");
    }
    std::vector<AblationRow> rows;
    for (auto k : ks) {
        const auto report = eval_success_rate(cases, Method::bsb, k, 0);
        rows.push_back({k, report.success_rate, report.hits, report.no_matches});
    }
    return rows;
}

json ablation_to_json(const std::vector<AblationRow>& rows, std::size_t case_count) {
    json table = json::array();
    for (const auto& r : rows) {
        table.push_back({{"k", r.k}, {"success_rate", r.success_rate}, {"hits", r.hits}, {"no_matches", r.no_matches}});
    }
    return {{"method", "bsb"}, {"case_count", case_count}, {"ablation", table}};
}

json FidelityStats::to_json() const {
    return {{"matched_mean_iou", optional_number(matched_mean)},
            {"unmatched_mean_iou", optional_number(unmatched_mean)},
            {"matched_samples", matched_samples},
            {"unmatched_samples", unmatched_samples}};
}

FidelityStats fidelity_iou_stats(std::span<const LoadedCase> cases, std::size_t samples_per_image, std::uint64_t seed,
                                 std::size_t k) {
    std::vector<std::vector<double>> matched(cases.size());
    std::vector<std::vector<double>> unmatched(cases.size());
    parallel_for(cases.size(), [&](std::size_t i) {
        if (!cases[i].data) {
            throw ValidationError("case '" + cases[i].name + "' failed to load: " + cases[i].load_error);
        }
        const auto& c = *cases[i].data;
        if (c.regions.empty()) {
            return;
        }
        if (!c.seg2d) {
            throw ValidationError("case '" + c.name + "' has regions but no 2D segmentation provider");
        }
        // Pixels of the union of regions, each tagged with its first containing region.
        std::vector<std::pair<Pixel, bool>> pool;
        for (const auto& r : c.regions) {
            if (r.mask.empty()) {
                throw ValidationError("case '" + c.name + "' has a region with zero area");
            }
        }
        for (int y = 0; y < c.image_features.height(); ++y) {
            for (int x = 0; x < c.image_features.width(); ++x) {
                for (const auto& r : c.regions) {
                    if (r.mask.test({x, y})) {
                        pool.emplace_back(Pixel{x, y}, r.has_counterpart);
                        break;
                    }
                }
            }
        }
        std::mt19937_64 rng(splitmix64(seed + i));
        for (std::size_t s = 0; s < samples_per_image; ++s) {
            const auto& [pixel, has_counterpart] = pool[pick(rng, pool.size())];
            double iou = 0;
            try {
                const auto seg = c.seg2d->query(pixel);
                const ClickContext ctx{c.image_features, pixel, seg.part, seg.object, c.vertex_features, k};
                const auto result = bsb_match(ctx, *c.seg2d);
                iou = result.iou.value_or(0.0f);
            } catch (const Error&) {
                iou = 0;
            }
            (has_counterpart ? matched[i] : unmatched[i]).push_back(iou);
        }
    });
    std::vector<double> all_matched;
    std::vector<double> all_unmatched;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        all_matched.insert(all_matched.end(), matched[i].begin(), matched[i].end());
        all_unmatched.insert(all_unmatched.end(), unmatched[i].begin(), unmatched[i].end());
    }
    return {mean_of(all_matched), mean_of(all_unmatched), all_matched.size(), all_unmatched.size()};
}

CorrespondenceCase build_projected_click_case(const Mesh& mesh, const LabelField3D& gt_labels,
                                              const ProjectedView& view, const VertexFeatureField& vertex_features,
                                              VertexId vertex, const std::string& name) {
    if (vertex >= mesh.vertex_count() || gt_labels.labels.size() != mesh.vertex_count()) {
        throw ValidationError("vertex or label field does not match the mesh");
    }
    if (!view.seg2d) {
        throw ValidationError("projected view needs a 2D segmentation provider");
    }
    const auto map = render(mesh, view.camera);
    const auto pixel = projected_pixel(view.camera, mesh.vertices()[vertex]);
    if (!map.visible[vertex] || !pixel) {
        throw ValidationError("vertex " + std::to_string(vertex) + " is not visible in the view");
    }
    auto seg = view.seg2d->query(*pixel);
    std::vector<VertexId> gt;
    for (std::size_t v = 0; v < gt_labels.labels.size(); ++v) {
        if (gt_labels.labels[v] == gt_labels.labels[vertex]) {
            gt.push_back(static_cast<VertexId>(v));
        }
    }
    return CorrespondenceCase{name,
                              view.features,
                              std::move(seg.part),
                              std::move(seg.object),
                              vertex_features,
                              mesh,
                              *pixel,
                              std::move(gt),
                              view.seg2d,
                              {},
                              {{"elevation", view.camera.elevation},
                               {"azimuth", view.camera.azimuth},
                               {"vertex", vertex}}};
}

std::vector<CorrespondenceCase> generate_projected_cases(const Mesh& mesh, const LabelField3D& gt_labels,
                                                         const std::vector<ProjectedView>& views,
                                                         const VertexFeatureField& vertex_features,
                                                         const ProjectedCaseRecipe& recipe) {
    if (views.empty()) {
        throw ValidationError("projected cases need at least one view");
    }
    std::mt19937_64 rng(recipe.seed);
    const std::set<std::int32_t> label_set(gt_labels.labels.begin(), gt_labels.labels.end());
    const std::vector<std::int32_t> labels(label_set.begin(), label_set.end());
    const auto part = labels[pick(rng, labels.size())];

    std::vector<VertexId> members;
    for (std::size_t v = 0; v < gt_labels.labels.size(); ++v) {
        if (gt_labels.labels[v] == part) {
            members.push_back(static_cast<VertexId>(v));
        }
    }
    // Partial Fisher-Yates with the portable picker.
    const auto take = std::min(recipe.vertices_per_shape, members.size());
    for (std::size_t i = 0; i < take; ++i) {
        std::swap(members[i], members[i + pick(rng, members.size() - i)]);
    }
    members.resize(take);

    std::vector<RenderMap> maps;
    maps.reserve(views.size());
    for (const auto& view : views) {
        maps.push_back(render(mesh, view.camera));
    }

    std::vector<CorrespondenceCase> cases;
    for (auto v : members) {
        std::vector<std::size_t> visible;
        for (std::size_t i = 0; i < views.size(); ++i) {
            if (maps[i].visible[v] && projected_pixel(views[i].camera, mesh.vertices()[v])) {
                visible.push_back(i);
            }
        }
        const auto chosen = std::min(recipe.views_per_vertex, visible.size());
        for (std::size_t i = 0; i < chosen; ++i) {
            std::swap(visible[i], visible[i + pick(rng, visible.size() - i)]);
        }
        for (std::size_t i = 0; i < chosen; ++i) {
            const auto name = "v" + std::to_string(v) + "_view" + std::to_string(visible[i]);
            try {
                cases.push_back(
                    build_projected_click_case(mesh, gt_labels, views[visible[i]], vertex_features, v, name));
            } catch (const Error&) {
                // The segmenter rejected the projected click (e.g. background); drop it.
            }
        }
    }
    return cases;
}

} // namespace bsb
