#include <doctest.h>

#include <fstream>
#include <set>

#include "bsb/error.hpp"
#include "bsb/eval.hpp"
#include "bsb/synthetic.hpp"
#include "bsb/tensor_io.hpp"
#include "support.hpp"

using namespace bsb;
using nlohmann::json;

namespace {

json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<LoadedCase> decoy_cases() { return load_cases(load_manifest(testsupport::data_path("decoy/manifest.json"))); }

// Manifest whose single case points at the committed decoy fixture, edited by `edit`.
std::filesystem::path edited_manifest(const std::string& name, const std::function<void(json&)>& edit) {
    const auto dir = testsupport::scratch_dir("eval_" + name);
    auto doc = read_json(testsupport::data_path("decoy/manifest.json"));
    json c = doc["cases"][0];
    for (const auto& key : {"image_features", "part_mask", "object_mask", "vertex_features", "mesh"}) {
        c[key] = (testsupport::data_path("decoy") / c[key].get<std::string>()).string();
    }
    c.erase("seg2d");
    c.erase("seg3d");
    c.erase("regions");
    edit(c);
    std::ofstream(dir / "manifest.json") << json{{"cases", {c}}}.dump();
    return dir / "manifest.json";
}

// Pixels labelled by the label of the vertex the renderer attributes them to.
class RenderedLabels final : public Seg2DProvider {
public:
    RenderedLabels(const Mesh& mesh, const Camera& cam, const LabelField3D& labels) {
        const auto map = render(mesh, cam);
        field_ = {cam.width, cam.height, std::vector<std::int32_t>(cam.width * cam.height, 0)};
        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                if (const auto v = unproject_pixel(map, x, y)) {
                    field_.labels[static_cast<std::size_t>(y) * cam.width + x] = labels.labels[*v];
                }
            }
        }
    }
    Seg2DResult query(Pixel p) const override { return SyntheticSeg2D(field_).query(p); }
    const LabelField2D& field() const { return field_; }

private:
    LabelField2D field_;
};

} // namespace

TEST_CASE("committed decoy fixtures are reproducible from the generator") {
    const auto dir = testsupport::scratch_dir("decoy_regen");
    synth::write_decoy_manifest(dir, 4, 1);
    const auto committed = testsupport::data_path("decoy");
    std::size_t files = 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(committed)) {
        if (!entry.is_regular_file()) {
            continue;
        }
        const auto rel = std::filesystem::relative(entry.path(), committed);
        INFO(rel.string());
        REQUIRE(file_bytes(entry.path()) == file_bytes(dir / rel));
        ++files;
    }
    CHECK(files > 15);
}

TEST_CASE("manifest validation names the offending case and field") {
    CHECK_NOTHROW(load_manifest(edited_manifest("ok", [](json&) {})));
    const auto expect = [](const std::string& name, const std::function<void(json&)>& edit, const std::string& needle) {
        try {
            load_manifest(edited_manifest(name, edit));
            FAIL("expected an error for " << name);
        } catch (const Error& e) {
            CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
        }
    };
    expect("click", [](json& c) { c["click"] = {100, 0}; }, "outside the image");
    expect("gt", [](json& c) { c["gt_part"] = {0, 9999}; }, "gt_part index 9999");
    expect("missing", [](json& c) { c["mesh"] = "/nonexistent/m.obj"; }, "/nonexistent/m.obj");
    expect("schema", [](json& c) { c.erase("click"); }, "click");
    expect("mask", [](json& c) { c["part_mask"] = c["vertex_features"]; }, "does not match");
    expect("swap", [](json& c) { c["vertex_features"] = c["image_features"]; }, "vertex_features");
    CHECK_THROWS_AS(load_manifest(edited_manifest("nf", [](json& c) { c["mesh"] = "/nonexistent/m.obj"; })),
                    NotFoundError);
    CHECK_THROWS_AS(load_manifest(edited_manifest("fmt", [](json& c) { c["click"] = {1}; })), FormatError);
    CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.json"), NotFoundError);
}

TEST_CASE("decoys: bsb beats nearest neighbour, which equals bsb at k = 1") {
    const auto cases = decoy_cases();
    REQUIRE(cases.size() == 15);
    const auto nn = eval_success_rate(cases, Method::nn, 100, 0);
    const auto bsb = eval_success_rate(cases, Method::bsb, 100, 0);
    const auto bsb1 = eval_success_rate(cases, Method::bsb, 1, 0);
    CHECK(nn.success_rate == doctest::Approx(3.0 / 15));
    CHECK(bsb.success_rate == 1.0);
    CHECK(bsb1.success_rate == nn.success_rate);
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const bool clean = cases[i].name.rfind("d0_", 0) == 0;
        CHECK((nn.cases[i].outcome == Outcome::hit) == clean);
        CHECK((bsb1.cases[i].outcome == Outcome::hit) == clean);
        if (!clean) {
            CHECK(bsb1.cases[i].outcome == Outcome::no_match);
        }
    }
    for (const auto* r : {&nn, &bsb, &bsb1}) {
        CHECK(r->hits + r->misses == r->cases.size());
        CHECK(r->errors == 0);
    }
}

TEST_CASE("ablation over k is non-decreasing and saturates on decoys") {
    const auto cases = decoy_cases();
    const auto rows = ablate_k(cases, {1, 2, 3, 4, 5, 10, 100});
    REQUIRE(rows.size() == 7);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i].success_rate >= rows[i - 1].success_rate);
    }
    // Case d{m}_t* needs k > m: the m decoys rank ahead of every true vertex.
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(rows[i].hits == 3 * (i + 1));
    }
    CHECK(rows.back().success_rate == 1.0);
    const auto doc = ablation_to_json(rows, cases.size());
    CHECK(doc["ablation"].size() == 7);
    CHECK(doc["case_count"] == 15);
    CHECK_THROWS_AS(ablate_k(cases, {5, 1}), ValidationError);
    CHECK_THROWS_AS(ablate_k(cases, {}), ValidationError);
}

TEST_CASE("random baseline is seeded and reported") {
    const auto cases = decoy_cases();
    const auto a = eval_success_rate(cases, Method::random, 5, 42);
    const auto b = eval_success_rate(cases, Method::random, 5, 42);
    CHECK(a.to_json() == b.to_json());
    bool differs = false;
    for (std::uint64_t seed = 0; seed < 20 && !differs; ++seed) {
        differs = eval_success_rate(cases, Method::random, 5, seed).to_json()["cases"] != a.to_json()["cases"];
    }
    CHECK(differs);
    CHECK(a.to_json()["method"] == "random");
    CHECK(a.to_json()["seed"] == 42);
    CHECK(parse_method("nn") == Method::nn);
    CHECK_THROWS_AS(parse_method("best"), ValidationError);
}

TEST_CASE("load failures and empty ground truth are counted, not fatal") {
    auto cases = decoy_cases();
    cases[1].data.reset();
    cases[1].load_error = "broken";
    auto copy = std::make_shared<CorrespondenceCase>(*cases[2].data);
    copy->gt_part.clear();
    cases[2].data = copy;
    const auto r = eval_success_rate(cases, Method::bsb, 100, 0);
    CHECK(r.cases[1].outcome == Outcome::error);
    CHECK(r.cases[1].diagnostic == "broken");
    CHECK(r.cases[2].outcome == Outcome::miss);
    CHECK(r.errors == 1);
    CHECK(r.hits == 13);
    CHECK(r.hits + r.misses == 15);
    CHECK(r.success_rate == doctest::Approx(13.0 / 15));
    CHECK(r.to_json()["cases"][1]["diagnostic"] == "broken");
    CHECK_THROWS_AS(eval_success_rate(std::span<const LoadedCase>{}, Method::bsb, 1, 0), ValidationError);
}

TEST_CASE("fidelity separates regions with and without a 3D counterpart") {
    const auto dir = testsupport::scratch_dir("fidelity");
    synth::SceneSpec spec;
    spec.missing_parts = 2;
    spec.dim = 8;
    const auto scene = synth::make_scene(spec);
    json cases = json::array();
    cases.push_back(synth::write_case(scene, dir, "scene", synth::band_center(scene, 1)));
    cases.push_back(synth::write_case(scene, dir, "missing", synth::band_center(scene, 4)));
    CHECK(cases[1]["gt_part"].empty());
    std::ofstream(dir / "manifest.json") << json{{"cases", cases}}.dump();
    const auto loaded = load_cases(load_manifest(dir / "manifest.json"));

    const auto stats = fidelity_iou_stats(loaded, 40, 7);
    CHECK(stats.matched_samples + stats.unmatched_samples == 80);
    CHECK(stats.matched_samples > 0);
    CHECK(stats.unmatched_samples > 0);
    CHECK(*stats.matched_mean == 1.0);
    CHECK(*stats.unmatched_mean == 0.0);
    CHECK(stats.to_json() == fidelity_iou_stats(loaded, 40, 7).to_json());

    // Bsb on the image-only click finds nothing; counted as a miss.
    const auto r = eval_success_rate(loaded, Method::bsb, 100, 0);
    CHECK(r.cases[0].outcome == Outcome::hit);
    CHECK(r.cases[1].outcome == Outcome::no_match);

    std::vector<LoadedCase> none{loaded[0]};
    auto bare = std::make_shared<CorrespondenceCase>(*loaded[0].data);
    bare->regions.clear();
    none[0].data = bare;
    const auto empty = fidelity_iou_stats(none, 10, 1);
    CHECK_FALSE(empty.matched_mean);
    CHECK(empty.to_json()["matched_mean_iou"].is_null());
}

TEST_CASE("projected click cases land on visible vertices and are seeded") {
    const auto mesh = testsupport::uv_sphere(8, 12, 0.5f);
    LabelField3D labels{std::vector<std::int32_t>(mesh.vertex_count())};
    VertexFeatureField field(mesh.vertex_count(), 5);
    for (VertexId v = 0; v < mesh.vertex_count(); ++v) {
        const auto& p = mesh.vertices()[v];
        labels.labels[v] = 1 + (p[1] > 0 ? 1 : 0) + (p[0] > 0 ? 2 : 0);
        std::vector<float> row(5, 0.0f);
        row[labels.labels[v]] = 1.0f;
        field.set(v, row);
    }
    std::vector<ProjectedView> views;
    for (const auto& cam : view_grid({-30, 30}, {0, 90, 180, 270}, Camera{0, 0, 2, 60, 64, 64})) {
        auto seg = std::make_shared<RenderedLabels>(mesh, cam, labels);
        FeatureImage img(cam.width, cam.height, 5);
        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                if (const auto l = seg->field().at({x, y})) {
                    img.at({x, y})[l] = 1.0f;
                }
            }
        }
        views.push_back({cam, std::move(img), seg});
    }
    const ProjectedCaseRecipe recipe{6, 2, 5};
    const auto cases = generate_projected_cases(mesh, labels, views, field, recipe);
    REQUIRE_FALSE(cases.empty());
    CHECK(cases.size() <= 12);
    std::set<std::int32_t> parts;
    for (const auto& c : cases) {
        const auto v = c.view["vertex"].get<VertexId>();
        parts.insert(labels.labels[v]);
        CHECK(c.in_gt(v));
        CHECK(c.part_mask.test(c.click));
        const auto& cam = views[0].camera;
        Camera used = cam;
        used.elevation = c.view["elevation"];
        used.azimuth = c.view["azimuth"];
        CHECK(projected_pixel(used, mesh.vertices()[v]) == c.click);
        CHECK(render(mesh, used).visible[v]);
        const auto m = bsb_match(c.context(100), *c.seg2d);
        REQUIRE(m.vertex);
        CHECK(c.in_gt(*m.vertex));
    }
    CHECK(parts.size() == 1);
    const auto again = generate_projected_cases(mesh, labels, views, field, recipe);
    REQUIRE(again.size() == cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) {
        CHECK(again[i].name == cases[i].name);
    }

    // A vertex on the far side is rejected.
    VertexId hidden = 0;
    const auto map = render(mesh, views[0].camera);
    while (map.visible[hidden]) {
        ++hidden;
    }
    CHECK_THROWS_AS(build_projected_click_case(mesh, labels, views[0], field, hidden, "x"), ValidationError);
}
