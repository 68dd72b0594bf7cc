#include "bsb/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "bsb/distill.hpp"
#include "bsb/error.hpp"
#include "bsb/eval.hpp"
#include "bsb/manifest.hpp"
#include "bsb/mesh.hpp"
#include "bsb/parallel.hpp"
#include "bsb/rasterizer.hpp"
#include "bsb/service.hpp"
#include "bsb/synthetic.hpp"
#include "bsb/tensor_io.hpp"

namespace bsb::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Thrown for flag combinations CLI11 cannot express; maps to exit 2.
struct UsageError : Error {
    using Error::Error;
};

json read_json(const fs::path& path) {
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

void write_json_file(const json& doc, const fs::path& path) {
    std::ofstream out(path);
    out << doc.dump(2) << '\n';
    if (!out) {
        throw Error("cannot write " + path.string());
    }
}

void add_camera_flags(CLI::App* cmd, Camera& cam) {
    cmd->add_option("--radius", cam.radius, "Camera distance from the origin")->capture_default_str();
    cmd->add_option("--fov", cam.fov, "Vertical field of view in degrees")->capture_default_str();
    cmd->add_option("--width", cam.width, "Image width in pixels")->capture_default_str();
    cmd->add_option("--height", cam.height, "Image height in pixels")->capture_default_str();
}

json camera_json(const Camera& c) {
    return {{"elevation", c.elevation}, {"azimuth", c.azimuth}, {"radius", c.radius},
            {"fov", c.fov},             {"width", c.width},     {"height", c.height}};
}

Mesh load_mesh_arg(const fs::path& path, bool normalize) {
    auto mesh = load_mesh(path);
    return normalize ? normalize_mesh(mesh) : mesh;
}

std::vector<LoadedCase> load_manifest_cases(const fs::path& path) { return load_cases(load_manifest(path)); }

void ensure_loaded(const std::vector<LoadedCase>& cases) {
    for (const auto& c : cases) {
        if (!c.data) {
            spdlog::warn("case {} failed to load: {}", c.name, c.load_error);
        }
    }
}

json inspect_tensor(const fs::path& path) {
    const auto t = read_tensor_file(path);
    json out{{"kind", "tensor"}, {"dtype", dtype_name(t.dtype)}, {"dims", t.dims}, {"bytes", fs::file_size(path)}};
    if (t.dtype == DType::f32) {
        const auto v = t.to_f32();
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        double sum = 0;
        for (float x : v) {
            sum += x;
        }
        out["min"] = *lo;
        out["max"] = *hi;
        out["mean"] = sum / static_cast<double>(v.size());
    } else {
        const auto v = t.to_u8();
        out["nonzero"] = static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](auto b) { return b != 0; }));
    }
    return out;
}

json inspect_mesh(const fs::path& path) {
    const auto mesh = load_mesh(path);
    Vec3f lo = mesh.vertices().front();
    Vec3f hi = lo;
    for (const auto& p : mesh.vertices()) {
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    }
    return {{"kind", "mesh"},
            {"vertices", mesh.vertex_count()},
            {"faces", mesh.face_count()},
            {"bbox_min", lo},
            {"bbox_max", hi}};
}

json inspect_manifest(const fs::path& path) {
    const auto manifest = load_manifest(path);
    json names = json::array();
    for (const auto& c : manifest.cases) {
        names.push_back(c.name);
    }
    return {{"kind", "manifest"}, {"cases", manifest.cases.size()}, {"names", names}};
}

ViewFeatureSet load_views(const fs::path& path) {
    const auto doc = read_json(path);
    const auto base = path.parent_path();
    ViewFeatureSet views;
    try {
        for (const auto& v : doc.at("views")) {
            fs::path features(v.at("features").get<std::string>());
            if (features.is_relative()) {
                features = base / features;
            }
            auto image = load_feature_image(features);
            Camera cam;
            cam.elevation = v.at("elevation").get<double>();
            cam.azimuth = v.at("azimuth").get<double>();
            cam.radius = v.value("radius", cam.radius);
            cam.fov = v.value("fov", cam.fov);
            cam.width = image.width();
            cam.height = image.height();
            views.push_back({cam, std::move(image)});
        }
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": view manifest schema violation: " + e.what());
    }
    return views;
}

std::vector<std::size_t> parse_ks(const std::string& text) {
    std::vector<std::size_t> ks;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            const auto k = std::stoll(item, &used);
            if (used != item.size() || k < 1) {
                throw std::invalid_argument(item);
            }
            ks.push_back(static_cast<std::size_t>(k));
        } catch (const std::logic_error&) {
            throw UsageError("--ks expects comma-separated positive integers, got '" + text + "'");
        }
    }
    if (ks.empty() || !std::is_sorted(ks.begin(), ks.end())) {
        throw UsageError("--ks must be a non-empty ascending list");
    }
    return ks;
}

void configure_logging(const std::string& level) {
    auto logger = spdlog::get("bsb");
    if (!logger) {
        logger = spdlog::stderr_logger_mt("bsb");
        spdlog::set_default_logger(logger);
    }
    const auto parsed = spdlog::level::from_str(level);
    if (parsed == spdlog::level::off && level != "off") {
        throw UsageError("unknown log level '" + level + "'");
    }
    spdlog::set_level(parsed);
}

const char* error_kind(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e)) {
        return "usage";
    }
    if (dynamic_cast<const NotFoundError*>(&e)) {
        return "not_found";
    }
    if (dynamic_cast<const FormatError*>(&e)) {
        return "format";
    }
    if (dynamic_cast<const ValidationError*>(&e)) {
        return "validation";
    }
    return "error";
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Best Segmentation Buddies: pixel-to-vertex segment correspondence", "bsb"};
    app.require_subcommand(1);
    std::string log_level = "warn";
    unsigned threads = 0;
    app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();
    app.add_option("--threads", threads, "Worker thread budget (0 = all cores)");

    // distill
    auto* distill = app.add_subcommand("distill", "Average per-view pixel features onto mesh vertices");
    fs::path d_mesh, d_views, d_out;
    bool d_normalize = false;
    distill->add_option("--mesh", d_mesh, "OBJ mesh")->required();
    distill->add_option("--views", d_views, "View manifest JSON")->required();
    distill->add_option("--out", d_out, "Output vertex feature tensor")->required();
    distill->add_flag("--normalize", d_normalize, "Normalize the mesh to the unit box first");

    // match
    auto* match = app.add_subcommand("match", "Match one click (pixel, or vertex with --reverse)");
    fs::path m_bundle;
    std::string m_image, m_vertex_features, m_mesh, m_seg2d, m_seg3d;
    std::optional<int> m_x, m_y;
    std::optional<long long> m_vertex;
    std::optional<std::size_t> m_k;
    bool m_reverse = false;
    match->add_option("--bundle", m_bundle, "Session bundle JSON; the flags below override its fields");
    match->add_option("--image-features", m_image, "Image feature tensor [h, w, d]");
    match->add_option("--vertex-features", m_vertex_features, "Vertex feature tensor [n, d]");
    match->add_option("--mesh", m_mesh, "OBJ mesh");
    match->add_option("--seg2d", m_seg2d, "2D segmenter spec");
    match->add_option("--seg3d", m_seg3d, "3D segmenter spec");
    match->add_option("--x", m_x, "Clicked pixel column");
    match->add_option("--y", m_y, "Clicked pixel row");
    match->add_flag("--reverse", m_reverse, "Match a vertex click to an image region");
    match->add_option("--vertex", m_vertex, "Clicked vertex (with --reverse)");
    match->add_option("--k", m_k, "Candidate budget")->check(CLI::PositiveNumber);

    // eval
    auto* eval = app.add_subcommand("eval", "Success rate over a manifest");
    fs::path e_manifest, e_report;
    std::string e_method = "bsb";
    std::size_t e_k = kDefaultCandidates;
    std::optional<std::uint64_t> e_seed;
    eval->add_option("--manifest", e_manifest, "Dataset manifest JSON")->required();
    eval->add_option("--method", e_method, "bsb|nn|random")->capture_default_str();
    eval->add_option("--k", e_k, "Candidate budget")->check(CLI::PositiveNumber)->capture_default_str();
    eval->add_option("--seed", e_seed, "PRNG seed (required for random)");
    eval->add_option("--report", e_report, "Also write the report here");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Success rate as a function of k");
    fs::path a_manifest, a_report;
    std::string a_ks = "1,5,10,25,50,100";
    ablate->add_option("--manifest", a_manifest, "Dataset manifest JSON")->required();
    ablate->add_option("--ks", a_ks, "Ascending comma-separated budgets")->capture_default_str();
    ablate->add_option("--report", a_report, "Also write the report here");

    // fidelity
    auto* fidelity = app.add_subcommand("fidelity", "Mean match IoU for regions with and without a 3D counterpart");
    fs::path f_manifest;
    std::size_t f_samples = 10;
    std::size_t f_k = kDefaultCandidates;
    std::uint64_t f_seed = 0;
    fidelity->add_option("--manifest", f_manifest, "Dataset manifest JSON with regions")->required();
    fidelity->add_option("--samples", f_samples, "Pixels sampled per image")->capture_default_str();
    fidelity->add_option("--k", f_k, "Candidate budget")->check(CLI::PositiveNumber)->capture_default_str();
    fidelity->add_option("--seed", f_seed, "PRNG seed")->required();

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP session service");
    ServerOptions s_opts;
    ServiceConfig s_config;
    std::optional<fs::path> s_static;
    serve->add_option("--host", s_opts.host, "Bind address")->envname("BSB_HOST")->capture_default_str();
    serve->add_option("--port", s_opts.port, "Port (0 picks a free one)")->envname("BSB_PORT")->capture_default_str();
    serve->add_option("--session-cap", s_config.session_cap, "Sessions kept before LRU eviction")
        ->envname("BSB_SESSION_CAP")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    serve->add_option("--data-root", s_config.data_root, "Base for relative bundle paths")->capture_default_str();
    serve->add_option("--static", s_static, "Directory served at /");

    // inspect
    auto* inspect = app.add_subcommand("inspect", "Summarize a tensor, mesh or manifest");
    fs::path i_path;
    inspect->add_option("path", i_path, ".bsbt, .obj or manifest .json")->required();

    // render
    auto* render_cmd = app.add_subcommand("render", "Rasterize one view");
    fs::path r_mesh;
    Camera r_cam;
    bool r_normalize = false;
    std::optional<fs::path> r_depth, r_ids;
    render_cmd->add_option("--mesh", r_mesh, "OBJ mesh")->required();
    render_cmd->add_option("--elevation", r_cam.elevation, "Degrees")->capture_default_str();
    render_cmd->add_option("--azimuth", r_cam.azimuth, "Degrees")->capture_default_str();
    add_camera_flags(render_cmd, r_cam);
    render_cmd->add_flag("--normalize", r_normalize, "Normalize the mesh to the unit box first");
    render_cmd->add_option("--depth-pgm", r_depth, "Write normalized depth as PGM");
    render_cmd->add_option("--ids-ppm", r_ids, "Write vertex attribution as PPM");

    // views
    auto* views = app.add_subcommand("views", "List cameras: the 5x12 grid or random samples");
    Camera v_base;
    bool v_grid = false;
    std::optional<std::size_t> v_random;
    std::optional<std::uint64_t> v_seed;
    auto* grid_flag = views->add_flag("--grid", v_grid, "Elevations -60..60 by 30, azimuths 0..330 by 30");
    auto* random_opt = views->add_option("--random", v_random, "Number of random views");
    grid_flag->excludes(random_opt);
    views->add_option("--seed", v_seed, "PRNG seed (required with --random)");
    add_camera_flags(views, v_base);

    // synth
    auto* synth = app.add_subcommand("synth", "Write synthetic fixtures");
    std::string y_kind = "decoy";
    fs::path y_out;
    int y_max_decoys = 4;
    std::uint64_t y_seed = 1;
    synth::SceneSpec y_spec;
    synth->add_option("--kind", y_kind, "decoy (manifest) | planted (session bundle)")
        ->check(CLI::IsMember({"decoy", "planted"}))
        ->capture_default_str();
    synth->add_option("--out", y_out, "Output directory")->required();
    synth->add_option("--max-decoys", y_max_decoys, "decoy: largest decoy count")->capture_default_str();
    synth->add_option("--seed", y_seed, "PRNG seed")->capture_default_str();
    synth->add_option("--parts", y_spec.parts, "planted: parts shared with the mesh")->capture_default_str();
    synth->add_option("--missing-parts", y_spec.missing_parts, "planted: image-only parts")->capture_default_str();

    std::vector<const char*> argv{"bsb"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    try {
        if (args.empty()) {
            err << app.help();
            return 2;
        }
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return 0;
        } catch (const CLI::CallForAllHelp&) {
            out << app.help("", CLI::AppFormatMode::All);
            return 0;
        } catch (const CLI::ParseError& e) {
            err << json{{"error", e.what()}, {"kind", "usage"}}.dump() << '\n';
            return 2;
        }
        configure_logging(log_level);
        set_thread_budget(threads);

        json result;
        if (*distill) {
            const auto mesh = load_mesh_arg(d_mesh, d_normalize);
            const auto field = distill_features(mesh, load_views(d_views));
            write_tensor_file(to_tensor(field), d_out);
            result = {{"vertices", field.size()},
                      {"valid", field.valid_count()},
                      {"dim", field.dim()},
                      {"out", d_out.generic_string()}};
        } else if (*match) {
            json bundle = json::object();
            fs::path base = fs::current_path();
            if (!m_bundle.empty()) {
                bundle = read_json(m_bundle);
                base = m_bundle.parent_path();
            }
            const auto override_path = [&](const char* key, const std::string& value) {
                if (!value.empty()) {
                    bundle[key] = fs::absolute(value).generic_string();
                }
            };
            override_path("image_features", m_image);
            override_path("vertex_features", m_vertex_features);
            override_path("mesh", m_mesh);
            if (!m_seg2d.empty()) {
                bundle["seg2d"] = m_seg2d;
                base = fs::current_path();
            }
            if (!m_seg3d.empty()) {
                bundle["seg3d"] = m_seg3d;
                base = fs::current_path();
            }
            if (!m_bundle.empty() && (!m_seg2d.empty() || !m_seg3d.empty())) {
                throw UsageError("provider specs resolve against one directory; give them all in the bundle or all "
                                 "as flags");
            }
            const auto session = Session::create(bundle, base);
            if (m_reverse) {
                if (!m_vertex || m_x || m_y) {
                    throw UsageError("--reverse needs --vertex and no --x/--y");
                }
                if (*m_vertex < 0) {
                    throw UsageError("--vertex must be non-negative");
                }
                result = session->vertex_click(static_cast<VertexId>(*m_vertex), m_k);
            } else {
                if (!m_x || !m_y || m_vertex) {
                    throw UsageError("pixel matching needs --x and --y (use --reverse for --vertex)");
                }
                result = session->click({*m_x, *m_y}, m_k);
            }
        } else if (*eval) {
            const auto method = [&] {
                try {
                    return parse_method(e_method);
                } catch (const ValidationError& e) {
                    throw UsageError(e.what());
                }
            }();
            if (method == Method::random && !e_seed) {
                throw UsageError("--seed is required for the random method");
            }
            const auto cases = load_manifest_cases(e_manifest);
            ensure_loaded(cases);
            result = eval_success_rate(cases, method, e_k, e_seed.value_or(0)).to_json();
            if (!e_report.empty()) {
                write_json_file(result, e_report);
            }
        } else if (*ablate) {
            const auto ks = parse_ks(a_ks);
            const auto cases = load_manifest_cases(a_manifest);
            ensure_loaded(cases);
            result = ablation_to_json(ablate_k(cases, ks), cases.size());
            if (!a_report.empty()) {
                write_json_file(result, a_report);
            }
        } else if (*fidelity) {
            const auto cases = load_manifest_cases(f_manifest);
            result = fidelity_iou_stats(cases, f_samples, f_seed, f_k).to_json();
            result["seed"] = f_seed;
            result["samples_per_image"] = f_samples;
        } else if (*serve) {
            s_opts.static_dir = s_static;
            SessionService service(s_config);
            HttpServer server(service, s_opts);
            const int port = server.bind();
            err << json{{"listening", s_opts.host + ":" + std::to_string(port)}}.dump() << std::endl;
            server.listen();
            return 0;
        } else if (*inspect) {
            const auto ext = i_path.extension().string();
            if (ext == ".obj") {
                result = inspect_mesh(i_path);
            } else if (ext == ".json") {
                result = inspect_manifest(i_path);
            } else {
                result = inspect_tensor(i_path);
            }
            result["path"] = i_path.generic_string();
        } else if (*render_cmd) {
            const auto mesh = load_mesh_arg(r_mesh, r_normalize);
            const auto map = render(mesh, r_cam);
            std::size_t covered = 0;
            for (auto v : map.vertex_of_pixel) {
                covered += v != kBackground ? 1 : 0;
            }
            json visible = json::array();
            for (std::size_t v = 0; v < map.visible.size(); ++v) {
                if (map.visible[v]) {
                    visible.push_back(v);
                }
            }
            if (r_depth) {
                write_depth_pgm(map, *r_depth);
            }
            if (r_ids) {
                write_vertex_id_ppm(map, *r_ids);
            }
            result = {{"camera", camera_json(r_cam)}, {"covered_pixels", covered}, {"visible_vertices", visible}};
        } else if (*views) {
            std::vector<Camera> cams;
            if (v_random) {
                if (!v_seed) {
                    throw UsageError("--seed is required with --random");
                }
                cams = sample_views(*v_random, *v_seed, v_base);
            } else {
                cams = view_grid(default_grid_elevations(), default_grid_azimuths(), v_base);
            }
            json list = json::array();
            for (const auto& c : cams) {
                list.push_back(camera_json(c));
            }
            result = {{"views", list}};
        } else if (*synth) {
            if (y_kind == "decoy") {
                const auto manifest = synth::write_decoy_manifest(y_out, y_max_decoys, y_seed);
                result = {{"manifest", (y_out / "manifest.json").generic_string()},
                          {"cases", manifest["cases"].size()}};
            } else {
                y_spec.seed = y_seed;
                y_spec.dim = std::max(y_spec.dim, y_spec.parts + y_spec.missing_parts + 1);
                synth::write_session_bundle(synth::make_scene(y_spec), y_out);
                result = {{"bundle", (y_out / "bundle.json").generic_string()}};
            }
        }
        out << result.dump(2) << '\n';
        return 0;
    } catch (const UsageError& e) {
        err << json{{"error", e.what()}, {"kind", "usage"}}.dump() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << json{{"error", e.what()}, {"kind", error_kind(e)}}.dump() << '\n';
        return 1;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

} // namespace bsb::cli
