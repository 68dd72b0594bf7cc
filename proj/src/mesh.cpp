#include "bsb/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <string_view>

#include "bsb/error.hpp"

namespace bsb {

namespace {

std::string_view next_token(std::string_view& rest) {
    const auto begin = rest.find_first_not_of(" \t\r");
    if (begin == std::string_view::npos) {
        rest = {};
        return {};
    }
    rest.remove_prefix(begin);
    const auto end = rest.find_first_of(" \t\r");
    auto token = rest.substr(0, end);
    rest.remove_prefix(end == std::string_view::npos ? rest.size() : end);
    return token;
}

float parse_float(std::string_view token, std::size_t line) {
    float value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size() || !std::isfinite(value)) {
        throw FormatError("OBJ line " + std::to_string(line) + ": non-numeric coordinate '" + std::string(token) + "'");
    }
    return value;
}

long parse_index(std::string_view token, std::size_t line) {
    token = token.substr(0, token.find('/'));
    long value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size() || value == 0) {
        throw FormatError("OBJ line " + std::to_string(line) + ": bad face index '" + std::string(token) + "'");
    }
    return value;
}

} // namespace

Mesh::Mesh(std::vector<Vec3f> vertices, std::vector<Face> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)), adjacency_(vertices_.size()) {
    const auto n = vertices_.size();
    for (const auto& f : faces_) {
        for (auto idx : f) {
            if (idx >= n) {
                throw ValidationError("face index " + std::to_string(idx) + " out of range for " +
                                      std::to_string(n) + " vertices");
            }
        }
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
            throw ValidationError("degenerate face with repeated vertex index");
        }
        for (int i = 0; i < 3; ++i) {
            const auto a = f[i];
            const auto b = f[(i + 1) % 3];
            adjacency_[a].push_back(b);
            adjacency_[b].push_back(a);
        }
    }
    for (auto& list : adjacency_) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
}

Mesh parse_obj(std::istream& in) {
    std::vector<Vec3f> vertices;
    std::vector<Face> faces;
    std::string line;
    std::size_t line_no = 0;
    std::vector<long> polygon;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view rest(line);
        const auto hash = rest.find('#');
        if (hash != std::string_view::npos) {
            rest = rest.substr(0, hash);
        }
        const auto keyword = next_token(rest);
        if (keyword == "v") {
            Vec3f p{};
            for (auto& c : p) {
                const auto token = next_token(rest);
                if (token.empty()) {
                    throw FormatError("OBJ line " + std::to_string(line_no) + ": vertex needs 3 coordinates");
                }
                c = parse_float(token, line_no);
            }
            vertices.push_back(p);
        } else if (keyword == "f") {
            polygon.clear();
            for (auto token = next_token(rest); !token.empty(); token = next_token(rest)) {
                auto idx = parse_index(token, line_no);
                // Negative indices are relative to the vertices read so far.
                idx = idx > 0 ? idx - 1 : static_cast<long>(vertices.size()) + idx;
                if (idx < 0 || idx >= static_cast<long>(vertices.size())) {
                    throw FormatError("OBJ line " + std::to_string(line_no) + ": face index out of range");
                }
                polygon.push_back(idx);
            }
            if (polygon.size() < 3) {
                throw FormatError("OBJ line " + std::to_string(line_no) + ": face needs at least 3 vertices");
            }
            for (std::size_t i = 1; i + 1 < polygon.size(); ++i) {
                Face f{static_cast<VertexId>(polygon[0]), static_cast<VertexId>(polygon[i]),
                       static_cast<VertexId>(polygon[i + 1])};
                if (f[0] != f[1] && f[1] != f[2] && f[0] != f[2]) {
                    faces.push_back(f);
                }
            }
        }
        // vt, vn, g, o, s, usemtl, mtllib: ignored.
    }
    if (vertices.empty() || faces.empty()) {
        throw FormatError("empty mesh: OBJ has no vertices or no faces");
    }
    return Mesh(std::move(vertices), std::move(faces));
}

Mesh load_mesh(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw NotFoundError("cannot open mesh " + path.string());
    }
    try {
        return parse_obj(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_obj(const Mesh& mesh, std::ostream& out) {
    std::ostringstream buf;
    buf.precision(9);
    for (const auto& v : mesh.vertices()) {
        buf << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
    }
    for (const auto& f : mesh.faces()) {
        buf << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }
    out << buf.str();
}

Mesh normalize_mesh(const Mesh& mesh) {
    if (mesh.vertex_count() == 0) {
        throw ValidationError("cannot normalize an empty mesh");
    }
    std::array<double, 3> lo{}, hi{};
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const auto& v : mesh.vertices()) {
        for (int c = 0; c < 3; ++c) {
            lo[c] = std::min(lo[c], static_cast<double>(v[c]));
            hi[c] = std::max(hi[c], static_cast<double>(v[c]));
        }
    }
    double extent = 0;
    for (int c = 0; c < 3; ++c) {
        extent = std::max(extent, hi[c] - lo[c]);
    }
    if (!(extent > 0)) {
        throw ValidationError("cannot normalize a zero-extent mesh");
    }
    std::vector<Vec3f> out;
    out.reserve(mesh.vertex_count());
    for (const auto& v : mesh.vertices()) {
        Vec3f p{};
        for (int c = 0; c < 3; ++c) {
            p[c] = static_cast<float>((v[c] - 0.5 * (lo[c] + hi[c])) / extent);
        }
        out.push_back(p);
    }
    return Mesh(std::move(out), mesh.faces());
}

Mask3D connected_component(const Mesh& mesh, VertexId seed, const std::function<bool(VertexId)>& member) {
    if (seed >= mesh.vertex_count()) {
        throw ValidationError("seed vertex " + std::to_string(seed) + " out of range");
    }
    if (!member(seed)) {
        throw ValidationError("seed vertex does not satisfy the membership predicate");
    }
    Mask3D visited(mesh.vertex_count());
    std::queue<VertexId> frontier;
    visited.set(seed);
    frontier.push(seed);
    while (!frontier.empty()) {
        const auto v = frontier.front();
        frontier.pop();
        for (auto u : mesh.neighbors(v)) {
            if (!visited.test(u) && member(u)) {
                visited.set(u);
                frontier.push(u);
            }
        }
    }
    return visited;
}

} // namespace bsb
