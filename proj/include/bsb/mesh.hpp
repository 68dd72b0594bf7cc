#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

#include "bsb/types.hpp"

namespace bsb {

using Vec3f = std::array<float, 3>;
using Face = std::array<VertexId, 3>;

// Triangle mesh with edge adjacency. Neighbor lists are sorted ascending.
class Mesh {
public:
    Mesh() = default;
    Mesh(std::vector<Vec3f> vertices, std::vector<Face> faces);

    std::size_t vertex_count() const { return vertices_.size(); }
    std::size_t face_count() const { return faces_.size(); }
    const std::vector<Vec3f>& vertices() const { return vertices_; }
    const std::vector<Face>& faces() const { return faces_; }
    const std::vector<VertexId>& neighbors(VertexId v) const { return adjacency_[v]; }

private:
    std::vector<Vec3f> vertices_;
    std::vector<Face> faces_;
    std::vector<std::vector<VertexId>> adjacency_;
};

// OBJ subset: "v x y z", "f i j k [l ...]" (1-based or negative relative
// indices; "i/t/n" forms accepted), "#" comments. Polygons are fan-triangulated
// from their first vertex; faces that collapse to a repeated index are dropped.
Mesh parse_obj(std::istream& in);
Mesh load_mesh(const std::filesystem::path& path);
void write_obj(const Mesh& mesh, std::ostream& out);

// Centers the bounding box at the origin and scales its longest edge to 1.
Mesh normalize_mesh(const Mesh& mesh);

// Maximal set reachable from seed through edges whose every vertex satisfies member.
Mask3D connected_component(const Mesh& mesh, VertexId seed, const std::function<bool(VertexId)>& member);

} // namespace bsb
