#pragma once

// Triangle meshes and the utilities the pipeline needs from them: OBJ export,
// closedness checking, and point-in-mesh parity queries.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lsc/error.hpp"
#include "lsc/mathcore/mat.hpp"

namespace lsc::sdf {

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    void validate() const {
        for (const auto& f : faces)
            for (int i : f)
                require(i >= 0 && i < int(vertices.size()), ErrorKind::Contract,
                        "mesh: face index out of range");
    }

    bool empty() const { return faces.empty(); }
};

inline double face_area(const TriangleMesh& m, const std::array<int, 3>& f) {
    Vec3 a = m.vertices[std::size_t(f[0])];
    Vec3 b = m.vertices[std::size_t(f[1])];
    Vec3 c = m.vertices[std::size_t(f[2])];
    return 0.5 * (b - a).cross(c - a).norm();
}

// A mesh is closed when every edge is shared by exactly two faces.
inline bool mesh_is_closed(const TriangleMesh& m) {
    if (m.faces.empty()) return false;
    std::map<std::pair<int, int>, int> count;
    for (const auto& f : m.faces)
        for (int i = 0; i < 3; ++i) {
            int a = f[std::size_t(i)], b = f[std::size_t((i + 1) % 3)];
            ++count[{std::min(a, b), std::max(a, b)}];
        }
    for (const auto& [edge, c] : count)
        if (c != 2) return false;
    return true;
}

inline void save_obj(const TriangleMesh& m, const std::string& path) {
    m.validate();
    std::ofstream out(path);
    require(out.good(), ErrorKind::Data, "save_obj: cannot open " + path);
    out.precision(17);
    for (const Vec3& v : m.vertices) out << "v " << v(0) << ' ' << v(1) << ' ' << v(2) << '\n';
    for (const auto& f : m.faces)
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    require(out.good(), ErrorKind::Data, "save_obj: write failed for " + path);
}

// Point-in-mesh testing by ray parity. Triangles are bucketed on a (y, z)
// grid so each +x ray only visits nearby candidates.
class MeshContains {
public:
    explicit MeshContains(const TriangleMesh& mesh, Eigen::Index buckets = 32)
        : mesh_(mesh), n_(std::max<Eigen::Index>(1, buckets)) {
        require(!mesh.faces.empty(), ErrorKind::Argument,
                "mesh containment: empty mesh has no interior");
        lo_ = Vec3::Constant(std::numeric_limits<double>::max());
        hi_ = Vec3::Constant(std::numeric_limits<double>::lowest());
        for (const Vec3& v : mesh.vertices) {
            lo_ = lo_.cwiseMin(v);
            hi_ = hi_.cwiseMax(v);
        }
        cells_.resize(std::size_t(n_ * n_));
        for (std::size_t t = 0; t < mesh.faces.size(); ++t) {
            Vec3 a = mesh.vertices[std::size_t(mesh.faces[t][0])];
            Vec3 b = mesh.vertices[std::size_t(mesh.faces[t][1])];
            Vec3 c = mesh.vertices[std::size_t(mesh.faces[t][2])];
            Eigen::Index y0 = bucket(std::min({a(1), b(1), c(1)}), 1);
            Eigen::Index y1 = bucket(std::max({a(1), b(1), c(1)}), 1);
            Eigen::Index z0 = bucket(std::min({a(2), b(2), c(2)}), 2);
            Eigen::Index z1 = bucket(std::max({a(2), b(2), c(2)}), 2);
            for (Eigen::Index y = y0; y <= y1; ++y)
                for (Eigen::Index z = z0; z <= z1; ++z)
                    cells_[std::size_t(y * n_ + z)].push_back(int(t));
        }
    }

    bool contains(const Vec3& p) const {
        if ((p.array() < lo_.array()).any() || (p.array() > hi_.array()).any()) return false;
        int crossings = 0;
        Eigen::Index y = bucket(p(1), 1), z = bucket(p(2), 2);
        for (int t : cells_[std::size_t(y * n_ + z)])
            if (ray_hits(p, std::size_t(t))) ++crossings;
        return crossings % 2 == 1;
    }

private:
    Eigen::Index bucket(double v, int axis) const {
        double span = hi_(axis) - lo_(axis);
        if (span <= 0) return 0;
        auto i = Eigen::Index((v - lo_(axis)) / span * double(n_));
        return std::clamp<Eigen::Index>(i, 0, n_ - 1);
    }

    // Intersection of the ray p + s * (1,0,0), s > 0, with triangle t.
    bool ray_hits(const Vec3& p, std::size_t t) const {
        Vec3 a = mesh_.vertices[std::size_t(mesh_.faces[t][0])];
        Vec3 b = mesh_.vertices[std::size_t(mesh_.faces[t][1])];
        Vec3 c = mesh_.vertices[std::size_t(mesh_.faces[t][2])];
        Vec3 e1 = b - a, e2 = c - a;
        // Moeller-Trumbore specialized to direction (1,0,0).
        Vec3 pv(0.0, -e2(2), e2(1));  // dir x e2
        double det = e1.dot(pv);
        if (std::abs(det) < 1e-14) return false;
        double inv = 1.0 / det;
        Vec3 tv = p - a;
        double u = tv.dot(pv) * inv;
        if (u < 0.0 || u > 1.0) return false;
        Vec3 qv = tv.cross(e1);
        double v = qv(0) * inv;  // dir . qv
        if (v < 0.0 || u + v > 1.0) return false;
        double s = e2.dot(qv) * inv;
        return s > 1e-14;
    }

    TriangleMesh mesh_;
    Eigen::Index n_;
    Vec3 lo_, hi_;
    std::vector<std::vector<int>> cells_;
};

} // namespace lsc::sdf
