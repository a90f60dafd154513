#pragma once

// Iso-surface extraction with the classic 256-case marching-cubes tables and
// linear edge interpolation. Vertices are welded by the lattice edge they lie
// on, faces are wound so normals point toward positive values, and an
// optional one-level refinement re-queries only the sign-changing cells at
// doubled resolution.

#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lsc/error.hpp"
#include "lsc/mathcore/mat.hpp"
#include "lsc/sdfdecoder/decoder.hpp"
#include "lsc/sdfdecoder/grid.hpp"
#include "lsc/sdfdecoder/mc_tables.hpp"
#include "lsc/sdfdecoder/mesh.hpp"

namespace lsc::sdf {

namespace detail {

// Packs non-negative lattice coordinates plus an axis tag into an edge key.
inline std::uint64_t edge_key(Eigen::Index x, Eigen::Index y, Eigen::Index z, int axis) {
    return (std::uint64_t(x) << 44) | (std::uint64_t(y) << 24) | (std::uint64_t(z) << 4) |
           std::uint64_t(axis);
}

// Accumulates welded marching-cubes output cell by cell. Corner order and
// tables follow the classic numbering; a cell is described by its 8 corner
// lattice coordinates, world positions, and values.
class McBuilder {
public:
    explicit McBuilder(double iso) : iso_(iso) {}

    void add_cell(const Eigen::Index corner_coord[8][3], const Vec3 corner_pos[8],
                  const double corner_val[8]) {
        int cube = 0;
        for (int c = 0; c < 8; ++c)
            if (corner_val[c] < iso_) cube |= 1 << c;
        int edges = mc::kEdgeTable[cube];
        if (edges == 0) return;

        int vert_of_edge[12];
        for (int e = 0; e < 12; ++e) {
            if (!(edges & (1 << e))) continue;
            int c0 = mc::kEdgeCorner[e][0], c1 = mc::kEdgeCorner[e][1];
            // Key the edge by its lexicographically smaller endpoint and axis.
            int lo = c0, hi = c1;
            for (int a = 0; a < 3; ++a) {
                if (corner_coord[lo][a] > corner_coord[hi][a]) std::swap(lo, hi);
            }
            int axis = 0;
            for (int a = 0; a < 3; ++a)
                if (corner_coord[lo][a] != corner_coord[hi][a]) axis = a;
            std::uint64_t key = edge_key(corner_coord[lo][0], corner_coord[lo][1],
                                         corner_coord[lo][2], axis);
            auto it = welded_.find(key);
            if (it == welded_.end()) {
                double v0 = corner_val[c0], v1 = corner_val[c1];
                double t = (iso_ - v0) / (v1 - v0);  // v0, v1 straddle iso, so v0 != v1
                Vec3 p = corner_pos[c0] + t * (corner_pos[c1] - corner_pos[c0]);
                int idx = int(mesh_.vertices.size());
                mesh_.vertices.push_back(p);
                it = welded_.emplace(key, idx).first;
            }
            vert_of_edge[e] = it->second;
        }

        for (int i = 0; mc::kTriTable[cube][i] != -1; i += 3) {
            // Table order winds toward the negative side; swap two indices so
            // normals face the positive values instead.
            std::array<int, 3> f{vert_of_edge[mc::kTriTable[cube][i + 1]],
                                 vert_of_edge[mc::kTriTable[cube][i]],
                                 vert_of_edge[mc::kTriTable[cube][i + 2]]};
            if (face_area_of(f) > 1e-12) mesh_.faces.push_back(f);
        }
    }

    TriangleMesh take() { return std::move(mesh_); }

private:
    double face_area_of(const std::array<int, 3>& f) const {
        Vec3 a = mesh_.vertices[std::size_t(f[0])];
        Vec3 b = mesh_.vertices[std::size_t(f[1])];
        Vec3 c = mesh_.vertices[std::size_t(f[2])];
        return 0.5 * (b - a).cross(c - a).norm();
    }

    double iso_;
    TriangleMesh mesh_;
    std::unordered_map<std::uint64_t, int> welded_;
};

} // namespace detail

inline TriangleMesh marching_cubes(const SdfGrid& grid, double iso = 0.0) {
    grid.validate();
    require(grid.all_finite(), ErrorKind::Argument, "marching_cubes: grid has non-finite values");
    detail::McBuilder builder(iso);
    Eigen::Index r = grid.res;
    for (Eigen::Index ix = 0; ix + 1 < r; ++ix)
        for (Eigen::Index iy = 0; iy + 1 < r; ++iy)
            for (Eigen::Index iz = 0; iz + 1 < r; ++iz) {
                Eigen::Index coord[8][3];
                Vec3 pos[8];
                double val[8];
                for (int c = 0; c < 8; ++c) {
                    Eigen::Index cx = ix + mc::kCornerOffset[c][0];
                    Eigen::Index cy = iy + mc::kCornerOffset[c][1];
                    Eigen::Index cz = iz + mc::kCornerOffset[c][2];
                    coord[c][0] = cx;
                    coord[c][1] = cy;
                    coord[c][2] = cz;
                    pos[c] = grid.node(cx, cy, cz);
                    val[c] = grid.at(cx, cy, cz);
                }
                builder.add_cell(coord, pos, val);
            }
    TriangleMesh mesh = builder.take();
    mesh.validate();
    return mesh;
}

// Extracts a mesh from an embedding, optionally refining once: cells of the
// coarse grid whose corners change sign are re-queried on a 2x lattice and
// polygonized there, everything else is skipped.
inline TriangleMesh extract_mesh(const vnn::Embedding& e, const DecoderWeights& w,
                                 Eigen::Index res, const Vec3& lo, const Vec3& hi,
                                 bool refine = false, double iso = 0.0) {
    SdfGrid coarse = query_grid(e, w, res, lo, hi);
    if (!refine) return marching_cubes(coarse, iso);
    require(coarse.all_finite(), ErrorKind::Argument, "extract_mesh: non-finite SDF values");

    Eigen::Index fine_res = 2 * res - 1;
    Vec3 fine_step = (hi - lo) / double(fine_res - 1);
    auto node_key = [fine_res](Eigen::Index x, Eigen::Index y, Eigen::Index z) {
        return (x * fine_res + y) * fine_res + z;
    };

    // Collect the sign-changing coarse cells and the fine nodes they need.
    std::vector<std::array<Eigen::Index, 3>> mixed;
    std::unordered_map<std::int64_t, double> fine_vals;
    std::vector<std::int64_t> pending;
    for (Eigen::Index ix = 0; ix + 1 < res; ++ix)
        for (Eigen::Index iy = 0; iy + 1 < res; ++iy)
            for (Eigen::Index iz = 0; iz + 1 < res; ++iz) {
                bool neg = false, pos = false;
                for (int c = 0; c < 8; ++c) {
                    double v = coarse.at(ix + mc::kCornerOffset[c][0],
                                         iy + mc::kCornerOffset[c][1],
                                         iz + mc::kCornerOffset[c][2]);
                    (v < iso ? neg : pos) = true;
                }
                if (!(neg && pos)) continue;
                mixed.push_back({ix, iy, iz});
                for (Eigen::Index dx = 0; dx <= 2; ++dx)
                    for (Eigen::Index dy = 0; dy <= 2; ++dy)
                        for (Eigen::Index dz = 0; dz <= 2; ++dz) {
                            Eigen::Index fx = 2 * ix + dx, fy = 2 * iy + dy, fz = 2 * iz + dz;
                            std::int64_t key = node_key(fx, fy, fz);
                            if (fine_vals.count(key)) continue;
                            if (dx % 2 == 0 && dy % 2 == 0 && dz % 2 == 0) {
                                fine_vals[key] =
                                    coarse.at(ix + dx / 2, iy + dy / 2, iz + dz / 2);
                            } else {
                                fine_vals[key] = 0.0;  // placeholder until decoded
                                pending.push_back(key);
                            }
                        }
            }

    if (!pending.empty()) {
        Points pts(Eigen::Index(pending.size()), 3);
        for (std::size_t i = 0; i < pending.size(); ++i) {
            std::int64_t key = pending[i];
            Eigen::Index fz = key % fine_res, fy = (key / fine_res) % fine_res;
            Eigen::Index fx = key / (fine_res * fine_res);
            pts.row(Eigen::Index(i)) =
                (lo + Vec3(double(fx) * fine_step(0), double(fy) * fine_step(1),
                           double(fz) * fine_step(2)))
                    .transpose();
        }
        Vec vals = decode_points(e, w, pts);
        for (std::size_t i = 0; i < pending.size(); ++i) fine_vals[pending[i]] = vals(Eigen::Index(i));
    }

    detail::McBuilder builder(iso);
    for (const auto& cell : mixed) {
        for (Eigen::Index sx = 0; sx < 2; ++sx)
            for (Eigen::Index sy = 0; sy < 2; ++sy)
                for (Eigen::Index sz = 0; sz < 2; ++sz) {
                    Eigen::Index bx = 2 * cell[0] + sx, by = 2 * cell[1] + sy,
                                 bz = 2 * cell[2] + sz;
                    Eigen::Index coord[8][3];
                    Vec3 pos[8];
                    double val[8];
                    for (int c = 0; c < 8; ++c) {
                        Eigen::Index fx = bx + mc::kCornerOffset[c][0];
                        Eigen::Index fy = by + mc::kCornerOffset[c][1];
                        Eigen::Index fz = bz + mc::kCornerOffset[c][2];
                        coord[c][0] = fx;
                        coord[c][1] = fy;
                        coord[c][2] = fz;
                        pos[c] = lo + Vec3(double(fx) * fine_step(0), double(fy) * fine_step(1),
                                           double(fz) * fine_step(2));
                        val[c] = fine_vals.at(node_key(fx, fy, fz));
                    }
                    builder.add_cell(coord, pos, val);
                }
    }
    TriangleMesh mesh = builder.take();
    mesh.validate();
    return mesh;
}

inline TriangleMesh extract_mesh(const vnn::Embedding& e, const DecoderWeights& w,
                                 Eigen::Index res = 64, bool refine = false) {
    Vec3 r = Vec3::Constant(e.f_s);
    return extract_mesh(e, w, res, Vec3(e.f_c - r), Vec3(e.f_c + r), refine);
}

} // namespace lsc::sdf
