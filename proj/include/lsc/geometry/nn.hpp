#pragma once

// Exact nearest-neighbor queries. Small reference sets use brute force;
// larger ones go through a uniform hash grid searched in expanding shells,
// which stays exact because a shell is only skipped once its closest possible
// point provably lies beyond the current best candidate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "lsc/error.hpp"
#include "lsc/geometry/pointcloud.hpp"
#include "lsc/mathcore/mat.hpp"

namespace lsc {

constexpr Eigen::Index kBruteForceNnLimit = 256;

namespace detail {

// Candidate ordering: distance first, index as the deterministic tie-break.
struct NnCand {
    double d2;
    Eigen::Index idx;
    bool operator<(const NnCand& o) const {
        return d2 != o.d2 ? d2 < o.d2 : idx < o.idx;
    }
};

} // namespace detail

class GridNN {
public:
    explicit GridNN(const Points& ref) : pts_(ref) {
        check_cloud(ref, "GridNN");
        Aabb box = bounds(ref);
        origin_ = box.lo;
        Vec3 ext = box.extent();
        double volume = std::max(ext.x(), 1e-12) * std::max(ext.y(), 1e-12) *
                        std::max(ext.z(), 1e-12);
        cell_ = std::max(1e-9, std::cbrt(volume / double(ref.rows())));
        max_coord_ = 0;
        for (Eigen::Index i = 0; i < ref.rows(); ++i) {
            auto c = cell_of(ref.row(i).transpose());
            max_coord_ = std::max({max_coord_, std::abs(c[0]), std::abs(c[1]), std::abs(c[2])});
            cells_[key(c)].push_back(i);
        }
    }

    // Exact k nearest neighbors, optionally excluding one reference index
    // (the query itself when querying a cloud against itself).
    void knearest(const Vec3& q, int k, std::vector<Eigen::Index>& out,
                  Eigen::Index exclude = -1) const {
        out.clear();
        std::vector<detail::NnCand> best; // kept sorted, size <= k
        auto offer = [&](Eigen::Index i) {
            if (i == exclude) return;
            detail::NnCand c{(pts_.row(i).transpose() - q).squaredNorm(), i};
            if (best.size() == std::size_t(k) && !(c < best.back())) return;
            best.insert(std::upper_bound(best.begin(), best.end(), c), c);
            if (best.size() > std::size_t(k)) best.pop_back();
        };

        auto c0 = cell_of(q);
        long span = max_coord_ + std::max({std::abs(c0[0]), std::abs(c0[1]), std::abs(c0[2])}) + 1;
        for (long shell = 0; shell <= span; ++shell) {
            if (best.size() == std::size_t(k) && shell >= 1) {
                // Anything in shell `shell` is at least (shell-1)*cell away.
                double lower = double(shell - 1) * cell_;
                if (lower * lower > best.back().d2) break;
            }
            visit_shell(c0, shell, [&](const std::vector<Eigen::Index>& bucket) {
                for (Eigen::Index i : bucket) offer(i);
            });
        }
        for (const auto& c : best) out.push_back(c.idx);
    }

    Eigen::Index nearest(const Vec3& q, double* d2_out = nullptr) const {
        std::vector<Eigen::Index> idx;
        knearest(q, 1, idx);
        if (d2_out) *d2_out = (pts_.row(idx[0]).transpose() - q).squaredNorm();
        return idx[0];
    }

private:
    std::array<long, 3> cell_of(const Vec3& p) const {
        return {long(std::floor((p.x() - origin_.x()) / cell_)),
                long(std::floor((p.y() - origin_.y()) / cell_)),
                long(std::floor((p.z() - origin_.z()) / cell_))};
    }

    static std::uint64_t key(const std::array<long, 3>& c) {
        auto z = [](long v) { return std::uint64_t(v + (1L << 20)); };
        return (z(c[0]) << 42) ^ (z(c[1]) << 21) ^ z(c[2]);
    }

    template <typename F>
    void visit_shell(const std::array<long, 3>& c0, long s, F&& f) const {
        auto visit = [&](long x, long y, long z) {
            auto it = cells_.find(key({x, y, z}));
            if (it != cells_.end()) f(it->second);
        };
        if (s == 0) {
            visit(c0[0], c0[1], c0[2]);
            return;
        }
        for (long dx = -s; dx <= s; ++dx) {
            for (long dy = -s; dy <= s; ++dy) {
                if (std::abs(dx) == s || std::abs(dy) == s) {
                    for (long dz = -s; dz <= s; ++dz) visit(c0[0] + dx, c0[1] + dy, c0[2] + dz);
                } else {
                    visit(c0[0] + dx, c0[1] + dy, c0[2] - s);
                    visit(c0[0] + dx, c0[1] + dy, c0[2] + s);
                }
            }
        }
    }

    Points pts_;
    Vec3 origin_;
    double cell_ = 1.0;
    long max_coord_ = 0;
    std::unordered_map<std::uint64_t, std::vector<Eigen::Index>> cells_;
};

// Index of the nearest reference point for every query point.
inline std::vector<Eigen::Index> nearest_indices(const Points& query, const Points& ref) {
    check_cloud(query, "nearest_indices");
    check_cloud(ref, "nearest_indices");
    std::vector<Eigen::Index> out(query.rows());
    if (ref.rows() < kBruteForceNnLimit) {
        for (Eigen::Index i = 0; i < query.rows(); ++i) {
            detail::NnCand best{std::numeric_limits<double>::infinity(), -1};
            for (Eigen::Index j = 0; j < ref.rows(); ++j) {
                detail::NnCand c{(query.row(i) - ref.row(j)).squaredNorm(), j};
                if (c < best) best = c;
            }
            out[i] = best.idx;
        }
        return out;
    }
    GridNN grid(ref);
    for (Eigen::Index i = 0; i < query.rows(); ++i)
        out[i] = grid.nearest(query.row(i).transpose());
    return out;
}

// k nearest neighbors within one cloud, self excluded, rows sorted by
// (distance, index).
inline std::vector<std::vector<Eigen::Index>> knn_indices(const Points& cloud, int k) {
    check_cloud(cloud, "knn_indices");
    require(k >= 1 && Eigen::Index(k) < cloud.rows(), ErrorKind::Argument,
            "knn_indices: need 1 <= k < point count");
    std::vector<std::vector<Eigen::Index>> out(cloud.rows());
    if (cloud.rows() < kBruteForceNnLimit) {
        std::vector<detail::NnCand> cands(cloud.rows() - 1);
        for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
            cands.clear();
            for (Eigen::Index j = 0; j < cloud.rows(); ++j)
                if (j != i) cands.push_back({(cloud.row(i) - cloud.row(j)).squaredNorm(), j});
            std::partial_sort(cands.begin(), cands.begin() + k, cands.end());
            out[i].reserve(k);
            for (int n = 0; n < k; ++n) out[i].push_back(cands[n].idx);
        }
        return out;
    }
    GridNN grid(cloud);
    for (Eigen::Index i = 0; i < cloud.rows(); ++i)
        grid.knearest(cloud.row(i).transpose(), k, out[i], /*exclude=*/i);
    return out;
}

} // namespace lsc
