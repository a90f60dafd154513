#pragma once

// Optimal one-to-one assignment over a rectangular score matrix, maximizing
// the total score. Among equal-total optima the solver returns the
// lexicographically smallest pair list: pairs are fixed greedily in (i, j)
// order, each candidate validated by re-solving the remaining block. The
// re-solves keep the solver exact at scene scale (a handful of instances);
// the inner solve itself is the usual O(s^3) augmenting-path scheme.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "lsc/error.hpp"
#include "lsc/mathcore/mat.hpp"

namespace lsc::matching {

struct Assignment {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs; // sorted by row
    std::vector<Eigen::Index> removed; // rows left unmatched (gone from scan 2)
    std::vector<Eigen::Index> added;   // columns left unmatched (new in scan 2)
    Mat p;                             // 0/1 indicator, rows x columns
};

namespace detail {

// Best achievable total on a rectangular score block. Internally pads to a
// square with zero-valued cells; every perfect matching on the square uses
// exactly |rows - cols| padded cells, so their value never influences which
// real pairs win and they are never part of the reported total.
inline double assignment_value(const Mat& score) {
    const Eigen::Index n = score.rows(), m = score.cols();
    if (n == 0 || m == 0) return 0.0;
    const Eigen::Index s = std::max(n, m);
    auto cost = [&](Eigen::Index i, Eigen::Index j) {
        return (i < n && j < m) ? -score(i, j) : 0.0;
    };
    // Shortest augmenting paths with potentials, 1-based; p[j] is the row
    // currently matched to column j, column 0 is the virtual source.
    std::vector<double> u(std::size_t(s) + 1, 0.0), v(std::size_t(s) + 1, 0.0);
    std::vector<Eigen::Index> p(std::size_t(s) + 1, 0), way(std::size_t(s) + 1, 0);
    for (Eigen::Index i = 1; i <= s; ++i) {
        p[0] = i;
        Eigen::Index j0 = 0;
        std::vector<double> minv(std::size_t(s) + 1, std::numeric_limits<double>::infinity());
        std::vector<char> used(std::size_t(s) + 1, 0);
        do {
            used[std::size_t(j0)] = 1;
            Eigen::Index i0 = p[std::size_t(j0)], j1 = 0;
            double delta = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 1; j <= s; ++j) {
                if (used[std::size_t(j)]) continue;
                double cur = cost(i0 - 1, j - 1) - u[std::size_t(i0)] - v[std::size_t(j)];
                if (cur < minv[std::size_t(j)]) {
                    minv[std::size_t(j)] = cur;
                    way[std::size_t(j)] = j0;
                }
                if (minv[std::size_t(j)] < delta) {
                    delta = minv[std::size_t(j)];
                    j1 = j;
                }
            }
            for (Eigen::Index j = 0; j <= s; ++j) {
                if (used[std::size_t(j)]) {
                    u[std::size_t(p[std::size_t(j)])] += delta;
                    v[std::size_t(j)] -= delta;
                } else {
                    minv[std::size_t(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[std::size_t(j0)] != 0);
        do {
            Eigen::Index j1 = way[std::size_t(j0)];
            p[std::size_t(j0)] = p[std::size_t(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    for (Eigen::Index j = 1; j <= s; ++j) {
        Eigen::Index i = p[std::size_t(j)];
        if (i >= 1 && i - 1 < n && j - 1 < m) total += score(i - 1, j - 1);
    }
    return total;
}

inline Mat score_block(const Mat& h, const std::vector<Eigen::Index>& rows,
                       const std::vector<Eigen::Index>& cols) {
    Mat out(Eigen::Index(rows.size()), Eigen::Index(cols.size()));
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = 0; b < cols.size(); ++b)
            out(Eigen::Index(a), Eigen::Index(b)) = h(rows[a], cols[b]);
    return out;
}

} // namespace detail

inline Assignment hungarian(const Mat& h) {
    require(h.rows() >= 1 && h.cols() >= 1, ErrorKind::Argument,
            "hungarian: empty score matrix");
    require(h.allFinite(), ErrorKind::Argument, "hungarian: non-finite scores");

    const Eigen::Index n = h.rows(), m = h.cols();
    const double target = detail::assignment_value(h);
    const double tol =
        1e-9 * std::max(1.0, h.cwiseAbs().maxCoeff() * double(std::max(n, m)));

    Assignment out;
    out.p = Mat::Zero(n, m);
    std::vector<Eigen::Index> cols_left(static_cast<std::size_t>(m));
    std::iota(cols_left.begin(), cols_left.end(), 0);
    double fixed = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<Eigen::Index> rows_after;
        for (Eigen::Index r = i + 1; r < n; ++r) rows_after.push_back(r);
        bool placed = false;
        for (std::size_t c = 0; c < cols_left.size(); ++c) {
            std::vector<Eigen::Index> rest = cols_left;
            rest.erase(rest.begin() + std::ptrdiff_t(c));
            double value = fixed + h(i, cols_left[c]) +
                           detail::assignment_value(detail::score_block(h, rows_after, rest));
            if (std::abs(value - target) <= tol) {
                out.pairs.emplace_back(i, cols_left[c]);
                out.p(i, cols_left[c]) = 1.0;
                fixed += h(i, cols_left[c]);
                cols_left.erase(cols_left.begin() + std::ptrdiff_t(c));
                placed = true;
                break;
            }
        }
        if (!placed) out.removed.push_back(i);
    }
    out.added = cols_left;
    return out;
}

} // namespace lsc::matching
