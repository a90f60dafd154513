#pragma once

// Edge features over a k-nearest-neighbor graph: each edge carries the center
// point's feature concatenated with the (neighbor - center) difference. The
// classic dynamic-graph construction for learning on point clouds.

#include <vector>

#include "lsc/error.hpp"
#include "lsc/geometry/nn.hpp"
#include "lsc/mathcore/mat.hpp"

namespace lsc {

struct GraphFeature {
    std::vector<std::vector<Eigen::Index>> neighbors; // per point, sorted by distance
    Mat edges; // (N*k) x 2D; k consecutive rows per center point
};

inline GraphFeature knn_graph_feature(const Points& cloud, const Mat& features, int k) {
    check_cloud(cloud, "knn_graph_feature");
    require(features.rows() == cloud.rows(), ErrorKind::Argument,
            "knn_graph_feature: one feature row per point required");
    require(k >= 1 && Eigen::Index(k) < cloud.rows(), ErrorKind::Argument,
            "knn_graph_feature: need 1 <= k < point count");

    GraphFeature out;
    out.neighbors = knn_indices(cloud, k);
    Eigen::Index n = cloud.rows(), d = features.cols();
    out.edges.resize(n * k, 2 * d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) {
            Eigen::Index nb = out.neighbors[i][j];
            out.edges.block(i * k + j, 0, 1, d) = features.row(i);
            out.edges.block(i * k + j, d, 1, d) = features.row(nb) - features.row(i);
        }
    }
    return out;
}

} // namespace lsc
