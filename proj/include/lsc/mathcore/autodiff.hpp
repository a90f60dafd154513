#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A computation is recorded as a DAG of nodes, each holding its forward value
// and a closure that routes an incoming gradient to the node's parents.
// Graphs are built forward (parents before children), so node creation order
// is already a topological order and backward() is a single reverse sweep.
//
// A graph is confined to one thread for its lifetime. Values are immutable
// once created; re-running a computation means rebuilding the graph.

#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lsc/error.hpp"
#include "lsc/mathcore/mat.hpp"

namespace lsc::ad {

class Node;
using NodePtr = std::shared_ptr<Node>;

// Receives gradient contributions for a node's parents during backward().
using GradSink = std::function<void(std::size_t parent_index, Mat&& grad)>;

class Node {
public:
    Mat value;
    std::vector<NodePtr> parents;
    // Routes d(loss)/d(this) into contributions for each parent.
    // Empty for leaves and constants.
    std::function<void(const Mat&, const GradSink&)> back;
    bool needs_grad = false;
    std::uint64_t id = 0;
};

inline std::uint64_t next_node_id() {
    thread_local std::uint64_t counter = 0;
    return ++counter;
}

class GradTable;
class Value;
inline GradTable backward(const Value& root);

// Handle to one node of a differentiation graph.
class Value {
public:
    Value() = default;

    // A differentiable input. backward() reports a gradient for it.
    static Value leaf(Mat v) { return Value(std::move(v), /*needs_grad=*/true); }

    // A fixed input; no gradient is tracked through it.
    static Value constant(Mat v) { return Value(std::move(v), /*needs_grad=*/false); }

    static Value scalar(double s) { return constant(mat_scalar(s)); }

    bool defined() const { return n_ != nullptr; }
    const Mat& val() const { return n_->value; }
    Eigen::Index rows() const { return n_->value.rows(); }
    Eigen::Index cols() const { return n_->value.cols(); }
    bool needs_grad() const { return n_->needs_grad; }
    const Node* node() const { return n_.get(); }

private:
    Value(Mat v, bool needs_grad) : n_(std::make_shared<Node>()) {
        n_->value = std::move(v);
        n_->needs_grad = needs_grad;
        n_->id = next_node_id();
    }

    explicit Value(NodePtr n) : n_(std::move(n)) {}

    NodePtr n_;

    friend Value make_op(Mat, std::vector<Value>,
                         std::function<void(const Mat&, const GradSink&)>);
    friend class GradTable;
    friend GradTable backward(const Value&);
};

inline Value make_op(Mat value, std::vector<Value> parents,
                     std::function<void(const Mat&, const GradSink&)> back) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->id = next_node_id();
    n->parents.reserve(parents.size());
    for (const Value& p : parents) {
        require(p.defined(), ErrorKind::Argument, "autodiff op on undefined value");
        n->parents.push_back(p.n_);
        n->needs_grad = n->needs_grad || p.n_->needs_grad;
    }
    if (n->needs_grad) n->back = std::move(back);
    return Value(std::move(n));
}

// Gradients of one backward pass, keyed by node identity.
// Leaves the objective never touched map to zero matrices of the leaf shape.
class GradTable {
public:
    Mat get(const Value& v) const {
        auto it = grads_.find(v.node());
        if (it != grads_.end()) return it->second;
        return Mat::Zero(v.rows(), v.cols());
    }

    bool touched(const Value& v) const { return grads_.count(v.node()) != 0; }

private:
    std::unordered_map<const Node*, Mat> grads_;
    friend GradTable backward(const Value&);
};

// Runs one reverse sweep from a scalar (1x1) objective.
inline GradTable backward(const Value& root) {
    require(root.defined(), ErrorKind::Argument, "backward on undefined value");
    require(root.rows() == 1 && root.cols() == 1, ErrorKind::Contract,
            "backward requires a 1x1 objective");

    // Collect the reachable subgraph that leads to gradient-taking leaves.
    std::vector<Node*> order;
    std::unordered_map<const Node*, bool> seen;
    std::vector<Node*> stack{const_cast<Node*>(root.node())};
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        if (!n->needs_grad || seen.count(n)) continue;
        seen.emplace(n, true);
        order.push_back(n);
        for (const NodePtr& p : n->parents) stack.push_back(p.get());
    }
    // Creation ids are a topological order (parents precede children).
    std::sort(order.begin(), order.end(),
              [](const Node* a, const Node* b) { return a->id > b->id; });

    GradTable table;
    if (!root.node()->needs_grad) return table;
    table.grads_[root.node()] = Mat::Ones(1, 1);

    for (Node* n : order) {
        auto it = table.grads_.find(n);
        if (it == table.grads_.end() || !n->back) continue;
        const Mat grad = it->second; // copy: sinks may rehash the table
        n->back(grad, [&](std::size_t pi, Mat&& contrib) {
            Node* parent = n->parents[pi].get();
            if (!parent->needs_grad) return;
            auto [slot, fresh] = table.grads_.try_emplace(parent, std::move(contrib));
            if (!fresh) slot->second += contrib;
        });
    }
    return table;
}

namespace detail {

inline void check_same_shape(const Value& a, const Value& b, const char* op) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::Argument,
            std::string(op) + ": shape mismatch");
}

} // namespace detail

// ---- arithmetic -----------------------------------------------------------

inline Value add(const Value& a, const Value& b) {
    detail::check_same_shape(a, b, "add");
    return make_op(a.val() + b.val(), {a, b}, [](const Mat& g, const GradSink& sink) {
        sink(0, Mat(g));
        sink(1, Mat(g));
    });
}

inline Value sub(const Value& a, const Value& b) {
    detail::check_same_shape(a, b, "sub");
    return make_op(a.val() - b.val(), {a, b}, [](const Mat& g, const GradSink& sink) {
        sink(0, Mat(g));
        sink(1, Mat(-g));
    });
}

inline Value neg(const Value& a) {
    return make_op(-a.val(), {a}, [](const Mat& g, const GradSink& sink) {
        sink(0, Mat(-g));
    });
}

// Hadamard product.
inline Value mul(const Value& a, const Value& b) {
    detail::check_same_shape(a, b, "mul");
    Mat av = a.val(), bv = b.val();
    return make_op(av.cwiseProduct(bv), {a, b},
                   [av, bv](const Mat& g, const GradSink& sink) {
                       sink(0, g.cwiseProduct(bv));
                       sink(1, g.cwiseProduct(av));
                   });
}

// Elementwise quotient; the caller keeps b away from zero.
inline Value div(const Value& a, const Value& b) {
    detail::check_same_shape(a, b, "div");
    Mat av = a.val(), bv = b.val();
    return make_op(av.cwiseQuotient(bv), {a, b},
                   [av, bv](const Mat& g, const GradSink& sink) {
                       sink(0, g.cwiseQuotient(bv));
                       sink(1, Mat(-g.cwiseProduct(av).cwiseQuotient(bv.cwiseProduct(bv))));
                   });
}

inline Value scale(const Value& a, double s) {
    return make_op(a.val() * s, {a}, [s](const Mat& g, const GradSink& sink) {
        sink(0, g * s);
    });
}

inline Value add_scalar(const Value& a, double s) {
    return make_op((a.val().array() + s).matrix(), {a},
                   [](const Mat& g, const GradSink& sink) { sink(0, Mat(g)); });
}

inline Value matmul(const Value& a, const Value& b) {
    require(a.cols() == b.rows(), ErrorKind::Argument, "matmul: inner dimension mismatch");
    Mat av = a.val(), bv = b.val();
    return make_op(av * bv, {a, b}, [av, bv](const Mat& g, const GradSink& sink) {
        sink(0, g * bv.transpose());
        sink(1, av.transpose() * g);
    });
}

inline Value transpose(const Value& a) {
    return make_op(a.val().transpose(), {a}, [](const Mat& g, const GradSink& sink) {
        sink(0, g.transpose());
    });
}

// Multiply every entry of a by a 1x1 graph scalar.
inline Value scale_by(const Value& a, const Value& s) {
    require(s.rows() == 1 && s.cols() == 1, ErrorKind::Argument, "scale_by: scalar must be 1x1");
    Mat av = a.val();
    double sv = s.val()(0, 0);
    return make_op(av * sv, {a, s}, [av, sv](const Mat& g, const GradSink& sink) {
        sink(0, g * sv);
        sink(1, mat_scalar(g.cwiseProduct(av).sum()));
    });
}

// Divide every entry of a by a 1x1 graph scalar.
inline Value div_by(const Value& a, const Value& s) {
    require(s.rows() == 1 && s.cols() == 1, ErrorKind::Argument, "div_by: scalar must be 1x1");
    Mat av = a.val();
    double sv = s.val()(0, 0);
    return make_op(av / sv, {a, s},
                   [av, sv](const Mat& g, const GradSink& sink) {
                       sink(0, g / sv);
                       sink(1, mat_scalar(-g.cwiseProduct(av).sum() / (sv * sv)));
                   });
}

// ---- reductions ------------------------------------------------------------

inline Value sum(const Value& a) {
    Eigen::Index r = a.rows(), c = a.cols();
    return make_op(mat_scalar(a.val().sum()), {a},
                   [r, c](const Mat& g, const GradSink& sink) {
                       sink(0, Mat(Mat::Constant(r, c, g(0, 0))));
                   });
}

inline Value mean(const Value& a) {
    Eigen::Index r = a.rows(), c = a.cols();
    double n = double(r * c);
    return make_op(mat_scalar(a.val().sum() / n), {a},
                   [r, c, n](const Mat& g, const GradSink& sink) {
                       sink(0, Mat(Mat::Constant(r, c, g(0, 0) / n)));
                   });
}

// Row-wise mean: (N x C) -> (N x 1).
inline Value mean_cols(const Value& a) {
    Eigen::Index c = a.cols();
    Mat out = a.val().rowwise().mean();
    return make_op(std::move(out), {a}, [c](const Mat& g, const GradSink& sink) {
        sink(0, Mat((g / double(c)).replicate(1, c)));
    });
}

// ---- elementwise nonlinearities ---------------------------------------------

inline Value relu(const Value& a) {
    Mat av = a.val();
    return make_op(av.cwiseMax(0.0), {a}, [av](const Mat& g, const GradSink& sink) {
        sink(0, Mat((av.array() > 0.0).select(g, Mat::Zero(g.rows(), g.cols()))));
    });
}

inline Value tanh_(const Value& a) {
    Mat v = a.val().array().tanh().matrix();
    return make_op(v, {a}, [v](const Mat& g, const GradSink& sink) {
        sink(0, Mat(g.array() * (1.0 - v.array().square())));
    });
}

inline Value abs_(const Value& a) {
    Mat av = a.val();
    return make_op(av.cwiseAbs(), {a}, [av](const Mat& g, const GradSink& sink) {
        sink(0, Mat(g.array() * av.array().sign()));
    });
}

// Square root with subgradient 0 at 0, so norms of exactly-zero vectors do
// not poison the backward pass.
inline Value sqrt_(const Value& a) {
    Mat v = a.val().cwiseSqrt();
    return make_op(v, {a}, [v](const Mat& g, const GradSink& sink) {
        Mat d = (v.array() > 0.0).select(0.5 * g.array() / v.array(),
                                         Mat::Zero(g.rows(), g.cols()).array());
        sink(0, std::move(d));
    });
}

inline Value square(const Value& a) {
    Mat av = a.val();
    return make_op(av.cwiseProduct(av), {a}, [av](const Mat& g, const GradSink& sink) {
        sink(0, Mat(2.0 * g.cwiseProduct(av)));
    });
}

// Numerically stable row-wise softmax.
inline Value softmax_rows(const Value& a) {
    Mat v = a.val();
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        Eigen::ArrayXd row = v.row(i).array();
        row -= row.maxCoeff();
        row = row.exp();
        v.row(i) = (row / row.sum()).matrix();
    }
    return make_op(v, {a}, [v](const Mat& g, const GradSink& sink) {
        Mat d(v.rows(), v.cols());
        for (Eigen::Index i = 0; i < v.rows(); ++i) {
            double dot = g.row(i).dot(v.row(i));
            d.row(i) = v.row(i).cwiseProduct(g.row(i) - Mat::Constant(1, v.cols(), dot));
        }
        sink(0, std::move(d));
    });
}

// ---- structural ops ----------------------------------------------------------

inline Value concat_cols(const Value& a, const Value& b) {
    require(a.rows() == b.rows(), ErrorKind::Argument, "concat_cols: row count mismatch");
    Mat out(a.rows(), a.cols() + b.cols());
    out.leftCols(a.cols()) = a.val();
    out.rightCols(b.cols()) = b.val();
    Eigen::Index ca = a.cols();
    return make_op(std::move(out), {a, b}, [ca](const Mat& g, const GradSink& sink) {
        sink(0, Mat(g.leftCols(ca)));
        sink(1, Mat(g.rightCols(g.cols() - ca)));
    });
}

inline Value concat_rows(const Value& a, const Value& b) {
    require(a.cols() == b.cols(), ErrorKind::Argument, "concat_rows: column count mismatch");
    Mat out(a.rows() + b.rows(), a.cols());
    out.topRows(a.rows()) = a.val();
    out.bottomRows(b.rows()) = b.val();
    Eigen::Index ra = a.rows();
    return make_op(std::move(out), {a, b}, [ra](const Mat& g, const GradSink& sink) {
        sink(0, Mat(g.topRows(ra)));
        sink(1, Mat(g.bottomRows(g.rows() - ra)));
    });
}

inline Value slice_cols(const Value& a, Eigen::Index first, Eigen::Index count) {
    require(first >= 0 && count >= 0 && first + count <= a.cols(), ErrorKind::Argument,
            "slice_cols: range out of bounds");
    Eigen::Index r = a.rows(), c = a.cols();
    return make_op(a.val().middleCols(first, count), {a},
                   [r, c, first, count](const Mat& g, const GradSink& sink) {
                       Mat d = Mat::Zero(r, c);
                       d.middleCols(first, count) = g;
                       sink(0, std::move(d));
                   });
}

// Replicate a 1xC row M times.
inline Value repeat_row(const Value& a, Eigen::Index m) {
    require(a.rows() == 1, ErrorKind::Argument, "repeat_row: input must have one row");
    return make_op(a.val().replicate(m, 1), {a}, [](const Mat& g, const GradSink& sink) {
        sink(0, Mat(g.colwise().sum()));
    });
}

// Replicate an Nx1 column C times.
inline Value repeat_cols(const Value& a, Eigen::Index c) {
    require(a.cols() == 1, ErrorKind::Argument, "repeat_cols: input must have one column");
    return make_op(a.val().replicate(1, c), {a}, [](const Mat& g, const GradSink& sink) {
        sink(0, Mat(g.rowwise().sum()));
    });
}

// Add a 1xC bias row to every row of a.
inline Value rowwise_add(const Value& a, const Value& bias) {
    require(bias.rows() == 1 && bias.cols() == a.cols(), ErrorKind::Argument,
            "rowwise_add: bias must be 1 x cols(a)");
    Mat out = a.val();
    out.rowwise() += bias.val().row(0);
    return make_op(std::move(out), {a, bias}, [](const Mat& g, const GradSink& sink) {
        sink(0, Mat(g));
        sink(1, Mat(g.colwise().sum()));
    });
}

// Gather whole rows by index; duplicate indices accumulate in the gradient.
inline Value gather_rows(const Value& a, std::vector<Eigen::Index> idx) {
    Eigen::Index r = a.rows(), c = a.cols();
    for (Eigen::Index i : idx)
        require(i >= 0 && i < r, ErrorKind::Argument, "gather_rows: index out of range");
    Mat out(Eigen::Index(idx.size()), c);
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(Eigen::Index(k)) = a.val().row(idx[k]);
    return make_op(std::move(out), {a},
                   [r, c, idx = std::move(idx)](const Mat& g, const GradSink& sink) {
                       Mat d = Mat::Zero(r, c);
                       for (std::size_t k = 0; k < idx.size(); ++k)
                           d.row(idx[k]) += g.row(Eigen::Index(k));
                       sink(0, std::move(d));
                   });
}

// ---- vector-feature ops ------------------------------------------------------
//
// A vector-feature matrix stores one 3-vector per (point, channel): shape
// (3N) x C, rows 3p..3p+2 holding the xyz of point p. The helpers below are
// the primitive bridges between per-vector geometry and plain matrix algebra.

namespace detail {

inline void check_vblocks(const Value& a, const char* op) {
    require(a.rows() % 3 == 0, ErrorKind::Argument,
            std::string(op) + ": row count must be a multiple of 3");
}

} // namespace detail

// Per-(point, channel) inner product: (3N)xC, (3N)xC -> NxC.
inline Value vn_dot(const Value& a, const Value& b) {
    detail::check_same_shape(a, b, "vn_dot");
    detail::check_vblocks(a, "vn_dot");
    Eigen::Index n = a.rows() / 3, c = a.cols();
    Mat av = a.val(), bv = b.val();
    Mat out(n, c);
    for (Eigen::Index p = 0; p < n; ++p)
        out.row(p) = (av.middleRows(3 * p, 3).cwiseProduct(bv.middleRows(3 * p, 3)))
                         .colwise()
                         .sum();
    return make_op(std::move(out), {a, b}, [n, av, bv](const Mat& g, const GradSink& sink) {
        Mat da(av.rows(), av.cols()), db(av.rows(), av.cols());
        for (Eigen::Index p = 0; p < n; ++p) {
            da.middleRows(3 * p, 3) =
                bv.middleRows(3 * p, 3).array().rowwise() * g.row(p).array();
            db.middleRows(3 * p, 3) =
                av.middleRows(3 * p, 3).array().rowwise() * g.row(p).array();
        }
        sink(0, std::move(da));
        sink(1, std::move(db));
    });
}

// Scale each (point, channel) 3-vector of a by the matching entry of s (NxC).
inline Value vn_scale(const Value& a, const Value& s) {
    detail::check_vblocks(a, "vn_scale");
    Eigen::Index n = a.rows() / 3;
    require(s.rows() == n && s.cols() == a.cols(), ErrorKind::Argument,
            "vn_scale: scale matrix must be (rows/3) x cols");
    Mat av = a.val(), sv = s.val();
    Mat out(av.rows(), av.cols());
    for (Eigen::Index p = 0; p < n; ++p)
        out.middleRows(3 * p, 3) =
            av.middleRows(3 * p, 3).array().rowwise() * sv.row(p).array();
    return make_op(std::move(out), {a, s}, [n, av, sv](const Mat& g, const GradSink& sink) {
        Mat da(av.rows(), av.cols());
        Mat ds(n, av.cols());
        for (Eigen::Index p = 0; p < n; ++p) {
            da.middleRows(3 * p, 3) =
                g.middleRows(3 * p, 3).array().rowwise() * sv.row(p).array();
            ds.row(p) = (g.middleRows(3 * p, 3).cwiseProduct(av.middleRows(3 * p, 3)))
                            .colwise()
                            .sum();
        }
        sink(0, std::move(da));
        sink(1, std::move(ds));
    });
}

// Reshape (3N)xC -> Nx(3C), channel-major: out(p, 3c + r) = a(3p + r, c).
inline Value vn_flatten(const Value& a) {
    detail::check_vblocks(a, "vn_flatten");
    Eigen::Index n = a.rows() / 3, c = a.cols();
    Mat av = a.val();
    Mat out(n, 3 * c);
    for (Eigen::Index p = 0; p < n; ++p)
        for (Eigen::Index ch = 0; ch < c; ++ch)
            for (Eigen::Index r = 0; r < 3; ++r) out(p, 3 * ch + r) = av(3 * p + r, ch);
    return make_op(std::move(out), {a}, [n, c](const Mat& g, const GradSink& sink) {
        Mat d(3 * n, c);
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index ch = 0; ch < c; ++ch)
                for (Eigen::Index r = 0; r < 3; ++r) d(3 * p + r, ch) = g(p, 3 * ch + r);
        sink(0, std::move(d));
    });
}

// Inverse of vn_flatten: Nx(3C) -> (3N)xC.
inline Value vn_unflatten(const Value& a) {
    require(a.cols() % 3 == 0, ErrorKind::Argument,
            "vn_unflatten: column count must be a multiple of 3");
    Eigen::Index n = a.rows(), c = a.cols() / 3;
    Mat av = a.val();
    Mat out(3 * n, c);
    for (Eigen::Index p = 0; p < n; ++p)
        for (Eigen::Index ch = 0; ch < c; ++ch)
            for (Eigen::Index r = 0; r < 3; ++r) out(3 * p + r, ch) = av(p, 3 * ch + r);
    return make_op(std::move(out), {a}, [n, c](const Mat& g, const GradSink& sink) {
        Mat d(n, 3 * c);
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index ch = 0; ch < c; ++ch)
                for (Eigen::Index r = 0; r < 3; ++r) d(p, 3 * ch + r) = g(3 * p + r, ch);
        sink(0, std::move(d));
    });
}

// Gather per-point 3-row blocks: out block k = a's block idx[k].
inline Value vn_gather(const Value& a, std::vector<Eigen::Index> idx) {
    detail::check_vblocks(a, "vn_gather");
    Eigen::Index n = a.rows() / 3, c = a.cols();
    for (Eigen::Index i : idx)
        require(i >= 0 && i < n, ErrorKind::Argument, "vn_gather: index out of range");
    Mat out(3 * Eigen::Index(idx.size()), c);
    for (std::size_t k = 0; k < idx.size(); ++k)
        out.middleRows(3 * Eigen::Index(k), 3) = a.val().middleRows(3 * idx[k], 3);
    return make_op(std::move(out), {a},
                   [n, c, idx = std::move(idx)](const Mat& g, const GradSink& sink) {
                       Mat d = Mat::Zero(3 * n, c);
                       for (std::size_t k = 0; k < idx.size(); ++k)
                           d.middleRows(3 * idx[k], 3) += g.middleRows(3 * Eigen::Index(k), 3);
                       sink(0, std::move(d));
                   });
}

// Mean over consecutive groups of `group` 3-row blocks:
// (3*N*group) x C -> (3N) x C. Used to pool edge features over a point's
// neighborhood.
inline Value vn_group_mean(const Value& a, Eigen::Index group) {
    detail::check_vblocks(a, "vn_group_mean");
    require(group > 0 && (a.rows() / 3) % group == 0, ErrorKind::Argument,
            "vn_group_mean: block count must be divisible by group size");
    Eigen::Index n = a.rows() / 3 / group, c = a.cols();
    Mat out = Mat::Zero(3 * n, c);
    for (Eigen::Index p = 0; p < n; ++p)
        for (Eigen::Index k = 0; k < group; ++k)
            out.middleRows(3 * p, 3) += a.val().middleRows(3 * (p * group + k), 3);
    out /= double(group);
    return make_op(std::move(out), {a}, [n, c, group](const Mat& g, const GradSink& sink) {
        Mat d(3 * n * group, c);
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index k = 0; k < group; ++k)
                d.middleRows(3 * (p * group + k), 3) = g.middleRows(3 * p, 3) / double(group);
        sink(0, std::move(d));
    });
}

// Mean over all 3-row blocks: (3N)xC -> 3xC. The global pooling of a
// vector-feature cloud into a single per-channel frame.
inline Value vn_mean_all(const Value& a) {
    detail::check_vblocks(a, "vn_mean_all");
    Eigen::Index n = a.rows() / 3, c = a.cols();
    Mat out = Mat::Zero(3, c);
    for (Eigen::Index p = 0; p < n; ++p) out += a.val().middleRows(3 * p, 3);
    out /= double(n);
    return make_op(std::move(out), {a}, [n, c](const Mat& g, const GradSink& sink) {
        Mat d(3 * n, c);
        for (Eigen::Index p = 0; p < n; ++p) d.middleRows(3 * p, 3) = g / double(n);
        sink(0, std::move(d));
    });
}

} // namespace lsc::ad
