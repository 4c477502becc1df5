#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rcp/errors.hpp"
#include "rcp/features.hpp"
#include "rcp/geometry.hpp"
#include "rcp/parallel.hpp"

namespace rcp {

/// Per-point recurrent memory carried across alternation iterations. Entries
/// stay in [-1, 1] once initialized there (the update is a convex blend of
/// the previous state and a tanh output).
struct HiddenState {
    Eigen::MatrixXd h;  // M x C

    int size() const { return static_cast<int>(h.rows()); }
    int channels() const { return static_cast<int>(h.cols()); }
};

/// Per-point recurrent input: [f_P(p_m) - f_Q(p_m + x_m), z_m] concatenated.
struct GruInput {
    Eigen::MatrixXd v;  // M x (D + 3)
};

inline GruInput build_gru_input(const FeatureMap& fp, const Eigen::MatrixXd& fq_at_warped,
                                const FlowField& z) {
    if (fq_at_warped.rows() != fp.cloud_size() || fq_at_warped.cols() != fp.dim() ||
        z.size() != fp.cloud_size())
        throw InvalidInput("recurrent input pieces have mismatched sizes");
    GruInput in;
    in.v.resize(fp.cloud_size(), fp.dim() + 3);
    for (int m = 0; m < fp.cloud_size(); ++m) {
        in.v.block(m, 0, 1, fp.dim()) = fp.descriptors.row(m) - fq_at_warped.row(m);
        in.v.block(m, fp.dim(), 1, 3) = z[m].transpose();
    }
    if (!in.v.allFinite()) throw InvalidInput("recurrent input contains non-finite values");
    return in;
}

/// Softmax interpolation of target descriptors at an arbitrary position:
/// logits -||q_n - point||^2 / tau over the k nearest target points.
inline Eigen::VectorXd interpolate_feature(const FeatureMap& fq, const NeighborIndex& q_index,
                                           const Vec3& point, int k_omega,
                                           double tau = 0.01) {
    if (!point.allFinite()) throw InvalidInput("interpolation point must be finite");
    if (!(tau > 0.0)) throw InvalidInput("interpolation temperature must be positive");
    if (fq.cloud_size() != q_index.size())
        throw InvalidInput("feature map does not match the neighbor index");

    const auto hits = q_index.query_knn(point, std::max(1, k_omega));
    double max_logit = -std::numeric_limits<double>::infinity();
    for (const auto& h : hits) max_logit = std::max(max_logit, -h.distance * h.distance / tau);

    double norm = 0.0;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(fq.dim());
    for (const auto& h : hits) {
        const double w = std::exp(-h.distance * h.distance / tau - max_logit);
        norm += w;
        acc += w * fq.descriptors.row(h.index).transpose();
    }
    return acc / norm;
}

/// interpolate_feature for a batch of positions; one row per position.
inline Eigen::MatrixXd interpolate_features(const FeatureMap& fq, const NeighborIndex& q_index,
                                            const std::vector<Vec3>& positions, int k_omega,
                                            double tau = 0.01) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(positions.size()), fq.dim());
    parallel_for(positions.size(), [&](std::size_t i) {
        out.row(static_cast<Eigen::Index>(i)) =
            interpolate_feature(fq, q_index, positions[i], k_omega, tau).transpose();
    });
    return out;
}

namespace detail {

/// One grouped affine + channelwise max-pool at full resolution; activation
/// is left to the caller.
inline Eigen::MatrixXd set_conv_layer(const PointCloud& p, const NeighborIndex& p_index,
                                      const Eigen::MatrixXd& feats, int group_k,
                                      const AffineLayer& layer) {
    layer.validate();
    const AffineLayer mlp[1] = {layer};
    return set_conv_pool(p.points, feats, p.points, p_index, group_k,
                         std::span<const AffineLayer>(mlp, 1), /*relu_last=*/false);
}

inline Eigen::MatrixXd hconcat(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

}  // namespace detail

/// Hidden-state bootstrap: the first-iteration input passes through two
/// set-conv layers ("init0", "init1"; ReLU between) and a final tanh clamp.
inline HiddenState init_hidden(const PointCloud& p, const NeighborIndex& p_index,
                               const GruInput& v1, const WeightBundle& weights,
                               int group_k) {
    const AffineLayer& l0 = weights.layer("init0");
    const AffineLayer& l1 = weights.layer("init1");
    if (l0.in() != 3 + static_cast<int>(v1.v.cols()))
        throw WeightShapeError("init0 expects input dim " + std::to_string(l0.in()) +
                               ", recurrent input provides " + std::to_string(3 + v1.v.cols()));
    Eigen::MatrixXd stage = detail::set_conv_layer(p, p_index, v1.v, group_k, l0).cwiseMax(0.0);
    if (l1.in() != 3 + static_cast<int>(stage.cols()))
        throw WeightShapeError("init1 input dim does not match init0 output");
    stage = detail::set_conv_layer(p, p_index, stage, group_k, l1);
    return HiddenState{stage.array().tanh().matrix()};
}

/// One gated recurrent update with the set-conv spatial operator:
///   w = sigmoid(set_conv_w([h, v]))
///   r = sigmoid(set_conv_r([h, v]))
///   h~ = tanh(set_conv_h([r . h, v]))
///   h' = (1 - w) . h + w . h~
/// Layer names: "gru_w", "gru_r", "gru_h".
inline HiddenState gru_step(const PointCloud& p, const NeighborIndex& p_index,
                            const HiddenState& h_prev, const GruInput& v,
                            const WeightBundle& weights, int group_k) {
    if (h_prev.size() != static_cast<int>(v.v.rows()))
        throw InvalidInput("hidden state and recurrent input sizes differ");
    const int c = h_prev.channels();
    const int expected_in = 3 + c + static_cast<int>(v.v.cols());
    for (const char* name : {"gru_w", "gru_r", "gru_h"}) {
        const AffineLayer& l = weights.layer(name);
        if (l.in() != expected_in || l.out() != c)
            throw WeightShapeError(std::string(name) + " must map dim " +
                                   std::to_string(expected_in) + " -> " + std::to_string(c));
    }

    const Eigen::MatrixXd hv = detail::hconcat(h_prev.h, v.v);
    auto sigmoid = [](const Eigen::MatrixXd& m) {
        return (1.0 / (1.0 + (-m.array()).exp())).matrix();
    };
    const Eigen::MatrixXd w =
        sigmoid(detail::set_conv_layer(p, p_index, hv, group_k, weights.layer("gru_w")));
    const Eigen::MatrixXd r =
        sigmoid(detail::set_conv_layer(p, p_index, hv, group_k, weights.layer("gru_r")));
    const Eigen::MatrixXd rh_v = detail::hconcat((r.array() * h_prev.h.array()).matrix(), v.v);
    const Eigen::MatrixXd h_cand =
        detail::set_conv_layer(p, p_index, rh_v, group_k, weights.layer("gru_h"))
            .array()
            .tanh()
            .matrix();

    HiddenState next;
    next.h = ((1.0 - w.array()) * h_prev.h.array() + w.array() * h_cand.array()).matrix();
    if (!next.h.allFinite()) throw NumericalFailure("non-finite hidden state", -1);
    return next;
}

/// Residual flow head: two set-conv layers ("flow0", "flow1"; ReLU after
/// each) and a per-point linear 3-channel head ("flow_head"). The caller
/// forms x = z + residual.
inline FlowField predict_residual_flow(const PointCloud& p, const NeighborIndex& p_index,
                                       const HiddenState& h, const WeightBundle& weights,
                                       int group_k) {
    const AffineLayer& l0 = weights.layer("flow0");
    const AffineLayer& l1 = weights.layer("flow1");
    const AffineLayer& head = weights.layer("flow_head");
    if (l0.in() != 3 + h.channels())
        throw WeightShapeError("flow0 input dim does not match hidden channels");
    Eigen::MatrixXd stage = detail::set_conv_layer(p, p_index, h.h, group_k, l0).cwiseMax(0.0);
    if (l1.in() != 3 + static_cast<int>(stage.cols()))
        throw WeightShapeError("flow1 input dim does not match flow0 output");
    stage = detail::set_conv_layer(p, p_index, stage, group_k, l1).cwiseMax(0.0);
    if (head.in() != static_cast<int>(stage.cols()) || head.out() != 3)
        throw WeightShapeError("flow_head must map the flow1 output to 3 channels");

    std::vector<Vec3> residual(static_cast<std::size_t>(h.size()));
    for (int m = 0; m < h.size(); ++m)
        residual[static_cast<std::size_t>(m)] = head.apply(stage.row(m).transpose());
    return FlowField(std::move(residual));
}

/// Residual motion head: channelwise max over points, then an affine head
/// ("motion_head", C -> 7). The quaternion part is biased by (1,0,0,0) before
/// normalization so a zero head is the identity; a vanishing norm also falls
/// back to the identity rotation. The caller composes residual * z.
inline RigidMotion predict_residual_motion(const HiddenState& h, const WeightBundle& weights) {
    const AffineLayer& head = weights.layer("motion_head");
    if (head.in() != h.channels() || head.out() != 7)
        throw WeightShapeError("motion_head must map hidden channels to 7 outputs");

    const Eigen::VectorXd pooled = h.h.colwise().maxCoeff().transpose();
    const Eigen::VectorXd out = head.apply(pooled);
    Eigen::Vector4d quat(1.0 + out[0], out[1], out[2], out[3]);
    if (quat.norm() < 1e-12) quat << 1.0, 0.0, 0.0, 0.0;
    return RigidMotion(quat[0], quat[1], quat[2], quat[3], Vec3(out[4], out[5], out[6]));
}

/// Symmetrized k-NN adjacency used by the classic smoother: j is a neighbor
/// of i when either is among the other's k nearest (self excluded).
struct SmoothingGraph {
    std::vector<std::vector<int>> neighbors;

    static SmoothingGraph build(const NeighborIndex& index, int k) {
        if (k < 1) throw InvalidInput("smoothing graph requires k >= 1");
        const int n = index.size();
        SmoothingGraph g;
        g.neighbors.assign(static_cast<std::size_t>(n), {});
        const int want = std::min(k, n - 1);
        if (want == 0) return g;
        for (int i = 0; i < n; ++i) {
            const auto hits = index.query_knn(index.point(i), want + 1);
            int taken = 0;
            for (const auto& h : hits) {
                if (h.index == i) continue;
                if (taken++ == want) break;
                g.neighbors[static_cast<std::size_t>(i)].push_back(h.index);
                g.neighbors[static_cast<std::size_t>(h.index)].push_back(i);
            }
        }
        for (auto& adj : g.neighbors) {
            std::sort(adj.begin(), adj.end());
            adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
        }
        return g;
    }
};

/// Data term plus lambda-weighted smoothness over undirected graph edges
/// (each pair counted once).
inline double smoothing_objective(const FlowField& z, const FlowField& x,
                                  const SmoothingGraph& graph, double lambda) {
    if (z.size() != x.size() || static_cast<std::size_t>(z.size()) != graph.neighbors.size())
        throw InvalidInput("objective inputs have mismatched sizes");
    double data = 0.0, smooth = 0.0;
    for (int i = 0; i < z.size(); ++i) {
        data += (x[i] - z[i]).squaredNorm();
        for (int j : graph.neighbors[static_cast<std::size_t>(i)])
            if (j > i) smooth += (x[i] - x[j]).squaredNorm();
    }
    return data + lambda * smooth;
}

/// Jacobi sweeps of the normal equations of the smoothing objective:
///   x_i <- (z_i + lambda * sum_{j in N(i)} x_j) / (1 + lambda |N(i)|),
/// starting from x = z. The objective is checked to be non-increasing after
/// every sweep.
inline FlowField laplacian_smooth(const FlowField& z, const NeighborIndex& p_index,
                                  double lambda, int iters, int k) {
    if (!(lambda > 0.0)) throw InvalidInput("smoothing lambda must be positive");
    if (iters < 0) throw InvalidInput("sweep count must be nonnegative");
    if (z.size() != p_index.size())
        throw InvalidInput("flow length does not match the neighbor index");

    const SmoothingGraph graph = SmoothingGraph::build(p_index, k);
    FlowField x = z;
    FlowField next = z;
    double objective = smoothing_objective(z, x, graph, lambda);
    for (int sweep = 0; sweep < iters; ++sweep) {
        parallel_for(static_cast<std::size_t>(z.size()), [&](std::size_t i) {
            const auto& adj = graph.neighbors[i];
            Vec3 acc = z[static_cast<int>(i)];
            for (int j : adj) acc += lambda * x[j];
            next[static_cast<int>(i)] = acc / (1.0 + lambda * static_cast<double>(adj.size()));
        });
        std::swap(x, next);
        const double updated = smoothing_objective(z, x, graph, lambda);
        if (updated > objective + 1e-9 * (1.0 + objective))
            throw NumericalFailure("smoothing objective increased", sweep);
        objective = updated;
    }
    return x;
}

/// Dense closed-form minimizer of the smoothing objective; reference path
/// for small instances.
inline FlowField laplacian_smooth_dense(const FlowField& z, const NeighborIndex& p_index,
                                        double lambda, int k) {
    const SmoothingGraph graph = SmoothingGraph::build(p_index, k);
    const int n = z.size();
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i) {
        const auto& adj = graph.neighbors[static_cast<std::size_t>(i)];
        system(i, i) += lambda * static_cast<double>(adj.size());
        for (int j : adj) system(i, j) -= lambda;
    }
    Eigen::MatrixXd rhs(n, 3);
    for (int i = 0; i < n; ++i) rhs.row(i) = z[i].transpose();
    const Eigen::MatrixXd solution = system.ldlt().solve(rhs);
    std::vector<Vec3> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = solution.row(i).transpose();
    return FlowField(std::move(out));
}

}  // namespace rcp
