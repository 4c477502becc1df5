#pragma once

// Independent brute-force transcriptions used as test oracles. These
// reimplement the checked formulas with plain scalar loops and their own
// neighbor searches; they share nothing with the library code paths they
// verify (Eigen vectors are used as containers only).

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rcp/rcp.hpp"

namespace oracle {

/// Exact k-NN by sorting (squared distance, index).
inline std::vector<std::pair<double, int>> knn_brute(const std::vector<rcp::Vec3>& points,
                                                     const rcp::Vec3& query, int k) {
    std::vector<std::pair<double, int>> all(points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
        all[i] = {(points[i] - query).squaredNorm(), static_cast<int>(i)};
    std::sort(all.begin(), all.end());
    all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(k)));
    return all;
}

/// Neighbors of point i within its own cloud, self excluded.
inline std::vector<int> region_brute(const std::vector<rcp::Vec3>& points, int i, int k) {
    const auto hits = knn_brute(points, points[static_cast<std::size_t>(i)],
                                std::min<int>(k + 1, static_cast<int>(points.size())));
    std::vector<int> region;
    for (const auto& [d2, idx] : hits) {
        if (idx == i) continue;
        region.push_back(idx);
        if (static_cast<int>(region.size()) == k) break;
    }
    return region;
}

struct FlowMetricsBrute {
    double epe3d = 0, acc3ds = 0, acc3dr = 0, outliers3d = 0;
};

inline FlowMetricsBrute flow_metrics_brute(const rcp::FlowField& pred,
                                           const rcp::FlowField& gt) {
    FlowMetricsBrute m;
    const int n = pred.size();
    for (int i = 0; i < n; ++i) {
        const double err = (pred[i] - gt[i]).norm();
        const double gtn = gt[i].norm();
        m.epe3d += err;
        const bool rel_ok = gtn >= 1e-12;
        if (err < 0.05 || (rel_ok && err / gtn < 0.05)) m.acc3ds += 1;
        if (err < 0.1 || (rel_ok && err / gtn < 0.1)) m.acc3dr += 1;
        if (err > 0.3 || (rel_ok && err / gtn > 0.1)) m.outliers3d += 1;
    }
    m.epe3d /= n;
    m.acc3ds /= n;
    m.acc3dr /= n;
    m.outliers3d /= n;
    return m;
}

/// Rotation-angle error via the quaternion inner product (a different
/// algebraic route than the rotation-matrix trace).
inline double rotation_angle_deg_brute(const rcp::RigidMotion& a, const rcp::RigidMotion& b) {
    const auto& qa = a.quaternion();
    const auto& qb = b.quaternion();
    const double dot = std::abs(qa.w() * qb.w() + qa.x() * qb.x() + qa.y() * qb.y() +
                                qa.z() * qb.z());
    return 2.0 * std::acos(std::min(1.0, dot)) * 180.0 / M_PI;
}

inline double chamfer_brute(const rcp::PointCloud& a, const rcp::PointCloud& b) {
    double total = 0.0;
    for (const auto& p : a.points) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : b.points) best = std::min(best, (p - q).squaredNorm());
        total += best;
    }
    for (const auto& q : b.points) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : a.points) best = std::min(best, (p - q).squaredNorm());
        total += best;
    }
    return total;
}

inline double smoothness_brute(const rcp::FlowField& flow, const std::vector<rcp::Vec3>& points,
                               int k) {
    double total = 0.0;
    for (int i = 0; i < flow.size(); ++i) {
        const auto region =
            region_brute(points, i, std::min<int>(k, static_cast<int>(points.size()) - 1));
        if (region.empty()) continue;
        double s = 0.0;
        for (int j : region) s += (flow[j] - flow[i]).squaredNorm();
        total += s / static_cast<double>(region.size());
    }
    return total;
}

inline rcp::Vec3 laplacian_coordinate_brute(const std::vector<rcp::Vec3>& points, int i, int k) {
    const auto region =
        region_brute(points, i, std::min<int>(k, static_cast<int>(points.size()) - 1));
    if (region.empty()) return rcp::Vec3::Zero();
    rcp::Vec3 acc = rcp::Vec3::Zero();
    for (int j : region) acc += points[static_cast<std::size_t>(j)] - points[static_cast<std::size_t>(i)];
    return acc / static_cast<double>(region.size());
}

inline double laplacian_term_brute(const rcp::PointCloud& p_prime, const rcp::PointCloud& q,
                                   int k) {
    double total = 0.0;
    for (int i = 0; i < p_prime.size(); ++i) {
        const rcp::Vec3 dp = laplacian_coordinate_brute(p_prime.points, i, k);
        const auto hits = knn_brute(q.points, p_prime[i], std::min(3, q.size()));
        double wsum = 0.0;
        rcp::Vec3 dq = rcp::Vec3::Zero();
        for (const auto& [d2, idx] : hits) {
            const double w = 1.0 / std::max(std::sqrt(d2), 1e-9);
            dq += w * laplacian_coordinate_brute(q.points, idx, k);
            wsum += w;
        }
        total += (dp - dq / wsum).squaredNorm();
    }
    return total;
}

/// Direct scalar transcription of the bilateral update over a candidate set.
inline rcp::FlowField bilateral_brute(const rcp::CandidateSet& cands, const rcp::FeatureMap& fp,
                                      const rcp::FeatureMap& fq, const rcp::FlowField& prev,
                                      double sigma_f, double sigma_u) {
    rcp::FlowField out = rcp::FlowField::zeros(cands.source_size);
    for (int m = 0; m < cands.source_size; ++m) {
        double w_total = 0.0;
        rcp::Vec3 z = rcp::Vec3::Zero();
        for (int j = 0; j < cands.per_point; ++j) {
            const int n = cands.index(m, j);
            double feat = 0.0;
            for (int d = 0; d < fp.dim(); ++d) {
                const double diff = fp.descriptors(m, d) - fq.descriptors(n, d);
                feat += diff * diff;
            }
            const double w =
                std::exp(-std::sqrt(feat) / sigma_f - (cands.u(m, j) - prev[m]).norm() / sigma_u);
            w_total += w;
            z += w * cands.u(m, j);
        }
        out[m] = z / w_total;
    }
    return out;
}

/// Exhaustive Eq.-5 winner over a candidate set, ties to the lowest target
/// index.
inline rcp::FlowField hard_brute(const rcp::CandidateSet& cands, const rcp::FeatureMap& fp,
                                 const rcp::FeatureMap& fq, const rcp::FlowField& prev) {
    rcp::FlowField out = rcp::FlowField::zeros(cands.source_size);
    for (int m = 0; m < cands.source_size; ++m) {
        double best = std::numeric_limits<double>::infinity();
        int best_idx = -1;
        rcp::Vec3 best_u = rcp::Vec3::Zero();
        for (int j = 0; j < cands.per_point; ++j) {
            const int n = cands.index(m, j);
            const double obj = (fp.row(m) - fq.row(n)).norm() + (cands.u(m, j) - prev[m]).norm();
            if (obj < best || (obj == best && n < best_idx)) {
                best = obj;
                best_idx = n;
                best_u = cands.u(m, j);
            }
        }
        out[m] = best_u;
    }
    return out;
}

/// Scalar grouped affine + max-pool with its own brute-force neighbor search.
inline Eigen::MatrixXd set_conv_scalar(const std::vector<rcp::Vec3>& points,
                                       const Eigen::MatrixXd& feats, int group_k,
                                       const rcp::AffineLayer& layer) {
    const int n = static_cast<int>(points.size());
    const int fin = static_cast<int>(feats.cols());
    const int fout = layer.out();
    Eigen::MatrixXd out(n, fout);
    for (int i = 0; i < n; ++i) {
        const auto hits = knn_brute(points, points[static_cast<std::size_t>(i)],
                                    std::min(group_k, n));
        std::vector<double> pooled(static_cast<std::size_t>(fout),
                                   -std::numeric_limits<double>::infinity());
        for (const auto& [d2, idx] : hits) {
            std::vector<double> input(static_cast<std::size_t>(3 + fin));
            for (int a = 0; a < 3; ++a)
                input[static_cast<std::size_t>(a)] =
                    points[static_cast<std::size_t>(idx)][a] - points[static_cast<std::size_t>(i)][a];
            for (int f = 0; f < fin; ++f) input[static_cast<std::size_t>(3 + f)] = feats(idx, f);
            for (int r = 0; r < fout; ++r) {
                double acc = layer.bias(r);
                for (int c = 0; c < 3 + fin; ++c)
                    acc += layer.weight(r, c) * input[static_cast<std::size_t>(c)];
                pooled[static_cast<std::size_t>(r)] =
                    std::max(pooled[static_cast<std::size_t>(r)], acc);
            }
        }
        for (int r = 0; r < fout; ++r) out(i, r) = pooled[static_cast<std::size_t>(r)];
    }
    return out;
}

/// Direct scalar transcription of the gated recurrent update.
inline Eigen::MatrixXd gru_step_scalar(const std::vector<rcp::Vec3>& points,
                                       const Eigen::MatrixXd& h_prev, const Eigen::MatrixXd& v,
                                       const rcp::WeightBundle& weights, int group_k) {
    const int n = static_cast<int>(points.size());
    const int c = static_cast<int>(h_prev.cols());
    Eigen::MatrixXd hv(n, h_prev.cols() + v.cols());
    hv << h_prev, v;

    auto sigmoid_mat = [](Eigen::MatrixXd m) {
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j) m(i, j) = 1.0 / (1.0 + std::exp(-m(i, j)));
        return m;
    };
    const Eigen::MatrixXd w =
        sigmoid_mat(set_conv_scalar(points, hv, group_k, weights.layer("gru_w")));
    const Eigen::MatrixXd r =
        sigmoid_mat(set_conv_scalar(points, hv, group_k, weights.layer("gru_r")));

    Eigen::MatrixXd rh_v(n, h_prev.cols() + v.cols());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) rh_v(i, j) = r(i, j) * h_prev(i, j);
        for (int j = 0; j < v.cols(); ++j) rh_v(i, c + j) = v(i, j);
    }
    Eigen::MatrixXd h_cand = set_conv_scalar(points, rh_v, group_k, weights.layer("gru_h"));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) h_cand(i, j) = std::tanh(h_cand(i, j));

    Eigen::MatrixXd h(n, c);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j)
            h(i, j) = (1.0 - w(i, j)) * h_prev(i, j) + w(i, j) * h_cand(i, j);
    return h;
}

/// Dense solve of the smoothing normal equations over a brute-force
/// symmetrized k-NN graph.
inline rcp::FlowField laplacian_dense_brute(const rcp::FlowField& z,
                                            const std::vector<rcp::Vec3>& points, double lambda,
                                            int k) {
    const int n = static_cast<int>(points.size());
    std::vector<std::vector<char>> adj(static_cast<std::size_t>(n),
                                       std::vector<char>(static_cast<std::size_t>(n), 0));
    for (int i = 0; i < n; ++i)
        for (int j : region_brute(points, i, std::min(k, n - 1))) {
            adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = 1;
            adj[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = 1;
        }

    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
                system(i, i) += lambda;
                system(i, j) -= lambda;
            }
    Eigen::MatrixXd rhs(n, 3);
    for (int i = 0; i < n; ++i) rhs.row(i) = z[i].transpose();
    const Eigen::MatrixXd sol = system.fullPivLu().solve(rhs);

    std::vector<rcp::Vec3> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = sol.row(i).transpose();
    return rcp::FlowField(std::move(out));
}

/// Softmax feature interpolation over ALL target points (reference for the
/// k-limited implementation when k covers the whole cloud).
inline Eigen::VectorXd interpolate_full_softmax(const rcp::FeatureMap& fq,
                                                const std::vector<rcp::Vec3>& q_points,
                                                const rcp::Vec3& at, double tau) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (const auto& q : q_points)
        max_logit = std::max(max_logit, -(q - at).squaredNorm() / tau);
    double norm = 0.0;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(fq.dim());
    for (std::size_t n = 0; n < q_points.size(); ++n) {
        const double w = std::exp(-(q_points[n] - at).squaredNorm() / tau - max_logit);
        norm += w;
        acc += w * fq.descriptors.row(static_cast<Eigen::Index>(n)).transpose();
    }
    return acc / norm;
}

}  // namespace oracle
