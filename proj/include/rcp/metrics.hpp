#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "rcp/errors.hpp"
#include "rcp/geometry.hpp"

namespace rcp {

struct FlowMetrics {
    double epe3d = 0.0;       // meters
    double acc3ds = 0.0;      // fraction in [0, 1]
    double acc3dr = 0.0;      // fraction in [0, 1]
    double outliers3d = 0.0;  // fraction in [0, 1]
};

struct RegMetrics {
    double error_r = 0.0;  // degrees
    double error_t = 0.0;  // meters
    double mae_r = 0.0;    // degrees, mean over axes
    double mae_t = 0.0;    // meters, mean over axes
};

struct SelfSupWeights {
    double alpha_chamfer = 1.0;
    double alpha_smooth = 1.0;
    double alpha_laplacian = 0.3;

    void validate() const {
        if (alpha_chamfer < 0.0 || alpha_smooth < 0.0 || alpha_laplacian < 0.0)
            throw InvalidInput("loss weights must be nonnegative");
        if (alpha_chamfer == 0.0 && alpha_smooth == 0.0 && alpha_laplacian == 0.0)
            throw InvalidInput("loss weights must not all be zero");
    }
};

/// EPE3D plus threshold accuracies. A point satisfies a relative clause via
/// err / ||gt||; ground-truth norms below 1e-12 leave the decision to the
/// absolute clause alone.
inline FlowMetrics flow_metrics(const FlowField& pred, const FlowField& gt) {
    if (pred.size() != gt.size()) throw InvalidInput("flow metric inputs differ in length");
    const int n = pred.size();
    if (n == 0) throw InvalidInput("flow metrics need at least one point");

    FlowMetrics out;
    int ns = 0, nr = 0, no = 0;
    for (int i = 0; i < n; ++i) {
        const double err = (pred[i] - gt[i]).norm();
        const double gtn = gt[i].norm();
        const bool has_rel = gtn >= 1e-12;
        const double rel = has_rel ? err / gtn : 0.0;
        out.epe3d += err;
        if (err < 0.05 || (has_rel && rel < 0.05)) ++ns;
        if (err < 0.1 || (has_rel && rel < 0.1)) ++nr;
        if (err > 0.3 || (has_rel && rel > 0.1)) ++no;
    }
    out.epe3d /= n;
    out.acc3ds = static_cast<double>(ns) / n;
    out.acc3dr = static_cast<double>(nr) / n;
    out.outliers3d = static_cast<double>(no) / n;
    return out;
}

/// Euler angles of R = Rz(a) Ry(b) Rx(c) (intrinsic Z-Y-X), radians.
inline Vec3 euler_zyx(const Mat3& r) {
    const double sy = -std::clamp(r(2, 0), -1.0, 1.0);
    const double b = std::asin(sy);
    if (std::abs(r(2, 0)) < 1.0 - 1e-9)
        return {std::atan2(r(1, 0), r(0, 0)), b, std::atan2(r(2, 1), r(2, 2))};
    // Gimbal lock: z and x rotations align; attribute everything to z.
    return {std::atan2(-r(0, 1), r(1, 1)), b, 0.0};
}

inline RegMetrics reg_metrics(const RigidMotion& pred, const RigidMotion& gt) {
    const Mat3 rp = pred.rotation_matrix();
    const Mat3 rg = gt.rotation_matrix();
    constexpr double kRad2Deg = 180.0 / M_PI;

    RegMetrics out;
    const double cos_angle = std::clamp(((rg.transpose() * rp).trace() - 1.0) / 2.0, -1.0, 1.0);
    out.error_r = std::acos(cos_angle) * kRad2Deg;

    // Translation gap expressed in the ground-truth frame; zero iff the
    // translations coincide.
    const Vec3 t_in_gt = rg.transpose() * (pred.translation() - gt.translation());
    out.error_t = t_in_gt.norm();
    out.mae_t = t_in_gt.cwiseAbs().sum() / 3.0;

    const Vec3 euler_diff = euler_zyx(rg) - euler_zyx(rp);
    out.mae_r = euler_diff.cwiseAbs().sum() / 3.0 * kRad2Deg;
    return out;
}

/// Mean per-point euclidean error (numerically identical to EPE3D).
inline double l1_flow_loss(const FlowField& pred, const FlowField& gt) {
    if (pred.size() != gt.size()) throw InvalidInput("flow loss inputs differ in length");
    if (pred.size() == 0) throw InvalidInput("flow loss needs at least one point");
    double s = 0.0;
    for (int i = 0; i < pred.size(); ++i) s += (pred[i] - gt[i]).norm();
    return s / pred.size();
}

/// Mean distance between the cloud transformed by the predicted and the
/// ground-truth motion.
inline double register_loss(const PointCloud& p, const RigidMotion& pred,
                            const RigidMotion& gt) {
    const Mat3 rp = pred.rotation_matrix();
    const Mat3 rg = gt.rotation_matrix();
    double s = 0.0;
    for (const Vec3& pt : p.points)
        s += ((rp * pt + pred.translation()) - (rg * pt + gt.translation())).norm();
    return s / p.size();
}

/// Bidirectional sum of squared nearest-neighbor distances (sums, not means).
inline double chamfer(const PointCloud& a, const PointCloud& b) {
    const NeighborIndex ia(a), ib(b);
    double total = 0.0;
    for (const Vec3& p : a.points) {
        const double d = ib.query_knn(p, 1).front().distance;
        total += d * d;
    }
    for (const Vec3& q : b.points) {
        const double d = ia.query_knn(q, 1).front().distance;
        total += d * d;
    }
    return total;
}

namespace detail {

/// k nearest neighbors of point i within its own cloud, self excluded.
inline std::vector<int> local_region(const NeighborIndex& index, int i, int k) {
    const int want = std::min(k, index.size() - 1);
    std::vector<int> region;
    if (want <= 0) return region;
    region.reserve(static_cast<std::size_t>(want));
    for (const auto& h : index.query_knn(index.point(i), want + 1)) {
        if (h.index == i) continue;
        region.push_back(h.index);
        if (static_cast<int>(region.size()) == want) break;
    }
    return region;
}

/// Laplacian coordinate: mean offset of the local region from the point.
inline Vec3 laplacian_coordinate(const NeighborIndex& index, int i, int k) {
    const auto region = local_region(index, i, k);
    if (region.empty()) return Vec3::Zero();
    Vec3 acc = Vec3::Zero();
    for (int j : region) acc += index.point(j) - index.point(i);
    return acc / static_cast<double>(region.size());
}

}  // namespace detail

/// sum_i (1/|L(p_i)|) sum_{j in L(p_i)} ||x_j - x_i||^2 with L the k nearest
/// neighbors of p_i excluding itself.
inline double smoothness(const FlowField& flow, const NeighborIndex& p_index, int k = 8) {
    if (flow.size() != p_index.size())
        throw InvalidInput("flow length does not match the neighbor index");
    double total = 0.0;
    for (int i = 0; i < flow.size(); ++i) {
        const auto region = detail::local_region(p_index, i, k);
        if (region.empty()) continue;
        double s = 0.0;
        for (int j : region) s += (flow[j] - flow[i]).squaredNorm();
        total += s / static_cast<double>(region.size());
    }
    return total;
}

/// sum over the displaced cloud of squared differences between its Laplacian
/// coordinates and those of the target, interpolated (inverse-distance over
/// the 3 nearest target points) at the same positions.
inline double laplacian_term(const PointCloud& p_prime, const PointCloud& q, int k = 8) {
    const NeighborIndex ip(p_prime), iq(q);
    std::vector<Vec3> delta_q(static_cast<std::size_t>(q.size()));
    for (int j = 0; j < q.size(); ++j)
        delta_q[static_cast<std::size_t>(j)] = detail::laplacian_coordinate(iq, j, k);

    double total = 0.0;
    for (int i = 0; i < p_prime.size(); ++i) {
        const Vec3 dp = detail::laplacian_coordinate(ip, i, k);
        const auto hits = iq.query_knn(p_prime[i], std::min(3, q.size()));
        double wsum = 0.0;
        Vec3 dq = Vec3::Zero();
        for (const auto& h : hits) {
            const double w = 1.0 / std::max(h.distance, 1e-9);
            dq += w * delta_q[static_cast<std::size_t>(h.index)];
            wsum += w;
        }
        total += (dp - dq / wsum).squaredNorm();
    }
    return total;
}

struct SelfSupLoss {
    double total = 0.0;
    double chamfer_term = 0.0;
    double smooth_term = 0.0;
    double laplacian_term = 0.0;
};

/// Weighted self-supervised objective of the displaced cloud against the
/// target: chamfer + smoothness + Laplacian, with the per-term breakdown.
inline SelfSupLoss self_supervised_loss(const PointCloud& p, const PointCloud& q,
                                        const FlowField& flow, const SelfSupWeights& weights,
                                        int k = 8) {
    weights.validate();
    if (flow.size() != p.size()) throw InvalidInput("flow length does not match the cloud");

    std::vector<Vec3> displaced(p.points.size());
    for (int i = 0; i < p.size(); ++i) displaced[static_cast<std::size_t>(i)] = p[i] + flow[i];
    const PointCloud p_prime(std::move(displaced));

    SelfSupLoss loss;
    loss.chamfer_term = chamfer(p_prime, q);
    loss.smooth_term = smoothness(flow, NeighborIndex(p), k);
    loss.laplacian_term = rcp::laplacian_term(p_prime, q, k);
    loss.total = weights.alpha_chamfer * loss.chamfer_term +
                 weights.alpha_smooth * loss.smooth_term +
                 weights.alpha_laplacian * loss.laplacian_term;
    return loss;
}

}  // namespace rcp
