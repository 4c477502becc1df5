#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rcp/errors.hpp"
#include "rcp/features.hpp"
#include "rcp/geometry.hpp"

namespace rcp {

/// Entropic optimal-transport plan between two clouds, with the achieved
/// marginal accuracy reported alongside.
struct TransportPlan {
    Eigen::MatrixXd weights;                 // M x N, nonnegative
    Eigen::VectorXd row_marginals;           // targets (uniform 1/M)
    Eigen::VectorXd col_marginals;           // targets (uniform 1/N)
    int iterations = 0;                      // full row+column sweeps run
    double max_violation = 0.0;              // achieved max marginal error
    std::vector<double> violation_history;   // one entry per sweep

    int rows() const { return static_cast<int>(weights.rows()); }
    int cols() const { return static_cast<int>(weights.cols()); }
};

/// C[m][n] = 1 - cosine_similarity(fp_m, fq_n). Zero-norm descriptor rows
/// contribute similarity 0, i.e. cost 1 against everything.
inline Eigen::MatrixXd cost_matrix(const FeatureMap& fp, const FeatureMap& fq) {
    if (fp.dim() != fq.dim())
        throw InvalidInput("cost matrix requires equal descriptor dimensions");

    auto normalized = [](const Eigen::MatrixXd& m) {
        Eigen::MatrixXd out = m;
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            const double n = out.row(i).norm();
            if (n < 1e-12)
                out.row(i).setZero();
            else
                out.row(i) /= n;
        }
        return out;
    };
    const Eigen::MatrixXd a = normalized(fp.descriptors);
    const Eigen::MatrixXd b = normalized(fq.descriptors);
    return Eigen::MatrixXd::Ones(a.rows(), b.rows()) - a * b.transpose();
}

/// Entropic-regularized transport toward uniform marginals, computed in the
/// log domain (dual potentials with log-sum-exp reductions), so sharp costs
/// cannot underflow. Stops when the max marginal violation drops below tol
/// or after max_iters sweeps.
inline TransportPlan sinkhorn(const Eigen::MatrixXd& cost, double epsilon = 0.03,
                              int max_iters = 100, double tol = 1e-6) {
    if (!cost.allFinite()) throw InvalidInput("sinkhorn requires a finite cost matrix");
    if (!(epsilon > 0.0)) throw InvalidInput("sinkhorn epsilon must be positive");
    if (max_iters < 1) throw InvalidInput("sinkhorn needs at least one iteration");
    if (!(tol > 0.0)) throw InvalidInput("sinkhorn tolerance must be positive");

    const Eigen::Index m = cost.rows();
    const Eigen::Index n = cost.cols();
    const double log_r = -std::log(static_cast<double>(m));
    const double log_c = -std::log(static_cast<double>(n));

    Eigen::VectorXd f = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);

    TransportPlan plan;
    plan.row_marginals = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
    plan.col_marginals = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));

    Eigen::MatrixXd scaled(m, n);
    for (int it = 0; it < max_iters; ++it) {
        // Row rescale: f_m = eps * (log r - LSE_n((g_n - C_mn)/eps)).
        scaled = (((-cost).rowwise() + g.transpose()) / epsilon).matrix();
        Eigen::VectorXd row_max = scaled.rowwise().maxCoeff();
        f = epsilon *
            (log_r - row_max.array() -
             (scaled.colwise() - row_max).array().exp().rowwise().sum().log());

        // Column rescale: g_n = eps * (log c - LSE_m((f_m - C_mn)/eps)).
        scaled = (((-cost).colwise() + f) / epsilon).matrix();
        Eigen::RowVectorXd col_max = scaled.colwise().maxCoeff();
        g = epsilon * (log_c - col_max.transpose().array() -
                       (scaled.rowwise() - col_max).array().exp().colwise().sum().transpose().log());

        plan.weights = (((((-cost).colwise() + f).rowwise() + g.transpose()) / epsilon))
                           .array()
                           .exp()
                           .matrix();
        const double row_violation =
            (plan.weights.rowwise().sum() - plan.row_marginals).cwiseAbs().maxCoeff();
        const double col_violation =
            (plan.weights.colwise().sum().transpose() - plan.col_marginals)
                .cwiseAbs()
                .maxCoeff();
        plan.max_violation = std::max(row_violation, col_violation);
        plan.violation_history.push_back(plan.max_violation);
        plan.iterations = it + 1;
        if (plan.max_violation < tol) break;
    }
    return plan;
}

/// Initial flow from a transport plan: each source point moves to the
/// barycenter of its plan row. Rows with negligible mass get zero flow.
inline FlowField init_flow(const TransportPlan& plan, const PointCloud& p,
                           const PointCloud& q) {
    if (plan.rows() != p.size() || plan.cols() != q.size())
        throw InvalidInput("transport plan dimensions do not match the clouds");

    std::vector<Vec3> flow(p.points.size());
    for (int m = 0; m < p.size(); ++m) {
        const double mass = plan.weights.row(m).sum();
        if (mass < 1e-12) {
            flow[static_cast<std::size_t>(m)] = Vec3::Zero();
            continue;
        }
        Vec3 target = Vec3::Zero();
        for (int n = 0; n < q.size(); ++n) target += plan.weights(m, n) * q[n];
        flow[static_cast<std::size_t>(m)] = target / mass - p[m];
    }
    return FlowField(std::move(flow));
}

/// Initial rigid motion: weighted Procrustes against the barycentric targets,
/// weighted by per-row plan mass.
inline RigidMotion init_motion(const TransportPlan& plan, const PointCloud& p,
                               const PointCloud& q) {
    if (plan.rows() != p.size() || plan.cols() != q.size())
        throw InvalidInput("transport plan dimensions do not match the clouds");

    std::vector<Vec3> targets(p.points.size());
    std::vector<double> weights(p.points.size());
    for (int m = 0; m < p.size(); ++m) {
        const double mass = plan.weights.row(m).sum();
        if (mass < 1e-12) {
            targets[static_cast<std::size_t>(m)] = p[m];
            weights[static_cast<std::size_t>(m)] = 0.0;
            continue;
        }
        Vec3 target = Vec3::Zero();
        for (int n = 0; n < q.size(); ++n) target += plan.weights(m, n) * q[n];
        targets[static_cast<std::size_t>(m)] = target / mass;
        weights[static_cast<std::size_t>(m)] = mass;
    }
    return rigid_fit(p, targets, weights);
}

}  // namespace rcp
