#pragma once

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

/// Point-wise update rule for the data subproblem.
enum class UpdateKind {
    AttentionSoftmax,  // softmax over encoded-feature dot products
    BilateralExp,      // feature/proximity bilateral weights
    HardArgmax,        // winner-take-all over the combined objective
};

struct UpdateMode {
    UpdateKind kind = UpdateKind::AttentionSoftmax;
    double tau = 1.0;      // attention temperature
    double sigma_f = 0.5;  // bilateral feature bandwidth
    double sigma_u = 0.5;  // bilateral proximity bandwidth, meters

    void validate() const {
        if (!(tau > 0.0)) throw InvalidInput("attention temperature must be positive");
        if (!(sigma_f > 0.0) || !(sigma_u > 0.0))
            throw InvalidInput("bilateral bandwidths must be positive");
    }
};

/// Per source point: the k nearest target points around its warped position,
/// each paired with the candidate displacement u_n = q_n - p_m built from the
/// ORIGINAL source point. Candidate order is nearest-first (ties by index).
struct CandidateSet {
    int source_size = 0;
    int per_point = 0;             // = min(k_omega, N), identical for all points
    std::vector<int> indices;      // source_size * per_point, row-major
    std::vector<Vec3> displacements;

    int index(int m, int j) const {
        return indices[static_cast<std::size_t>(m) * static_cast<std::size_t>(per_point) +
                       static_cast<std::size_t>(j)];
    }
    const Vec3& u(int m, int j) const {
        return displacements[static_cast<std::size_t>(m) * static_cast<std::size_t>(per_point) +
                             static_cast<std::size_t>(j)];
    }
};

inline CandidateSet gather_candidates(const PointCloud& p, const NeighborIndex& q_index,
                                      const FlowField& prev_flow, int k_omega) {
    if (prev_flow.size() != p.size())
        throw InvalidInput("previous-flow length does not match the source cloud");
    if (k_omega < 1) throw InvalidInput("candidate neighborhood size must be >= 1");

    CandidateSet set;
    set.source_size = p.size();
    set.per_point = std::min(k_omega, q_index.size());
    set.indices.resize(static_cast<std::size_t>(set.source_size) *
                       static_cast<std::size_t>(set.per_point));
    set.displacements.resize(set.indices.size());

    parallel_for(static_cast<std::size_t>(p.size()), [&](std::size_t m) {
        const Vec3 warped = p[static_cast<int>(m)] + prev_flow[static_cast<int>(m)];
        const auto hits = q_index.query_knn(warped, set.per_point);
        const std::size_t base = m * static_cast<std::size_t>(set.per_point);
        for (std::size_t j = 0; j < hits.size(); ++j) {
            set.indices[base + j] = hits[j].index;
            set.displacements[base + j] = q_index.point(hits[j].index) - p[static_cast<int>(m)];
        }
    });
    return set;
}

/// Auxiliary flow plus the per-point confidence later used as a rigid-fit
/// weight. Softmax-style updates have unit mass by construction; bilateral
/// mass is the unnormalized weight sum W.
struct UpdateResult {
    FlowField flow;
    std::vector<double> mass;
    int underflow_fallbacks = 0;
};

/// Eq.-7-style update: softmax over g_m . g_n within the candidate set,
/// where g rows concatenate descriptors with positional encodings. gp must be
/// encoded at the WARPED source positions, gq at the target positions.
inline UpdateResult update_attention(const CandidateSet& cands, const Eigen::MatrixXd& gp,
                                     const Eigen::MatrixXd& gq, double tau) {
    if (!(tau > 0.0)) throw InvalidInput("attention temperature must be positive");
    if (gp.rows() != cands.source_size)
        throw InvalidInput("source encodings do not match the candidate set");
    if (gp.cols() != gq.cols()) throw InvalidInput("encoded dimensions differ");

    UpdateResult result;
    result.flow = FlowField::zeros(cands.source_size);
    result.mass.assign(static_cast<std::size_t>(cands.source_size), 1.0);

    parallel_for(static_cast<std::size_t>(cands.source_size), [&](std::size_t ms) {
        const int m = static_cast<int>(ms);
        std::vector<double> logits(static_cast<std::size_t>(cands.per_point));
        double max_logit = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < cands.per_point; ++j) {
            const double l = gp.row(m).dot(gq.row(cands.index(m, j))) / tau;
            logits[static_cast<std::size_t>(j)] = l;
            max_logit = std::max(max_logit, l);
        }
        double norm = 0.0;
        Vec3 z = Vec3::Zero();
        for (int j = 0; j < cands.per_point; ++j) {
            const double w = std::exp(logits[static_cast<std::size_t>(j)] - max_logit);
            norm += w;
            z += w * cands.u(m, j);
        }
        result.flow[m] = z / norm;
    });
    return result;
}

/// Eq.-6-style update: bilateral weights
/// exp(-||f_P(p_m) - f_Q(q_n)|| / sigma_f - ||u_n - x_m|| / sigma_u),
/// normalized by their sum W. If every weight underflows to zero the nearest
/// candidate wins and the fallback counter is bumped (its mass stays zero).
inline UpdateResult update_bilateral(const CandidateSet& cands, const FeatureMap& fp,
                                     const FeatureMap& fq, const FlowField& prev_flow,
                                     double sigma_f, double sigma_u) {
    if (!(sigma_f > 0.0) || !(sigma_u > 0.0))
        throw InvalidInput("bilateral bandwidths must be positive");
    if (fp.cloud_size() != cands.source_size || prev_flow.size() != cands.source_size)
        throw InvalidInput("bilateral update inputs do not match the candidate set");

    UpdateResult result;
    result.flow = FlowField::zeros(cands.source_size);
    result.mass.assign(static_cast<std::size_t>(cands.source_size), 0.0);
    std::vector<char> fell_back(static_cast<std::size_t>(cands.source_size), 0);

    parallel_for(static_cast<std::size_t>(cands.source_size), [&](std::size_t ms) {
        const int m = static_cast<int>(ms);
        double total = 0.0;
        Vec3 z = Vec3::Zero();
        for (int j = 0; j < cands.per_point; ++j) {
            const int n = cands.index(m, j);
            const double feat_dist = (fp.descriptors.row(m) - fq.descriptors.row(n)).norm();
            const double prox_dist = (cands.u(m, j) - prev_flow[m]).norm();
            const double w = std::exp(-feat_dist / sigma_f - prox_dist / sigma_u);
            total += w;
            z += w * cands.u(m, j);
        }
        if (total > 0.0) {
            result.flow[m] = z / total;
            result.mass[ms] = total;
        } else {
            result.flow[m] = cands.u(m, 0);  // candidates are nearest-first
            fell_back[ms] = 1;
        }
    });
    for (char f : fell_back) result.underflow_fallbacks += f;
    return result;
}

/// Eq.-5 winner-take-all: pick the candidate minimizing
/// ||f_P(p_m) - f_Q(q_n)|| + ||u_n - x_m||, ties toward the lowest target
/// index.
inline UpdateResult update_hard(const CandidateSet& cands, const FeatureMap& fp,
                                const FeatureMap& fq, const FlowField& prev_flow) {
    if (fp.cloud_size() != cands.source_size || prev_flow.size() != cands.source_size)
        throw InvalidInput("hard update inputs do not match the candidate set");

    UpdateResult result;
    result.flow = FlowField::zeros(cands.source_size);
    result.mass.assign(static_cast<std::size_t>(cands.source_size), 1.0);

    parallel_for(static_cast<std::size_t>(cands.source_size), [&](std::size_t ms) {
        const int m = static_cast<int>(ms);
        int best_j = 0;
        int best_index = cands.index(m, 0);
        double best_obj = std::numeric_limits<double>::infinity();
        for (int j = 0; j < cands.per_point; ++j) {
            const int n = cands.index(m, j);
            const double obj = (fp.descriptors.row(m) - fq.descriptors.row(n)).norm() +
                               (cands.u(m, j) - prev_flow[m]).norm();
            if (obj < best_obj || (obj == best_obj && n < best_index)) {
                best_obj = obj;
                best_j = j;
                best_index = n;
            }
        }
        result.flow[m] = cands.u(m, best_j);
    });
    return result;
}

/// One registration-flavored point-wise step: derive the previous per-point
/// flow from the previous motion, run the chosen update, then re-fit a rigid
/// motion to the displaced points using the update's confidence as weights.
struct RegistrationStep {
    FlowField flow;      // auxiliary per-point result
    RigidMotion motion;  // auxiliary rigid result
    int underflow_fallbacks = 0;
};

inline RegistrationStep pointwise_step_registration(
    const PointCloud& p, const NeighborIndex& q_index, const RigidMotion& prev_motion,
    const UpdateMode& mode, const FeatureMap& fp, const FeatureMap& fq,
    const Eigen::MatrixXd& gq, int k_omega, int posenc_bands = 4) {
    mode.validate();
    const FlowField prev_flow = flow_from_motion(p, prev_motion);
    const CandidateSet cands = gather_candidates(p, q_index, prev_flow, k_omega);

    UpdateResult upd;
    switch (mode.kind) {
        case UpdateKind::AttentionSoftmax: {
            std::vector<Vec3> warped(p.points.size());
            for (int i = 0; i < p.size(); ++i) warped[static_cast<std::size_t>(i)] = p[i] + prev_flow[i];
            const Eigen::MatrixXd gp = encode_features(fp, warped, posenc_bands);
            upd = update_attention(cands, gp, gq, mode.tau);
            break;
        }
        case UpdateKind::BilateralExp:
            upd = update_bilateral(cands, fp, fq, prev_flow, mode.sigma_f, mode.sigma_u);
            break;
        case UpdateKind::HardArgmax:
            upd = update_hard(cands, fp, fq, prev_flow);
            break;
    }

    std::vector<Vec3> targets(p.points.size());
    for (int i = 0; i < p.size(); ++i)
        targets[static_cast<std::size_t>(i)] = p[i] + upd.flow[i];

    RegistrationStep step;
    step.motion = rigid_fit(p, targets, upd.mass);
    step.flow = std::move(upd.flow);
    step.underflow_fallbacks = upd.underflow_fallbacks;
    return step;
}

}  // namespace rcp
