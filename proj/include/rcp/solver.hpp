#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rcp/errors.hpp"
#include "rcp/features.hpp"
#include "rcp/geometry.hpp"
#include "rcp/matching.hpp"
#include "rcp/metrics.hpp"
#include "rcp/pointwise.hpp"
#include "rcp/regularizer.hpp"

namespace rcp {

enum class FeatureProviderKind { Handcrafted, SetConv };

struct FeatureProviderConfig {
    FeatureProviderKind kind = FeatureProviderKind::Handcrafted;
    int handcrafted_k = 16;      // neighborhood for the classic descriptor
    WeightBundle weights;        // backbone parameters (SetConv)
    double sample_ratio = 0.25;  // per-level subsample ratio
    int group_k = 32;            // per-level grouping size
};

enum class RegularizerPath { GraphLaplacian, RecurrentSetConv };

struct RegularizerConfig {
    RegularizerPath kind = RegularizerPath::GraphLaplacian;
    // Classic smoother.
    double lambda = 1.0;
    int sweeps = 50;
    int graph_k = 8;
    // Recurrent unit.
    WeightBundle weights;
    int group_k = 8;
};

struct SinkhornParams {
    double epsilon = 0.03;
    int max_iters = 100;
    double tol = 1e-6;
};

struct SolverConfig {
    int iterations = 7;
    UpdateMode update;
    RegularizerConfig regularizer;
    FeatureProviderConfig features;
    int k_omega = 32;
    SinkhornParams sinkhorn;
    int posenc_bands = 4;
    double interp_tau = 0.01;  // squared-distance temperature for feature interpolation
    bool trace = true;         // record per-iteration diagnostics
    bool early_stop = false;   // optional: stop once the iterate barely moves
    double early_stop_tol = 1e-5;

    void validate() const {
        if (iterations < 1) throw InvalidInput("solver needs at least one iteration");
        if (k_omega < 1) throw InvalidInput("candidate neighborhood must be >= 1");
        if (posenc_bands < 1) throw InvalidInput("positional encoding needs >= 1 band");
        if (!(interp_tau > 0.0)) throw InvalidInput("interpolation temperature must be positive");
        update.validate();
    }
};

/// Per-iteration diagnostics. Entry 0 describes the initialization; entry k
/// the state after alternation step k.
struct TraceEntry {
    int iter = 0;
    double cost = 0.0;       // mean point-wise objective at the iterate
    double mean_flow = 0.0;  // mean flow magnitude, meters
    double epe3d = std::numeric_limits<double>::quiet_NaN();  // NaN when no ground truth
    double millis = 0.0;     // wall time of this stage
};

struct Trace {
    std::vector<TraceEntry> entries;
};

/// Mean per-point objective of the data subproblem at `flow`, measured
/// against the previous iterate: feature distance at the warped position
/// (interpolated target features) plus the movement penalty.
inline double pointwise_cost(const PointCloud& p, const FeatureMap& fp, const FeatureMap& fq,
                             const NeighborIndex& q_index, const FlowField& flow,
                             const FlowField& prev_flow, int k_omega, double interp_tau) {
    std::vector<Vec3> warped(p.points.size());
    for (int i = 0; i < p.size(); ++i) warped[static_cast<std::size_t>(i)] = p[i] + flow[i];
    const Eigen::MatrixXd fq_w = interpolate_features(fq, q_index, warped, k_omega, interp_tau);
    double total = 0.0;
    for (int i = 0; i < p.size(); ++i)
        total += (fp.descriptors.row(i) - fq_w.row(i)).norm() + (flow[i] - prev_flow[i]).norm();
    return total / p.size();
}

namespace detail {

inline FeatureMap compute_features(const PointCloud& cloud, const NeighborIndex& index,
                                   const FeatureProviderConfig& cfg) {
    if (cfg.kind == FeatureProviderKind::Handcrafted)
        return handcrafted_features(cloud, index, cfg.handcrafted_k);
    return set_conv_forward(cloud, cfg.weights, cfg.sample_ratio, cfg.group_k);
}

inline void check_finite(const FlowField& flow, int iteration) {
    for (const Vec3& v : flow.vectors)
        if (!v.allFinite()) throw NumericalFailure("non-finite flow state", iteration);
}

class StageTimer {
public:
    StageTimer() : last_(clock::now()) {}

    double lap_ms() {
        const auto now = clock::now();
        const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
        last_ = now;
        return ms;
    }

private:
    using clock = std::chrono::steady_clock;
    clock::time_point last_;
};

/// Shared per-run state: features and encodings are extracted once and
/// reused across iterations; warped-point features are interpolated.
struct PipelineContext {
    NeighborIndex p_index;
    NeighborIndex q_index;
    FeatureMap fp;
    FeatureMap fq;
    Eigen::MatrixXd gq;  // encoded target rows (attention mode only)

    PipelineContext(const PointCloud& p, const PointCloud& q, const SolverConfig& cfg)
        : p_index(p), q_index(q) {
        fp = compute_features(p, p_index, cfg.features);
        fq = compute_features(q, q_index, cfg.features);
        if (cfg.update.kind == UpdateKind::AttentionSoftmax)
            gq = encode_features(fq, q.points, cfg.posenc_bands);
    }
};

inline UpdateResult run_update(const PointCloud& p, const PipelineContext& ctx,
                               const SolverConfig& cfg, const FlowField& prev_flow) {
    const CandidateSet cands = gather_candidates(p, ctx.q_index, prev_flow, cfg.k_omega);
    switch (cfg.update.kind) {
        case UpdateKind::AttentionSoftmax: {
            std::vector<Vec3> warped(p.points.size());
            for (int i = 0; i < p.size(); ++i)
                warped[static_cast<std::size_t>(i)] = p[i] + prev_flow[i];
            const Eigen::MatrixXd gp = encode_features(ctx.fp, warped, cfg.posenc_bands);
            return update_attention(cands, gp, ctx.gq, cfg.update.tau);
        }
        case UpdateKind::BilateralExp:
            return update_bilateral(cands, ctx.fp, ctx.fq, prev_flow, cfg.update.sigma_f,
                                    cfg.update.sigma_u);
        case UpdateKind::HardArgmax:
        default:
            return update_hard(cands, ctx.fp, ctx.fq, prev_flow);
    }
}

inline GruInput recurrent_input(const PointCloud& p, const PipelineContext& ctx,
                                const SolverConfig& cfg, const FlowField& prev_flow,
                                const FlowField& z) {
    std::vector<Vec3> warped(p.points.size());
    for (int i = 0; i < p.size(); ++i) warped[static_cast<std::size_t>(i)] = p[i] + prev_flow[i];
    const Eigen::MatrixXd fq_w =
        interpolate_features(ctx.fq, ctx.q_index, warped, cfg.k_omega, cfg.interp_tau);
    return build_gru_input(ctx.fp, fq_w, z);
}

}  // namespace detail

/// Full scene-flow alternation: Sinkhorn initialization, then K rounds of
/// point-wise update and regularization. Returns the final flow and the
/// iteration trace (empty when cfg.trace is off).
inline std::pair<FlowField, Trace> run_scene_flow(const PointCloud& p, const PointCloud& q,
                                                  const SolverConfig& cfg,
                                                  const std::optional<FlowField>& gt = {}) {
    cfg.validate();
    if (gt && gt->size() != p.size())
        throw InvalidInput("ground-truth flow length does not match the source cloud");

    detail::StageTimer timer;
    detail::PipelineContext ctx(p, q, cfg);

    const TransportPlan plan =
        sinkhorn(cost_matrix(ctx.fp, ctx.fq), cfg.sinkhorn.epsilon, cfg.sinkhorn.max_iters,
                 cfg.sinkhorn.tol);
    FlowField x = init_flow(plan, p, q);
    detail::check_finite(x, 0);

    const bool recurrent = cfg.regularizer.kind == RegularizerPath::RecurrentSetConv;
    HiddenState hidden;
    if (recurrent) {
        const GruInput v1 = detail::recurrent_input(p, ctx, cfg, x, x);
        hidden = init_hidden(p, ctx.p_index, v1, cfg.regularizer.weights,
                             cfg.regularizer.group_k);
    }

    Trace trace;
    auto record = [&](int iter, const FlowField& current, const FlowField& prev) {
        if (!cfg.trace) return;
        TraceEntry e;
        e.iter = iter;
        e.cost = pointwise_cost(p, ctx.fp, ctx.fq, ctx.q_index, current, prev, cfg.k_omega,
                                cfg.interp_tau);
        e.mean_flow = current.mean_norm();
        if (gt) e.epe3d = flow_metrics(current, *gt).epe3d;
        e.millis = timer.lap_ms();
        trace.entries.push_back(e);
    };
    record(0, x, x);

    for (int k = 1; k <= cfg.iterations; ++k) {
        const FlowField prev = x;
        UpdateResult upd = detail::run_update(p, ctx, cfg, prev);
        detail::check_finite(upd.flow, k);

        if (recurrent) {
            const GruInput v = detail::recurrent_input(p, ctx, cfg, prev, upd.flow);
            hidden = gru_step(p, ctx.p_index, hidden, v, cfg.regularizer.weights,
                              cfg.regularizer.group_k);
            const FlowField residual = predict_residual_flow(p, ctx.p_index, hidden,
                                                             cfg.regularizer.weights,
                                                             cfg.regularizer.group_k);
            for (int i = 0; i < x.size(); ++i) x[i] = upd.flow[i] + residual[i];
        } else {
            x = laplacian_smooth(upd.flow, ctx.p_index, cfg.regularizer.lambda,
                                 cfg.regularizer.sweeps, cfg.regularizer.graph_k);
        }
        detail::check_finite(x, k);
        record(k, x, prev);

        if (cfg.early_stop) {
            double moved = 0.0;
            for (int i = 0; i < x.size(); ++i) moved += (x[i] - prev[i]).norm();
            if (moved / x.size() < cfg.early_stop_tol) break;
        }
    }
    return {std::move(x), std::move(trace)};
}

/// Full registration alternation. The classic path takes the point-wise
/// rigid fit directly (the global fit already regularizes); the recurrent
/// path composes a predicted residual motion on the SE(3) manifold. A
/// degenerate fit inside an iteration falls back to the previous iterate.
inline std::pair<RigidMotion, Trace> run_registration(
    const PointCloud& p, const PointCloud& q, const SolverConfig& cfg,
    const std::optional<RigidMotion>& gt = {}) {
    cfg.validate();

    detail::StageTimer timer;
    detail::PipelineContext ctx(p, q, cfg);

    const TransportPlan plan =
        sinkhorn(cost_matrix(ctx.fp, ctx.fq), cfg.sinkhorn.epsilon, cfg.sinkhorn.max_iters,
                 cfg.sinkhorn.tol);
    RigidMotion x;
    try {
        x = init_motion(plan, p, q);
    } catch (const DegenerateFit&) {
        x = RigidMotion::identity();  // no earlier iterate to fall back to
    }

    const bool recurrent = cfg.regularizer.kind == RegularizerPath::RecurrentSetConv;
    HiddenState hidden;
    if (recurrent) {
        const FlowField x0_flow = flow_from_motion(p, x);
        const GruInput v1 = detail::recurrent_input(p, ctx, cfg, x0_flow, x0_flow);
        hidden = init_hidden(p, ctx.p_index, v1, cfg.regularizer.weights,
                             cfg.regularizer.group_k);
    }

    const std::optional<FlowField> gt_flow =
        gt ? std::optional<FlowField>(flow_from_motion(p, *gt)) : std::nullopt;

    Trace trace;
    auto record = [&](int iter, const RigidMotion& current, const RigidMotion& prev) {
        if (!cfg.trace) return;
        const FlowField cur_flow = flow_from_motion(p, current);
        const FlowField prev_flow = flow_from_motion(p, prev);
        TraceEntry e;
        e.iter = iter;
        e.cost = pointwise_cost(p, ctx.fp, ctx.fq, ctx.q_index, cur_flow, prev_flow,
                                cfg.k_omega, cfg.interp_tau);
        e.mean_flow = cur_flow.mean_norm();
        if (gt_flow) e.epe3d = flow_metrics(cur_flow, *gt_flow).epe3d;
        e.millis = timer.lap_ms();
        trace.entries.push_back(e);
    };
    record(0, x, x);

    for (int k = 1; k <= cfg.iterations; ++k) {
        const RigidMotion prev = x;
        try {
            const RegistrationStep step = pointwise_step_registration(
                p, ctx.q_index, prev, cfg.update, ctx.fp, ctx.fq, ctx.gq, cfg.k_omega,
                cfg.posenc_bands);
            detail::check_finite(step.flow, k);
            if (recurrent) {
                const FlowField prev_flow = flow_from_motion(p, prev);
                const GruInput v = detail::recurrent_input(p, ctx, cfg, prev_flow, step.flow);
                hidden = gru_step(p, ctx.p_index, hidden, v, cfg.regularizer.weights,
                                  cfg.regularizer.group_k);
                x = predict_residual_motion(hidden, cfg.regularizer.weights) * step.motion;
            } else {
                x = step.motion;
            }
        } catch (const DegenerateFit&) {
            x = prev;  // keep going from the last healthy iterate
        }
        if (!x.quaternion().coeffs().allFinite() || !x.translation().allFinite())
            throw NumericalFailure("non-finite motion state", k);
        record(k, x, prev);

        if (cfg.early_stop) {
            const FlowField a = flow_from_motion(p, x);
            const FlowField b = flow_from_motion(p, prev);
            double moved = 0.0;
            for (int i = 0; i < a.size(); ++i) moved += (a[i] - b[i]).norm();
            if (moved / a.size() < cfg.early_stop_tol) break;
        }
    }
    return {x, std::move(trace)};
}

}  // namespace rcp
