#pragma once

// Deterministic random fixtures shared by the test suites.

#include <string>
#include <vector>

#include "rcp/rcp.hpp"

namespace testgen {

inline rcp::PointCloud random_cloud(rcp::SplitMix64& rng, int n, double scale = 1.0) {
    std::vector<rcp::Vec3> pts(static_cast<std::size_t>(n));
    for (auto& p : pts)
        p = rcp::Vec3(rng.uniform(-scale, scale), rng.uniform(-scale, scale),
                      rng.uniform(-scale, scale));
    return rcp::PointCloud(std::move(pts));
}

inline rcp::PointCloud random_surface_cloud(rcp::SplitMix64& rng, int n) {
    const rcp::Vec3 semi(rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.0));
    std::vector<rcp::Vec3> pts(static_cast<std::size_t>(n));
    for (auto& p : pts) p = rng.unit_vector().cwiseProduct(semi);
    return rcp::PointCloud(std::move(pts));
}

inline rcp::FlowField random_flow(rcp::SplitMix64& rng, int n, double scale = 0.2) {
    std::vector<rcp::Vec3> v(static_cast<std::size_t>(n));
    for (auto& x : v)
        x = rcp::Vec3(rng.uniform(-scale, scale), rng.uniform(-scale, scale),
                      rng.uniform(-scale, scale));
    return rcp::FlowField(std::move(v));
}

inline rcp::RigidMotion random_motion(rcp::SplitMix64& rng, double max_angle_rad = 3.0,
                                      double max_trans = 1.0) {
    const rcp::Vec3 axis = rng.unit_vector();
    const double angle = rng.uniform(0.0, max_angle_rad);
    const rcp::Vec3 t(rng.uniform(-max_trans, max_trans), rng.uniform(-max_trans, max_trans),
                      rng.uniform(-max_trans, max_trans));
    return rcp::RigidMotion::from_axis_angle(axis, angle, t);
}

inline Eigen::MatrixXd random_matrix(rcp::SplitMix64& rng, int rows, int cols,
                                     double scale = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-scale, scale);
    return m;
}

inline rcp::FeatureMap random_unit_features(rcp::SplitMix64& rng, int n, int d) {
    Eigen::MatrixXd m = random_matrix(rng, n, d);
    for (int r = 0; r < n; ++r) m.row(r) /= m.row(r).norm();
    return rcp::FeatureMap(std::move(m));
}

inline rcp::AffineLayer random_layer(rcp::SplitMix64& rng, const std::string& name, int in,
                                     int out, double scale = 0.3) {
    rcp::AffineLayer layer;
    layer.name = name;
    layer.weight = random_matrix(rng, out, in, scale);
    layer.bias = random_matrix(rng, out, 1, scale).col(0);
    return layer;
}

/// Random parameters for the recurrent regularizer. The update-gate bias is
/// pinned to -2 so early iterations favor memory and stay numerically tame.
inline rcp::WeightBundle random_recurrent_bundle(rcp::SplitMix64& rng, int feature_dim,
                                                 int channels, double scale = 0.3) {
    const int v_dim = feature_dim + 3;
    rcp::WeightBundle b;
    b.layers.push_back(random_layer(rng, "init0", 3 + v_dim, channels, scale));
    b.layers.push_back(random_layer(rng, "init1", 3 + channels, channels, scale));
    b.layers.push_back(random_layer(rng, "gru_w", 3 + channels + v_dim, channels, scale));
    b.layers.back().bias.setConstant(-2.0);
    b.layers.push_back(random_layer(rng, "gru_r", 3 + channels + v_dim, channels, scale));
    b.layers.push_back(random_layer(rng, "gru_h", 3 + channels + v_dim, channels, scale));
    b.layers.push_back(random_layer(rng, "flow0", 3 + channels, channels, scale));
    b.layers.push_back(random_layer(rng, "flow1", 3 + channels, channels, scale));
    b.layers.push_back(random_layer(rng, "flow_head", channels, 3, scale));
    b.layers.push_back(random_layer(rng, "motion_head", channels, 7, scale));
    return b;
}

/// Random backbone: `levels` set-conv levels of two layers each.
inline rcp::WeightBundle random_backbone_bundle(rcp::SplitMix64& rng, int levels, int hidden,
                                                int out, double scale = 0.5) {
    rcp::WeightBundle b;
    int in_features = 0;
    for (int l = 0; l < levels; ++l) {
        b.layers.push_back(random_layer(rng, "level" + std::to_string(l) + ".mlp0",
                                        3 + in_features, hidden, scale));
        b.layers.push_back(
            random_layer(rng, "level" + std::to_string(l) + ".mlp1", hidden, out, scale));
        in_features = out;
    }
    return b;
}

}  // namespace testgen
