#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rcp/errors.hpp"
#include "rcp/geometry.hpp"
#include "rcp/parallel.hpp"

namespace rcp {

/// Per-point descriptor vectors, one row per point of the annotated cloud.
struct FeatureMap {
    Eigen::MatrixXd descriptors;

    FeatureMap() = default;
    explicit FeatureMap(Eigen::MatrixXd d) : descriptors(std::move(d)) {}

    int cloud_size() const { return static_cast<int>(descriptors.rows()); }
    int dim() const { return static_cast<int>(descriptors.cols()); }

    Eigen::VectorXd row(int i) const { return descriptors.row(i).transpose(); }
};

/// One named affine layer: y = W x + b with W of shape out x in.
struct AffineLayer {
    std::string name;
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;

    int in() const { return static_cast<int>(weight.cols()); }
    int out() const { return static_cast<int>(weight.rows()); }
    std::size_t param_count() const {
        return static_cast<std::size_t>(weight.size() + bias.size());
    }

    void validate() const {
        if (bias.size() != weight.rows())
            throw WeightShapeError("layer '" + name + "': bias length must equal output dim");
        if (weight.rows() < 1 || weight.cols() < 1)
            throw WeightShapeError("layer '" + name + "': empty weight matrix");
        if (!weight.allFinite() || !bias.allFinite())
            throw WeightShapeError("layer '" + name + "': non-finite parameters");
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return weight * x + bias; }
};

/// Ordered list of named affine layers plus their parameters. Consumers
/// impose the chaining rules (which layer feeds which).
struct WeightBundle {
    std::vector<AffineLayer> layers;

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.param_count();
        return n;
    }

    const AffineLayer& layer(std::size_t i) const {
        if (i >= layers.size()) throw WeightShapeError("weight bundle layer index out of range");
        return layers[i];
    }

    const AffineLayer& layer(std::string_view name) const {
        for (const auto& l : layers)
            if (l.name == name) return l;
        throw WeightShapeError("weight bundle has no layer named '" + std::string(name) + "'");
    }

    bool has_layer(std::string_view name) const {
        for (const auto& l : layers)
            if (l.name == name) return true;
        return false;
    }

    void validate() const {
        for (const auto& l : layers) l.validate();
    }
};

/// Sinusoidal positional encoding: per axis and frequency band
/// w_j = 2^j * pi (j = 0..bands-1), emits sin(w_j c) then cos(w_j c).
/// Output length is 6 * bands.
inline Eigen::VectorXd positional_encoding(const Vec3& p, int bands = 4) {
    if (bands < 1) throw InvalidInput("positional encoding needs at least one band");
    if (!p.allFinite()) throw InvalidInput("positional encoding input must be finite");
    Eigen::VectorXd out(6 * bands);
    for (int axis = 0; axis < 3; ++axis) {
        double omega = M_PI;
        for (int j = 0; j < bands; ++j) {
            out[axis * 2 * bands + 2 * j] = std::sin(omega * p[axis]);
            out[axis * 2 * bands + 2 * j + 1] = std::cos(omega * p[axis]);
            omega *= 2.0;
        }
    }
    return out;
}

/// Rows g_i = [descriptor_i | positional_encoding(position_i)].
inline Eigen::MatrixXd encode_features(const FeatureMap& features,
                                       const std::vector<Vec3>& positions, int bands = 4) {
    if (static_cast<int>(positions.size()) != features.cloud_size())
        throw InvalidInput("feature/position count mismatch in encoding");
    const int d = features.dim();
    const int e = 6 * bands;
    Eigen::MatrixXd g(features.cloud_size(), d + e);
    parallel_for(positions.size(), [&](std::size_t i) {
        const auto row = static_cast<Eigen::Index>(i);
        g.block(row, 0, 1, d) = features.descriptors.row(row);
        g.block(row, d, 1, e) = positional_encoding(positions[i], bands).transpose();
    });
    return g;
}

/// Local-geometry descriptor, 7 dims per point: unit surface normal (smallest
/// covariance eigenvector, sign toward the +z hemisphere), eigenvalue ratios
/// sorted descending and normalized by trace, and clamped inverse mean
/// neighbor distance. The concatenation is L2-normalized per row.
inline FeatureMap handcrafted_features(const PointCloud& cloud, const NeighborIndex& index,
                                       int k) {
    if (k < 4) throw InvalidInput("handcrafted features require k >= 4");
    if (cloud.size() < k) throw InvalidInput("cloud smaller than feature neighborhood k");

    Eigen::MatrixXd desc(cloud.size(), 7);
    parallel_for(static_cast<std::size_t>(cloud.size()), [&](std::size_t i) {
        const auto hits = index.query_knn(cloud[static_cast<int>(i)], k);

        Vec3 mean = Vec3::Zero();
        for (const auto& h : hits) mean += index.point(h.index);
        mean /= static_cast<double>(hits.size());

        Mat3 cov = Mat3::Zero();
        double dist_sum = 0.0;
        for (const auto& h : hits) {
            const Vec3 d = index.point(h.index) - mean;
            cov += d * d.transpose();
            dist_sum += h.distance;
        }
        cov /= static_cast<double>(hits.size());

        Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        Vec3 normal = eig.eigenvectors().col(0);  // eigenvalues ascending
        if (normal.z() < 0.0 ||
            (normal.z() == 0.0 && (normal.y() < 0.0 || (normal.y() == 0.0 && normal.x() < 0.0))))
            normal = -normal;

        const double trace = std::max(eig.eigenvalues().sum(), 1e-30);
        const double mean_dist = dist_sum / static_cast<double>(hits.size());
        const double density = 1.0 / std::max(mean_dist, 1e-9);

        Eigen::Matrix<double, 7, 1> f;
        f << normal.x(), normal.y(), normal.z(), eig.eigenvalues()(2) / trace,
            eig.eigenvalues()(1) / trace, eig.eigenvalues()(0) / trace, density;
        desc.row(static_cast<Eigen::Index>(i)) = f.transpose() / f.norm();
    });
    return FeatureMap(std::move(desc));
}

/// Shared per-neighbor MLP + channelwise max-pool at fixed center positions.
/// For each center, the group_k nearest input points contribute
/// [neighbor - center | neighbor_feature] through the given layers (ReLU
/// between layers; on the last only when relu_last). feats_in may have zero
/// columns when the inputs carry no features yet.
inline Eigen::MatrixXd set_conv_pool(const std::vector<Vec3>& positions_in,
                                     const Eigen::MatrixXd& feats_in,
                                     const std::vector<Vec3>& centers,
                                     const NeighborIndex& input_index, int group_k,
                                     std::span<const AffineLayer> mlp, bool relu_last) {
    if (mlp.empty()) throw WeightShapeError("set conv requires at least one layer");
    const int feat_dim = static_cast<int>(feats_in.cols());
    if (mlp.front().in() != 3 + feat_dim)
        throw WeightShapeError("set conv layer '" + mlp.front().name + "' expects input dim " +
                               std::to_string(mlp.front().in()) + ", got " +
                               std::to_string(3 + feat_dim));
    for (std::size_t l = 1; l < mlp.size(); ++l)
        if (mlp[l].in() != mlp[l - 1].out())
            throw WeightShapeError("set conv layer '" + mlp[l].name +
                                   "' input dim does not match previous output");
    if (group_k < 1) throw InvalidInput("set conv group size must be >= 1");

    const int out_dim = mlp.back().out();
    Eigen::MatrixXd pooled(static_cast<Eigen::Index>(centers.size()), out_dim);
    parallel_for(centers.size(), [&](std::size_t c) {
        const auto hits = input_index.query_knn(centers[c], group_k);
        Eigen::VectorXd acc;
        Eigen::VectorXd v(3 + feat_dim);
        for (const auto& h : hits) {
            v.head<3>() = input_index.point(h.index) - centers[c];
            if (feat_dim > 0) v.tail(feat_dim) = feats_in.row(h.index).transpose();
            Eigen::VectorXd y = v;
            for (std::size_t l = 0; l < mlp.size(); ++l) {
                y = mlp[l].apply(y);
                if (l + 1 < mlp.size() || relu_last) y = y.cwiseMax(0.0);
            }
            acc = acc.size() == 0 ? y : acc.cwiseMax(y).eval();
        }
        pooled.row(static_cast<Eigen::Index>(c)) = acc.transpose();
    });
    return pooled;
}

namespace detail {

/// Permutation-invariant FPS seed: the point farthest from the centroid,
/// ties toward the lowest index.
inline int canonical_fps_seed(const PointCloud& cloud) {
    const Vec3 c = cloud.centroid();
    int best = 0;
    double best_d2 = -1.0;
    for (int i = 0; i < cloud.size(); ++i) {
        const double d2 = (cloud[i] - c).squaredNorm();
        if (d2 > best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    return best;
}

}  // namespace detail

/// Multi-level set-conv forward pass. Each level subsamples the current
/// resolution to ceil(M * sample_ratio) centers by farthest point sampling,
/// pools a 2-layer shared MLP over group_k neighbors, and chains. The final
/// level's features reach all original points by inverse-distance
/// interpolation over the 3 nearest centers. The bundle supplies two affine
/// layers per level, in order.
inline FeatureMap set_conv_forward(const PointCloud& cloud, const WeightBundle& weights,
                                   double sample_ratio = 0.25, int group_k = 32) {
    weights.validate();
    if (weights.layers.size() < 2 || weights.layers.size() % 2 != 0)
        throw WeightShapeError("set conv bundle needs an even number of layers (two per level)");
    if (!(sample_ratio > 0.0) || sample_ratio > 1.0)
        throw InvalidInput("sample ratio must lie in (0, 1]");
    if (group_k < 1) throw InvalidInput("group size must be >= 1");

    const std::size_t levels = weights.layers.size() / 2;
    std::vector<Vec3> positions = cloud.points;
    Eigen::MatrixXd feats(positions.size(), 0);

    for (std::size_t level = 0; level < levels; ++level) {
        const AffineLayer& a = weights.layers[2 * level];
        const AffineLayer& b = weights.layers[2 * level + 1];
        if (a.in() != 3 + static_cast<int>(feats.cols()))
            throw WeightShapeError("set conv level " + std::to_string(level) +
                                   " input dim mismatch");

        PointCloud current(positions);
        const NeighborIndex index(current);
        const int n_centers = static_cast<int>(
            std::ceil(static_cast<double>(positions.size()) * sample_ratio));
        const auto picked =
            farthest_point_sample(current, std::max(1, n_centers), detail::canonical_fps_seed(current));

        std::vector<Vec3> centers(picked.size());
        for (std::size_t i = 0; i < picked.size(); ++i) centers[i] = positions[picked[i]];

        const AffineLayer mlp[2] = {a, b};
        feats = set_conv_pool(positions, feats, centers, index, group_k,
                              std::span<const AffineLayer>(mlp, 2), /*relu_last=*/true);
        positions = std::move(centers);
    }

    // Propagate back to full resolution: 3-NN inverse-distance interpolation.
    const NeighborIndex center_index{PointCloud(positions)};
    Eigen::MatrixXd out(cloud.size(), feats.cols());
    parallel_for(static_cast<std::size_t>(cloud.size()), [&](std::size_t i) {
        const auto hits = center_index.query_knn(cloud[static_cast<int>(i)], 3);
        double wsum = 0.0;
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(feats.cols());
        for (const auto& h : hits) {
            const double w = 1.0 / std::max(h.distance, 1e-9);
            acc += w * feats.row(h.index).transpose();
            wsum += w;
        }
        out.row(static_cast<Eigen::Index>(i)) = (acc / wsum).transpose();
    });
    return FeatureMap(std::move(out));
}

}  // namespace rcp
