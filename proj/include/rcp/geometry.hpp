#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rcp/errors.hpp"

namespace rcp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Ordered set of 3D positions in meters. Point order is stable and
/// index-addressable; flows align by index.
struct PointCloud {
    std::vector<Vec3> points;
    std::string id;

    PointCloud() = default;

    explicit PointCloud(std::vector<Vec3> pts, std::string label = {})
        : points(std::move(pts)), id(std::move(label)) {
        validate();
    }

    int size() const { return static_cast<int>(points.size()); }

    const Vec3& operator[](int i) const { return points[static_cast<std::size_t>(i)]; }

    void validate() const {
        if (points.empty()) throw InvalidInput("point cloud must contain at least one point");
        for (const Vec3& p : points)
            if (!p.allFinite()) throw InvalidInput("point cloud contains non-finite coordinates");
    }

    Vec3 centroid() const {
        Vec3 c = Vec3::Zero();
        for (const Vec3& p : points) c += p;
        return c / static_cast<double>(points.size());
    }
};

/// Per-source-point 3D displacement vectors.
struct FlowField {
    std::vector<Vec3> vectors;

    FlowField() = default;

    explicit FlowField(std::vector<Vec3> v) : vectors(std::move(v)) { validate(); }

    static FlowField zeros(int count) {
        return FlowField(std::vector<Vec3>(static_cast<std::size_t>(count), Vec3::Zero()));
    }

    int size() const { return static_cast<int>(vectors.size()); }

    const Vec3& operator[](int i) const { return vectors[static_cast<std::size_t>(i)]; }
    Vec3& operator[](int i) { return vectors[static_cast<std::size_t>(i)]; }

    void validate() const {
        for (const Vec3& v : vectors)
            if (!v.allFinite()) throw InvalidInput("flow field contains non-finite components");
    }

    double mean_norm() const {
        if (vectors.empty()) return 0.0;
        double s = 0.0;
        for (const Vec3& v : vectors) s += v.norm();
        return s / static_cast<double>(vectors.size());
    }
};

/// Rigid SE(3) motion stored as a unit quaternion (w, x, y, z) plus a
/// translation in meters. The quaternion is kept unit-norm and in canonical
/// sign: w >= 0, ties broken toward x >= 0, then y, then z.
class RigidMotion {
public:
    RigidMotion() : q_(1.0, 0.0, 0.0, 0.0), t_(Vec3::Zero()) {}

    RigidMotion(double w, double x, double y, double z, const Vec3& t)
        : q_(w, x, y, z), t_(t) {
        normalize();
    }

    RigidMotion(const Eigen::Quaterniond& q, const Vec3& t) : q_(q), t_(t) { normalize(); }

    static RigidMotion identity() { return RigidMotion(); }

    static RigidMotion from_matrix(const Mat3& rotation, const Vec3& t) {
        return RigidMotion(Eigen::Quaterniond(rotation), t);
    }

    static RigidMotion from_axis_angle(const Vec3& axis, double angle_rad, const Vec3& t) {
        const double n = axis.norm();
        if (n < 1e-12) throw InvalidInput("rotation axis must be nonzero");
        return RigidMotion(Eigen::Quaterniond(Eigen::AngleAxisd(angle_rad, axis / n)), t);
    }

    const Eigen::Quaterniond& quaternion() const { return q_; }
    const Vec3& translation() const { return t_; }
    Mat3 rotation_matrix() const { return q_.toRotationMatrix(); }

    Vec3 apply(const Vec3& p) const { return q_ * p + t_; }

    /// Composition: (a * b).apply(p) == a.apply(b.apply(p)).
    RigidMotion operator*(const RigidMotion& other) const {
        return RigidMotion(q_ * other.q_, q_ * other.t_ + t_);
    }

    RigidMotion inverse() const {
        const Eigen::Quaterniond qi = q_.conjugate();
        return RigidMotion(qi, -(qi * t_));
    }

    /// Rotation angle in radians, in [0, pi].
    double angle() const {
        const double w = std::min(1.0, std::abs(q_.w()));
        return 2.0 * std::acos(w);
    }

private:
    void normalize() {
        if (!t_.allFinite() || !q_.coeffs().allFinite())
            throw InvalidInput("rigid motion contains non-finite values");
        const double n = q_.norm();
        if (n < 1e-12) throw InvalidInput("quaternion norm too small to normalize");
        q_.coeffs() /= n;
        // Canonical sign: w >= 0, ties toward +x, then +y, then +z.
        const double c[4] = {q_.w(), q_.x(), q_.y(), q_.z()};
        for (double v : c) {
            if (v > 0.0) break;
            if (v < 0.0) {
                q_.coeffs() = -q_.coeffs();
                break;
            }
        }
    }

    Eigen::Quaterniond q_;
    Vec3 t_;
};

/// Exact nearest-neighbor search over one cloud (kd-tree). Queries return
/// indices sorted ascending by distance, ties broken by ascending index,
/// matching a brute-force (distance, index) sort bit for bit.
class NeighborIndex {
public:
    struct Hit {
        int index;
        double distance;
    };

    explicit NeighborIndex(const PointCloud& cloud) : points_(cloud.points) {
        if (points_.empty()) throw InvalidInput("cannot build neighbor index over empty cloud");
        std::vector<int> order(points_.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        nodes_.reserve(points_.size());
        root_ = build(order, 0, static_cast<int>(order.size()), 0);
    }

    int size() const { return static_cast<int>(points_.size()); }
    const Vec3& point(int i) const { return points_[static_cast<std::size_t>(i)]; }

    /// k nearest points to `query`. Returns min(k, N) hits.
    std::vector<Hit> query_knn(const Vec3& query, int k) const {
        if (k <= 0) throw InvalidInput("k-NN query requires k >= 1");
        k = std::min<int>(k, size());
        KnnHeap heap(static_cast<std::size_t>(k));
        search_knn(root_, query, heap);
        std::vector<Entry> entries = heap.sorted();
        std::vector<Hit> hits(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i)
            hits[i] = Hit{entries[i].index, std::sqrt(entries[i].d2)};
        return hits;
    }

    /// All points within `radius` of `query`, sorted like query_knn.
    std::vector<Hit> query_radius(const Vec3& query, double radius) const {
        if (!(radius >= 0.0)) throw InvalidInput("radius query requires radius >= 0");
        std::vector<Entry> found;
        search_radius(root_, query, radius * radius, found);
        std::sort(found.begin(), found.end(), entry_less);
        std::vector<Hit> hits(found.size());
        for (std::size_t i = 0; i < found.size(); ++i)
            hits[i] = Hit{found[i].index, std::sqrt(found[i].d2)};
        return hits;
    }

private:
    struct Entry {
        double d2;
        int index;
    };

    static bool entry_less(const Entry& a, const Entry& b) {
        return a.d2 != b.d2 ? a.d2 < b.d2 : a.index < b.index;
    }

    /// Bounded max-heap over (d2, index); the lexicographic worst sits on top.
    class KnnHeap {
    public:
        explicit KnnHeap(std::size_t cap) : cap_(cap) { data_.reserve(cap); }

        bool full() const { return data_.size() == cap_; }
        const Entry& worst() const { return data_.front(); }

        void offer(const Entry& e) {
            if (!full()) {
                data_.push_back(e);
                std::push_heap(data_.begin(), data_.end(), entry_less);
            } else if (entry_less(e, worst())) {
                std::pop_heap(data_.begin(), data_.end(), entry_less);
                data_.back() = e;
                std::push_heap(data_.begin(), data_.end(), entry_less);
            }
        }

        std::vector<Entry> sorted() {
            std::sort(data_.begin(), data_.end(), entry_less);
            return std::move(data_);
        }

    private:
        std::size_t cap_;
        std::vector<Entry> data_;
    };

    struct Node {
        int point = -1;
        int axis = 0;
        int left = -1;
        int right = -1;
    };

    int build(std::vector<int>& order, int lo, int hi, int depth) {
        if (lo >= hi) return -1;
        const int axis = depth % 3;
        const int mid = lo + (hi - lo) / 2;
        std::nth_element(order.begin() + lo, order.begin() + mid, order.begin() + hi,
                         [&](int a, int b) {
                             const double ca = points_[static_cast<std::size_t>(a)][axis];
                             const double cb = points_[static_cast<std::size_t>(b)][axis];
                             return ca != cb ? ca < cb : a < b;
                         });
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{order[static_cast<std::size_t>(mid)], axis, -1, -1});
        const int left = build(order, lo, mid, depth + 1);
        const int right = build(order, mid + 1, hi, depth + 1);
        nodes_[static_cast<std::size_t>(id)].left = left;
        nodes_[static_cast<std::size_t>(id)].right = right;
        return id;
    }

    void search_knn(int node_id, const Vec3& query, KnnHeap& heap) const {
        if (node_id < 0) return;
        const Node& node = nodes_[static_cast<std::size_t>(node_id)];
        const Vec3& p = points_[static_cast<std::size_t>(node.point)];
        heap.offer(Entry{(p - query).squaredNorm(), node.point});
        const double delta = query[node.axis] - p[node.axis];
        const int near = delta < 0.0 ? node.left : node.right;
        const int far = delta < 0.0 ? node.right : node.left;
        search_knn(near, query, heap);
        // The far side may still hold an equal-distance lower index, so only
        // prune on a strict plane-distance excess.
        if (!heap.full() || delta * delta <= heap.worst().d2) search_knn(far, query, heap);
    }

    void search_radius(int node_id, const Vec3& query, double r2, std::vector<Entry>& out) const {
        if (node_id < 0) return;
        const Node& node = nodes_[static_cast<std::size_t>(node_id)];
        const Vec3& p = points_[static_cast<std::size_t>(node.point)];
        const double d2 = (p - query).squaredNorm();
        if (d2 <= r2) out.push_back(Entry{d2, node.point});
        const double delta = query[node.axis] - p[node.axis];
        const int near = delta < 0.0 ? node.left : node.right;
        const int far = delta < 0.0 ? node.right : node.left;
        search_radius(near, query, r2, out);
        if (delta * delta <= r2) search_radius(far, query, r2, out);
    }

    std::vector<Vec3> points_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

inline NeighborIndex build_index(const PointCloud& cloud) { return NeighborIndex(cloud); }

/// Greedy farthest point sampling. The first element is seed_index; each
/// subsequent pick maximizes the minimum distance to the selected set, ties
/// resolved toward the lowest index. Deterministic given (cloud, seed).
inline std::vector<int> farthest_point_sample(const PointCloud& cloud, int count,
                                              int seed_index) {
    const int m = cloud.size();
    if (count < 1 || count > m) throw InvalidInput("farthest point sample count out of range");
    if (seed_index < 0 || seed_index >= m) throw InvalidInput("seed index out of range");

    std::vector<int> chosen;
    chosen.reserve(static_cast<std::size_t>(count));
    std::vector<char> selected(static_cast<std::size_t>(m), 0);
    std::vector<double> min_d2(static_cast<std::size_t>(m),
                               std::numeric_limits<double>::infinity());

    int current = seed_index;
    chosen.push_back(current);
    selected[static_cast<std::size_t>(current)] = 1;
    while (static_cast<int>(chosen.size()) < count) {
        const Vec3& last = cloud[current];
        int best = -1;
        double best_d2 = -1.0;
        for (int i = 0; i < m; ++i) {
            if (selected[static_cast<std::size_t>(i)]) continue;
            double& d2 = min_d2[static_cast<std::size_t>(i)];
            d2 = std::min(d2, (cloud[i] - last).squaredNorm());
            if (d2 > best_d2) {
                best_d2 = d2;
                best = i;
            }
        }
        current = best;
        chosen.push_back(current);
        selected[static_cast<std::size_t>(current)] = 1;
    }
    return chosen;
}

inline PointCloud apply_motion(const PointCloud& cloud, const RigidMotion& m) {
    const Mat3 r = m.rotation_matrix();
    std::vector<Vec3> out(cloud.points.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = r * cloud.points[i] + m.translation();
    return PointCloud(std::move(out), cloud.id);
}

inline FlowField flow_from_motion(const PointCloud& cloud, const RigidMotion& m) {
    const Mat3 r = m.rotation_matrix();
    std::vector<Vec3> out(cloud.points.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = r * cloud.points[i] + m.translation() - cloud.points[i];
    return FlowField(std::move(out));
}

/// Weighted least-squares rigid alignment (Kabsch/Procrustes via SVD):
/// minimizes sum_i w_i ||R p_i + T - d_i||^2. The returned rotation is proper;
/// a reflection is corrected by flipping the smallest singular direction.
inline RigidMotion rigid_fit(const PointCloud& src, const std::vector<Vec3>& dst_points,
                             const std::vector<double>& weights) {
    const std::size_t m = src.points.size();
    if (dst_points.size() != m || weights.size() != m)
        throw InvalidInput("rigid fit requires equally sized source, target, and weight arrays");

    double wsum = 0.0;
    int effective = 0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("weights must be finite and >= 0");
        if (w > 0.0) ++effective;
        wsum += w;
    }
    if (effective < 3) throw DegenerateFit("rigid fit needs at least 3 points with positive weight");

    Vec3 src_mean = Vec3::Zero(), dst_mean = Vec3::Zero();
    for (std::size_t i = 0; i < m; ++i) {
        src_mean += weights[i] * src.points[i];
        dst_mean += weights[i] * dst_points[i];
    }
    src_mean /= wsum;
    dst_mean /= wsum;

    Mat3 cov = Mat3::Zero();
    for (std::size_t i = 0; i < m; ++i) {
        if (weights[i] == 0.0) continue;
        cov += weights[i] * (dst_points[i] - dst_mean) * (src.points[i] - src_mean).transpose();
    }
    cov /= wsum;

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d sigma = svd.singularValues();
    if (!(sigma(0) > 0.0) || sigma(1) <= 1e-12 * sigma(0))
        throw DegenerateFit("rigid fit covariance is rank deficient");

    Mat3 d = Mat3::Identity();
    d(2, 2) = (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) ? -1.0 : 1.0;
    const Mat3 rotation = svd.matrixU() * d * svd.matrixV().transpose();
    return RigidMotion::from_matrix(rotation, dst_mean - rotation * src_mean);
}

}  // namespace rcp
