#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rcp/errors.hpp"
#include "rcp/features.hpp"
#include "rcp/geometry.hpp"
#include "rcp/rng.hpp"
#include "rcp/solver.hpp"

namespace rcp::io {

namespace detail {

inline std::string fmt(double v, const char* spec = "%.9g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

inline std::ifstream open_in(const std::string& path, bool binary = false) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw ParseError("cannot open file: " + path);
    return in;
}

inline std::ofstream open_out(const std::string& path, bool binary = false) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw Error("cannot write file: " + path);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PLY (ASCII) point clouds
// ---------------------------------------------------------------------------

inline void write_ply(const std::string& path, const PointCloud& cloud) {
    auto out = detail::open_out(path);
    out << "ply\nformat ascii 1.0\n";
    if (!cloud.id.empty()) out << "comment id " << cloud.id << "\n";
    out << "element vertex " << cloud.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\nend_header\n";
    for (const Vec3& p : cloud.points)
        out << detail::fmt(p.x()) << ' ' << detail::fmt(p.y()) << ' ' << detail::fmt(p.z())
            << '\n';
}

/// Reads ASCII PLY vertex positions. Extra scalar vertex properties and
/// non-vertex elements are ignored.
inline PointCloud read_ply(const std::string& path) {
    auto in = detail::open_in(path);
    std::size_t line_no = 0;
    std::string line;

    auto next_line = [&](const char* expectation) {
        if (!std::getline(in, line))
            throw ParseError(std::string("unexpected end of file, expected ") + expectation,
                             line_no);
        ++line_no;
        return line;
    };

    if (next_line("ply magic") != "ply") throw ParseError("not a PLY file", line_no);

    struct Element {
        std::string name;
        std::size_t count = 0;
        std::vector<std::string> properties;  // scalar property names in order
        bool has_list = false;
    };
    std::vector<Element> elements;
    bool format_seen = false;

    while (true) {
        std::istringstream header(next_line("header line"));
        std::string keyword;
        header >> keyword;
        if (keyword == "end_header") break;
        if (keyword == "comment" || keyword == "obj_info" || keyword.empty()) continue;
        if (keyword == "format") {
            std::string kind, version;
            header >> kind >> version;
            if (kind != "ascii") throw ParseError("only ascii PLY is supported", line_no);
            format_seen = true;
        } else if (keyword == "element") {
            Element e;
            if (!(header >> e.name >> e.count)) throw ParseError("malformed element", line_no);
            elements.push_back(std::move(e));
        } else if (keyword == "property") {
            if (elements.empty()) throw ParseError("property before any element", line_no);
            std::string type;
            header >> type;
            if (type == "list") {
                elements.back().has_list = true;
                continue;
            }
            std::string name;
            if (!(header >> name)) throw ParseError("malformed property", line_no);
            elements.back().properties.push_back(name);
        } else {
            throw ParseError("unknown header keyword '" + keyword + "'", line_no);
        }
    }
    if (!format_seen) throw ParseError("missing format line", line_no);

    std::vector<Vec3> points;
    for (const Element& e : elements) {
        if (e.name != "vertex") {
            for (std::size_t i = 0; i < e.count; ++i) next_line("element data");
            continue;
        }
        if (e.has_list) throw ParseError("list properties on vertices are unsupported", line_no);
        int cx = -1, cy = -1, cz = -1;
        for (std::size_t i = 0; i < e.properties.size(); ++i) {
            if (e.properties[i] == "x") cx = static_cast<int>(i);
            if (e.properties[i] == "y") cy = static_cast<int>(i);
            if (e.properties[i] == "z") cz = static_cast<int>(i);
        }
        if (cx < 0 || cy < 0 || cz < 0)
            throw ParseError("vertex element lacks x/y/z properties", line_no);
        points.reserve(e.count);
        for (std::size_t i = 0; i < e.count; ++i) {
            std::istringstream row(next_line("vertex row"));
            std::vector<double> values(e.properties.size());
            for (double& v : values)
                if (!(row >> v)) throw ParseError("malformed vertex row", line_no);
            points.emplace_back(values[static_cast<std::size_t>(cx)],
                                values[static_cast<std::size_t>(cy)],
                                values[static_cast<std::size_t>(cz)]);
        }
    }
    if (points.empty()) throw ParseError("PLY contains no vertices", line_no);
    return PointCloud(std::move(points));
}

// ---------------------------------------------------------------------------
// Flow CSV: "index,dx,dy,dz", rows in ascending index order
// ---------------------------------------------------------------------------

inline void write_flow_csv(const std::string& path, const FlowField& flow) {
    auto out = detail::open_out(path);
    out << "index,dx,dy,dz\n";
    for (int i = 0; i < flow.size(); ++i)
        out << i << ',' << detail::fmt(flow[i].x()) << ',' << detail::fmt(flow[i].y()) << ','
            << detail::fmt(flow[i].z()) << '\n';
}

inline FlowField read_flow_csv(const std::string& path) {
    auto in = detail::open_in(path);
    std::size_t line_no = 1;
    std::string line;
    if (!std::getline(in, line) || line != "index,dx,dy,dz")
        throw ParseError("expected flow CSV header 'index,dx,dy,dz'", line_no);

    std::vector<Vec3> vectors;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        long idx = 0;
        double x = 0, y = 0, z = 0;
        char c1 = 0, c2 = 0, c3 = 0;
        if (!(row >> idx >> c1 >> x >> c2 >> y >> c3 >> z) || c1 != ',' || c2 != ',' ||
            c3 != ',')
            throw ParseError("malformed flow row", line_no);
        if (idx != static_cast<long>(vectors.size()))
            throw ParseError("flow rows must use ascending indices from 0", line_no);
        vectors.emplace_back(x, y, z);
    }
    return FlowField(std::move(vectors));
}

// ---------------------------------------------------------------------------
// Motion JSON: {"quat": [w, x, y, z], "trans": [x, y, z]}
// ---------------------------------------------------------------------------

inline void write_motion_json(const std::string& path, const RigidMotion& m) {
    nlohmann::json j;
    j["quat"] = {m.quaternion().w(), m.quaternion().x(), m.quaternion().y(),
                 m.quaternion().z()};
    j["trans"] = {m.translation().x(), m.translation().y(), m.translation().z()};
    auto out = detail::open_out(path);
    out << j.dump(2) << '\n';
}

/// Non-unit quaternions are normalized on read; `normalized_on_read`, when
/// given, reports that this happened.
inline RigidMotion read_motion_json(const std::string& path,
                                    bool* normalized_on_read = nullptr) {
    auto in = detail::open_in(path);
    nlohmann::json j;
    try {
        in >> j;
        const auto quat = j.at("quat");
        const auto trans = j.at("trans");
        if (quat.size() != 4 || trans.size() != 3)
            throw ParseError("motion JSON needs quat[4] and trans[3]: " + path);
        const double w = quat[0], x = quat[1], y = quat[2], z = quat[3];
        const double norm = std::sqrt(w * w + x * x + y * y + z * z);
        if (normalized_on_read) *normalized_on_read = std::abs(norm - 1.0) > 1e-9;
        if (norm < 1e-12) throw ParseError("quaternion norm is zero: " + path);
        return RigidMotion(w, x, y, z, Vec3(trans[0], trans[1], trans[2]));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid motion JSON (" + std::string(e.what()) + "): " + path);
    }
}

// ---------------------------------------------------------------------------
// Weight bundles: JSON manifest + sibling little-endian float32 blob.
// Each layer stores its weight matrix row-major, then its bias.
// ---------------------------------------------------------------------------

inline void write_weight_bundle(const std::string& manifest_path, const WeightBundle& bundle) {
    bundle.validate();
    const std::filesystem::path mpath(manifest_path);
    const std::string blob_name = mpath.stem().string() + ".bin";

    nlohmann::json j;
    j["blob"] = blob_name;
    j["layers"] = nlohmann::json::array();
    for (const auto& layer : bundle.layers)
        j["layers"].push_back({{"name", layer.name}, {"shape", {layer.out(), layer.in()}}});

    auto blob = detail::open_out((mpath.parent_path() / blob_name).string(), true);
    auto put_f32 = [&blob](double v) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, sizeof(bits));
        const char bytes[4] = {static_cast<char>(bits & 0xff),
                               static_cast<char>((bits >> 8) & 0xff),
                               static_cast<char>((bits >> 16) & 0xff),
                               static_cast<char>((bits >> 24) & 0xff)};
        blob.write(bytes, 4);
    };
    for (const auto& layer : bundle.layers) {
        for (int r = 0; r < layer.out(); ++r)
            for (int c = 0; c < layer.in(); ++c) put_f32(layer.weight(r, c));
        for (int r = 0; r < layer.out(); ++r) put_f32(layer.bias(r));
    }
    blob.close();

    auto out = detail::open_out(manifest_path);
    out << j.dump(2) << '\n';
}

inline WeightBundle read_weight_bundle(const std::string& manifest_path) {
    auto in = detail::open_in(manifest_path);
    nlohmann::json j;
    std::string blob_name;
    WeightBundle bundle;
    try {
        in >> j;
        blob_name = j.at("blob").get<std::string>();
        for (const auto& entry : j.at("layers")) {
            AffineLayer layer;
            layer.name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape");
            if (shape.size() != 2) throw ParseError("layer shape must be [out, in]");
            const int out_dim = shape[0], in_dim = shape[1];
            if (out_dim < 1 || in_dim < 1)
                throw ParseError("layer shape entries must be positive");
            layer.weight.resize(out_dim, in_dim);
            layer.bias.resize(out_dim);
            bundle.layers.push_back(std::move(layer));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid weight manifest (" + std::string(e.what()) + "): " +
                         manifest_path);
    }

    const std::filesystem::path blob_path =
        std::filesystem::path(manifest_path).parent_path() / blob_name;
    auto blob = detail::open_in(blob_path.string(), true);
    std::vector<char> bytes((std::istreambuf_iterator<char>(blob)),
                            std::istreambuf_iterator<char>());

    const std::size_t expected =
        4 * std::accumulate(bundle.layers.begin(), bundle.layers.end(), std::size_t{0},
                            [](std::size_t acc, const AffineLayer& l) {
                                return acc + l.param_count();
                            });
    if (bytes.size() != expected)
        throw ParseError("weight blob holds " + std::to_string(bytes.size()) +
                         " bytes, manifest shapes imply " + std::to_string(expected) + ": " +
                         blob_path.string());

    std::size_t offset = 0;
    auto get_f32 = [&bytes, &offset]() {
        const std::uint32_t bits =
            (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset])) |
             (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 1])) << 8) |
             (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 2])) << 16) |
             (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 3])) << 24));
        offset += 4;
        float f;
        std::memcpy(&f, &bits, sizeof(f));
        return static_cast<double>(f);
    };
    for (auto& layer : bundle.layers) {
        for (int r = 0; r < layer.out(); ++r)
            for (int c = 0; c < layer.in(); ++c) layer.weight(r, c) = get_f32();
        for (int r = 0; r < layer.out(); ++r) layer.bias(r) = get_f32();
    }
    bundle.validate();
    return bundle;
}

// ---------------------------------------------------------------------------
// Trace CSV
// ---------------------------------------------------------------------------

inline std::string trace_to_csv(const Trace& trace) {
    std::string out = "iter,cost,mean_flow,epe3d,millis\n";
    for (const TraceEntry& e : trace.entries) {
        out += std::to_string(e.iter);
        out += ',' + detail::fmt(e.cost);
        out += ',' + detail::fmt(e.mean_flow);
        out += ',';
        if (!std::isnan(e.epe3d)) out += detail::fmt(e.epe3d);
        out += ',' + detail::fmt(e.millis, "%.3f");
        out += '\n';
    }
    return out;
}

inline void write_trace_csv(const std::string& path, const Trace& trace) {
    detail::open_out(path) << trace_to_csv(trace);
}

// ---------------------------------------------------------------------------
// Synthetic pairs and scenes
// ---------------------------------------------------------------------------

/// Center at the centroid and scale so the farthest point sits on the unit
/// sphere.
inline PointCloud normalize_to_unit_sphere(const PointCloud& cloud) {
    const Vec3 c = cloud.centroid();
    double max_r = 0.0;
    for (const Vec3& p : cloud.points) max_r = std::max(max_r, (p - c).norm());
    const double scale = max_r > 1e-12 ? 1.0 / max_r : 1.0;
    std::vector<Vec3> out(cloud.points.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (cloud.points[i] - c) * scale;
    return PointCloud(std::move(out), cloud.id);
}

struct PairSpec {
    double rot_min_deg = 0.0;
    double rot_max_deg = 45.0;
    double trans_min = -0.5;
    double trans_max = 0.5;
    double partial_fraction = 0.30;
    double noise_sigma = 0.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(rot_min_deg <= rot_max_deg) || rot_min_deg < 0.0)
            throw InvalidInput("rotation range must satisfy 0 <= min <= max");
        if (!(trans_min <= trans_max))
            throw InvalidInput("translation range must satisfy min <= max");
        if (!(partial_fraction >= 0.0) || partial_fraction >= 1.0)
            throw InvalidInput("partial fraction must lie in [0, 1)");
        if (noise_sigma < 0.0) throw InvalidInput("noise sigma must be nonnegative");
    }
};

struct SynthPair {
    PointCloud p;
    PointCloud q;
    RigidMotion gt_motion;
    FlowField gt_flow;  // over the retained source points
};

namespace detail {

/// Keeps all but the floor(fraction * M) points with the lowest projection
/// onto `direction`; original order is preserved among survivors.
inline std::vector<int> crop_half_space(const std::vector<Vec3>& points, const Vec3& direction,
                                        double fraction) {
    const int m = static_cast<int>(points.size());
    const int drop = static_cast<int>(std::floor(fraction * m));
    std::vector<int> order(points.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double pa = points[static_cast<std::size_t>(a)].dot(direction);
        const double pb = points[static_cast<std::size_t>(b)].dot(direction);
        return pa != pb ? pa < pb : a < b;
    });
    std::vector<char> dropped(points.size(), 0);
    for (int i = 0; i < drop; ++i) dropped[static_cast<std::size_t>(order[i])] = 1;
    std::vector<int> kept;
    kept.reserve(points.size() - static_cast<std::size_t>(drop));
    for (int i = 0; i < m; ++i)
        if (!dropped[static_cast<std::size_t>(i)]) kept.push_back(i);
    return kept;
}

}  // namespace detail

/// ModelNet-style synthetic pair: the source is normalized to the unit
/// sphere, transformed by a random motion (axis uniform on the sphere, angle
/// and translation components uniform in their ranges), perturbed by
/// isotropic Gaussian noise, and both clouds are independently cropped by a
/// half-space along a random direction. Deterministic given spec.seed.
inline SynthPair synth_pair(const PointCloud& source, const PairSpec& spec) {
    spec.validate();
    if (source.size() < 16) throw InvalidInput("synthetic pair needs a source with >= 16 points");

    const PointCloud base = normalize_to_unit_sphere(source);
    SplitMix64 rng(spec.seed);

    const Vec3 axis = rng.unit_vector();
    const double angle =
        rng.uniform(spec.rot_min_deg, spec.rot_max_deg) * M_PI / 180.0;
    const Vec3 translation(rng.uniform(spec.trans_min, spec.trans_max),
                           rng.uniform(spec.trans_min, spec.trans_max),
                           rng.uniform(spec.trans_min, spec.trans_max));
    const RigidMotion motion = RigidMotion::from_axis_angle(axis, angle, translation);

    PointCloud moved = apply_motion(base, motion);
    if (spec.noise_sigma > 0.0)
        for (Vec3& pt : moved.points) pt += spec.noise_sigma * rng.normal3();

    const Vec3 dir_p = rng.unit_vector();
    const Vec3 dir_q = rng.unit_vector();
    const auto keep_p = detail::crop_half_space(base.points, dir_p, spec.partial_fraction);
    const auto keep_q = detail::crop_half_space(moved.points, dir_q, spec.partial_fraction);

    std::vector<Vec3> p_pts, q_pts;
    p_pts.reserve(keep_p.size());
    q_pts.reserve(keep_q.size());
    for (int i : keep_p) p_pts.push_back(base.points[static_cast<std::size_t>(i)]);
    for (int i : keep_q) q_pts.push_back(moved.points[static_cast<std::size_t>(i)]);

    SynthPair pair;
    pair.p = PointCloud(std::move(p_pts), source.id);
    pair.q = PointCloud(std::move(q_pts), source.id);
    pair.gt_motion = motion;
    pair.gt_flow = flow_from_motion(pair.p, motion);
    return pair;
}

namespace detail {

/// Points on a random ellipsoid surface around `center` (semi-axes drawn
/// from [0.3, 0.6]).
inline std::vector<Vec3> random_surface_blob(SplitMix64& rng, const Vec3& center, int count) {
    const Vec3 semi_axes(rng.uniform(0.3, 0.6), rng.uniform(0.3, 0.6), rng.uniform(0.3, 0.6));
    std::vector<Vec3> blob(static_cast<std::size_t>(count));
    for (Vec3& pt : blob) pt = center + rng.unit_vector().cwiseProduct(semi_axes);
    return blob;
}

}  // namespace detail

/// Standalone random ellipsoid-surface cloud, e.g. as a synthetic-pair source.
inline PointCloud make_surface_cloud(int points, std::uint64_t seed) {
    if (points < 1) throw InvalidInput("surface cloud needs at least one point");
    SplitMix64 rng(seed);
    return PointCloud(detail::random_surface_blob(rng, Vec3::Zero(), points));
}

struct SynthScene {
    PointCloud p;
    PointCloud q;
    FlowField gt_flow;
    std::vector<int> segment_sizes;  // points per object, in concatenation order
};

/// Piecewise-rigid scene: disjoint ellipsoid-surface blobs placed on a ring,
/// each moved by an independently sampled rigid motion. The ground-truth flow
/// is exactly rigid per segment. noise_sigma perturbs the target only.
inline SynthScene synth_scene_flow_scene(int num_objects, int points_per_object,
                                         const PairSpec& spec, std::uint64_t seed) {
    spec.validate();
    if (num_objects < 1) throw InvalidInput("scene needs at least one object");
    if (points_per_object < 4) throw InvalidInput("scene objects need at least 4 points");

    SplitMix64 rng(seed);
    const double ring_radius =
        num_objects == 1 ? 0.0 : 1.3 / std::sin(M_PI / num_objects);

    std::vector<Vec3> p_pts, q_pts, flows;
    SynthScene scene;
    for (int obj = 0; obj < num_objects; ++obj) {
        const double theta = 2.0 * M_PI * obj / std::max(1, num_objects);
        const Vec3 center(ring_radius * std::cos(theta), ring_radius * std::sin(theta), 0.0);
        const std::vector<Vec3> blob =
            detail::random_surface_blob(rng, center, points_per_object);

        const Vec3 axis = rng.unit_vector();
        const double angle =
            rng.uniform(spec.rot_min_deg, spec.rot_max_deg) * M_PI / 180.0;
        const Vec3 translation(rng.uniform(spec.trans_min, spec.trans_max),
                               rng.uniform(spec.trans_min, spec.trans_max),
                               rng.uniform(spec.trans_min, spec.trans_max));
        // Rotate each object about its own center so it can't sweep into its
        // neighbors on the ring.
        const RigidMotion about_center =
            RigidMotion::from_axis_angle(axis, angle, Vec3::Zero());
        const Mat3 r = about_center.rotation_matrix();

        for (const Vec3& pt : blob) {
            const Vec3 target = r * (pt - center) + center + translation;
            p_pts.push_back(pt);
            flows.push_back(target - pt);
            Vec3 noisy = target;
            if (spec.noise_sigma > 0.0) noisy += spec.noise_sigma * rng.normal3();
            q_pts.push_back(noisy);
        }
        scene.segment_sizes.push_back(points_per_object);
    }
    scene.p = PointCloud(std::move(p_pts));
    scene.q = PointCloud(std::move(q_pts));
    scene.gt_flow = FlowField(std::move(flows));
    return scene;
}

}  // namespace rcp::io
