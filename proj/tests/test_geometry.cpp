#include <catch2/catch_amalgamated.hpp>

#include "rcp/rcp.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace rcp;

TEST_CASE("neighbor index answers trivial queries") {
    SECTION("single point cloud") {
        PointCloud cloud({Vec3(1.0, 2.0, 3.0)});
        NeighborIndex index(cloud);
        const auto hits = index.query_knn(Vec3(4.0, 2.0, 3.0), 1);
        REQUIRE(hits.size() == 1);
        CHECK(hits[0].index == 0);
        CHECK(hits[0].distance == Catch::Approx(3.0));
    }

    SECTION("collinear points, nearest two to x=0.9") {
        PointCloud cloud({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)});
        NeighborIndex index(cloud);
        const auto hits = index.query_knn(Vec3(0.9, 0, 0), 2);
        REQUIRE(hits.size() == 2);
        CHECK(hits[0].index == 1);
        CHECK(hits[1].index == 0);
    }

    SECTION("k larger than the cloud clamps") {
        PointCloud cloud({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)});
        NeighborIndex index(cloud);
        CHECK(index.query_knn(Vec3(5, 5, 5), 10).size() == 3);
    }

    SECTION("empty cloud is rejected") {
        CHECK_THROWS_AS(PointCloud(std::vector<Vec3>{}), InvalidInput);
    }
}

TEST_CASE("neighbor index matches brute force on random clouds") {
    SplitMix64 rng(42);
    for (int trial = 0; trial < 6; ++trial) {
        const int n = trial == 5 ? 2000 : 50 + static_cast<int>(rng.next_u64() % 300);
        const PointCloud cloud = testgen::random_cloud(rng, n);
        NeighborIndex index(cloud);
        for (int q = 0; q < 25; ++q) {
            const Vec3 query(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2),
                             rng.uniform(-1.2, 1.2));
            const int k = 1 + static_cast<int>(rng.next_u64() % 40);
            const auto hits = index.query_knn(query, k);
            const auto expected = oracle::knn_brute(cloud.points, query, k);
            REQUIRE(hits.size() == expected.size());
            for (std::size_t i = 0; i < hits.size(); ++i) {
                CHECK(hits[i].index == expected[i].second);
                CHECK(hits[i].distance * hits[i].distance ==
                      Catch::Approx(expected[i].first).margin(1e-12));
            }
        }
    }
}

TEST_CASE("neighbor index handles duplicate points with index ties") {
    PointCloud cloud({Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(0, 0, 0), Vec3(0, 0, 0)});
    NeighborIndex index(cloud);
    const auto hits = index.query_knn(Vec3(0, 0, 0), 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].index == 0);
    CHECK(hits[1].index == 2);
    CHECK(hits[2].index == 3);
}

TEST_CASE("radius query returns all points within range, sorted") {
    SplitMix64 rng(7);
    const PointCloud cloud = testgen::random_cloud(rng, 200);
    NeighborIndex index(cloud);
    const Vec3 query(0.1, -0.2, 0.3);
    const double radius = 0.6;
    const auto hits = index.query_radius(query, radius);
    std::size_t expected = 0;
    for (const auto& p : cloud.points)
        if ((p - query).norm() <= radius) ++expected;
    REQUIRE(hits.size() == expected);
    for (std::size_t i = 1; i < hits.size(); ++i) CHECK(hits[i - 1].distance <= hits[i].distance);
}

TEST_CASE("farthest point sampling") {
    SECTION("count equal to size is a permutation") {
        SplitMix64 rng(3);
        const PointCloud cloud = testgen::random_cloud(rng, 40);
        auto picks = farthest_point_sample(cloud, 40, 5);
        std::sort(picks.begin(), picks.end());
        for (int i = 0; i < 40; ++i) CHECK(picks[static_cast<std::size_t>(i)] == i);
    }

    SECTION("unit square corners pick the opposite corner") {
        PointCloud cloud({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0)});
        const auto picks = farthest_point_sample(cloud, 2, 0);
        REQUIRE(picks.size() == 2);
        CHECK(picks[0] == 0);
        CHECK(picks[1] == 3);
    }

    SECTION("count of one returns the seed") {
        PointCloud cloud({Vec3(0, 0, 0), Vec3(1, 0, 0)});
        CHECK(farthest_point_sample(cloud, 1, 1) == std::vector<int>{1});
    }

    SECTION("deterministic given identical inputs") {
        SplitMix64 rng(11);
        const PointCloud cloud = testgen::random_cloud(rng, 120);
        CHECK(farthest_point_sample(cloud, 30, 2) == farthest_point_sample(cloud, 30, 2));
    }

    SECTION("count out of range") {
        PointCloud cloud({Vec3(0, 0, 0), Vec3(1, 0, 0)});
        CHECK_THROWS_AS(farthest_point_sample(cloud, 0, 0), InvalidInput);
        CHECK_THROWS_AS(farthest_point_sample(cloud, 3, 0), InvalidInput);
    }
}

TEST_CASE("rigid motion basics") {
    SECTION("identity leaves a cloud unchanged") {
        SplitMix64 rng(1);
        const PointCloud cloud = testgen::random_cloud(rng, 10);
        const PointCloud moved = apply_motion(cloud, RigidMotion::identity());
        for (int i = 0; i < cloud.size(); ++i) CHECK((moved[i] - cloud[i]).norm() == 0.0);
    }

    SECTION("90 degrees about z maps x to y") {
        const RigidMotion m = RigidMotion::from_axis_angle(Vec3(0, 0, 1), M_PI / 2, Vec3::Zero());
        const Vec3 mapped = m.apply(Vec3(1, 0, 0));
        CHECK((mapped - Vec3(0, 1, 0)).norm() < 1e-12);
    }

    SECTION("composition equals sequential application") {
        SplitMix64 rng(5);
        const PointCloud cloud = testgen::random_surface_cloud(rng, 50);
        for (int trial = 0; trial < 20; ++trial) {
            const RigidMotion a = testgen::random_motion(rng);
            const RigidMotion b = testgen::random_motion(rng);
            const PointCloud once = apply_motion(cloud, a * b);
            const PointCloud twice = apply_motion(apply_motion(cloud, b), a);
            for (int i = 0; i < cloud.size(); ++i)
                CHECK((once[i] - twice[i]).norm() < 1e-12);
        }
    }

    SECTION("canonical quaternion sign") {
        const RigidMotion m(-0.5, 0.5, 0.5, 0.5, Vec3::Zero());
        CHECK(m.quaternion().w() >= 0.0);
        const RigidMotion flip(0.0, -1.0, 0.0, 0.0, Vec3::Zero());
        CHECK(flip.quaternion().x() > 0.0);
    }

    SECTION("quaternion stays unit through long composition chains") {
        SplitMix64 rng(9);
        RigidMotion acc;
        for (int i = 0; i < 200; ++i) acc = acc * testgen::random_motion(rng);
        CHECK(std::abs(acc.quaternion().norm() - 1.0) < 1e-9);
    }

    SECTION("apply_motion preserves pairwise distances") {
        SplitMix64 rng(13);
        const PointCloud cloud = testgen::random_cloud(rng, 30);
        const RigidMotion m = testgen::random_motion(rng);
        const PointCloud moved = apply_motion(cloud, m);
        for (int i = 0; i < cloud.size(); ++i)
            for (int j = i + 1; j < cloud.size(); ++j) {
                const double before = (cloud[i] - cloud[j]).norm();
                const double after = (moved[i] - moved[j]).norm();
                CHECK(std::abs(after - before) <= 1e-9 * std::max(1.0, before));
            }
    }
}

TEST_CASE("flow from motion") {
    SplitMix64 rng(17);
    const PointCloud cloud = testgen::random_cloud(rng, 25);

    SECTION("identity gives the zero field") {
        const FlowField f = flow_from_motion(cloud, RigidMotion::identity());
        for (int i = 0; i < f.size(); ++i) CHECK(f[i].norm() == 0.0);
    }

    SECTION("pure translation gives a constant field") {
        const Vec3 t(0.3, -0.2, 0.7);
        const FlowField f = flow_from_motion(cloud, RigidMotion(1, 0, 0, 0, t));
        for (int i = 0; i < f.size(); ++i) CHECK((f[i] - t).norm() < 1e-15);
    }
}

TEST_CASE("rigid fit") {
    SplitMix64 rng(23);

    SECTION("identity on matching clouds") {
        const PointCloud cloud = testgen::random_cloud(rng, 20);
        const std::vector<double> w(cloud.points.size(), 1.0);
        const RigidMotion m = rigid_fit(cloud, cloud.points, w);
        CHECK(m.angle() < 1e-9);
        CHECK(m.translation().norm() < 1e-9);
    }

    SECTION("recovers random motions exactly in the noise-free case") {
        for (int trial = 0; trial < 50; ++trial) {
            const PointCloud cloud = testgen::random_surface_cloud(rng, 30);
            const RigidMotion truth = testgen::random_motion(rng);
            const PointCloud moved = apply_motion(cloud, truth);
            const std::vector<double> w(cloud.points.size(), 1.0);
            const RigidMotion fit = rigid_fit(cloud, moved.points, w);
            CHECK(oracle::rotation_angle_deg_brute(fit, truth) * M_PI / 180.0 < 1e-6);
            CHECK((fit.translation() - truth.translation()).norm() < 1e-9);
        }
    }

    SECTION("round trip through flow_from_motion") {
        const PointCloud cloud = testgen::random_surface_cloud(rng, 40);
        const RigidMotion truth = testgen::random_motion(rng);
        const FlowField flow = flow_from_motion(cloud, truth);
        std::vector<Vec3> targets(cloud.points.size());
        for (int i = 0; i < cloud.size(); ++i)
            targets[static_cast<std::size_t>(i)] = cloud[i] + flow[i];
        const RigidMotion fit = rigid_fit(cloud, targets, std::vector<double>(targets.size(), 1.0));
        CHECK(oracle::rotation_angle_deg_brute(fit, truth) * M_PI / 180.0 < 1e-6);
        CHECK((fit.translation() - truth.translation()).norm() < 1e-9);
    }

    SECTION("weights are scale invariant") {
        const PointCloud cloud = testgen::random_surface_cloud(rng, 25);
        const RigidMotion truth = testgen::random_motion(rng);
        const PointCloud moved = apply_motion(cloud, truth);
        std::vector<double> w(cloud.points.size());
        for (auto& x : w) x = rng.uniform(0.1, 2.0);
        std::vector<double> w_scaled = w;
        for (auto& x : w_scaled) x *= 37.5;
        const RigidMotion a = rigid_fit(cloud, moved.points, w);
        const RigidMotion b = rigid_fit(cloud, moved.points, w_scaled);
        CHECK(oracle::rotation_angle_deg_brute(a, b) < 1e-9);
        CHECK((a.translation() - b.translation()).norm() < 1e-9);
    }

    SECTION("fewer than three weighted points degenerate") {
        const PointCloud cloud = testgen::random_cloud(rng, 10);
        std::vector<double> w(cloud.points.size(), 0.0);
        w[0] = 1.0;
        w[1] = 1.0;
        CHECK_THROWS_AS(rigid_fit(cloud, cloud.points, w), DegenerateFit);
    }

    SECTION("collinear sources degenerate") {
        std::vector<Vec3> line;
        for (int i = 0; i < 8; ++i) line.emplace_back(static_cast<double>(i), 0.0, 0.0);
        const PointCloud cloud(line);
        CHECK_THROWS_AS(rigid_fit(cloud, cloud.points, std::vector<double>(line.size(), 1.0)),
                        DegenerateFit);
    }

    SECTION("negative weights are rejected") {
        const PointCloud cloud = testgen::random_cloud(rng, 5);
        std::vector<double> w(cloud.points.size(), 1.0);
        w[2] = -0.1;
        CHECK_THROWS_AS(rigid_fit(cloud, cloud.points, w), InvalidInput);
    }
}
