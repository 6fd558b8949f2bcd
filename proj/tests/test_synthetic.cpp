#include <doctest.h>

#include <cmath>

#include "mvrecon/quality.hpp"
#include "mvrecon/synthetic.hpp"

using namespace mvr;

TEST_CASE("plane scene depths unproject exactly onto the plane z = 3") {
    SyntheticConfig sc;
    sc.kind = SceneKind::plane;
    sc.num_frames = 3;
    sc.height = sc.width = 16;
    sc.seed = 1;
    SceneBundle b = make_synthetic(sc);

    REQUIRE(b.num_frames == 3);
    for (int f = 0; f < 3; ++f) {
        PointMap pm = unproject(b.depths[f], b.cameras[f]);
        for (std::size_t k = 0; k < pm.points.size(); ++k) {
            REQUIRE(b.depths[f].valid[k] == 1);
            CHECK(std::fabs(pm.points[k].z() - 3.0) < 1e-9);
        }
    }
    ConsistencyResult res = multi_view_consistency(b);
    CHECK_FALSE(res.rejected);
    CHECK(res.valid_fraction > 0.9);
}

TEST_CASE("box room depths unproject onto the walls of the [-2,2] cube") {
    SyntheticConfig sc;
    sc.kind = SceneKind::box_room;
    sc.num_frames = 2;
    sc.height = sc.width = 16;
    sc.seed = 2;
    SceneBundle b = make_synthetic(sc);

    for (int f = 0; f < 2; ++f) {
        PointMap pm = unproject(b.depths[f], b.cameras[f]);
        for (std::size_t k = 0; k < pm.points.size(); ++k) {
            if (!b.depths[f].valid[k]) continue;
            double cheb = pm.points[k].cwiseAbs().maxCoeff();
            CHECK(std::fabs(cheb - 2.0) < 1e-9);
        }
    }
}

TEST_CASE("orbit parallax at the aimed ground point matches 2 atan(radius / height)") {
    SyntheticConfig sc;
    sc.kind = SceneKind::orbit;
    sc.num_frames = 8;
    sc.height = sc.width = 16;
    sc.orbit_radius = 1.0;
    sc.orbit_height = 2.0;
    SceneBundle b = make_synthetic(sc);

    double expect = 2.0 * std::atan(sc.orbit_radius / sc.orbit_height) * 180.0 / M_PI;
    Rng rng(1);
    std::vector<Eigen::Vector3d> aim{{0.0, sc.orbit_height, 0.0}};
    CHECK(parallax_stat(aim, b.cameras, 4, rng) == doctest::Approx(expect).epsilon(1e-9));

    // The scene-level median sits in the same ballpark.
    Rng qr(2);
    QualityFeatures f = compute_quality(b, qr);
    CHECK(f.median_max_parallax > 30.0);
    CHECK(f.median_max_parallax < 70.0);
}

TEST_CASE("generation is bit-deterministic in the seed") {
    SyntheticConfig sc;
    sc.kind = SceneKind::plane;
    sc.num_frames = 3;
    sc.height = sc.width = 8;
    sc.seed = 42;
    SceneBundle a = make_synthetic(sc);
    SceneBundle b = make_synthetic(sc);
    CHECK(a.images == b.images);
    for (int f = 0; f < 3; ++f) {
        CHECK(a.depths[f].values == b.depths[f].values);
        CHECK(a.cameras[f].q == b.cameras[f].q);
        CHECK(a.cameras[f].t == b.cameras[f].t);
    }

    sc.seed = 43;
    SceneBundle c = make_synthetic(sc);
    CHECK(a.images != c.images);
}

TEST_CASE("the dynamic scene carries masks over the moving box with valid depth") {
    SyntheticConfig sc;
    sc.kind = SceneKind::dynamic_translating_object;
    sc.num_frames = 4;
    sc.height = sc.width = 32;
    sc.seed = 3;
    SceneBundle b = make_synthetic(sc);

    REQUIRE(b.has_dynamic_masks());
    std::size_t dynamic_px = 0;
    for (int f = 0; f < 4; ++f) {
        for (std::size_t k = 0; k < b.dynamic_masks[f].size(); ++k)
            if (b.dynamic_masks[f][k]) {
                ++dynamic_px;
                CHECK(b.depths[f].valid[k] == 1);
                // The box sits in front of the plane at z in [1.8, 2.3].
                int i = static_cast<int>(k) / b.width, j = static_cast<int>(k) % b.width;
                Eigen::Vector3d p = unproject_pixel(j + 0.5, i + 0.5,
                                                    b.depths[f].values[k], b.cameras[f]);
                CHECK(p.z() > 1.8 - 1e-6);
                CHECK(p.z() < 2.3 + 1e-6);
            }
    }
    CHECK(dynamic_px > 0);
    CHECK(b.dynamic_masks[0] != b.dynamic_masks[3]);  // the object moved
}

TEST_CASE("scene kinds parse from their command-line names") {
    CHECK(scene_kind_from_string("plane") == SceneKind::plane);
    CHECK(scene_kind_from_string("box-room") == SceneKind::box_room);
    CHECK(scene_kind_from_string("orbit") == SceneKind::orbit);
    CHECK(scene_kind_from_string("dynamic-translating-object") ==
          SceneKind::dynamic_translating_object);
    CHECK_THROWS(scene_kind_from_string("nope"));
}
