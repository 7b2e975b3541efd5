#include <doctest.h>

#include <cmath>

#include "fieldseg/errors.hpp"
#include "fieldseg/geometry.hpp"
#include "fieldseg/postprocess.hpp"
#include "fieldseg/rng.hpp"
#include "support/rasterize.hpp"

using namespace fieldseg;
using namespace fieldseg::post;

namespace {

BoolImage mask_from(std::size_t h, std::size_t w, const std::vector<int>& bits) {
    BoolImage m(h, w);
    for (std::size_t i = 0; i < bits.size(); ++i) m.data[i] = bits[i] ? 1 : 0;
    return m;
}

RasterMeta unit_meta(std::size_t h, std::size_t w) {
    RasterMeta m;
    m.width = w;
    m.height = h;
    m.geotransform = {0.0, 1.0, 0.0, 0.0, 0.0, 1.0};
    m.crs_tag = "local";
    return m;
}

int count_components_8(const BoolImage& mask) {
    IntImage seen(mask.h, mask.w, 0);
    int count = 0;
    std::vector<std::pair<long, long>> stack;
    for (std::size_t r = 0; r < mask.h; ++r)
        for (std::size_t c = 0; c < mask.w; ++c) {
            if (!mask.at(r, c) || seen.at(r, c)) continue;
            ++count;
            stack.emplace_back(r, c);
            seen.at(r, c) = 1;
            while (!stack.empty()) {
                auto [cr, cc] = stack.back();
                stack.pop_back();
                for (long dr = -1; dr <= 1; ++dr)
                    for (long dc = -1; dc <= 1; ++dc) {
                        const long nr = cr + dr, nc = cc + dc;
                        if (nr < 0 || nc < 0 || nr >= static_cast<long>(mask.h) ||
                            nc >= static_cast<long>(mask.w))
                            continue;
                        if (mask.at(static_cast<std::size_t>(nr),
                                    static_cast<std::size_t>(nc)) &&
                            !seen.at(static_cast<std::size_t>(nr),
                                     static_cast<std::size_t>(nc))) {
                            seen.at(static_cast<std::size_t>(nr),
                                    static_cast<std::size_t>(nc)) = 1;
                            stack.emplace_back(nr, nc);
                        }
                    }
            }
        }
    return count;
}

BoolImage random_mask(std::size_t h, std::size_t w, Rng& rng, double density) {
    BoolImage m(h, w);
    for (auto& v : m.data) v = rng.uniform01() < density;
    return m;
}

} // namespace

TEST_CASE("thin leaves a 1-px line unchanged") {
    BoolImage line(5, 7);
    for (std::size_t c = 1; c < 6; ++c) line.set(2, c, true);
    BoolImage out = thin(line);
    CHECK(out.count() == line.count());
    for (std::size_t i = 0; i < line.data.size(); ++i) CHECK(out.data[i] == line.data[i]);
}

TEST_CASE("thin keeps a filled square connected as one skeleton component") {
    BoolImage square(9, 9);
    for (std::size_t r = 2; r < 7; ++r)
        for (std::size_t c = 2; c < 7; ++c) square.set(r, c, true);
    BoolImage out = thin(square);
    CHECK(out.count() >= 1);
    CHECK(out.count() < square.count());
    CHECK(count_components_8(out) == 1);
}

TEST_CASE("thin is idempotent") {
    Rng rng(111);
    for (int trial = 0; trial < 10; ++trial) {
        BoolImage m = random_mask(16, 16, rng, 0.45);
        BoolImage once = thin(m);
        BoolImage twice = thin(once);
        for (std::size_t i = 0; i < m.data.size(); ++i) REQUIRE(twice.data[i] == once.data[i]);
    }
}

TEST_CASE("thin preserves the 8-connected component count") {
    Rng rng(112);
    for (int trial = 0; trial < 10; ++trial) {
        BoolImage m = random_mask(20, 20, rng, 0.35);
        BoolImage out = thin(m);
        REQUIRE(count_components_8(out) == count_components_8(m));
    }
}

TEST_CASE("refined_threshold trivial cases") {
    DenseTensor e = DenseTensor::full(Shape{8, 8}, 1.0);
    DenseTensor b(Shape{8, 8});
    BoolImage all = refined_threshold(e, b, ThresholdPair{0.2, 0.4});
    CHECK(all.count() == 64);

    DenseTensor e0(Shape{8, 8});
    BoolImage none = refined_threshold(e0, b, ThresholdPair{0.2, 0.4});
    CHECK(none.count() == 0);

    CHECK_THROWS_AS(refined_threshold(e, b, ThresholdPair{0.0, 0.4}), ConfigError);
}

TEST_CASE("refined_threshold splits two fields across a 3-px ridge") {
    const std::size_t h = 16, w = 16;
    DenseTensor e = DenseTensor::full(Shape{h, w}, 0.9);
    DenseTensor b(Shape{h, w});
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 6; c < 9; ++c) b.at({r, c}) = 0.9;  // 3-px vertical ridge
    BoolImage mask = refined_threshold(e, b, ThresholdPair{0.2, 0.4});
    CHECK(label_components(mask).count == 2);
}

TEST_CASE("raising t_e never grows the foreground") {
    Rng rng(113);
    DenseTensor e(Shape{12, 12});
    DenseTensor b(Shape{12, 12});
    for (std::size_t i = 0; i < e.size(); ++i) {
        e[i] = rng.uniform01();
        b[i] = rng.uniform01();
    }
    std::size_t prev = SIZE_MAX;
    for (double te = 0.1; te < 0.95; te += 0.1) {
        BoolImage mask = refined_threshold(e, b, ThresholdPair{0.3, te});
        REQUIRE(mask.count() <= prev);
        prev = mask.count();
    }
}

TEST_CASE("label_components 4-connectivity") {
    BoolImage m = mask_from(3, 3, {1, 0, 1, 0, 0, 0, 1, 0, 1});
    CHECK(label_components(m).count == 4);  // diagonals are separate
    BoolImage plus = mask_from(3, 3, {0, 1, 0, 1, 1, 1, 0, 1, 0});
    CHECK(label_components(plus).count == 1);
}

TEST_CASE("two disjoint squares trace to two polygons") {
    BoolImage m(8, 8);
    for (std::size_t r = 1; r < 3; ++r)
        for (std::size_t c = 1; c < 3; ++c) m.set(r, c, true);
    for (std::size_t r = 5; r < 7; ++r)
        for (std::size_t c = 5; c < 7; ++c) m.set(r, c, true);
    PolygonSet ps = components_to_polygons(m, unit_meta(8, 8));
    CHECK(ps.polygons.size() == 2);
    CHECK(ps.polygons[0].area_m2 == doctest::Approx(4.0));
    CHECK(ps.polygons[1].area_m2 == doctest::Approx(4.0));
}

TEST_CASE("single pixel becomes a unit square through the geotransform") {
    BoolImage m(4, 4);
    m.set(2, 1, true);  // row 2, col 1
    PolygonSet unit = components_to_polygons(m, unit_meta(4, 4));
    REQUIRE(unit.polygons.size() == 1);
    const Ring& ring = unit.polygons[0].exterior;
    REQUIRE(ring.size() == 4);
    // corners of the unit square at (x,y) = (col,row) = (1,2)..(2,3)
    double min_x = 1e9, max_x = -1e9, min_y = 1e9, max_y = -1e9;
    for (const Point& p : ring) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    CHECK(min_x == 1.0);
    CHECK(max_x == 2.0);
    CHECK(min_y == 2.0);
    CHECK(max_y == 3.0);

    // scaled/offset transform
    RasterMeta scaled = unit_meta(4, 4);
    scaled.geotransform = {100.0, 10.0, 0.0, 500.0, 0.0, -10.0};
    PolygonSet world = components_to_polygons(m, scaled);
    REQUIRE(world.polygons.size() == 1);
    CHECK(world.polygons[0].area_m2 == doctest::Approx(100.0));
    CHECK(ring_signed_area(world.polygons[0].exterior) > 0.0);  // CCW exterior
}

TEST_CASE("polygon areas sum to pixel count times pixel area (no holes)") {
    Rng rng(114);
    BoolImage m(12, 12);
    // sprinkle solid blobs without holes: grow a few rectangles
    for (int k = 0; k < 4; ++k) {
        const std::size_t r0 = rng.below(9), c0 = rng.below(9);
        for (std::size_t r = r0; r < std::min<std::size_t>(12, r0 + 3); ++r)
            for (std::size_t c = c0; c < std::min<std::size_t>(12, c0 + 3); ++c)
                m.set(r, c, true);
    }
    PolygonSet ps = components_to_polygons(m, unit_meta(12, 12));
    double total = 0.0;
    for (const FieldPolygon& p : ps.polygons) total += p.area_m2;
    CHECK(total == doctest::Approx(static_cast<double>(m.count())).epsilon(1e-12));
}

TEST_CASE("ring mask produces an exterior with one hole") {
    BoolImage m(7, 7);
    for (std::size_t r = 1; r < 6; ++r)
        for (std::size_t c = 1; c < 6; ++c) m.set(r, c, true);
    for (std::size_t r = 2; r < 5; ++r)
        for (std::size_t c = 2; c < 5; ++c) m.set(r, c, false);
    PolygonSet ps = components_to_polygons(m, unit_meta(7, 7));
    REQUIRE(ps.polygons.size() == 1);
    CHECK(ps.polygons[0].holes.size() == 1);
    CHECK(ps.polygons[0].area_m2 == doctest::Approx(16.0));  // 25 - 9
    CHECK(ring_signed_area(ps.polygons[0].exterior) > 0.0);
    CHECK(ring_signed_area(ps.polygons[0].holes[0]) < 0.0);
    BoolImage back = testsupport::rasterize_even_odd(ps, unit_meta(7, 7));
    for (std::size_t i = 0; i < m.data.size(); ++i) REQUIRE(back.data[i] == m.data[i]);
}

TEST_CASE("pinch fixtures rasterize back exactly") {
    // two holes meeting at a corner
    BoolImage m(5, 5);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c) m.set(r, c, true);
    m.set(1, 1, false);
    m.set(2, 2, false);
    PolygonSet ps = components_to_polygons(m, unit_meta(5, 5));
    REQUIRE(ps.polygons.size() == 1);
    CHECK(ps.polygons[0].holes.size() == 2);
    BoolImage back = testsupport::rasterize_even_odd(ps, unit_meta(5, 5));
    for (std::size_t i = 0; i < m.data.size(); ++i) REQUIRE(back.data[i] == m.data[i]);

    // hole touching the outside diagonally (notch)
    BoolImage ring(4, 4);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) ring.set(r, c, true);
    ring.set(1, 1, false);  // hole
    ring.set(2, 2, false);  // notch opens diagonally
    PolygonSet ps2 = components_to_polygons(ring, unit_meta(4, 4));
    BoolImage back2 = testsupport::rasterize_even_odd(ps2, unit_meta(4, 4));
    for (std::size_t i = 0; i < ring.data.size(); ++i)
        REQUIRE(back2.data[i] == ring.data[i]);
}

TEST_CASE("random masks round-trip exactly and stay interior-disjoint") {
    Rng rng(115);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t h = 8 + rng.below(10), w = 8 + rng.below(10);
        BoolImage m = random_mask(h, w, rng, 0.3 + 0.4 * rng.uniform01());
        RasterMeta meta = unit_meta(h, w);
        PolygonSet ps = components_to_polygons(m, meta);
        BoolImage back = testsupport::rasterize_even_odd(ps, meta);
        for (std::size_t i = 0; i < m.data.size(); ++i) REQUIRE(back.data[i] == m.data[i]);
        REQUIRE(testsupport::max_coverage(ps, meta) <= 1);
    }
}

TEST_CASE("simplify_filter drops small areas and collinear vertices") {
    // 5x10m polygon of 50 m^2: removed at the default 100 m^2 threshold
    BoolImage m(8, 8);
    for (std::size_t c = 1; c < 6; ++c) m.set(1, c, true);
    RasterMeta meta10 = unit_meta(8, 8);
    meta10.geotransform = {0.0, std::sqrt(10.0), 0.0, 0.0, 0.0, std::sqrt(10.0)};
    PolygonSet ps = components_to_polygons(m, meta10);
    REQUIRE(ps.polygons.size() == 1);
    CHECK(ps.polygons[0].area_m2 == doctest::Approx(50.0));
    CHECK(simplify_filter(ps, 0.0, 100.0).polygons.empty());
    CHECK(simplify_filter(ps, 0.0, 40.0).polygons.size() == 1);

    // square with a collinear midpoint vertex
    FieldPolygon square;
    square.exterior = {{0, 0}, {5, 0}, {10, 0}, {10, 10}, {0, 10}};
    square.area_m2 = 100.0;
    PolygonSet set;
    set.polygons.push_back(square);
    PolygonSet simplified = simplify_filter(set, 0.1, 0.0);
    REQUIRE(simplified.polygons.size() == 1);
    CHECK(simplified.polygons[0].exterior.size() == 4);

    // tolerance 0 leaves the vertex set unchanged
    PolygonSet untouched = simplify_filter(set, 0.0, 0.0);
    CHECK(untouched.polygons[0].exterior.size() == 5);
}

TEST_CASE("polygon_iou exact cases") {
    FieldPolygon a;
    a.exterior = {{0, 0}, {10, 0}, {10, 10}, {0, 10}};
    a.area_m2 = 100.0;
    FieldPolygon b = a;
    CHECK(polygon_iou(a, b) == doctest::Approx(1.0).epsilon(1e-9));

    FieldPolygon shifted;
    shifted.exterior = {{5, 5}, {15, 5}, {15, 15}, {5, 15}};
    shifted.area_m2 = 100.0;
    CHECK(polygon_iou(a, shifted) == doctest::Approx(25.0 / 175.0).epsilon(1e-9));

    FieldPolygon far;
    far.exterior = {{20, 20}, {30, 20}, {30, 30}, {20, 30}};
    far.area_m2 = 100.0;
    CHECK(polygon_iou(a, far) == doctest::Approx(0.0).epsilon(1e-12));

    // triangle overlap, hand value: intersection of unit right triangles
    FieldPolygon t1;
    t1.exterior = {{0, 0}, {4, 0}, {0, 4}};
    FieldPolygon t2;
    t2.exterior = {{0, 0}, {4, 0}, {4, 4}};
    // intersection is the triangle (0,0),(4,0),(2,2) with area 4
    const double inter = polygon_intersection_area(t1, t2);
    CHECK(inter == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("polygon intersection respects holes") {
    FieldPolygon ringed;
    ringed.exterior = {{0, 0}, {10, 0}, {10, 10}, {0, 10}};
    ringed.holes = {{{3, 3}, {3, 7}, {7, 7}, {7, 3}}};  // CW hole, area 16
    FieldPolygon probe;
    probe.exterior = {{4, 4}, {6, 4}, {6, 6}, {4, 6}};  // inside the hole
    CHECK(polygon_intersection_area(ringed, probe) == doctest::Approx(0.0).epsilon(1e-9));
    FieldPolygon across;
    across.exterior = {{0, 0}, {5, 0}, {5, 5}, {0, 5}};  // 25 minus hole overlap 4
    CHECK(polygon_intersection_area(ringed, across) == doctest::Approx(21.0).epsilon(1e-9));
}

TEST_CASE("match_polygons greedy rules") {
    RasterMeta meta = unit_meta(16, 16);
    BoolImage m(16, 16);
    for (std::size_t r = 1; r < 6; ++r)
        for (std::size_t c = 1; c < 6; ++c) m.set(r, c, true);
    for (std::size_t r = 9; r < 14; ++r)
        for (std::size_t c = 9; c < 14; ++c) m.set(r, c, true);
    PolygonSet truth = components_to_polygons(m, meta);

    SUBCASE("identical sets match 1:1 with IoU 1") {
        auto matches = match_polygons(truth, truth, 0.001);
        REQUIRE(matches.size() == 2);
        for (const auto& match : matches) {
            CHECK(match.pred_id == match.truth_id);
            CHECK(match.iou == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(match.hausdorff == doctest::Approx(0.0));
            CHECK(match.msd == doctest::Approx(0.0));
        }
    }

    SUBCASE("a pred overlapping two truths keeps only the higher-IoU match") {
        BoolImage pm(16, 16);
        for (std::size_t r = 1; r < 6; ++r)
            for (std::size_t c = 1; c < 11; ++c) pm.set(r, c, true);  // covers truth 0 fully
        PolygonSet pred = components_to_polygons(pm, meta);
        // second truth barely overlaps: shift the second square up to row 5
        BoolImage tm(16, 16);
        for (std::size_t r = 1; r < 6; ++r)
            for (std::size_t c = 1; c < 6; ++c) tm.set(r, c, true);
        for (std::size_t r = 5; r < 10; ++r)
            for (std::size_t c = 8; c < 13; ++c) tm.set(r, c, true);
        PolygonSet truth2 = components_to_polygons(tm, meta);
        auto matches = match_polygons(pred, truth2, 0.001);
        REQUIRE(matches.size() == 1);
        CHECK(matches[0].truth_id == 0);  // the fully covered square wins
    }

    SUBCASE("disjoint sets give no matches") {
        BoolImage far(16, 16);
        far.set(15, 15, true);
        PolygonSet pred = components_to_polygons(far, meta);
        CHECK(match_polygons(pred, truth, 0.001).empty());
    }

    SUBCASE("matching is injective on random sets") {
        Rng rng(116);
        BoolImage pm = random_mask(16, 16, rng, 0.4);
        PolygonSet pred = components_to_polygons(pm, meta);
        auto matches = match_polygons(pred, truth, 1e-6);
        std::vector<int> used_pred(pred.polygons.size(), 0);
        std::vector<int> used_truth(truth.polygons.size(), 0);
        for (const auto& match : matches) {
            REQUIRE(++used_pred[match.pred_id] == 1);
            REQUIRE(++used_truth[match.truth_id] == 1);
        }
    }
}

TEST_CASE("tune_thresholds front and best selection") {
    Rng rng(117);
    // synthetic extent/boundary maps around two blocks
    const std::size_t n = 32;
    DenseTensor e(Shape{n, n});
    DenseTensor b(Shape{n, n});
    BoolImage truth(n, n);
    for (std::size_t r = 2; r < 30; ++r)
        for (std::size_t c = 2; c < 15; ++c) truth.set(r, c, true);
    for (std::size_t r = 2; r < 30; ++r)
        for (std::size_t c = 17; c < 30; ++c) truth.set(r, c, true);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const bool ridge = c == 15 || c == 16;
            e.at({r, c}) = truth.at(r, c) ? 0.85 + 0.1 * rng.uniform01()
                                          : 0.1 * rng.uniform01();
            b.at({r, c}) = ridge ? 0.8 + 0.15 * rng.uniform01() : 0.1 * rng.uniform01();
        }
    const int truth_count = label_components(truth).count;
    REQUIRE(truth_count == 2);

    SUBCASE("single candidate is both front and best") {
        std::vector<ThresholdPair> grid{{0.3, 0.5}};
        TuneResult res = tune_thresholds(e, b, truth, truth_count, grid);
        REQUIRE(res.front.size() == 1);
        CHECK(res.best.t_b == 0.3);
        CHECK(res.best.t_e == 0.5);
    }

    SUBCASE("front equals the brute-force dominance oracle") {
        TuneResult res = tune_thresholds(e, b, truth, truth_count,
                                         default_threshold_grid(0.15));
        for (std::size_t i = 0; i < res.candidates.size(); ++i) {
            bool dominated = false;
            for (std::size_t j = 0; j < res.candidates.size(); ++j) {
                if (i == j) continue;
                bool all_le = true, any_lt = false;
                for (int o = 0; o < 4; ++o) {
                    if (res.candidates[j].objectives[o] > res.candidates[i].objectives[o])
                        all_le = false;
                    if (res.candidates[j].objectives[o] < res.candidates[i].objectives[o])
                        any_lt = true;
                }
                if (all_le && any_lt) {
                    dominated = true;
                    break;
                }
            }
            REQUIRE(res.candidates[i].on_front == !dominated);
        }
        // best lies on the front and minimizes the norm
        double best_norm = 1e18;
        for (const auto& c : res.front) {
            double norm = 0.0;
            for (double o : c.objectives) norm += o * o;
            best_norm = std::min(best_norm, std::sqrt(norm));
        }
        bool found = false;
        for (const auto& c : res.front) {
            double norm = 0.0;
            for (double o : c.objectives) norm += o * o;
            if (c.thresholds.t_b == res.best.t_b && c.thresholds.t_e == res.best.t_e) {
                found = true;
                CHECK(std::sqrt(norm) == doctest::Approx(best_norm));
            }
        }
        CHECK(found);
    }

    SUBCASE("parallel evaluation matches single-threaded") {
        auto grid = default_threshold_grid(0.2);
        TuneResult seq = tune_thresholds(e, b, truth, truth_count, grid, 1);
        TuneResult par = tune_thresholds(e, b, truth, truth_count, grid, 4);
        REQUIRE(seq.candidates.size() == par.candidates.size());
        for (std::size_t i = 0; i < seq.candidates.size(); ++i)
            for (int o = 0; o < 4; ++o)
                REQUIRE(seq.candidates[i].objectives[o] == par.candidates[i].objectives[o]);
        CHECK(seq.best.t_b == par.best.t_b);
        CHECK(seq.best.t_e == par.best.t_e);
    }

    SUBCASE("empty grid raises ConfigError") {
        CHECK_THROWS_AS(tune_thresholds(e, b, truth, truth_count, {}), ConfigError);
    }

    SUBCASE("default grid contains the documented operating point (0.2, 0.4)") {
        auto grid = default_threshold_grid(0.05);
        bool found = false;
        for (const auto& t : grid)
            if (std::abs(t.t_b - 0.2) < 1e-9 && std::abs(t.t_e - 0.4) < 1e-9) found = true;
        CHECK(found);
        ThresholdPair{0.2, 0.4}.validate();
    }
}
