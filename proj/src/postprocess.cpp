#include "fieldseg/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <thread>
#include <unordered_map>

#include "fieldseg/errors.hpp"
#include "fieldseg/loss_metrics.hpp"

namespace fieldseg::post {

void RasterMeta::validate() const {
    if (width == 0 || height == 0) throw ConfigError("raster extents must be positive");
    if (geotransform[1] == 0.0 || geotransform[5] == 0.0)
        throw ConfigError("pixel scale entries of the geotransform must be nonzero");
}

Point RasterMeta::pixel_to_world(double col, double row) const {
    return Point{geotransform[0] + col * geotransform[1] + row * geotransform[2],
                 geotransform[3] + col * geotransform[4] + row * geotransform[5]};
}

double RasterMeta::pixel_area() const {
    return std::abs(geotransform[1] * geotransform[5] - geotransform[2] * geotransform[4]);
}

void ThresholdPair::validate() const {
    if (!(t_b > 0.0 && t_b < 1.0 && t_e > 0.0 && t_e < 1.0))
        throw ConfigError("thresholds must lie strictly inside (0,1)");
}

// ---- thinning ----

namespace {

// One Guo-Hall subiteration on a 0/1 image; returns true when any pixel was
// deleted. Out-of-range neighbors read as 0.
bool guo_hall_pass(BoolImage& img, int iter) {
    const std::size_t h = img.h, w = img.w;
    std::vector<std::uint8_t> del(h * w, 0);
    bool changed = false;
    auto px = [&](long r, long c) -> int {
        if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(w)) return 0;
        return img.data[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)] ? 1 : 0;
    };
    for (long r = 0; r < static_cast<long>(h); ++r) {
        for (long c = 0; c < static_cast<long>(w); ++c) {
            if (!px(r, c)) continue;
            const int p2 = px(r - 1, c), p3 = px(r - 1, c + 1), p4 = px(r, c + 1),
                      p5 = px(r + 1, c + 1), p6 = px(r + 1, c), p7 = px(r + 1, c - 1),
                      p8 = px(r, c - 1), p9 = px(r - 1, c - 1);
            const int cc = ((!p2) & (p3 | p4)) + ((!p4) & (p5 | p6)) +
                           ((!p6) & (p7 | p8)) + ((!p8) & (p9 | p2));
            const int n1 = (p9 | p2) + (p3 | p4) + (p5 | p6) + (p7 | p8);
            const int n2 = (p2 | p3) + (p4 | p5) + (p6 | p7) + (p8 | p9);
            const int n = n1 < n2 ? n1 : n2;
            const int m = iter == 0 ? ((p6 | p7 | (!p9)) & p8) : ((p2 | p3 | (!p5)) & p4);
            if (cc == 1 && n >= 2 && n <= 3 && m == 0) {
                del[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)] = 1;
                changed = true;
            }
        }
    }
    if (changed)
        for (std::size_t i = 0; i < del.size(); ++i)
            if (del[i]) img.data[i] = 0;
    return changed;
}

} // namespace

BoolImage thin(const BoolImage& mask) {
    BoolImage img = mask;
    bool changed = true;
    while (changed) {
        changed = guo_hall_pass(img, 0);
        changed = guo_hall_pass(img, 1) || changed;
    }
    return img;
}

BoolImage dilate_cross(const BoolImage& mask) {
    const std::size_t h = mask.h, w = mask.w;
    BoolImage out(h, w);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            if (!mask.at(r, c)) continue;
            out.set(r, c, true);
            if (r > 0) out.set(r - 1, c, true);
            if (r + 1 < h) out.set(r + 1, c, true);
            if (c > 0) out.set(r, c - 1, true);
            if (c + 1 < w) out.set(r, c + 1, true);
        }
    return out;
}

BoolImage refined_threshold(const DenseTensor& extent, const DenseTensor& boundary,
                            const ThresholdPair& t) {
    t.validate();
    if (extent.rank() != 2 || !extent.same_shape(boundary))
        throw DimensionError("refined_threshold expects aligned rank-2 maps");
    BoolImage bmask = threshold_mask(boundary, t.t_b);
    BoolImage ridge = dilate_cross(thin(bmask));
    const std::size_t n = extent.size();
    BoolImage out(extent.extent(0), extent.extent(1));
    const double* e = extent.data();
    for (std::size_t i = 0; i < n; ++i)
        out.data[i] = (!ridge.data[i] && e[i] > t.t_e) ? 1 : 0;
    return out;
}

// ---- components ----

Components label_components(const BoolImage& mask) {
    const std::size_t h = mask.h, w = mask.w;
    Components out;
    out.labels = IntImage(h, w, -1);
    std::deque<std::pair<std::size_t, std::size_t>> queue;
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            if (!mask.at(r, c) || out.labels.at(r, c) != -1) continue;
            const int id = out.count++;
            out.labels.at(r, c) = id;
            queue.emplace_back(r, c);
            while (!queue.empty()) {
                auto [cr, cc] = queue.front();
                queue.pop_front();
                const long nbr[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
                for (auto& d : nbr) {
                    const long nr = static_cast<long>(cr) + d[0];
                    const long nc = static_cast<long>(cc) + d[1];
                    if (nr < 0 || nc < 0 || nr >= static_cast<long>(h) ||
                        nc >= static_cast<long>(w))
                        continue;
                    const auto ur = static_cast<std::size_t>(nr);
                    const auto uc = static_cast<std::size_t>(nc);
                    if (mask.at(ur, uc) && out.labels.at(ur, uc) == -1) {
                        out.labels.at(ur, uc) = id;
                        queue.emplace_back(ur, uc);
                    }
                }
            }
        }
    return out;
}

// ---- pixel-edge polygon tracing ----

namespace {

// Directions on the vertex lattice: 0 +x, 1 +y, 2 -x, 3 -y (y grows with
// rows). Edges are directed so that the component interior lies on the left
// (left normal of (dx,dy) is (dy,-dx)).
constexpr int kDx[4] = {1, 0, -1, 0};
constexpr int kDy[4] = {0, 1, 0, -1};

struct EdgeKey {
    std::int64_t vertex;  // r * (w+1) + c on the vertex lattice
    int dir;
};

struct ComponentEdges {
    // vertex -> up to two outgoing directions (degree-4 pinch corners)
    std::unordered_map<std::int64_t, std::array<int, 2>> out;

    void add(std::int64_t v, int dir) {
        auto [it, fresh] = out.try_emplace(v, std::array<int, 2>{-1, -1});
        if (it->second[0] == -1)
            it->second[0] = dir;
        else
            it->second[1] = dir;
    }
};

int cross_turn(int din, int dout) {
    return kDx[din] * kDy[dout] - kDy[din] * kDx[dout];
}

} // namespace

PolygonSet components_to_polygons(const BoolImage& mask, const RasterMeta& meta) {
    meta.validate();
    if (mask.h != meta.height || mask.w != meta.width)
        throw DimensionError("mask extents do not match the raster metadata");
    Components comps = label_components(mask);
    const std::size_t h = mask.h, w = mask.w;
    const std::int64_t vw = static_cast<std::int64_t>(w) + 1;

    std::vector<ComponentEdges> edges(static_cast<std::size_t>(comps.count));
    std::vector<std::int64_t> pixel_counts(static_cast<std::size_t>(comps.count), 0);
    auto same = [&](long r, long c, int id) {
        if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(w))
            return false;
        return comps.labels.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) == id;
    };
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            const int id = comps.labels.at(r, c);
            if (id < 0) continue;
            ++pixel_counts[static_cast<std::size_t>(id)];
            const auto lr = static_cast<long>(r);
            const auto lc = static_cast<long>(c);
            ComponentEdges& ce = edges[static_cast<std::size_t>(id)];
            const std::int64_t v00 = lr * vw + lc;          // (c, r)
            const std::int64_t v10 = lr * vw + lc + 1;      // (c+1, r)
            const std::int64_t v01 = (lr + 1) * vw + lc;    // (c, r+1)
            const std::int64_t v11 = (lr + 1) * vw + lc + 1;
            if (!same(lr - 1, lc, id)) ce.add(v10, 2);  // top edge, leftward
            if (!same(lr + 1, lc, id)) ce.add(v01, 0);  // bottom edge, rightward
            if (!same(lr, lc - 1, id)) ce.add(v00, 1);  // west edge, downward
            if (!same(lr, lc + 1, id)) ce.add(v11, 3);  // east edge, upward
        }

    PolygonSet out;
    out.crs_tag = meta.crs_tag;
    for (int id = 0; id < comps.count; ++id) {
        ComponentEdges& ce = edges[static_cast<std::size_t>(id)];
        std::vector<Ring> rings;    // pixel-space rings
        std::vector<double> areas;  // pixel-space signed areas

        // Every directed edge has a unique successor: follow the boundary to
        // the next vertex and pick the sharper left turn there. At degree-4
        // pinch corners this matching keeps touching loops as separate
        // simple rings.
        auto successor = [&](std::int64_t v, int dir) -> std::pair<std::int64_t, int> {
            const std::int64_t u = v + kDy[dir] * vw + kDx[dir];
            const auto it = ce.out.find(u);
            const int cand0 = it->second[0];
            const int cand1 = it->second[1];
            int next_dir = cand0;
            if (cand1 != -1 && cross_turn(dir, cand1) > cross_turn(dir, cand0))
                next_dir = cand1;
            return {u, next_dir};
        };

        std::unordered_map<std::int64_t, bool> visited;  // edge code -> seen
        std::vector<std::pair<std::int64_t, int>> all_edges;
        for (const auto& [v, dirs] : ce.out) {
            all_edges.emplace_back(v, dirs[0]);
            if (dirs[1] != -1) all_edges.emplace_back(v, dirs[1]);
        }
        // Deterministic traversal order regardless of hash layout.
        std::sort(all_edges.begin(), all_edges.end());

        for (const auto& [v0, d0] : all_edges) {
            if (visited[v0 * 4 + d0]) continue;
            Ring ring;
            std::int64_t v = v0;
            int dir = d0;
            do {
                visited[v * 4 + dir] = true;
                const double px = static_cast<double>(v % vw);
                const double py = static_cast<double>(v / vw);
                if (ring.size() >= 2) {  // merge collinear unit steps
                    const Point& a = ring[ring.size() - 2];
                    const Point& b = ring.back();
                    if ((b.x - a.x == 0 && px - b.x == 0) ||
                        (b.y - a.y == 0 && py - b.y == 0))
                        ring.pop_back();
                }
                ring.push_back(Point{px, py});
                std::tie(v, dir) = successor(v, dir);
            } while (!(v == v0 && dir == d0));
            // The trace may have started mid-run: merge wrap-around collinear
            // vertices at both seam ends.
            if (ring.size() >= 3) {
                const Point& a = ring[ring.size() - 2];
                const Point& b = ring.back();
                const Point& f = ring.front();
                if ((b.x - a.x == 0 && f.x - b.x == 0) || (b.y - a.y == 0 && f.y - b.y == 0))
                    ring.pop_back();
            }
            if (ring.size() >= 3) {
                const Point& b = ring.back();
                const Point& f = ring.front();
                const Point& s = ring[1];
                if ((f.x - b.x == 0 && s.x - f.x == 0) || (f.y - b.y == 0 && s.y - f.y == 0))
                    ring.erase(ring.begin());
            }
            areas.push_back(ring_signed_area(ring));
            rings.push_back(std::move(ring));
        }

        // Exterior = ring with the largest absolute area; remaining rings
        // are holes.
        std::size_t ext = 0;
        for (std::size_t i = 1; i < rings.size(); ++i)
            if (std::abs(areas[i]) > std::abs(areas[ext])) ext = i;

        FieldPolygon poly;
        poly.component_id = id;
        poly.pixel_count = pixel_counts[static_cast<std::size_t>(id)];
        auto to_world = [&](const Ring& ring) {
            Ring out_ring;
            out_ring.reserve(ring.size());
            for (const Point& p : ring) out_ring.push_back(meta.pixel_to_world(p.x, p.y));
            return out_ring;
        };
        poly.exterior = to_world(rings[ext]);
        if (ring_signed_area(poly.exterior) < 0.0)
            std::reverse(poly.exterior.begin(), poly.exterior.end());
        for (std::size_t i = 0; i < rings.size(); ++i) {
            if (i == ext) continue;
            Ring hole = to_world(rings[i]);
            if (ring_signed_area(hole) > 0.0) std::reverse(hole.begin(), hole.end());
            poly.holes.push_back(std::move(hole));
        }
        poly.area_m2 = polygon_area(poly);
        out.polygons.push_back(std::move(poly));
    }
    return out;
}

PolygonSet simplify_filter(const PolygonSet& ps, double tolerance_m, double min_area_m2) {
    if (tolerance_m < 0.0 || min_area_m2 < 0.0)
        throw ConfigError("simplify_filter tolerance and min area must be non-negative");
    PolygonSet out;
    out.crs_tag = ps.crs_tag;
    for (const FieldPolygon& poly : ps.polygons) {
        FieldPolygon simplified = poly;
        auto simplify_valid = [&](const Ring& ring) -> Ring {
            Ring s = simplify_ring(ring, tolerance_m);
            if (s.size() < 3) return {};
            if (ring_self_intersects(s)) return ring;  // keep the valid original
            return s;
        };
        simplified.exterior = simplify_valid(poly.exterior);
        if (simplified.exterior.size() < 3) continue;  // collapsed ring: drop polygon
        simplified.holes.clear();
        for (const Ring& h : poly.holes) {
            Ring s = simplify_valid(h);
            if (s.size() >= 3) simplified.holes.push_back(std::move(s));
        }
        simplified.area_m2 = polygon_area(simplified);
        if (simplified.area_m2 < min_area_m2) continue;
        out.polygons.push_back(std::move(simplified));
    }
    return out;
}

std::vector<PolygonMatch> match_polygons(const PolygonSet& pred, const PolygonSet& truth,
                                         double iou_min) {
    std::vector<PolygonMatch> scored;
    for (std::size_t i = 0; i < pred.polygons.size(); ++i) {
        for (std::size_t j = 0; j < truth.polygons.size(); ++j) {
            const double iou = polygon_iou(pred.polygons[i], truth.polygons[j]);
            if (iou < iou_min) continue;
            PolygonMatch m;
            m.pred_id = i;
            m.truth_id = j;
            m.iou = iou;
            scored.push_back(m);
        }
    }
    std::sort(scored.begin(), scored.end(), [](const PolygonMatch& a, const PolygonMatch& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.pred_id != b.pred_id) return a.pred_id < b.pred_id;
        return a.truth_id < b.truth_id;
    });
    std::vector<bool> pred_used(pred.polygons.size(), false);
    std::vector<bool> truth_used(truth.polygons.size(), false);
    std::vector<PolygonMatch> out;
    for (PolygonMatch& m : scored) {
        if (pred_used[m.pred_id] || truth_used[m.truth_id]) continue;
        pred_used[m.pred_id] = true;
        truth_used[m.truth_id] = true;
        m.hausdorff =
            metrics::hausdorff(pred.polygons[m.pred_id].exterior, truth.polygons[m.truth_id].exterior);
        m.msd = metrics::msd(pred.polygons[m.pred_id].exterior, truth.polygons[m.truth_id].exterior);
        out.push_back(m);
    }
    return out;
}

// ---- threshold tuning ----

std::vector<ThresholdPair> default_threshold_grid(double step) {
    if (!(step > 0.0 && step < 1.0)) throw ConfigError("grid step must lie in (0,1)");
    const int n = static_cast<int>(std::floor(1.0 / step + 1e-9)) - 1;
    std::vector<ThresholdPair> grid;
    for (int i = 1; i <= n; ++i)
        for (int j = 1; j <= n; ++j)
            grid.push_back(ThresholdPair{static_cast<double>(i) * step,
                                         static_cast<double>(j) * step});
    return grid;
}

namespace {

bool dominates(const std::array<double, 4>& a, const std::array<double, 4>& b) {
    bool strict = false;
    for (std::size_t i = 0; i < 4; ++i) {
        if (a[i] > b[i]) return false;
        if (a[i] < b[i]) strict = true;
    }
    return strict;
}

} // namespace

TuneResult tune_thresholds(const DenseTensor& extent, const DenseTensor& boundary,
                           const BoolImage& truth_mask, int truth_count,
                           const std::vector<ThresholdPair>& grid, int jobs) {
    if (grid.empty()) throw ConfigError("tune_thresholds requires a non-empty grid");
    if (jobs < 1) jobs = 1;
    std::vector<TuneCandidate> cands(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) cands[i].thresholds = grid[i];
    std::sort(cands.begin(), cands.end(), [](const TuneCandidate& a, const TuneCandidate& b) {
        if (a.thresholds.t_b != b.thresholds.t_b) return a.thresholds.t_b < b.thresholds.t_b;
        return a.thresholds.t_e < b.thresholds.t_e;
    });

    const double denom = std::max(1, truth_count);
    auto evaluate = [&](TuneCandidate& cand) {
        BoolImage mask = refined_threshold(extent, boundary, cand.thresholds);
        const double iou = metrics::iou_binary(mask, truth_mask);
        const double fdr_v = metrics::fdr(mask, truth_mask).value;
        const double for_v = metrics::for_rate(mask, truth_mask).value;
        const int n_pred = label_components(mask).count;
        cand.objectives = {1.0 - iou, fdr_v, for_v,
                           std::abs(n_pred - truth_count) / denom};
    };

    if (jobs == 1) {
        for (TuneCandidate& cand : cands) evaluate(cand);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int t = 0; t < jobs; ++t)
            pool.emplace_back([&]() {
                for (std::size_t i = next.fetch_add(1); i < cands.size();
                     i = next.fetch_add(1))
                    evaluate(cands[i]);
            });
        for (auto& th : pool) th.join();
    }

    TuneResult out;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < cands.size() && !dominated; ++j)
            if (j != i && dominates(cands[j].objectives, cands[i].objectives))
                dominated = true;
        cands[i].on_front = !dominated;
    }
    double best_norm = std::numeric_limits<double>::infinity();
    for (const TuneCandidate& cand : cands) {
        if (cand.on_front) out.front.push_back(cand);
        if (!cand.on_front) continue;
        double norm = 0.0;
        for (double o : cand.objectives) norm += o * o;
        norm = std::sqrt(norm);
        // strict improvement keeps the lexicographically smallest pair on ties
        if (norm < best_norm) {
            best_norm = norm;
            out.best = cand.thresholds;
        }
    }
    out.candidates = std::move(cands);
    return out;
}

} // namespace fieldseg::post
