#include "fieldseg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace fieldseg {

double ring_signed_area(const Ring& ring) {
    const std::size_t n = ring.size();
    if (n < 3) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = ring[i];
        const Point& b = ring[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    return 0.5 * acc;
}

double polygon_area(const FieldPolygon& poly) {
    double area = std::abs(ring_signed_area(poly.exterior));
    for (const Ring& h : poly.holes) area -= std::abs(ring_signed_area(h));
    return area;
}

bool point_in_ring(const Ring& ring, Point p) {
    const std::size_t n = ring.size();
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point& a = ring[j];
        const Point& b = ring[i];
        const bool crosses = (b.y > p.y) != (a.y > p.y);
        if (crosses) {
            const double x = b.x + (p.y - b.y) / (a.y - b.y) * (a.x - b.x);
            if (p.x < x) inside = !inside;
        }
    }
    return inside;
}

bool point_in_polygon(const FieldPolygon& poly, Point p) {
    if (!point_in_ring(poly.exterior, p)) return false;
    for (const Ring& h : poly.holes)
        if (point_in_ring(h, p)) return false;
    return true;
}

namespace {

struct Edge {
    Point a, b;  // a.y < b.y after normalization; horizontal edges skipped
};

void collect_edges(const FieldPolygon& poly, std::vector<Edge>& edges,
                   std::vector<double>& event_ys) {
    auto take_ring = [&](const Ring& ring) {
        const std::size_t n = ring.size();
        for (std::size_t i = 0; i < n; ++i) {
            Point a = ring[i];
            Point b = ring[(i + 1) % n];
            event_ys.push_back(a.y);
            if (a.y == b.y) continue;
            if (a.y > b.y) std::swap(a, b);
            edges.push_back({a, b});
        }
    };
    take_ring(poly.exterior);
    for (const Ring& h : poly.holes) take_ring(h);
}

// x where the edge crosses the horizontal line y (requires a.y <= y < b.y).
inline double edge_x_at(const Edge& e, double y) {
    return e.a.x + (y - e.a.y) / (e.b.y - e.a.y) * (e.b.x - e.a.x);
}

std::vector<std::pair<double, double>> intervals_at(const std::vector<Edge>& edges, double y) {
    std::vector<double> xs;
    for (const Edge& e : edges)
        if (e.a.y <= y && y < e.b.y) xs.push_back(edge_x_at(e, y));
    std::sort(xs.begin(), xs.end());
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i + 1 < xs.size(); i += 2) out.emplace_back(xs[i], xs[i + 1]);
    return out;
}

double overlap_length(const std::vector<std::pair<double, double>>& a,
                      const std::vector<std::pair<double, double>>& b) {
    double acc = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double lo = std::max(a[i].first, b[j].first);
        const double hi = std::min(a[i].second, b[j].second);
        if (hi > lo) acc += hi - lo;
        if (a[i].second < b[j].second)
            ++i;
        else
            ++j;
    }
    return acc;
}

// y-coordinates where two segments properly cross (interior crossing or
// endpoint touch); used only to split the scanline into structure-stable
// bands, so duplicates are harmless.
void crossing_ys(const Edge& e1, const Edge& e2, std::vector<double>& event_ys) {
    const double d1x = e1.b.x - e1.a.x, d1y = e1.b.y - e1.a.y;
    const double d2x = e2.b.x - e2.a.x, d2y = e2.b.y - e2.a.y;
    const double denom = d1x * d2y - d1y * d2x;
    if (denom == 0.0) return;  // parallel/collinear: endpoints already are events
    const double rx = e2.a.x - e1.a.x, ry = e2.a.y - e1.a.y;
    const double t = (rx * d2y - ry * d2x) / denom;
    const double u = (rx * d1y - ry * d1x) / denom;
    if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return;
    event_ys.push_back(e1.a.y + t * d1y);
}

} // namespace

double polygon_intersection_area(const FieldPolygon& a, const FieldPolygon& b) {
    std::vector<Edge> ea, eb;
    std::vector<double> events;
    collect_edges(a, ea, events);
    collect_edges(b, eb, events);
    if (ea.empty() || eb.empty()) return 0.0;
    for (const Edge& e1 : ea)
        for (const Edge& e2 : eb) crossing_ys(e1, e2, events);
    std::sort(events.begin(), events.end());
    events.erase(std::unique(events.begin(), events.end()), events.end());

    double area = 0.0;
    for (std::size_t i = 0; i + 1 < events.size(); ++i) {
        const double y0 = events[i], y1 = events[i + 1];
        const double h = y1 - y0;
        if (h <= 0.0) continue;
        const double ym = 0.5 * (y0 + y1);
        const auto ia = intervals_at(ea, ym);
        if (ia.empty()) continue;
        const auto ib = intervals_at(eb, ym);
        if (ib.empty()) continue;
        area += overlap_length(ia, ib) * h;
    }
    return area;
}

double polygon_iou(const FieldPolygon& a, const FieldPolygon& b) {
    const double inter = polygon_intersection_area(a, b);
    const double uni = polygon_area(a) + polygon_area(b) - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

namespace {

double point_segment_distance(Point p, Point a, Point b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
    const double px = a.x + t * dx - p.x;
    const double py = a.y + t * dy - p.y;
    return std::sqrt(px * px + py * py);
}

void dp_recurse(const Ring& pts, std::size_t i, std::size_t j, double tol,
                std::vector<bool>& keep) {
    if (j <= i + 1) return;
    double worst = -1.0;
    std::size_t worst_idx = i;
    for (std::size_t k = i + 1; k < j; ++k) {
        const double d = point_segment_distance(pts[k], pts[i], pts[j]);
        if (d > worst) {
            worst = d;
            worst_idx = k;
        }
    }
    if (worst > tol) {
        keep[worst_idx] = true;
        dp_recurse(pts, i, worst_idx, tol, keep);
        dp_recurse(pts, worst_idx, j, tol, keep);
    }
}

} // namespace

Ring simplify_ring(const Ring& ring, double tolerance) {
    if (tolerance <= 0.0 || ring.size() <= 3) return ring;
    // Anchor the closed ring at the two mutually farthest vertices so both
    // halves are simplified as open polylines.
    std::size_t a = 0, b = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < ring.size(); ++i)
        for (std::size_t j = i + 1; j < ring.size(); ++j) {
            const double dx = ring[i].x - ring[j].x;
            const double dy = ring[i].y - ring[j].y;
            const double d = dx * dx + dy * dy;
            if (d > best) {
                best = d;
                a = i;
                b = j;
            }
        }
    Ring rotated;
    rotated.reserve(ring.size() + 1);
    for (std::size_t i = 0; i < ring.size(); ++i)
        rotated.push_back(ring[(a + i) % ring.size()]);
    rotated.push_back(ring[a]);  // closed polyline
    const std::size_t mid = (b + ring.size() - a) % ring.size();

    std::vector<bool> keep(rotated.size(), false);
    keep.front() = keep.back() = true;
    keep[mid] = true;
    dp_recurse(rotated, 0, mid, tolerance, keep);
    dp_recurse(rotated, mid, rotated.size() - 1, tolerance, keep);

    Ring out;
    for (std::size_t i = 0; i + 1 < rotated.size(); ++i)
        if (keep[i]) out.push_back(rotated[i]);
    return out;
}

bool ring_self_intersects(const Ring& ring) {
    const std::size_t n = ring.size();
    if (n < 4) return false;
    auto proper_cross = [](Point p1, Point p2, Point p3, Point p4) {
        auto orient = [](Point a, Point b, Point c) {
            const double v = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
            return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0);
        };
        const int o1 = orient(p1, p2, p3), o2 = orient(p1, p2, p4);
        const int o3 = orient(p3, p4, p1), o4 = orient(p3, p4, p2);
        return o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
            if (proper_cross(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]))
                return true;
        }
    }
    return false;
}

} // namespace fieldseg
