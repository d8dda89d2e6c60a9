#include "knnlab/spatial_index.hpp"

#include <algorithm>
#include <cmath>

namespace knnlab {

BucketGrid::BucketGrid(std::span<const Point> points, const Region& bounds, double target_per_cell)
    : points_(points) {
    // Bounds may be loose; tighten to the data so far-away region corners do
    // not waste cells.
    double xmin = bounds.x_min(), ymin = bounds.y_min();
    double xmax = bounds.x_max(), ymax = bounds.y_max();
    if (!points.empty()) {
        xmin = ymin = std::numeric_limits<double>::infinity();
        xmax = ymax = -std::numeric_limits<double>::infinity();
        for (const auto& p : points) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
    }
    const double w = std::max(xmax - xmin, 1e-12);
    const double h = std::max(ymax - ymin, 1e-12);
    const double n = std::max<double>(static_cast<double>(points.size()), 1.0);
    cell_ = std::sqrt(w * h * target_per_cell / n);
    cell_ = std::max(cell_, std::max(w, h) / 4096.0);
    x0_ = xmin;
    y0_ = ymin;
    nx_ = std::max(1, static_cast<int>(std::ceil(w / cell_)));
    ny_ = std::max(1, static_cast<int>(std::ceil(h / cell_)));

    const std::size_t cells = static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_);
    cell_start_.assign(cells + 1, 0);
    std::vector<std::uint32_t> cell_of(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto c = static_cast<std::uint32_t>(cell_y(points[i].y) * nx_ + cell_x(points[i].x));
        cell_of[i] = c;
        ++cell_start_[c + 1];
    }
    for (std::size_t c = 0; c < cells; ++c) cell_start_[c + 1] += cell_start_[c];
    order_.resize(points.size());
    sorted_.resize(points.size());
    std::vector<std::uint32_t> fill(cell_start_.begin(), cell_start_.end() - 1);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto slot = fill[cell_of[i]]++;
        order_[slot] = static_cast<std::uint32_t>(i);
        sorted_[slot] = points[i];
    }
}

int BucketGrid::cell_x(double x) const {
    const int c = static_cast<int>(std::floor((x - x0_) / cell_));
    return std::clamp(c, 0, nx_ - 1);
}

int BucketGrid::cell_y(double y) const {
    const int c = static_cast<int>(std::floor((y - y0_) / cell_));
    return std::clamp(c, 0, ny_ - 1);
}

namespace {

void offer(std::vector<Neighbour>& best, std::size_t k, Neighbour cand) {
    if (best.size() < k) {
        best.push_back(cand);
    } else if (cand < best.back()) {
        best.back() = cand;
    } else {
        return;
    }
    for (std::size_t i = best.size() - 1; i > 0 && best[i] < best[i - 1]; --i) {
        std::swap(best[i], best[i - 1]);
    }
}

}  // namespace

void BucketGrid::nearest(const Point& query, std::size_t k, std::uint32_t exclude,
                         std::vector<Neighbour>& out) const {
    out.clear();
    if (k == 0 || points_.empty()) return;
    const int cx = cell_x(query.x);
    const int cy = cell_y(query.y);
    const int max_ring = std::max({cx, nx_ - 1 - cx, cy, ny_ - 1 - cy});

    auto scan_cell = [&](int ix, int iy) {
        const std::size_t c = static_cast<std::size_t>(iy) * nx_ + ix;
        for (std::uint32_t s = cell_start_[c]; s < cell_start_[c + 1]; ++s) {
            const std::uint32_t idx = order_[s];
            if (idx == exclude) continue;
            offer(out, k, {squared_distance(query, sorted_[s]), idx});
        }
    };

    for (int r = 0; r <= max_ring; ++r) {
        const int x_lo = cx - r, x_hi = cx + r, y_lo = cy - r, y_hi = cy + r;
        for (int ix = std::max(x_lo, 0); ix <= std::min(x_hi, nx_ - 1); ++ix) {
            if (y_lo >= 0) scan_cell(ix, y_lo);
            if (y_hi < ny_ && y_hi != y_lo) scan_cell(ix, y_hi);
        }
        for (int iy = std::max(y_lo + 1, 0); iy <= std::min(y_hi - 1, ny_ - 1); ++iy) {
            if (x_lo >= 0) scan_cell(x_lo, iy);
            if (x_hi < nx_ && x_hi != x_lo) scan_cell(x_hi, iy);
        }
        if (out.size() == k) {
            // Distance from the query to anything outside the scanned block.
            const double gap = std::min({query.x - (x0_ + x_lo * cell_),
                                         x0_ + (x_hi + 1) * cell_ - query.x,
                                         query.y - (y0_ + y_lo * cell_),
                                         y0_ + (y_hi + 1) * cell_ - query.y});
            // Strict: an equal-distance point outside may have a lower index.
            const double safe = gap - 1e-9 * cell_;
            if (safe > 0.0 && out.back().d2 < safe * safe) return;
        }
    }
}

std::size_t BucketGrid::count_within(const Point& query, double r2, std::uint32_t exclude,
                                     std::size_t cap) const {
    if (points_.empty() || cap == 0) return 0;
    const double r = std::sqrt(r2);
    // One extra cell per side absorbs rounding in the cell assignment.
    const auto lo = [&](double v, double o) { return std::floor((v - r - o) / cell_) - 1.0; };
    const auto hi = [&](double v, double o) { return std::floor((v + r - o) / cell_) + 1.0; };
    const int x_lo = static_cast<int>(std::clamp(lo(query.x, x0_), 0.0, double(nx_)));
    const int x_hi = static_cast<int>(std::clamp(hi(query.x, x0_), -1.0, double(nx_ - 1)));
    const int y_lo = static_cast<int>(std::clamp(lo(query.y, y0_), 0.0, double(ny_)));
    const int y_hi = static_cast<int>(std::clamp(hi(query.y, y0_), -1.0, double(ny_ - 1)));
    std::size_t count = 0;
    for (int iy = y_lo; iy <= y_hi; ++iy) {
        for (int ix = x_lo; ix <= x_hi; ++ix) {
            const std::size_t c = static_cast<std::size_t>(iy) * nx_ + ix;
            for (std::uint32_t s = cell_start_[c]; s < cell_start_[c + 1]; ++s) {
                if (order_[s] == exclude) continue;
                if (squared_distance(query, sorted_[s]) <= r2 && ++count >= cap) return count;
            }
        }
    }
    return count;
}

}  // namespace knnlab
