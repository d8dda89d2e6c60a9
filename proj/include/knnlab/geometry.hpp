#pragma once

#include <cmath>
#include <stdexcept>

namespace knnlab {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

inline double squared_distance(const Point& a, const Point& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return dx * dx + dy * dy;
}

inline double distance(const Point& a, const Point& b) {
    return std::sqrt(squared_distance(a, b));
}

/// Axis-aligned closed rectangle [x_min, x_max] x [y_min, y_max].
class Region {
public:
    Region() = default;
    Region(double x_min, double y_min, double x_max, double y_max)
        : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max) {
        if (!(x_min < x_max) || !(y_min < y_max)) {
            throw std::invalid_argument("Region: require x_min < x_max and y_min < y_max");
        }
    }

    /// Square of side `side` centred at `centre`.
    static Region centred_square(Point centre, double side) {
        const double h = side / 2.0;
        return Region(centre.x - h, centre.y - h, centre.x + h, centre.y + h);
    }

    double x_min() const { return x_min_; }
    double y_min() const { return y_min_; }
    double x_max() const { return x_max_; }
    double y_max() const { return y_max_; }
    double width() const { return x_max_ - x_min_; }
    double height() const { return y_max_ - y_min_; }
    double area() const { return width() * height(); }
    Point centre() const { return {(x_min_ + x_max_) / 2.0, (y_min_ + y_max_) / 2.0}; }

    bool contains(const Point& p) const {
        return p.x >= x_min_ && p.x <= x_max_ && p.y >= y_min_ && p.y <= y_max_;
    }

    bool contains(const Region& r) const {
        return r.x_min_ >= x_min_ && r.x_max_ <= x_max_ && r.y_min_ >= y_min_ &&
               r.y_max_ <= y_max_;
    }

    /// Closed intersection test (shared boundary counts).
    bool intersects(const Region& r) const {
        return r.x_min_ <= x_max_ && x_min_ <= r.x_max_ && r.y_min_ <= y_max_ &&
               y_min_ <= r.y_max_;
    }

    Region translated(double dx, double dy) const {
        return Region(x_min_ + dx, y_min_ + dy, x_max_ + dx, y_max_ + dy);
    }

    friend bool operator==(const Region&, const Region&) = default;

private:
    double x_min_ = 0.0;
    double y_min_ = 0.0;
    double x_max_ = 1.0;
    double y_max_ = 1.0;
};

}  // namespace knnlab
