#pragma once

#include <cmath>

namespace evetac {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(const Vec2& o)
    {
        x += o.x;
        y += o.y;
        return *this;
    }
    double norm() const { return std::hypot(x, y); }
    double norm_sq() const { return x * x + y * y; }

    bool operator==(const Vec2&) const = default;
};

inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }

struct Rect {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0; // [x0,x1) x [y0,y1)

    bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
};

} // namespace evetac
