#pragma once

// Small fixed-size geometry types used throughout: 2D points/vectors,
// 2x2 tensors and the affine reference-to-physical triangle map.

#include <array>
#include <cmath>

namespace biot {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Vec2() = default;
    constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator/(double s) const { return {x / s, y / s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }

    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
    // 90 degree counterclockwise rotation
    Vec2 rot90() const { return {-y, x}; }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

// Row-major 2x2 tensor.
struct Mat2 {
    double a11 = 0.0, a12 = 0.0;
    double a21 = 0.0, a22 = 0.0;

    Mat2() = default;
    Mat2(double m11, double m12, double m21, double m22)
        : a11(m11), a12(m12), a21(m21), a22(m22) {}

    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    static Mat2 zero() { return {}; }

    Mat2 operator+(const Mat2& o) const { return {a11 + o.a11, a12 + o.a12, a21 + o.a21, a22 + o.a22}; }
    Mat2 operator-(const Mat2& o) const { return {a11 - o.a11, a12 - o.a12, a21 - o.a21, a22 - o.a22}; }
    Mat2 operator*(double s) const { return {a11 * s, a12 * s, a21 * s, a22 * s}; }
    Mat2& operator+=(const Mat2& o) { a11 += o.a11; a12 += o.a12; a21 += o.a21; a22 += o.a22; return *this; }

    Vec2 row(int r) const { return r == 0 ? Vec2{a11, a12} : Vec2{a21, a22}; }
    Vec2 apply(const Vec2& v) const { return {a11 * v.x + a12 * v.y, a21 * v.x + a22 * v.y}; }

    double trace() const { return a11 + a22; }
    double det() const { return a11 * a22 - a12 * a21; }
    Mat2 transpose() const { return {a11, a21, a12, a22}; }
    Mat2 sym() const { double m = 0.5 * (a12 + a21); return {a11, m, m, a22}; }
    Mat2 skew() const { double m = 0.5 * (a12 - a21); return {0.0, m, -m, 0.0}; }
    double frob_dot(const Mat2& o) const {
        return a11 * o.a11 + a12 * o.a12 + a21 * o.a21 + a22 * o.a22;
    }
    double frob_norm2() const { return frob_dot(*this); }
};

inline Mat2 operator*(double s, const Mat2& m) { return m * s; }

inline Mat2 outer(const Vec2& a, const Vec2& b) {
    return {a.x * b.x, a.x * b.y, a.y * b.x, a.y * b.y};
}

// Affine map x = v0 + B*(xi,eta) from the reference triangle
// {(0,0),(1,0),(0,1)} onto a physical triangle.
struct AffineMap {
    Vec2 v0;
    Mat2 B;       // columns are edge vectors v1-v0, v2-v0
    Mat2 Binv;
    double detB = 0.0;

    AffineMap() = default;
    AffineMap(const Vec2& a, const Vec2& b, const Vec2& c) {
        v0 = a;
        B = {b.x - a.x, c.x - a.x, b.y - a.y, c.y - a.y};
        detB = B.det();
        const double inv = 1.0 / detB;
        Binv = {B.a22 * inv, -B.a12 * inv, -B.a21 * inv, B.a11 * inv};
    }

    Vec2 to_physical(const Vec2& ref) const { return v0 + B.apply(ref); }
    Vec2 to_reference(const Vec2& x) const { return Binv.apply(x - v0); }
    // gradient pushforward: grad_x = B^{-T} grad_ref
    Vec2 push_gradient(const Vec2& gref) const {
        return {Binv.a11 * gref.x + Binv.a21 * gref.y,
                Binv.a12 * gref.x + Binv.a22 * gref.y};
    }
    double area() const { return 0.5 * std::abs(detB); }
};

} // namespace biot
