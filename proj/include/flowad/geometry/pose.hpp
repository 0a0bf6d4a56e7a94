#pragma once

#include <cmath>
#include <string>

#include "flowad/error.hpp"

namespace flowad::geom {

struct EgoPose {
    double x = 0.0; // meters
    double y = 0.0; // meters
    int t = 0;      // frame index
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

enum class TurnDirection { Left, Right };

/// Circle through three consecutive ego positions, or the straight-driving
/// degenerate case.
struct SteeringCircle {
    bool is_straight = true;
    double cx = 0.0, cy = 0.0, r = 0.0; // meters, valid when !is_straight
    TurnDirection turn = TurnDirection::Left;

    static SteeringCircle straight() { return SteeringCircle{}; }

    static SteeringCircle arc(double cx, double cy, double r, TurnDirection turn) {
        SteeringCircle c;
        c.is_straight = false;
        c.cx = cx;
        c.cy = cy;
        c.r = r;
        c.turn = turn;
        return c;
    }
};

/// Fits the circle through poses at t-2, t-1, t via the linear system that
/// equates squared distances to the unknown center. Near-collinear triples
/// (determinant under eps_col, in m^2) degrade to the straight case.
inline SteeringCircle fit_steering_circle(const EgoPose& p_tm2, const EgoPose& p_tm1,
                                          const EgoPose& p_t, double eps_col = 1e-9) {
    auto same = [](const EgoPose& a, const EgoPose& b) { return a.x == b.x && a.y == b.y; };
    if (same(p_tm2, p_tm1) || same(p_tm1, p_t) || same(p_tm2, p_t))
        throw InvalidInputError("fit_steering_circle: poses must be three distinct points");

    const double a = 2.0 * (p_t.x - p_tm1.x);
    const double b = 2.0 * (p_t.y - p_tm1.y);
    const double c = p_t.x * p_t.x + p_t.y * p_t.y - p_tm1.x * p_tm1.x - p_tm1.y * p_tm1.y;
    const double e = 2.0 * (p_tm1.x - p_tm2.x);
    const double f = 2.0 * (p_tm1.y - p_tm2.y);
    const double g =
        p_tm1.x * p_tm1.x + p_tm1.y * p_tm1.y - p_tm2.x * p_tm2.x - p_tm2.y * p_tm2.y;

    const double det = e * b - a * f;
    if (std::abs(det) < eps_col) return SteeringCircle::straight();

    const double xc = (g * b - c * f) / det;
    const double yc = (a * g - c * e) / (a * f - b * e);
    const double r = std::hypot(xc - p_t.x, yc - p_t.y);

    const double v1x = p_tm1.x - p_tm2.x, v1y = p_tm1.y - p_tm2.y;
    const double v2x = p_t.x - p_tm1.x, v2y = p_t.y - p_tm1.y;
    const double cross = v1x * v2y - v1y * v2x;
    return SteeringCircle::arc(xc, yc, r,
                               cross > 0.0 ? TurnDirection::Left : TurnDirection::Right);
}

/// Unit vector from the previous to the current pose.
inline Vec2 forward_direction(const EgoPose& p_prev, const EgoPose& p_now) {
    const double dx = p_now.x - p_prev.x, dy = p_now.y - p_prev.y;
    const double n = std::hypot(dx, dy);
    if (n == 0.0)
        throw StationaryError("forward_direction: ego did not move between frames " +
                              std::to_string(p_prev.t) + " and " + std::to_string(p_now.t));
    return Vec2{dx / n, dy / n};
}

} // namespace flowad::geom
