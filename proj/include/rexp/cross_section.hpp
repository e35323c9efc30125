#pragma once

#include "rexp/geometry.hpp"

namespace rexp {

/// Rescaled cross-section: the disk of radius beta * ||X(base)|| in the plane
/// normal to the field at a regular base point. Built by make_section().
struct CrossSection {
    NormalFrame frame;
    double radius = 0.0;
    double beta = 0.0;
    double base_speed = 0.0; // ||X(base)||

    const Point& base() const { return frame.base; }
};

} // namespace rexp
