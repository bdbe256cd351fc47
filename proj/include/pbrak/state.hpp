#pragma once

#include <vector>

namespace pbrak {

// Point in phase space, z = (x_1..x_N, p_1..p_N), stamped with the time it
// belongs to.
struct PhaseState {
    std::vector<double> x;
    std::vector<double> p;
    double time = 0.0;

    PhaseState() = default;
    PhaseState(std::vector<double> x_, std::vector<double> p_, double t = 0.0)
        : x(std::move(x_)), p(std::move(p_)), time(t) {}

    int dof() const { return static_cast<int>(x.size()); }
};

}  // namespace pbrak
