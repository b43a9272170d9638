#pragma once

#include <vector>

namespace arbcert {

// Weights of a local quadratic least-squares fit evaluated at one node.
struct Stencil {
    int start = 0;
    std::vector<double> weights;
};

// One stencil per node of `x`; the window slides inward at the ends.
// derivative is 1 or 2.
std::vector<Stencil> quadratic_stencils(const std::vector<double>& x, int window, int derivative);

}  // namespace arbcert
