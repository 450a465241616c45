#pragma once

#include <stdexcept>
#include <string>

namespace qnd {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// invalid_input -> 2, solver_failure -> 3, the rest -> 4.
struct invalid_input : std::runtime_error {
    explicit invalid_input(const std::string& what) : std::runtime_error(what) {}
};

struct solver_failure : std::runtime_error {
    double worst_residual = 0.0;
    explicit solver_failure(const std::string& what, double residual = 0.0)
        : std::runtime_error(what), worst_residual(residual) {}
};

// Raised when a reduction kernel maps the state to exact zero
// (a window disjoint from the state's support can do this).
struct annihilated_state : std::runtime_error {
    explicit annihilated_state(const std::string& what) : std::runtime_error(what) {}
};

// Raised when every candidate outcome carries zero weight.
struct degenerate_density : std::runtime_error {
    explicit degenerate_density(const std::string& what) : std::runtime_error(what) {}
};

// Raised for level pairs with |E_i - E_j| below tolerance.
struct degenerate_levels : std::runtime_error {
    explicit degenerate_levels(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace qnd
