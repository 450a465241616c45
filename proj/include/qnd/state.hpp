#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "qnd/errors.hpp"

namespace qnd {

// Complex amplitudes c_m on a truncated energy eigenbasis (m is 1-based in
// the math; storage is 0-based). States evolved through measurement steps
// are generally unnormalized: the squared norm carries the record's weight.
struct StateCoefficients {
    Eigen::VectorXcd c;
    bool normalized = false;

    StateCoefficients() = default;
    explicit StateCoefficients(Eigen::VectorXcd amplitudes, bool is_normalized = false)
        : c(std::move(amplitudes)), normalized(is_normalized) {
        if (!c.allFinite()) throw invalid_input("StateCoefficients: non-finite amplitudes");
        if (normalized && std::abs(c.norm() - 1.0) >= 1e-10)
            throw invalid_input("StateCoefficients: normalized flag set but ||c|| != 1");
    }

    int size() const { return static_cast<int>(c.size()); }
    double norm() const { return c.norm(); }

    static StateCoefficients eigenstate(int level_1based, int basis_size) {
        if (level_1based < 1 || level_1based > basis_size)
            throw invalid_input("StateCoefficients: level outside the basis");
        Eigen::VectorXcd c = Eigen::VectorXcd::Zero(basis_size);
        c[level_1based - 1] = 1.0;
        return StateCoefficients(std::move(c), true);
    }
};

}  // namespace qnd
