#pragma once

#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "qnd/errors.hpp"
#include "qnd/grid.hpp"

namespace qnd {

// V(x) = m w^2 x^2 / 2
struct Harmonic {
    double mass = 1.0;
    double omega = 1.0;
};

// Bistable quartic V(x) = -mu x^2 / 2 + lambda x^4 / 4, minima at +-sqrt(mu/lambda).
struct DoubleWell {
    double mu = 1.0;
    double lambda = 1.0;
    double mass = 1.0;

    double well_position() const { return std::sqrt(mu / lambda); }
    double well_separation() const { return 2.0 * well_position(); }
    double barrier_height() const { return mu * mu / (4.0 * lambda); }
};

// Arbitrary potential sampled on a grid.
struct Tabulated {
    std::vector<double> values;
    double mass = 1.0;
};

struct PotentialSpec {
    std::variant<Harmonic, DoubleWell, Tabulated> variant;

    PotentialSpec(Harmonic h) : variant(h) { validate(); }
    PotentialSpec(DoubleWell d) : variant(d) { validate(); }
    PotentialSpec(Tabulated t) : variant(std::move(t)) { validate(); }

    double mass() const {
        return std::visit([](const auto& v) { return v.mass; }, variant);
    }

    bool is_symmetric() const { return !std::holds_alternative<Tabulated>(variant); }

    // Value at x; Tabulated variants must be evaluated through sample().
    double value(double x) const {
        if (const auto* h = std::get_if<Harmonic>(&variant))
            return 0.5 * h->mass * h->omega * h->omega * x * x;
        if (const auto* d = std::get_if<DoubleWell>(&variant))
            return -0.5 * d->mu * x * x + 0.25 * d->lambda * x * x * x * x;
        throw invalid_input("PotentialSpec: tabulated potentials have no closed form");
    }

    std::vector<double> sample(const Grid1D& grid) const {
        if (const auto* t = std::get_if<Tabulated>(&variant)) {
            if (static_cast<int>(t->values.size()) != grid.n)
                throw invalid_input("PotentialSpec: tabulated size " +
                                    std::to_string(t->values.size()) + " does not match grid n = " +
                                    std::to_string(grid.n));
            return t->values;
        }
        std::vector<double> v(grid.n);
        for (int i = 0; i < grid.n; ++i) v[i] = value(grid.point(i));
        return v;
    }

    std::string describe() const {
        if (const auto* h = std::get_if<Harmonic>(&variant))
            return "harmonic(m=" + std::to_string(h->mass) + ", omega=" + std::to_string(h->omega) + ")";
        if (const auto* d = std::get_if<DoubleWell>(&variant))
            return "double_well(mu=" + std::to_string(d->mu) + ", lambda=" + std::to_string(d->lambda) +
                   ", m=" + std::to_string(d->mass) + ")";
        return "tabulated";
    }

private:
    void validate() const {
        if (mass() <= 0.0) throw invalid_input("PotentialSpec: mass must be positive");
        if (const auto* h = std::get_if<Harmonic>(&variant)) {
            if (h->omega <= 0.0) throw invalid_input("PotentialSpec: omega must be positive");
        }
        if (const auto* d = std::get_if<DoubleWell>(&variant)) {
            if (d->mu <= 0.0) throw invalid_input("PotentialSpec: mu must be positive");
            if (d->lambda <= 0.0) throw invalid_input("PotentialSpec: lambda must be positive");
        }
    }
};

}  // namespace qnd
