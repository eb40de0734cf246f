// errors.hpp — exception types shared across the library

#pragma once

#include <stdexcept>
#include <string>

namespace phasescope {

// Requested object exceeds a configured dimension cap.
struct capacity_error : std::runtime_error {
    explicit capacity_error(const std::string& what) : std::runtime_error(what) {}
};

// A quadrature did not converge under grid refinement.
struct quadrature_error : std::runtime_error {
    explicit quadrature_error(const std::string& what) : std::runtime_error(what) {}
};

// Integrator detected norm collapse or another symptom of an oversized step.
struct step_size_error : std::runtime_error {
    explicit step_size_error(const std::string& what) : std::runtime_error(what) {}
};

// Eigenvalue degeneracy where a unique vector is required.
struct degeneracy_error : std::runtime_error {
    explicit degeneracy_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace phasescope
