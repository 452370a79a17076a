/// @file errors.hpp
/// @brief Exception taxonomy used across the library.
///
/// Two umbrella categories mirror the CLI exit codes: validation errors
/// (bad inputs, shape mismatches, violated preconditions -> exit 2) and
/// solver errors (numerical failures during a computation -> exit 3).

#pragma once

#include <stdexcept>
#include <string>

namespace qge {

/// Base class for all library errors.
class error : public std::runtime_error {
public:
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

/// Input or precondition failures: rejected before any computation runs.
class validation_error : public error {
public:
    using error::error;
};

/// Two operands live on different grids (or have inconsistent sizes).
class shape_error : public validation_error {
public:
    using validation_error::validation_error;
};

/// A value left the admissible range of a transform (e.g. v <= -1).
class transform_domain_error : public validation_error {
public:
    using validation_error::validation_error;
};

/// A supplied lower/upper solution failed its discrete certificate.
class certificate_error : public validation_error {
public:
    using validation_error::validation_error;
};

/// Config-file problems: malformed JSON, unknown keys, bad field values.
class config_error : public validation_error {
public:
    using validation_error::validation_error;
};

/// Numerical failures raised while a computation is running.
class solver_error : public error {
public:
    using error::error;
};

/// A linear operator was singular or badly conditioned.
class singular_operator_error : public solver_error {
public:
    using solver_error::solver_error;
};

/// A shifted operator that must be positive definite was not.
class definiteness_error : public solver_error {
public:
    using solver_error::solver_error;
};

/// An iteration failed to reach its target (distinct from a non-converged
/// report: raised only where the contract promises an exception).
class iteration_error : public solver_error {
public:
    using solver_error::solver_error;
};

/// A Newton step had no admissible damping (transformed-domain guard).
class domain_guard_error : public solver_error {
public:
    using solver_error::solver_error;
};

/// A phase-plane orbit escapes to infinity: no turning point exists.
class unbounded_orbit_error : public solver_error {
public:
    using solver_error::solver_error;
};

/// A turning point was non-quadratic; the transit time diverges.
class degenerate_turning_error : public solver_error {
public:
    using solver_error::solver_error;
};

/// A requested root/bracket could not be located.
class no_root_error : public solver_error {
public:
    using solver_error::solver_error;
};

/// The phase-plane classifier was asked for a case it cannot claim.
class classification_error : public validation_error {
public:
    using validation_error::validation_error;
};

} // namespace qge
