#pragma once

#include "dirtraj/field.hpp"

namespace dirtraj {

/// Free evolution of the 4-spinor field by the exact momentum-space
/// propagator exp(-i H(k) t / hbar), H(k) = hbar c k_i g0 g^i + m c^2 g0.
/// Unitary per mode; throws ResolutionError if the relative spectral mass
/// in the outer band (any |k| index above 3/4 Nyquist) exceeds 1e-8.
SpinorField spectral_propagate(const SpinorField& field, double dt_total,
                               const PhysicalParams& params);

/// Relative spectral mass in the outer band; the resolution diagnostic.
double spectral_tail_fraction(const SpinorField& field);

/// Projection of a single Fourier mode onto the positive/negative energy
/// eigenspaces of H(k). Used by the dispersion checks.
std::pair<CVec4, CVec4> energy_project(const CVec4& amp, const Vec3& k,
                                       const PhysicalParams& params);

/// Max-norm residual of the discretized Dirac equation with external
/// 4-potential: i hbar (Psi+ - Psi-)/(2 dt) equal to
/// c A0 Psi + c g0 g^i (-i hbar d_i + A_i) Psi + m c^2 g0 Psi at the midpoint.
/// Spatial derivatives spectral, time derivative centered.
double dirac_residual(const SpinorField& before, const SpinorField& after,
                      double dt, const PotentialField& pot,
                      const PhysicalParams& params);

struct AngularResidual {
    double resR = 0.0;          // continuity form for sin(a) psi_R
    double resI = 0.0;          // continuity form for sin(a) psi_I
    double variant_delta = 0.0; // |A0 rewriting - direct A0 term|, max over samples
};

/// Residuals of the real angular continuity forms for sin(a) psi_R and
/// sin(a) psi_I at the quadrature angle nodes. With a potential the forms
/// carry the mutual R/I coupling, the A0 term entering through the
/// m_i m_i A0 psi / 3 rewriting; variant_delta reports the difference
/// between that rewriting and the direct A0 term.
AngularResidual angular_continuity_residual(const SpinorField& before,
                                            const SpinorField& after, double dt,
                                            const PotentialField& pot,
                                            const PhysicalParams& params);

}  // namespace dirtraj
