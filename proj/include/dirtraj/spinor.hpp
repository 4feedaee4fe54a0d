#pragma once

#include "dirtraj/angular.hpp"
#include "dirtraj/types.hpp"

namespace dirtraj {

/// Dirac-representation gamma matrices and Pauli blocks.
struct GammaSet {
    CMat4 gamma0;
    std::array<CMat4, 3> gamma;
    std::array<CMat2, 3> pauli;
};

const GammaSet& gammas();

/// Charge conjugation: i gamma^2 Psi^*.
CVec4 conjugation_map(const CVec4& psi);

/// Majorana decomposition Phi_R = (Psi + i g2 Psi^*)/2, Phi_I = (Psi - i g2 Psi^*)/(2i).
/// Phi_R and i Phi_I are eigenspinors of the conjugation map with eigenvalues
/// +1 and -1 respectively.
std::pair<CVec4, CVec4> majorana_split(const CVec4& psi);

struct MajoranaWarning {
    bool violated = false;
    double deviation = 0.0;
};

/// Exact inverse of majorana_split: Psi = Phi_R + i Phi_I. If the inputs break
/// the eigenspinor constraint beyond 1e-10 the optional warning is set.
CVec4 majorana_join(const CVec4& phiR, const CVec4& phiI, MajoranaWarning* warn = nullptr);

struct CurrentSample {
    double density = 0.0;
    Vec3 flux = Vec3::Zero();
};

/// j^0/c = Psi^dag Psi, j^i/c = Psi^dag g0 g^i Psi.
CurrentSample dirac_current(const CVec4& psi);

/// Phi^dag Phi and Phi^dag g0 g^i Phi for a Majorana coefficient vector.
CurrentSample majorana_current(const CVec4& phi);

/// The gauge-dependent conserved complex pair (Psi^T g2 Psi, Psi^T g2 g0 g^i Psi).
std::pair<cd, CVec3> gauge_4vector(const CVec4& psi);

}  // namespace dirtraj
