#include "dirtraj/spinor.hpp"

namespace dirtraj {

namespace {

constexpr cd I{0.0, 1.0};

GammaSet build_gammas() {
    GammaSet g;
    g.pauli[0] << 0, 1, 1, 0;
    g.pauli[1] << 0, -I, I, 0;
    g.pauli[2] << 1, 0, 0, -1;

    g.gamma0 = CMat4::Zero();
    g.gamma0.block<2, 2>(0, 0) = CMat2::Identity();
    g.gamma0.block<2, 2>(2, 2) = -CMat2::Identity();
    for (int i = 0; i < 3; ++i) {
        g.gamma[i] = CMat4::Zero();
        g.gamma[i].block<2, 2>(0, 2) = g.pauli[i];
        g.gamma[i].block<2, 2>(2, 0) = -g.pauli[i];
    }
    return g;
}

}  // namespace

const GammaSet& gammas() {
    static const GammaSet g = build_gammas();
    return g;
}

CVec4 conjugation_map(const CVec4& psi) {
    return I * (gammas().gamma[1] * psi.conjugate());
}

std::pair<CVec4, CVec4> majorana_split(const CVec4& psi) {
    const CVec4 conj = conjugation_map(psi);
    const CVec4 phiR = 0.5 * (psi + conj);
    const CVec4 phiI = (psi - conj) / (2.0 * I);
    return {phiR, phiI};
}

CVec4 majorana_join(const CVec4& phiR, const CVec4& phiI, MajoranaWarning* warn) {
    if (warn) {
        const double dR = (conjugation_map(phiR) - phiR).cwiseAbs().maxCoeff();
        const CVec4 iphiI = I * phiI;
        const double dI = (conjugation_map(iphiI) + iphiI).cwiseAbs().maxCoeff();
        warn->deviation = std::max(dR, dI);
        warn->violated = warn->deviation > 1e-10;
    }
    return phiR + I * phiI;
}

CurrentSample dirac_current(const CVec4& psi) {
    CurrentSample s;
    s.density = std::real(psi.dot(psi));
    const GammaSet& g = gammas();
    for (int i = 0; i < 3; ++i)
        s.flux(i) = std::real(psi.dot(g.gamma0 * g.gamma[i] * psi));
    return s;
}

CurrentSample majorana_current(const CVec4& phi) { return dirac_current(phi); }

std::pair<cd, CVec3> gauge_4vector(const CVec4& psi) {
    const GammaSet& g = gammas();
    const cd d = psi.transpose() * g.gamma[1] * psi;
    CVec3 f;
    for (int i = 0; i < 3; ++i)
        f(i) = psi.transpose() * (g.gamma[1] * g.gamma0 * g.gamma[i] * psi);
    return {d, f};
}

}  // namespace dirtraj
