#include "dirtraj/reference_solver.hpp"

namespace dirtraj {

namespace {

constexpr cd I{0.0, 1.0};

// H(k) psi with H = hbar c k.(g0 g) + m c^2 g0 in the Dirac representation:
// block form [[mc^2, hbar c k.sigma], [hbar c k.sigma, -mc^2]].
inline CVec4 apply_hk(const CVec4& p, const Vec3& k, const PhysicalParams& par) {
    const double hc = par.hbar * par.c;
    const cd ks00 = hc * k(2);
    const cd ks01 = hc * cd(k(0), -k(1));
    const cd ks10 = hc * cd(k(0), k(1));
    const cd ks11 = -hc * k(2);
    const double mc2 = par.m * par.c * par.c;
    CVec4 out;
    out(0) = mc2 * p(0) + ks00 * p(2) + ks01 * p(3);
    out(1) = mc2 * p(1) + ks10 * p(2) + ks11 * p(3);
    out(2) = ks00 * p(0) + ks01 * p(1) - mc2 * p(2);
    out(3) = ks10 * p(0) + ks11 * p(1) - mc2 * p(3);
    return out;
}

inline double energy_of(const Vec3& k, const PhysicalParams& par) {
    const double hck = par.hbar * par.c * k.norm();
    const double mc2 = par.m * par.c * par.c;
    return std::sqrt(hck * hck + mc2 * mc2);
}

}  // namespace

double spectral_tail_fraction(const SpinorField& field) {
    const int n = field.box.n;
    std::vector<cd> comp(field.box.n3());
    double total = 0.0, tail = 0.0;
    const int band = (3 * (n / 2)) / 4;
    for (int c = 0; c < 4; ++c) {
        for (std::int64_t i = 0; i < field.box.n3(); ++i) comp[i] = field.val(i, c);
        fft3_forward(comp, n);
        for (int ix = 0; ix < n; ++ix) {
            const int bx = std::abs(ix <= n / 2 ? ix : ix - n);
            for (int iy = 0; iy < n; ++iy) {
                const int by = std::abs(iy <= n / 2 ? iy : iy - n);
                for (int iz = 0; iz < n; ++iz) {
                    const int bz = std::abs(iz <= n / 2 ? iz : iz - n);
                    const double m = std::norm(comp[field.box.idx(ix, iy, iz)]);
                    total += m;
                    if (bx >= band || by >= band || bz >= band) tail += m;
                }
            }
        }
    }
    return total > 0.0 ? tail / total : 0.0;
}

SpinorField spectral_propagate(const SpinorField& field, double dt_total,
                               const PhysicalParams& params) {
    const double tailf = spectral_tail_fraction(field);
    if (tailf > 1e-8)
        throw ResolutionError("spectral tail fraction " + std::to_string(tailf));

    const int n = field.box.n;
    const std::int64_t n3 = field.box.n3();
    std::array<std::vector<cd>, 4> hat;
    for (int c = 0; c < 4; ++c) {
        hat[c].resize(n3);
        for (std::int64_t i = 0; i < n3; ++i) hat[c][i] = field.val(i, c);
        fft3_forward(hat[c], n);
    }

    for (int ix = 0; ix < n; ++ix) {
        for (int iy = 0; iy < n; ++iy) {
            for (int iz = 0; iz < n; ++iz) {
                const std::int64_t i = field.box.idx(ix, iy, iz);
                const Vec3 k(field.box.wavenumber(ix), field.box.wavenumber(iy),
                             field.box.wavenumber(iz));
                const double E = energy_of(k, params);
                const double phi = E * dt_total / params.hbar;
                CVec4 p(hat[0][i], hat[1][i], hat[2][i], hat[3][i]);
                const CVec4 hp = apply_hk(p, k, params);
                const CVec4 q = std::cos(phi) * p - I * (std::sin(phi) / E) * hp;
                for (int c = 0; c < 4; ++c) hat[c][i] = q(c);
            }
        }
    }

    SpinorField out = SpinorField::zero(field.box, field.time + dt_total);
    for (int c = 0; c < 4; ++c) {
        fft3_inverse(hat[c], n);
        for (std::int64_t i = 0; i < n3; ++i) out.val(i, c) = hat[c][i];
    }
    return out;
}

std::pair<CVec4, CVec4> energy_project(const CVec4& amp, const Vec3& k,
                                       const PhysicalParams& params) {
    const double E = energy_of(k, params);
    const CVec4 hp = apply_hk(amp, k, params);
    const CVec4 plus = 0.5 * (amp + hp / E);
    const CVec4 minus = 0.5 * (amp - hp / E);
    return {plus, minus};
}

double dirac_residual(const SpinorField& before, const SpinorField& after,
                      double dt, const PotentialField& pot,
                      const PhysicalParams& params) {
    if (!(before.box == after.box)) throw GridMismatch("dirac_residual: boxes differ");
    const std::int64_t n3 = before.box.n3();
    const double mc2 = params.m * params.c * params.c;

    // Midpoint field and its spectral gradient.
    Eigen::Matrix<cd, Eigen::Dynamic, 4> mid = 0.5 * (before.val + after.val);
    std::array<std::array<std::vector<cd>, 3>, 4> grad;
    {
        std::vector<cd> comp(n3);
        for (int c = 0; c < 4; ++c) {
            for (std::int64_t i = 0; i < n3; ++i) comp[i] = mid(i, c);
            for (int ax = 0; ax < 3; ++ax)
                grad[c][ax] = spectral_derivative(comp, before.box, ax);
        }
    }

    const GammaSet& g = gammas();
    std::array<CMat4, 3> g0gi;
    for (int i = 0; i < 3; ++i) g0gi[i] = g.gamma0 * g.gamma[i];

    double worst = 0.0;
    for (std::int64_t i = 0; i < n3; ++i) {
        const CVec4 pm = mid.row(i).transpose();
        const CVec4 dpsi_dt = (after.at(i) - before.at(i)) / dt;
        CVec4 rhs = params.c * pot.a0_at(i) * pm + mc2 * (g.gamma0 * pm);
        for (int ax = 0; ax < 3; ++ax) {
            CVec4 dp;
            for (int c = 0; c < 4; ++c) dp(c) = grad[c][ax][i];
            rhs += params.c * (g0gi[ax] * (-I * params.hbar * dp + pot.ai_at(ax, i) * pm));
        }
        const CVec4 res = I * params.hbar * dpsi_dt - rhs;
        worst = std::max(worst, res.cwiseAbs().maxCoeff());
    }
    return worst;
}

AngularResidual angular_continuity_residual(const SpinorField& before,
                                            const SpinorField& after, double dt,
                                            const PotentialField& pot,
                                            const PhysicalParams& params) {
    if (!(before.box == after.box)) throw GridMismatch("angular_continuity_residual");
    const std::int64_t n3 = before.box.n3();
    const double omega = params.omega();
    const double coh = params.c / params.hbar;

    // Majorana branch coefficients of before/after and of the midpoint gradient.
    Eigen::Matrix<cd, Eigen::Dynamic, 4> mid = 0.5 * (before.val + after.val);
    std::array<std::vector<cd>, 4> midc;
    std::array<std::array<std::vector<cd>, 3>, 4> gradc;
    {
        std::vector<cd> comp(n3);
        for (int c = 0; c < 4; ++c) {
            midc[c].resize(n3);
            for (std::int64_t i = 0; i < n3; ++i) {
                comp[i] = mid(i, c);
                midc[c][i] = comp[i];
            }
            for (int ax = 0; ax < 3; ++ax)
                gradc[c][ax] = spectral_derivative(comp, before.box, ax);
        }
    }

    CMat4 n1m[3], n3m, mm_sum = CMat4::Zero();
    for (int i = 0; i < 3; ++i) {
        n1m[i] = operator_matrix(static_cast<OperatorId>(static_cast<int>(OperatorId::n1m1) + i));
        const CMat4 mi = operator_matrix(static_cast<OperatorId>(static_cast<int>(OperatorId::m1) + i));
        mm_sum += mi * mi;
    }
    n3m = operator_matrix(OperatorId::n3);

    const auto& nodes = angular_quadrature_nodes();
    std::vector<CVec4> us(nodes.size());
    std::vector<double> sas(nodes.size());
    for (std::size_t j = 0; j < nodes.size(); ++j) {
        us[j] = basis_u(nodes[j].ang);
        sas[j] = std::sin(nodes[j].ang.alpha);
    }
    AngularResidual out;

    for (std::int64_t i = 0; i < n3; ++i) {
        const CVec4 psi_b = before.at(i), psi_a = after.at(i);
        CVec4 pm;
        for (int c = 0; c < 4; ++c) pm(c) = midc[c][i];
        Eigen::Matrix<cd, 4, 3> dpm;
        for (int c = 0; c < 4; ++c)
            for (int ax = 0; ax < 3; ++ax) dpm(c, ax) = gradc[c][ax][i];

        for (Branch br : {Branch::R, Branch::I}) {
            const double s = (br == Branch::R) ? 1.0 : -1.0;
            const Branch other = (br == Branch::R) ? Branch::I : Branch::R;

            const CVec4 xb = majorana_branch(psi_b, br);
            const CVec4 xa = majorana_branch(psi_a, br);
            const CVec4 xm = majorana_branch(pm, br);
            const CVec4 ym = majorana_branch(pm, other);
            // gradient commutes with the (real-linear) split
            Eigen::Matrix<cd, 4, 3> dxm, dym_m;
            for (int ax = 0; ax < 3; ++ax) {
                const CVec4 d = dpm.col(ax);
                dxm.col(ax) = majorana_branch(d, br);
                dym_m.col(ax) = majorana_branch(d, other);
            }

            // coefficient-level operator actions
            CVec4 trans = CVec4::Zero();   // n1 m_i d_i psi_X
            CVec4 coupA = CVec4::Zero();   // A_i n1 m_i psi_Y
            for (int ax = 0; ax < 3; ++ax) {
                trans += n1m[ax] * dxm.col(ax);
                coupA += pot.ai_at(ax, i) * (n1m[ax] * ym);
            }
            const CVec4 gam = n3m * xm;                       // n3 psi_X
            const CVec4 coup0 = (pot.a0_at(i) / 3.0) * (-(mm_sum * ym));  // -(mm/3) A0 psi_Y
            const CVec4 coup0_direct = pot.a0_at(i) * ym;

            for (std::size_t j = 0; j < nodes.size(); ++j) {
                const CVec4& u = us[j];
                const double sa = sas[j];
                const double ddt = std::real(u.transpose() * (xa - xb)) / dt;
                const double tr = std::real(u.transpose() * trans);
                const double ga = std::real(u.transpose() * gam);
                const double c0 = std::real(u.transpose() * coup0);
                const double c0d = std::real(u.transpose() * coup0_direct);
                const double cA = std::real(u.transpose() * coupA);

                const double res =
                    sa * (ddt - params.c * tr - 0.5 * omega * ga - s * coh * c0 + s * coh * cA);
                const double res_direct =
                    sa * (ddt - params.c * tr - 0.5 * omega * ga - s * coh * c0d + s * coh * cA);
                if (br == Branch::R)
                    out.resR = std::max(out.resR, std::abs(res));
                else
                    out.resI = std::max(out.resI, std::abs(res));
                out.variant_delta = std::max(out.variant_delta, std::abs(res - res_direct));
            }
        }
    }
    return out;
}

}  // namespace dirtraj
