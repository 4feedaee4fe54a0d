#include "dirtraj/angular.hpp"

#include <cmath>
#include <random>

namespace dirtraj {

namespace {

double wrap_period(double x, double period) {
    double y = std::fmod(x, period);
    if (y < 0.0) y += period;
    return y;
}

constexpr cd I{0.0, 1.0};

}  // namespace

EulerAngles::EulerAngles(double a, double b, double g) {
    alpha = wrap_period(a, 2.0 * M_PI);
    if (alpha > M_PI) alpha = 2.0 * M_PI - alpha;
    beta = wrap_period(b, 2.0 * M_PI);
    gamma = wrap_period(g, 4.0 * M_PI);
}

AngularMatrices euler_matrices(const EulerAngles& ang, double eps_pole) {
    const double sa = std::sin(ang.alpha);
    if (std::abs(sa) < eps_pole)
        throw PoleSingularity("euler_matrices: sin(alpha) = " + std::to_string(sa));
    const double cota = std::cos(ang.alpha) / sa;
    const double csca = 1.0 / sa;
    const double cb = std::cos(ang.beta), sb = std::sin(ang.beta);
    const double cg = std::cos(ang.gamma), sg = std::sin(ang.gamma);

    AngularMatrices m;
    m.A << -cb, sb * cota, -sb * csca,
            sb, cb * cota, -cb * csca,
           0.0, -1.0, 0.0;
    m.B << -cg, -sg * csca, sg * cota,
           -sg,  cg * csca, -cg * cota,
           0.0, 0.0, -1.0;
    m.R = m.B * m.A.inverse();
    return m;
}

AngularMatrixDerivs euler_matrix_derivs(const EulerAngles& ang, double eps_pole) {
    const double sa = std::sin(ang.alpha);
    if (std::abs(sa) < eps_pole)
        throw PoleSingularity("euler_matrix_derivs: sin(alpha) = " + std::to_string(sa));
    const double ca = std::cos(ang.alpha);
    const double cota = ca / sa, csca = 1.0 / sa;
    // d cot / d alpha = -csc^2, d csc / d alpha = -csc * cot
    const double dcot = -csca * csca;
    const double dcsc = -csca * cota;
    const double cb = std::cos(ang.beta), sb = std::sin(ang.beta);
    const double cg = std::cos(ang.gamma), sg = std::sin(ang.gamma);

    AngularMatrixDerivs d;
    d.dA[0] << 0.0, sb * dcot, -sb * dcsc,
               0.0, cb * dcot, -cb * dcsc,
               0.0, 0.0, 0.0;
    d.dA[1] << sb, cb * cota, -cb * csca,
               cb, -sb * cota, sb * csca,
               0.0, 0.0, 0.0;
    d.dA[2].setZero();

    d.dB[0] << 0.0, -sg * dcsc, sg * dcot,
               0.0,  cg * dcsc, -cg * dcot,
               0.0, 0.0, 0.0;
    d.dB[1].setZero();
    d.dB[2] << sg, -cg * csca, cg * cota,
              -cg, -sg * csca, sg * cota,
               0.0, 0.0, 0.0;
    return d;
}

CVec4 basis_u(const EulerAngles& ang) {
    const double pref = 1.0 / (2.0 * std::sqrt(2.0) * M_PI);
    const double ca = std::cos(ang.alpha / 2.0), sa = std::sin(ang.alpha / 2.0);
    const cd ebg = std::exp(-I * (ang.beta + ang.gamma) / 2.0);
    const cd ebmg = std::exp(I * (ang.beta - ang.gamma) / 2.0);
    CVec4 u;
    u(0) = pref * ca * ebg;
    u(1) = -I * pref * sa * ebmg;
    u(2) = -I * pref * sa * std::conj(ebmg);
    u(3) = pref * ca * std::conj(ebg);
    return u;
}

Eigen::Matrix<cd, 4, 3> basis_u_grad(const EulerAngles& ang) {
    const CVec4 u = basis_u(ang);
    const double pref = 1.0 / (2.0 * std::sqrt(2.0) * M_PI);
    const double ca = std::cos(ang.alpha / 2.0), sa = std::sin(ang.alpha / 2.0);
    const cd ebg = std::exp(-I * (ang.beta + ang.gamma) / 2.0);
    const cd ebmg = std::exp(I * (ang.beta - ang.gamma) / 2.0);

    Eigen::Matrix<cd, 4, 3> g;
    // alpha derivatives swap cos<->sin of the half angle.
    g(0, 0) = -0.5 * pref * sa * ebg;
    g(1, 0) = -I * 0.5 * pref * ca * ebmg;
    g(2, 0) = -I * 0.5 * pref * ca * std::conj(ebmg);
    g(3, 0) = -0.5 * pref * sa * std::conj(ebg);
    // beta and gamma derivatives multiply by the phase rates.
    g(0, 1) = -0.5 * I * u(0);
    g(1, 1) = 0.5 * I * u(1);
    g(2, 1) = -0.5 * I * u(2);
    g(3, 1) = 0.5 * I * u(3);
    g(0, 2) = -0.5 * I * u(0);
    g(1, 2) = -0.5 * I * u(1);
    g(2, 2) = 0.5 * I * u(2);
    g(3, 2) = 0.5 * I * u(3);
    return g;
}

std::array<Eigen::Matrix3cd, 4> basis_u_hess(const EulerAngles& ang) {
    const CVec4 u = basis_u(ang);
    const Eigen::Matrix<cd, 4, 3> g = basis_u_grad(ang);
    // Phase rates: u_a ~ exp(i (pb_a beta + pg_a gamma) / 2) with
    const double pb[4] = {-1.0, 1.0, -1.0, 1.0};
    const double pg[4] = {-1.0, -1.0, 1.0, 1.0};

    std::array<Eigen::Matrix3cd, 4> h;
    for (int a = 0; a < 4; ++a) {
        Eigen::Matrix3cd& H = h[a];
        H(0, 0) = -0.25 * u(a);  // half-angle trig differentiates twice
        H(0, 1) = H(1, 0) = 0.5 * I * pb[a] * g(a, 0);
        H(0, 2) = H(2, 0) = 0.5 * I * pg[a] * g(a, 0);
        H(1, 1) = -0.25 * pb[a] * pb[a] * u(a);
        H(1, 2) = H(2, 1) = -0.25 * pb[a] * pg[a] * u(a);
        H(2, 2) = -0.25 * pg[a] * pg[a] * u(a);
    }
    return h;
}

namespace {

// Dimensionless tables: (op u_a) = u_b T^b_a, row b, column a.
CMat4 table_m(int i) {
    CMat4 t = CMat4::Zero();
    switch (i) {
        case 0:
            t(0, 1) = -I; t(1, 0) = -I; t(2, 3) = -I; t(3, 2) = -I;
            break;
        case 1:
            t(0, 1) = -1; t(1, 0) = 1; t(2, 3) = -1; t(3, 2) = 1;
            break;
        default:
            t(0, 0) = -I; t(1, 1) = I; t(2, 2) = -I; t(3, 3) = I;
            break;
    }
    return t;
}

CMat4 table_n(int i) {
    CMat4 t = CMat4::Zero();
    switch (i) {
        case 0:
            t(0, 2) = -I; t(1, 3) = -I; t(2, 0) = -I; t(3, 1) = -I;
            break;
        case 1:
            t(0, 2) = 1; t(1, 3) = 1; t(2, 0) = -1; t(3, 1) = -1;
            break;
        default:
            t(0, 0) = -I; t(1, 1) = -I; t(2, 2) = I; t(3, 3) = I;
            break;
    }
    return t;
}

}  // namespace

CMat4 operator_matrix(OperatorId op, double hbar) {
    const cd ih2 = I * hbar / 2.0;
    switch (op) {
        case OperatorId::M1: return ih2 * table_m(0);
        case OperatorId::M2: return ih2 * table_m(1);
        case OperatorId::M3: return ih2 * table_m(2);
        case OperatorId::N1: return ih2 * table_n(0);
        case OperatorId::N2: return ih2 * table_n(1);
        case OperatorId::N3: return ih2 * table_n(2);
        case OperatorId::m1: return table_m(0);
        case OperatorId::m2: return table_m(1);
        case OperatorId::m3: return table_m(2);
        case OperatorId::n1: return table_n(0);
        case OperatorId::n2: return table_n(1);
        case OperatorId::n3: return table_n(2);
        case OperatorId::N1M1: return (ih2 * table_n(0)) * (ih2 * table_m(0));
        case OperatorId::N1M2: return (ih2 * table_n(0)) * (ih2 * table_m(1));
        case OperatorId::N1M3: return (ih2 * table_n(0)) * (ih2 * table_m(2));
        case OperatorId::n1m1: return table_n(0) * table_m(0);
        case OperatorId::n1m2: return table_n(0) * table_m(1);
        case OperatorId::n1m3: return table_n(0) * table_m(2);
    }
    throw Error("operator_matrix: bad id");
}

namespace {

struct OpSpec {
    // first factor: 0 = none, 1 = N1-type row, 2 = n1-type row
    int outer;            // 0 none, 1 scaled by -i hbar, 2 scaled by -2
    int inner_i;          // which row of the inner matrix family
    bool inner_is_A;      // inner family: A (M-type) or B (N-type)
    cd inner_scale;       // -i hbar or -2
};

cd apply_first_order(const Mat3& coeff, int i, cd scale, const SpinCoefficients& c,
                     const EulerAngles& ang) {
    const Eigen::Matrix<cd, 4, 3> g = basis_u_grad(ang);
    cd out = 0.0;
    for (int r = 0; r < 3; ++r) {
        cd dpsi = 0.0;
        for (int a = 0; a < 4; ++a) dpsi += c.c(a) * g(a, r);
        out += coeff(i, r) * dpsi;
    }
    return scale * out;
}

// outer(i_out) inner(i_in) psi with outer row from B (n/N_1 type), inner from A.
cd apply_second_order(int i_out, const Mat3& Bm, const std::array<Mat3, 3>& dB_unused,
                      int i_in, const Mat3& Am, const std::array<Mat3, 3>& dA,
                      cd outer_scale, cd inner_scale, const SpinCoefficients& c,
                      const EulerAngles& ang) {
    (void)dB_unused;
    const Eigen::Matrix<cd, 4, 3> g = basis_u_grad(ang);
    const auto h = basis_u_hess(ang);
    // outer_s B_{i_out}^s d_s [ inner_scale A_{i_in}^r d_r psi ]
    cd out = 0.0;
    for (int s = 0; s < 3; ++s) {
        cd term = 0.0;
        for (int r = 0; r < 3; ++r) {
            cd dpsi = 0.0, d2psi = 0.0;
            for (int a = 0; a < 4; ++a) {
                dpsi += c.c(a) * g(a, r);
                d2psi += c.c(a) * h[a](s, r);
            }
            term += dA[s](i_in, r) * dpsi + Am(i_in, r) * d2psi;
        }
        out += Bm(i_out, s) * term;
    }
    return outer_scale * inner_scale * out;
}

}  // namespace

cd apply_operator_analytic(OperatorId op, const SpinCoefficients& c,
                           const EulerAngles& ang, double hbar, double eps_pole) {
    const AngularMatrices m = euler_matrices(ang, eps_pole);
    const cd mih = -I * hbar;

    switch (op) {
        case OperatorId::M1: return apply_first_order(m.A, 0, mih, c, ang);
        case OperatorId::M2: return apply_first_order(m.A, 1, mih, c, ang);
        case OperatorId::M3: return apply_first_order(m.A, 2, mih, c, ang);
        case OperatorId::N1: return apply_first_order(m.B, 0, mih, c, ang);
        case OperatorId::N2: return apply_first_order(m.B, 1, mih, c, ang);
        case OperatorId::N3: return apply_first_order(m.B, 2, mih, c, ang);
        case OperatorId::m1: return apply_first_order(m.A, 0, -2.0, c, ang);
        case OperatorId::m2: return apply_first_order(m.A, 1, -2.0, c, ang);
        case OperatorId::m3: return apply_first_order(m.A, 2, -2.0, c, ang);
        case OperatorId::n1: return apply_first_order(m.B, 0, -2.0, c, ang);
        case OperatorId::n2: return apply_first_order(m.B, 1, -2.0, c, ang);
        case OperatorId::n3: return apply_first_order(m.B, 2, -2.0, c, ang);
        default: break;
    }

    const AngularMatrixDerivs d = euler_matrix_derivs(ang, eps_pole);
    int i = 0;
    cd outer_scale, inner_scale;
    switch (op) {
        case OperatorId::N1M1: i = 0; outer_scale = mih; inner_scale = mih; break;
        case OperatorId::N1M2: i = 1; outer_scale = mih; inner_scale = mih; break;
        case OperatorId::N1M3: i = 2; outer_scale = mih; inner_scale = mih; break;
        case OperatorId::n1m1: i = 0; outer_scale = -2.0; inner_scale = -2.0; break;
        case OperatorId::n1m2: i = 1; outer_scale = -2.0; inner_scale = -2.0; break;
        case OperatorId::n1m3: i = 2; outer_scale = -2.0; inner_scale = -2.0; break;
        default: throw Error("apply_operator_analytic: bad id");
    }
    return apply_second_order(0, m.B, d.dB, i, m.A, d.dA, outer_scale, inner_scale, c, ang);
}

namespace {

// 8-point Gauss-Legendre abscissas/weights on [-1, 1].
constexpr double kGL8x[8] = {
    -0.9602898564975362, -0.7966664774136267, -0.5255324099163290,
    -0.1834346424956498,  0.1834346424956498,  0.5255324099163290,
     0.7966664774136267,  0.9602898564975362};
constexpr double kGL8w[8] = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
    0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
    0.2223810344533745, 0.1012285362903763};

}  // namespace

std::vector<AngleNode> make_angle_nodes(const AngleGridDims& dims) {
    std::vector<double> xa(dims.na), wa(dims.na);
    if (dims.na == 8) {
        for (int i = 0; i < 8; ++i) { xa[i] = kGL8x[i]; wa[i] = kGL8w[i]; }
    } else {
        // Newton iteration on Legendre P_n for non-default node counts.
        const int n = dims.na;
        for (int k = 0; k < n; ++k) {
            double x = std::cos(M_PI * (k + 0.75) / (n + 0.5));
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (int j = 2; j <= n; ++j) {
                    double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
                    p0 = p1; p1 = p2;
                }
                double dp = n * (x * p1 - p0) / (x * x - 1.0);
                double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-15) break;
            }
            double p0 = 1.0, p1 = x;
            for (int j = 2; j <= n; ++j) {
                double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
                p0 = p1; p1 = p2;
            }
            double dp = n * (x * p1 - p0) / (x * x - 1.0);
            xa[n - 1 - k] = x;
            wa[n - 1 - k] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
    }

    std::vector<AngleNode> nodes;
    nodes.reserve(dims.total());
    const double wb = 2.0 * M_PI / dims.nb;
    const double wg = 4.0 * M_PI / dims.ng;
    for (int ia = 0; ia < dims.na; ++ia) {
        const double alpha = std::acos(xa[ia]);
        for (int ib = 0; ib < dims.nb; ++ib) {
            for (int ig = 0; ig < dims.ng; ++ig) {
                AngleNode n;
                n.ang.alpha = alpha;
                n.ang.beta = 2.0 * M_PI * ib / dims.nb;
                n.ang.gamma = 4.0 * M_PI * ig / dims.ng;
                n.weight = wa[ia] * wb * wg;
                nodes.push_back(n);
            }
        }
    }
    return nodes;
}

const std::vector<AngleNode>& angular_quadrature_nodes() {
    static const std::vector<AngleNode> nodes = make_angle_nodes(AngleGridDims{});
    return nodes;
}

cd angular_quadrature(const std::function<cd(const EulerAngles&)>& f) {
    cd acc = 0.0;
    for (const AngleNode& n : angular_quadrature_nodes()) acc += n.weight * f(n.ang);
    return acc;
}

namespace {

double eps_lc(int i, int j, int k) {
    return ((i - j) * (j - k) * (k - i)) / 2.0;
}

}  // namespace

IdentityReport verify_identities(unsigned seed) {
    IdentityReport rep;
    const double hbar = 1.0;
    const cd ih = cd(0.0, hbar);

    CMat4 M[3], N[3];
    for (int i = 0; i < 3; ++i) {
        M[i] = operator_matrix(static_cast<OperatorId>(static_cast<int>(OperatorId::M1) + i), hbar);
        N[i] = operator_matrix(static_cast<OperatorId>(static_cast<int>(OperatorId::N1) + i), hbar);
    }

    double r_comm_M = 0.0, r_comm_N = 0.0, r_comm_MN = 0.0;
    double r_anti_M = 0.0, r_anti_N = 0.0;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            CMat4 cM = M[i] * M[j] - M[j] * M[i];
            CMat4 cN = N[i] * N[j] - N[j] * N[i];
            for (int k = 0; k < 3; ++k) {
                cM -= ih * eps_lc(i, j, k) * M[k];
                cN += ih * eps_lc(i, j, k) * N[k];
            }
            r_comm_M = std::max(r_comm_M, cM.cwiseAbs().maxCoeff());
            r_comm_N = std::max(r_comm_N, cN.cwiseAbs().maxCoeff());
            r_comm_MN = std::max(r_comm_MN, (M[i] * N[j] - N[j] * M[i]).cwiseAbs().maxCoeff());
            const double d = (i == j) ? 1.0 : 0.0;
            CMat4 aM = M[i] * M[j] + M[j] * M[i] - 2.0 * (hbar / 2.0) * (hbar / 2.0) * d * CMat4::Identity();
            CMat4 aN = N[i] * N[j] + N[j] * N[i] - 2.0 * (hbar / 2.0) * (hbar / 2.0) * d * CMat4::Identity();
            r_anti_M = std::max(r_anti_M, aM.cwiseAbs().maxCoeff());
            r_anti_N = std::max(r_anti_N, aN.cwiseAbs().maxCoeff());
        }
    }
    rep.checks.push_back({"commutator_M_ordinary", r_comm_M, 1e-14});
    rep.checks.push_back({"commutator_N_anomalous", r_comm_N, 1e-14});
    rep.checks.push_back({"commutator_MN_zero", r_comm_MN, 1e-14});
    rep.checks.push_back({"anticommutator_M", r_anti_M, 1e-14});
    rep.checks.push_back({"anticommutator_N", r_anti_N, 1e-14});

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ua(0.15, M_PI - 0.15);
    std::uniform_real_distribution<double> ub(0.0, 2.0 * M_PI);
    std::uniform_real_distribution<double> ug(0.0, 4.0 * M_PI);

    // Divergence identity d_r(sin a A_i^r) = 0 by centered finite differences.
    double r_div = 0.0;
    const double h = 1e-5;
    for (int s = 0; s < 50; ++s) {
        EulerAngles ang;
        ang.alpha = ua(rng); ang.beta = ub(rng); ang.gamma = ug(rng);
        for (int i = 0; i < 3; ++i) {
            double divA = 0.0, divB = 0.0;
            for (int r = 0; r < 3; ++r) {
                EulerAngles ap = ang, am = ang;
                (r == 0 ? ap.alpha : r == 1 ? ap.beta : ap.gamma) += h;
                (r == 0 ? am.alpha : r == 1 ? am.beta : am.gamma) -= h;
                const AngularMatrices mp = euler_matrices(ap), mm = euler_matrices(am);
                divA += (std::sin(ap.alpha) * mp.A(i, r) - std::sin(am.alpha) * mm.A(i, r)) / (2.0 * h);
                divB += (std::sin(ap.alpha) * mp.B(i, r) - std::sin(am.alpha) * mm.B(i, r)) / (2.0 * h);
            }
            r_div = std::max(r_div, std::max(std::abs(divA), std::abs(divB)));
        }
    }
    rep.checks.push_back({"divergence_sinA_sinB", r_div, 1e-8});

    // M_i R_lj = i hbar eps_ijk R_lk with analytic dR = dB A^-1 - B A^-1 dA A^-1.
    double r_eq18 = 0.0;
    for (int s = 0; s < 20; ++s) {
        EulerAngles ang;
        ang.alpha = ua(rng); ang.beta = ub(rng); ang.gamma = ug(rng);
        const AngularMatrices m = euler_matrices(ang);
        const AngularMatrixDerivs d = euler_matrix_derivs(ang);
        const Mat3 Ainv = m.A.inverse();
        std::array<Mat3, 3> dR;
        for (int r = 0; r < 3; ++r) dR[r] = d.dB[r] * Ainv - m.B * Ainv * d.dA[r] * Ainv;
        for (int i = 0; i < 3; ++i) {
            for (int l = 0; l < 3; ++l) {
                for (int j = 0; j < 3; ++j) {
                    cd lhs = 0.0;
                    for (int r = 0; r < 3; ++r) lhs += -ih * m.A(i, r) * dR[r](l, j);
                    cd rhs = 0.0;
                    for (int k = 0; k < 3; ++k) rhs += ih * eps_lc(i, j, k) * m.R(l, k);
                    r_eq18 = std::max(r_eq18, std::abs(lhs - rhs));
                }
            }
        }
    }
    rep.checks.push_back({"M_transport_of_R", r_eq18, 1e-10});

    // Reduction n1 m_i = -R_1i - eps_ijk R_1j m_k on the basis functions.
    double r_red = 0.0;
    for (int s = 0; s < 20; ++s) {
        EulerAngles ang;
        ang.alpha = ua(rng); ang.beta = ub(rng); ang.gamma = ug(rng);
        const AngularMatrices m = euler_matrices(ang);
        for (int a = 0; a < 4; ++a) {
            SpinCoefficients c;
            c.c = CVec4::Unit(a);
            const cd psi = c.evaluate(ang);
            for (int i = 0; i < 3; ++i) {
                const cd lhs = apply_operator_analytic(
                    static_cast<OperatorId>(static_cast<int>(OperatorId::n1m1) + i), c, ang);
                cd rhs = -m.R(0, i) * psi;
                for (int j = 0; j < 3; ++j) {
                    for (int k = 0; k < 3; ++k) {
                        const double e = eps_lc(i, j, k);
                        if (e == 0.0) continue;
                        rhs -= e * m.R(0, j) *
                               apply_operator_analytic(
                                   static_cast<OperatorId>(static_cast<int>(OperatorId::m1) + k), c, ang);
                    }
                }
                r_red = std::max(r_red, std::abs(lhs - rhs));
            }
        }
    }
    rep.checks.push_back({"reduction_n1m_first_order", r_red, 1e-10});

    // Orthonormality of the basis under the product quadrature.
    double r_orth = 0.0;
    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
            const cd q = angular_quadrature([&](const EulerAngles& ang) {
                const CVec4 u = basis_u(ang);
                return std::conj(u(a)) * u(b);
            });
            r_orth = std::max(r_orth, std::abs(q - (a == b ? 1.0 : 0.0)));
        }
    }
    rep.checks.push_back({"orthonormality", r_orth, 1e-12});

    return rep;
}

}  // namespace dirtraj
