#pragma once

#include <array>
#include <functional>
#include <vector>

#include "dirtraj/types.hpp"

namespace dirtraj {

/// Point on SU(2). alpha in [0,pi], beta in [0,2pi), gamma in [0,4pi).
/// The constructor reduces beta and gamma modulo their periods; alpha is
/// reduced mod 2pi and reflected into [0,pi].
struct EulerAngles {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;

    EulerAngles() = default;
    EulerAngles(double a, double b, double g);

    bool interior(double eps = kEpsPole) const {
        return alpha > eps && alpha < M_PI - eps;
    }
};

/// The r-index runs over (alpha, beta, gamma); the i-index over space axes.
/// Entries are A_i^r = A(i, r), same for B. R = B * A^{-1} is a proper
/// rotation wherever sin(alpha) != 0.
struct AngularMatrices {
    Mat3 A;
    Mat3 B;
    Mat3 R;
};

AngularMatrices euler_matrices(const EulerAngles& ang, double eps_pole = kEpsPole);

/// Angular derivatives dA[r] = d A / d alpha^r (and likewise for B).
/// Needed by the second-order analytic operator route and identity checks.
struct AngularMatrixDerivs {
    std::array<Mat3, 3> dA;
    std::array<Mat3, 3> dB;
};

AngularMatrixDerivs euler_matrix_derivs(const EulerAngles& ang, double eps_pole = kEpsPole);

/// Spin-1/2 basis functions u_1..u_4 on SU(2).
CVec4 basis_u(const EulerAngles& ang);

/// grad(a, r) = d u_a / d alpha^r.
Eigen::Matrix<cd, 4, 3> basis_u_grad(const EulerAngles& ang);

/// hess[a](r, s) = d^2 u_a / d alpha^r d alpha^s.
std::array<Eigen::Matrix3cd, 4> basis_u_hess(const EulerAngles& ang);

/// Four complex amplitudes multiplying the basis functions.
struct SpinCoefficients {
    CVec4 c = CVec4::Zero();

    cd evaluate(const EulerAngles& ang) const { return basis_u(ang).transpose() * c; }
};

enum class OperatorId {
    M1, M2, M3,        // space-axis angular momentum, -i hbar A_i^r d_r
    N1, N2, N3,        // body-axis angular momentum, -i hbar B_i^r d_r
    m1, m2, m3,        // dimensionless 2 M_i / (i hbar)
    n1, n2, n3,        // dimensionless 2 N_i / (i hbar)
    N1M1, N1M2, N1M3,  // composite N_1 M_i
    n1m1, n1m2, n1m3,  // composite n_1 m_i  (equals -gamma^0 gamma^i)
};

/// 4x4 matrix m with (Op psi)(alpha) = u_b(alpha) m^b_a c^a on the spin-1/2
/// subspace. Row index b, column index a.
CMat4 operator_matrix(OperatorId op, double hbar = 1.0);

/// Differential route: apply the operator to c^a u_a at the given angles via
/// analytic derivatives of the basis functions. Agrees with the matrix route
/// to ~1e-10. Throws PoleSingularity within eps_pole of alpha = 0 or pi.
cd apply_operator_analytic(OperatorId op, const SpinCoefficients& c,
                           const EulerAngles& ang, double hbar = 1.0,
                           double eps_pole = kEpsPole);

/// Product quadrature on SU(2): 8-node Gauss-Legendre in cos(alpha),
/// 8-node trapezoid in beta, 16-node trapezoid in gamma over [0, 4pi).
/// Exact for the half-angle harmonics appearing in spin-1/2 integrands.
struct AngleNode {
    EulerAngles ang;
    double weight;
};

const std::vector<AngleNode>& angular_quadrature_nodes();

cd angular_quadrature(const std::function<cd(const EulerAngles&)>& f);

/// Numbers of nodes per axis in the product rule.
struct AngleGridDims {
    int na = 8;
    int nb = 8;
    int ng = 16;
    int total() const { return na * nb * ng; }
};

std::vector<AngleNode> make_angle_nodes(const AngleGridDims& dims);

struct IdentityCheck {
    std::string name;
    double residual;
    double tolerance;
    bool pass() const { return residual <= tolerance; }
};

struct IdentityReport {
    std::vector<IdentityCheck> checks;
    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass()) return false;
        return true;
    }
};

/// Commutators, anticommutators, divergence identities, the R-transport
/// relation and the first-order reduction of n_1 m_i, each as a residual.
IdentityReport verify_identities(unsigned seed = 12345);

}  // namespace dirtraj
