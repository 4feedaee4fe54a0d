#pragma once

#include <map>
#include <optional>

#include "dirtraj/labels.hpp"
#include "dirtraj/reference_solver.hpp"

namespace dirtraj {

/// Rigid angle drift: (theta1, theta2, theta3 - omega t), gamma mod 4pi.
EulerAngles angle_flow(const EulerAngles& theta0, double t, const PhysicalParams& params);

/// U(t) = cos(omega t/2) I - i g0 sin(omega t/2); unitary, U(t1)U(t2)=U(t1+t2).
CMat4 evolution_operator(double t, const PhysicalParams& params);

/// Translational velocity of the congruence at a configuration point:
/// v^i = -c (n1 m_i psi)/psi evaluated on psi = phi^a u_a. Real for Majorana
/// coefficients. Throws NodeSingularity when |psi| <= node_eps.
Vec3 velocity(const CVec4& phi, const EulerAngles& ang, const PhysicalParams& params,
              double node_eps = 0.0);

/// Lower-bound form c sqrt(1 + |R1 x (m psi)/psi|^2); equals |velocity| on
/// spin-1/2 states.
double speed_via_bound_formula(const CVec4& phi, const EulerAngles& ang,
                               const PhysicalParams& params, double node_eps = 0.0);

/// Closed-form plane-wave trajectory for Psi0 = e1: fixed-radius circle in the
/// x1 x2 plane plus an oscillation along x3. Throws SecantSingularity at
/// phi_plus = pi/2 mod pi.
Vec3 plane_wave_paths(const Vec3& q0, const EulerAngles& theta0, double t,
                      const PhysicalParams& params);
Vec3 plane_wave_velocity(const EulerAngles& theta0, double t, const PhysicalParams& params);
Vec3 plane_wave_dq_dtheta3(const EulerAngles& theta0, double t, const PhysicalParams& params);

enum class IntegrationMode { validation, self_contained };

/// Per-pair trajectory flags.
enum BundleFlag : std::uint8_t {
    kFlagNode = 1,       // frozen at a node of the density
    kFlagJacobian = 2,   // Jacobian left (1e-6, inf)
    kFlagGeometry = 4,   // degraded differencing stencil
};

struct BundleSnapshot {
    double t = 0.0;
    // Per pair, node-major layout p = node*ns + s: displacement q - q0,
    // velocity, transported Jacobian, transported density, flags.
    std::vector<double> dx, dy, dz;
    std::vector<double> vx, vy, vz;
    std::vector<double> J;
    std::vector<double> psi;
    std::vector<std::uint8_t> flags;
};

struct TrajectoryBundle {
    PhysicalParams params;
    IntegrationMode mode = IntegrationMode::self_contained;
    Branch branch = Branch::R;
    double dt = 0.0;
    double T = 0.0;
    std::shared_ptr<const LabelGrid> labels;
    std::vector<BundleSnapshot> snaps;

    const BundleSnapshot& at_time(double t, double tol = 1e-9) const;
    const BundleSnapshot& final_snapshot() const { return snaps.back(); }

    /// Fraction of pairs carrying no flag in the final snapshot.
    double kept_fraction() const;
    /// Max of |psi J / psi0 - 1| over kept pairs in the given snapshot.
    double conservation_residual(const BundleSnapshot& s) const;
};

/// Spectral-oracle slices for validation-mode integration: Majorana branch
/// coefficients and their spatial gradients on an upsampled grid, cached at
/// quantized times.
class OracleSlices {
  public:
    OracleSlices(SpinorField initial, const PhysicalParams& params, Branch branch,
                 double tquant, int upsample = 2);
    const InterpField3& slice(double t);
    const Box& fine_box() const { return fine_; }

  private:
    SpinorField base_;
    PhysicalParams params_;
    Branch branch_;
    double tquant_;
    int upsample_;
    Box fine_;
    std::map<long long, std::shared_ptr<InterpField3>> cache_;
};

struct IntegrateOptions {
    int workers = 0;          // 0: hardware concurrency
    int snapshot_stride = 0;  // 0: only first and last
    double node_eps_rel = 1e-10;
    OracleSlices* oracle = nullptr;  // required in validation mode
    /// Also record the oracle-field density along paths (diagnostic).
    bool record_oracle_density = false;
    std::vector<double>* oracle_density_out = nullptr;
};

/// Material integration of one Majorana congruence. RK4 in time; label-grid
/// deformation data refreshed once per step from the current bundle state and
/// the angle-flow rotation advanced analytically within stages. Throws
/// StepTooLarge if dt > 0.05/omega.
TrajectoryBundle integrate_bundle(std::shared_ptr<const LabelGrid> labels,
                                  const PhysicalParams& params, IntegrationMode mode,
                                  double dt, double T, IntegrateOptions opts = {});

struct DeformationReport {
    double adjoint_residual = 0.0;       // D adj(D)^T = det I, algebraic
    double cofactor_divergence = 0.0;    // d J^nu_mu / d q0^nu = 0, differenced
    double det_formula_residual = 0.0;   // eps-eps expansion vs direct 3x3 det
    double transported_vs_geometric = 0.0;  // |J_ode - det(D_qq)| over kept pairs
};

/// Deformation identities on one snapshot, all via label-grid differences.
DeformationReport deformation_identities_check(const TrajectoryBundle& bundle,
                                               const BundleSnapshot& snap);

}  // namespace dirtraj
