#pragma once

#include <memory>

#include "dirtraj/field.hpp"

namespace dirtraj {

/// Initial Dirac state with analytic point evaluation; the trajectory
/// pullback needs values and gradients at arbitrary off-grid positions.
class InitialState {
  public:
    virtual ~InitialState() = default;
    virtual CVec4 psi0(const Vec3& x) const = 0;
    virtual Eigen::Matrix<cd, 4, 3> grad_psi0(const Vec3& x) const = 0;

    CVec4 phi0(const Vec3& x, Branch b) const { return majorana_branch(psi0(x), b); }
    Eigen::Matrix<cd, 4, 3> grad_phi0(const Vec3& x, Branch b) const {
        Eigen::Matrix<cd, 4, 3> g = grad_psi0(x), out;
        for (int ax = 0; ax < 3; ++ax) out.col(ax) = majorana_branch(CVec4(g.col(ax)), b);
        return out;
    }
    /// Sample the field on a grid.
    SpinorField realize(const Box& box) const;
};

/// Spatially uniform state (zero wave vector), Psi0 = amplitude.
class PlaneWaveState final : public InitialState {
  public:
    explicit PlaneWaveState(const CVec4& amplitude) : amp_(amplitude) {}
    CVec4 psi0(const Vec3&) const override { return amp_; }
    Eigen::Matrix<cd, 4, 3> grad_psi0(const Vec3&) const override {
        return Eigen::Matrix<cd, 4, 3>::Zero();
    }

  private:
    CVec4 amp_;
};

/// Psi0 = N exp(-|x-x0|^2 / (2 w^2)) exp(i k.x) P, N fixed by unit norm.
class GaussianPacketState final : public InitialState {
  public:
    GaussianPacketState(const Vec3& center, double width, const Vec3& momentum,
                        const CVec4& polarization);
    CVec4 psi0(const Vec3& x) const override;
    Eigen::Matrix<cd, 4, 3> grad_psi0(const Vec3& x) const override;
    void rescale(double s) { norm_ *= s; }

  private:
    Vec3 center_;
    double width_;
    Vec3 k_;
    CVec4 pol_;
    double norm_;
};

/// State backed by a stored grid; values/gradients by tricubic interpolation
/// of the field and its spectral gradient.
class GridState final : public InitialState {
  public:
    explicit GridState(const SpinorField& f);
    CVec4 psi0(const Vec3& x) const override;
    Eigen::Matrix<cd, 4, 3> grad_psi0(const Vec3& x) const override;

  private:
    InterpField3 values_;  // 16 channels: psi, dx psi, dy psi, dz psi
};

/// Per-node tables shared by the trajectory kernels. Node index
/// a = (ia*nb + ib)*ng + ig over the product quadrature grid.
struct AngleNodeSet {
    AngleGridDims dims;
    std::vector<AngleNode> nodes;
    std::vector<CVec4> u;                         // basis values
    std::vector<Eigen::Matrix<cd, 4, 3>> du;      // basis gradients
    std::vector<Vec3> P, Q;                       // R1(gamma) = cos(g) P + sin(g) Q
    std::vector<Mat3> A;                          // A(alpha,beta), flow-constant
    std::vector<std::array<CVec4, 3>> u_n1m;      // rows u^T (n1 m_i)
    std::vector<double> alpha_nodes;              // distinct alpha values (size na)

    int na() const { return dims.na; }
    int nb() const { return dims.nb; }
    int ng() const { return dims.ng; }
    int count() const { return dims.total(); }
    int index(int ia, int ib, int ig) const { return (ia * dims.nb + ib) * dims.ng + ig; }

    static AngleNodeSet build(const AngleGridDims& dims = AngleGridDims{});
};

/// Label grid: spatial labels on the box times the angle quadrature nodes,
/// with the initial density and its label-derivatives per (space, angle) pair.
/// Pair index p = node * ns() + s with s the flattened spatial label.
struct LabelGrid {
    Box box;
    int nlab = 8;
    Branch branch = Branch::R;
    AngleNodeSet angle;
    std::shared_ptr<const InitialState> state;

    std::vector<CVec4> phi0;                      // per spatial label
    std::vector<Eigen::Matrix<cd, 4, 3>> dphi0;   // per spatial label

    std::vector<double> psi0;                     // per pair
    std::array<std::vector<double>, 3> dpsi0_dth; // d psi0 / d theta0^r
    std::array<std::vector<double>, 3> dpsi0_dq;  // d psi0 / d q0^l
    std::vector<std::uint8_t> flag0;              // node-flagged at t = 0
    double psi0_absmax = 0.0;

    std::int64_t ns() const { return std::int64_t(nlab) * nlab * nlab; }
    std::int64_t pairs() const { return ns() * angle.count(); }
    double spacing() const { return box.L / nlab; }
    std::int64_t sidx(int jx, int jy, int jz) const {
        return (std::int64_t(jx) * nlab + jy) * nlab + jz;
    }
    Vec3 label_pos(int jx, int jy, int jz) const {
        return Vec3(-0.5 * box.L + jx * spacing(), -0.5 * box.L + jy * spacing(),
                    -0.5 * box.L + jz * spacing());
    }

    static LabelGrid build(const Box& box, int nlab, const AngleGridDims& dims,
                           Branch branch, std::shared_ptr<const InitialState> state,
                           double node_eps_rel = 1e-10);
};

}  // namespace dirtraj
