#include "dirtraj/labels.hpp"

namespace dirtraj {

SpinorField InitialState::realize(const Box& box) const {
    SpinorField f = SpinorField::zero(box, 0.0);
    for (int ix = 0; ix < box.n; ++ix)
        for (int iy = 0; iy < box.n; ++iy)
            for (int iz = 0; iz < box.n; ++iz)
                f.set(box.idx(ix, iy, iz), psi0(box.pos(ix, iy, iz)));
    return f;
}

GaussianPacketState::GaussianPacketState(const Vec3& center, double width,
                                         const Vec3& momentum, const CVec4& polarization)
    : center_(center), width_(width), k_(momentum), pol_(polarization) {
    norm_ = std::pow(M_PI, -0.75) * std::pow(width, -1.5) / pol_.norm();
}

CVec4 GaussianPacketState::psi0(const Vec3& x) const {
    const Vec3 d = x - center_;
    const double env = std::exp(-d.squaredNorm() / (2.0 * width_ * width_));
    const cd phase = std::exp(cd(0.0, k_.dot(x)));
    return norm_ * env * phase * pol_;
}

Eigen::Matrix<cd, 4, 3> GaussianPacketState::grad_psi0(const Vec3& x) const {
    const CVec4 p = psi0(x);
    const Vec3 d = x - center_;
    Eigen::Matrix<cd, 4, 3> g;
    for (int ax = 0; ax < 3; ++ax)
        g.col(ax) = p * cd(-d(ax) / (width_ * width_), k_(ax));
    return g;
}

GridState::GridState(const SpinorField& f) {
    values_.init(f.box, 16);
    const std::int64_t n3 = f.box.n3();
    std::vector<cd> comp(n3);
    for (int c = 0; c < 4; ++c) {
        for (std::int64_t i = 0; i < n3; ++i) {
            comp[i] = f.val(i, c);
            values_.data[std::size_t(i) * 16 + c] = comp[i];
        }
        for (int ax = 0; ax < 3; ++ax) {
            const std::vector<cd> d = spectral_derivative(comp, f.box, ax);
            for (std::int64_t i = 0; i < n3; ++i)
                values_.data[std::size_t(i) * 16 + 4 * (ax + 1) + c] = d[i];
        }
    }
}

CVec4 GridState::psi0(const Vec3& x) const {
    cd out[16];
    values_.sample_cubic(x, out);
    return CVec4(out[0], out[1], out[2], out[3]);
}

Eigen::Matrix<cd, 4, 3> GridState::grad_psi0(const Vec3& x) const {
    cd out[16];
    values_.sample_cubic(x, out);
    Eigen::Matrix<cd, 4, 3> g;
    for (int ax = 0; ax < 3; ++ax)
        for (int c = 0; c < 4; ++c) g(c, ax) = out[4 * (ax + 1) + c];
    return g;
}

AngleNodeSet AngleNodeSet::build(const AngleGridDims& dims) {
    AngleNodeSet s;
    s.dims = dims;
    s.nodes = make_angle_nodes(dims);
    const int n = s.count();
    s.u.resize(n);
    s.du.resize(n);
    s.P.resize(n);
    s.Q.resize(n);
    s.A.resize(n);
    s.u_n1m.resize(n);
    s.alpha_nodes.resize(dims.na);

    CMat4 n1m[3];
    for (int i = 0; i < 3; ++i)
        n1m[i] = operator_matrix(static_cast<OperatorId>(static_cast<int>(OperatorId::n1m1) + i));

    for (int a = 0; a < n; ++a) {
        const EulerAngles& ang = s.nodes[a].ang;
        s.u[a] = basis_u(ang);
        s.du[a] = basis_u_grad(ang);
        const AngularMatrices m = euler_matrices(ang);
        s.A[a] = m.A;
        const Mat3 Ainv = m.A.inverse();
        const double sa = std::sin(ang.alpha);
        const double csca = 1.0 / sa, cota = std::cos(ang.alpha) / sa;
        for (int j = 0; j < 3; ++j) {
            s.P[a](j) = -Ainv(0, j);
            s.Q[a](j) = -csca * Ainv(1, j) + cota * Ainv(2, j);
        }
        for (int i = 0; i < 3; ++i)
            s.u_n1m[a][i] = (s.u[a].transpose() * n1m[i]).transpose();
    }
    for (int ia = 0; ia < dims.na; ++ia)
        s.alpha_nodes[ia] = s.nodes[s.index(ia, 0, 0)].ang.alpha;
    return s;
}

LabelGrid LabelGrid::build(const Box& box, int nlab, const AngleGridDims& dims,
                           Branch branch, std::shared_ptr<const InitialState> state,
                           double node_eps_rel) {
    LabelGrid g;
    g.box = box;
    g.nlab = nlab;
    g.branch = branch;
    g.angle = AngleNodeSet::build(dims);
    g.state = state;

    const std::int64_t ns = g.ns();
    g.phi0.resize(ns);
    g.dphi0.resize(ns);
    for (int jx = 0; jx < nlab; ++jx)
        for (int jy = 0; jy < nlab; ++jy)
            for (int jz = 0; jz < nlab; ++jz) {
                const std::int64_t si = g.sidx(jx, jy, jz);
                const Vec3 x = g.label_pos(jx, jy, jz);
                g.phi0[si] = state->phi0(x, branch);
                g.dphi0[si] = state->grad_phi0(x, branch);
            }

    const std::int64_t np = g.pairs();
    g.psi0.resize(np);
    for (int r = 0; r < 3; ++r) {
        g.dpsi0_dth[r].resize(np);
        g.dpsi0_dq[r].resize(np);
    }
    g.flag0.assign(np, 0);

    double absmax = 0.0;
    for (int a = 0; a < g.angle.count(); ++a) {
        const CVec4& u = g.angle.u[a];
        const auto& du = g.angle.du[a];
        for (std::int64_t si = 0; si < ns; ++si) {
            const std::int64_t p = std::int64_t(a) * ns + si;
            g.psi0[p] = std::real(u.transpose() * g.phi0[si]);
            for (int r = 0; r < 3; ++r) {
                g.dpsi0_dth[r][p] = std::real(du.col(r).transpose() * g.phi0[si]);
                g.dpsi0_dq[r][p] = std::real(u.transpose() * g.dphi0[si].col(r));
            }
            absmax = std::max(absmax, std::abs(g.psi0[p]));
        }
    }
    g.psi0_absmax = absmax;
    const double eps = node_eps_rel * absmax;
    for (std::int64_t p = 0; p < np; ++p)
        if (std::abs(g.psi0[p]) <= eps) g.flag0[p] = 1;
    return g;
}

}  // namespace dirtraj
