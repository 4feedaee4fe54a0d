#pragma once

#include <cstdint>
#include <vector>

#include "dirtraj/spinor.hpp"
#include "dirtraj/types.hpp"

namespace dirtraj {

/// Uniform periodic box, n points per axis, edge length L, corner at -L/2.
struct Box {
    int n = 32;
    double L = 20.0;

    std::int64_t n3() const { return std::int64_t(n) * n * n; }
    double h() const { return L / n; }
    std::int64_t idx(int ix, int iy, int iz) const {
        return (std::int64_t(ix) * n + iy) * n + iz;
    }
    Vec3 pos(int ix, int iy, int iz) const {
        return Vec3(-0.5 * L + ix * h(), -0.5 * L + iy * h(), -0.5 * L + iz * h());
    }
    /// FFT wavenumber for bin j (Nyquist bin kept on the positive side).
    double wavenumber(int j) const {
        const int jj = (j <= n / 2) ? j : j - n;
        return 2.0 * M_PI * jj / L;
    }
    bool operator==(const Box& o) const { return n == o.n && L == o.L; }
};

/// Complex 4-spinor sampled on the box; component c of point (ix,iy,iz) is
/// val(idx, c) with each component contiguous in memory.
struct SpinorField {
    Box box;
    double time = 0.0;
    Eigen::Matrix<cd, Eigen::Dynamic, 4> val;

    static SpinorField zero(const Box& b, double t = 0.0) {
        SpinorField f;
        f.box = b;
        f.time = t;
        f.val = Eigen::Matrix<cd, Eigen::Dynamic, 4>::Zero(b.n3(), 4);
        return f;
    }
    CVec4 at(std::int64_t i) const { return val.row(i).transpose(); }
    void set(std::int64_t i, const CVec4& v) { val.row(i) = v.transpose(); }

    /// Discrete integral of Psi^dag Psi over the box.
    double norm_sq() const { return val.squaredNorm() * box.h() * box.h() * box.h(); }
};

/// External 4-potential (c A_0, A_i); constant unless per-point arrays given.
struct PotentialField {
    double A0 = 0.0;
    Vec3 A = Vec3::Zero();
    std::vector<double> A0_grid;               // optional, size n3
    std::vector<double> A_grid[3];             // optional, size n3

    bool is_zero() const {
        return A0 == 0.0 && A.isZero() && A0_grid.empty() && A_grid[0].empty();
    }
    double a0_at(std::int64_t i) const { return A0_grid.empty() ? A0 : A0_grid[i]; }
    double ai_at(int c, std::int64_t i) const {
        return A_grid[c].empty() ? A(c) : A_grid[c][i];
    }
};

/// In-place 3D FFT over a flat n^3 complex array (layout (ix*n+iy)*n+iz).
/// Inverse includes the 1/n^3 normalization.
void fft3_forward(std::vector<cd>& data, int n);
void fft3_inverse(std::vector<cd>& data, int n);

/// Spectral partial derivative along axis (0,1,2) of a real-space array.
std::vector<cd> spectral_derivative(const std::vector<cd>& data, const Box& box, int axis);

/// Zero-padded Fourier upsampling n -> factor*n of a real-space array.
std::vector<cd> fourier_upsample(const std::vector<cd>& data, const Box& box, int factor);

/// Multi-channel point-major storage for fast trilinear sampling with
/// periodic wrap. chan-th value of point i sits at data[i*channels + chan].
struct InterpField3 {
    Box box;
    int channels = 0;
    std::vector<cd> data;

    void init(const Box& b, int ch) {
        box = b;
        channels = ch;
        data.assign(std::size_t(b.n3()) * ch, cd(0.0, 0.0));
    }
    /// Trilinear sample of all channels at x (periodic), appended to out.
    void sample(const Vec3& x, cd* out) const;

    /// Catmull-Rom tricubic sample of all channels at x (periodic).
    void sample_cubic(const Vec3& x, cd* out) const;
};

enum class Branch { R, I };

/// Majorana coefficient vector of the given branch at one point.
CVec4 majorana_branch(const CVec4& psi, Branch b);

}  // namespace dirtraj
