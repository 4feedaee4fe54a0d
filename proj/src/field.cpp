#include "dirtraj/field.hpp"

#include <unsupported/Eigen/FFT>

namespace dirtraj {

namespace {

Eigen::FFT<double>& fft_engine() {
    thread_local Eigen::FFT<double> fft;
    return fft;
}

// Apply a 1D transform along each axis of the flat array.
template <typename Op>
void fft3_apply(std::vector<cd>& data, int n, Op op) {
    const std::int64_t n2 = std::int64_t(n) * n;
    std::vector<cd> line(n), out(n);
    // z axis: contiguous
    for (std::int64_t base = 0; base < n2 * n; base += n) {
        std::copy(data.begin() + base, data.begin() + base + n, line.begin());
        op(line, out);
        std::copy(out.begin(), out.end(), data.begin() + base);
    }
    // y axis: stride n
    for (int ix = 0; ix < n; ++ix) {
        for (int iz = 0; iz < n; ++iz) {
            const std::int64_t base = std::int64_t(ix) * n2 + iz;
            for (int iy = 0; iy < n; ++iy) line[iy] = data[base + std::int64_t(iy) * n];
            op(line, out);
            for (int iy = 0; iy < n; ++iy) data[base + std::int64_t(iy) * n] = out[iy];
        }
    }
    // x axis: stride n^2
    for (int iy = 0; iy < n; ++iy) {
        for (int iz = 0; iz < n; ++iz) {
            const std::int64_t base = std::int64_t(iy) * n + iz;
            for (int ix = 0; ix < n; ++ix) line[ix] = data[base + std::int64_t(ix) * n2];
            op(line, out);
            for (int ix = 0; ix < n; ++ix) data[base + std::int64_t(ix) * n2] = out[ix];
        }
    }
}

}  // namespace

void fft3_forward(std::vector<cd>& data, int n) {
    fft3_apply(data, n, [](std::vector<cd>& in, std::vector<cd>& out) {
        fft_engine().fwd(out, in);
    });
}

void fft3_inverse(std::vector<cd>& data, int n) {
    fft3_apply(data, n, [](std::vector<cd>& in, std::vector<cd>& out) {
        fft_engine().inv(out, in);
    });
}

std::vector<cd> spectral_derivative(const std::vector<cd>& data, const Box& box, int axis) {
    const int n = box.n;
    std::vector<cd> hat = data;
    fft3_forward(hat, n);
    const cd I{0.0, 1.0};
    for (int ix = 0; ix < n; ++ix) {
        for (int iy = 0; iy < n; ++iy) {
            for (int iz = 0; iz < n; ++iz) {
                const int j = axis == 0 ? ix : axis == 1 ? iy : iz;
                hat[box.idx(ix, iy, iz)] *= I * box.wavenumber(j);
            }
        }
    }
    fft3_inverse(hat, n);
    return hat;
}

std::vector<cd> fourier_upsample(const std::vector<cd>& data, const Box& box, int factor) {
    const int n = box.n;
    const int m = n * factor;
    std::vector<cd> hat = data;
    fft3_forward(hat, n);

    Box fine{m, box.L};
    std::vector<cd> big(std::size_t(fine.n3()), cd(0, 0));
    const double scale = 1.0;  // Eigen inv scales by 1/m^3; fwd was unscaled over n^3
    // Map bin j in [0,n) to the same signed frequency bin in the m-grid.
    auto mapbin = [&](int j) {
        const int jj = (j <= n / 2) ? j : j - n;
        return (jj + m) % m;
    };
    for (int ix = 0; ix < n; ++ix) {
        for (int iy = 0; iy < n; ++iy) {
            for (int iz = 0; iz < n; ++iz) {
                big[fine.idx(mapbin(ix), mapbin(iy), mapbin(iz))] =
                    hat[box.idx(ix, iy, iz)] * scale;
            }
        }
    }
    fft3_inverse(big, m);
    // Compensate the normalization mismatch (1/m^3 applied, 1/n^3 wanted).
    const double comp = double(factor) * factor * factor;
    for (auto& v : big) v *= comp;
    return big;
}

void InterpField3::sample(const Vec3& x, cd* out) const {
    const int n = box.n;
    const double h = box.h();
    double fx = (x(0) + 0.5 * box.L) / h;
    double fy = (x(1) + 0.5 * box.L) / h;
    double fz = (x(2) + 0.5 * box.L) / h;
    auto wrapf = [&](double f) {
        f = std::fmod(f, double(n));
        return f < 0 ? f + n : f;
    };
    fx = wrapf(fx); fy = wrapf(fy); fz = wrapf(fz);
    int ix = int(fx), iy = int(fy), iz = int(fz);
    if (ix >= n) ix = n - 1;
    if (iy >= n) iy = n - 1;
    if (iz >= n) iz = n - 1;
    const double tx = fx - ix, ty = fy - iy, tz = fz - iz;
    const int jx = (ix + 1) % n, jy = (iy + 1) % n, jz = (iz + 1) % n;

    const cd* p000 = &data[std::size_t(box.idx(ix, iy, iz)) * channels];
    const cd* p001 = &data[std::size_t(box.idx(ix, iy, jz)) * channels];
    const cd* p010 = &data[std::size_t(box.idx(ix, jy, iz)) * channels];
    const cd* p011 = &data[std::size_t(box.idx(ix, jy, jz)) * channels];
    const cd* p100 = &data[std::size_t(box.idx(jx, iy, iz)) * channels];
    const cd* p101 = &data[std::size_t(box.idx(jx, iy, jz)) * channels];
    const cd* p110 = &data[std::size_t(box.idx(jx, jy, iz)) * channels];
    const cd* p111 = &data[std::size_t(box.idx(jx, jy, jz)) * channels];

    const double w000 = (1 - tx) * (1 - ty) * (1 - tz);
    const double w001 = (1 - tx) * (1 - ty) * tz;
    const double w010 = (1 - tx) * ty * (1 - tz);
    const double w011 = (1 - tx) * ty * tz;
    const double w100 = tx * (1 - ty) * (1 - tz);
    const double w101 = tx * (1 - ty) * tz;
    const double w110 = tx * ty * (1 - tz);
    const double w111 = tx * ty * tz;

    for (int c = 0; c < channels; ++c) {
        out[c] = w000 * p000[c] + w001 * p001[c] + w010 * p010[c] + w011 * p011[c] +
                 w100 * p100[c] + w101 * p101[c] + w110 * p110[c] + w111 * p111[c];
    }
}

void InterpField3::sample_cubic(const Vec3& x, cd* out) const {
    const int n = box.n;
    const double h = box.h();
    auto wrapf = [&](double f) {
        f = std::fmod(f, double(n));
        return f < 0 ? f + n : f;
    };
    const double fx = wrapf((x(0) + 0.5 * box.L) / h);
    const double fy = wrapf((x(1) + 0.5 * box.L) / h);
    const double fz = wrapf((x(2) + 0.5 * box.L) / h);
    int ix = int(fx), iy = int(fy), iz = int(fz);
    if (ix >= n) ix = n - 1;
    if (iy >= n) iy = n - 1;
    if (iz >= n) iz = n - 1;
    const double tx = fx - ix, ty = fy - iy, tz = fz - iz;

    auto weights = [](double t, double* w) {
        const double t2 = t * t, t3 = t2 * t;
        w[0] = -0.5 * t + t2 - 0.5 * t3;
        w[1] = 1.0 - 2.5 * t2 + 1.5 * t3;
        w[2] = 0.5 * t + 2.0 * t2 - 1.5 * t3;
        w[3] = -0.5 * t2 + 0.5 * t3;
    };
    double wx[4], wy[4], wz[4];
    weights(tx, wx);
    weights(ty, wy);
    weights(tz, wz);
    int gx[4], gy[4], gz[4];
    for (int d = 0; d < 4; ++d) {
        gx[d] = (ix + d - 1 + n) % n;
        gy[d] = (iy + d - 1 + n) % n;
        gz[d] = (iz + d - 1 + n) % n;
    }

    for (int c = 0; c < channels; ++c) out[c] = cd(0.0, 0.0);
    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
            const double wab = wx[a] * wy[b];
            for (int d = 0; d < 4; ++d) {
                const double w = wab * wz[d];
                const cd* p = &data[std::size_t(box.idx(gx[a], gy[b], gz[d])) * channels];
                for (int c = 0; c < channels; ++c) out[c] += w * p[c];
            }
        }
    }
}

CVec4 majorana_branch(const CVec4& psi, Branch b) {
    const auto [phiR, phiI] = majorana_split(psi);
    return b == Branch::R ? phiR : phiI;
}

}  // namespace dirtraj
