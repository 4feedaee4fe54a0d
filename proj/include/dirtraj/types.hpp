#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace dirtraj {

using cd = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using CVec3 = Eigen::Vector3cd;
using CVec4 = Eigen::Vector4cd;
using CMat4 = Eigen::Matrix4cd;
using CMat2 = Eigen::Matrix2cd;

inline constexpr double kEpsPole = 1e-9;

/// m, hbar, c and the rest-mass angular frequency omega = 2 m c^2 / hbar.
struct PhysicalParams {
    double m = 1.0;
    double hbar = 1.0;
    double c = 1.0;

    double omega() const { return 2.0 * m * c * c / hbar; }
    bool valid() const { return m > 0.0 && hbar > 0.0 && c > 0.0; }
};

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PoleSingularity : Error { using Error::Error; };
struct NodeSingularity : Error { using Error::Error; };
struct SecantSingularity : Error { using Error::Error; };
struct JacobianCollapse : Error { using Error::Error; };
struct StepTooLarge : Error { using Error::Error; };
struct GridMismatch : Error { using Error::Error; };
struct ResolutionError : Error { using Error::Error; };
struct InversionFailure : Error { using Error::Error; };
struct FileFormatError : Error { using Error::Error; };
struct ConfigInvalid : Error { using Error::Error; };

}  // namespace dirtraj
