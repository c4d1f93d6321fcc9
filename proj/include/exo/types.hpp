#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace exo {

inline constexpr int kJoints = 5;

using Vec3 = Eigen::Matrix<double, 3, 1>;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat3 = Eigen::Matrix<double, 3, 3>;
using Mat4 = Eigen::Matrix<double, 4, 4>;
using Mat5 = Eigen::Matrix<double, 5, 5>;
using Mat35 = Eigen::Matrix<double, 3, 5>;

// Error hierarchy. Everything the library throws derives from one of the
// two standard bases so callers can catch coarsely.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ControllerFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IntegrationFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PolicyFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GradientFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainingFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

// sign(0) := 0.
inline double sign0(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace exo
