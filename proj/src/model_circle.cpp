#include <cmath>
#include <numbers>

#include "identikit/error.hpp"
#include "identikit/models.hpp"

namespace identikit {

double circle_harmonic_oracle(int k) {
  if (k == 0) return 1.0;
  return std::abs(2.0 * std::sin(k * std::numbers::pi / 2.0) / k);
}

ModelOperator circle_rc_operator(const CircleRCSpec& spec) {
  const std::size_t n = spec.n;
  if (n < 2 || n % 2 != 0) fail(ErrorKind::InvalidArgument, "grid must be even for harmonic oracle");
  const double two_pi = 2.0 * std::numbers::pi;
  // The covariate grid is shifted by half a step when 4 | n so that no
  // covariate sits exactly a quarter turn from a coefficient node; every
  // half-plane then holds exactly n/2 coefficient nodes.
  const double offset = n % 4 == 0 ? std::numbers::pi / static_cast<double>(n) : 0.0;
  const Axis s_axis = periodic(two_pi, n);
  const Axis x_axis = periodic(two_pi, n, offset);

  auto density = [&](const ScalarFunction& f, const Axis& ax) {
    Vec d(ax.nodes.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = f ? f(ax.nodes[i]) : 1.0;
    require(d.minCoeff() > 0.0, "circle densities must be positive on the grid");
    return Vec(d / ax.weights.dot(d));
  };
  const Vec fx = density(spec.covariate_density, x_axis);
  const Vec fs = density(spec.lambda0, s_axis);

  Axis ys{Vec(2), Vec::Ones(2)};
  ys.nodes << 0.0, 1.0;
  auto obs = tensor_space({ys, x_axis}, "(y, x)");
  auto lat = tensor_space({s_axis}, "s");
  Mat vals = Mat::Zero(static_cast<Eigen::Index>(2 * n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const bool up = std::cos(x_axis.nodes[static_cast<Eigen::Index>(i)] -
                               s_axis.nodes[static_cast<Eigen::Index>(j)]) >= 0.0;
      vals(static_cast<Eigen::Index>((up ? n : 0) + i), static_cast<Eigen::Index>(j)) =
          fx[static_cast<Eigen::Index>(i)] * fs[static_cast<Eigen::Index>(j)];
    }
  return model_from_joint(JointDensity{obs, lat, std::move(vals)}, 0.0);
}

}  // namespace identikit
