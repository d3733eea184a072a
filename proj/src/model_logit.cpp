#include <algorithm>
#include <cmath>

#include "identikit/error.hpp"
#include "identikit/models.hpp"

namespace identikit {

void MixedLogitSpec::validate() const {
  require(J >= 1, "mixed logit needs at least one inside alternative");
  require(static_cast<std::size_t>(theta.size()) == J, "theta needs one intercept per inside alternative");
  require(!beta_axes.empty(), "beta grid needs at least one axis");
  require(!profiles.empty() && static_cast<std::size_t>(profile_prob.size()) == profiles.size(),
          "covariate profiles and probabilities differ in count");
  for (const auto& x : profiles)
    require(static_cast<std::size_t>(x.rows()) == J && static_cast<std::size_t>(x.cols()) == K(),
            "covariate profile must be J x K");
  require(profile_prob.minCoeff() > 0.0, "covariate probabilities must be positive");
  require(std::abs(profile_prob.sum() - 1.0) <= 1e-10, "covariate probabilities must sum to 1");
  require(static_cast<bool>(eta0), "mixed logit needs a coefficient density");
}

MixedLogitSpec mixed_logit_default(std::size_t n_beta) {
  MixedLogitSpec s;
  s.J = 1;
  s.theta = Vec::Constant(1, 0.2);
  const int nx = 25;
  for (int i = 0; i < nx; ++i) s.profiles.push_back(Mat::Constant(1, 1, -3.0 + 6.0 * i / (nx - 1)));
  s.profile_prob = Vec::Constant(nx, 1.0 / nx);
  s.beta_axes = {gauss_legendre(-3.0, 3.0, n_beta)};
  s.eta0 = [](std::span<const double> b) { return std::exp(-0.5 * b[0] * b[0]); };
  return s;
}

double logit_probability(const MixedLogitSpec& spec, std::size_t y, std::size_t profile,
                         std::span<const double> beta) {
  const Mat& x = spec.profiles[profile];
  double u[64];
  require(spec.J < 64, "at most 63 inside alternatives");
  double top = 0.0;
  u[0] = 0.0;
  for (std::size_t j = 1; j <= spec.J; ++j) {
    double v = spec.theta[static_cast<Eigen::Index>(j - 1)];
    for (std::size_t k = 0; k < spec.K(); ++k)
      v += x(static_cast<Eigen::Index>(j - 1), static_cast<Eigen::Index>(k)) * beta[k];
    u[j] = v;
    top = std::max(top, v);
  }
  double den = 0.0;
  for (std::size_t j = 0; j <= spec.J; ++j) den += std::exp(u[j] - top);
  return std::exp(u[y] - top) / den;
}

namespace {

SpacePtr observation_grid(const MixedLogitSpec& spec) {
  Axis ys{Vec(static_cast<Eigen::Index>(spec.J + 1)), Vec::Ones(static_cast<Eigen::Index>(spec.J + 1))};
  for (std::size_t y = 0; y <= spec.J; ++y) ys.nodes[static_cast<Eigen::Index>(y)] = static_cast<double>(y);
  Axis xs{Vec(spec.profile_prob.size()), spec.profile_prob};
  for (Eigen::Index p = 0; p < xs.nodes.size(); ++p) xs.nodes[p] = static_cast<double>(p);
  return tensor_space({ys, xs}, "(y, x)");
}

}  // namespace

ModelOperator mixed_logit_model(const MixedLogitSpec& spec) {
  spec.validate();
  auto obs = observation_grid(spec);
  auto lat = tensor_space(spec.beta_axes, "beta");
  Vec eta = evaluate(lat, spec.eta0).values;
  require(eta.minCoeff() > 0.0, "coefficient density must be positive on the grid");
  eta /= lat->weights().dot(eta);
  Mat vals(static_cast<Eigen::Index>(obs->size()), static_cast<Eigen::Index>(lat->size()));
  const auto np = static_cast<std::size_t>(spec.profile_prob.size());
  for (std::size_t l = 0; l < lat->size(); ++l)
    for (std::size_t y = 0; y <= spec.J; ++y)
      for (std::size_t p = 0; p < np; ++p)
        vals(static_cast<Eigen::Index>(y * np + p), static_cast<Eigen::Index>(l)) =
            logit_probability(spec, y, p, lat->node(l)) * eta[static_cast<Eigen::Index>(l)];
  return model_from_joint(JointDensity{obs, lat, std::move(vals)}, 0.0);
}

LinOp mixed_logit_operator(const MixedLogitSpec& spec) { return mixed_logit_model(spec).op; }

AdjointMap mixed_logit_adjoint(const MixedLogitSpec& spec) {
  auto model = mixed_logit_model(spec);
  auto lat = model.op.domain();
  return {lat, [spec, lat](const PointFunction& g) {
            const auto np = static_cast<std::size_t>(spec.profile_prob.size());
            Vec out = Vec::Zero(static_cast<Eigen::Index>(lat->size()));
            for (std::size_t y = 0; y <= spec.J; ++y)
              for (std::size_t p = 0; p < np; ++p) {
                const double z[2] = {static_cast<double>(y), static_cast<double>(p)};
                const double gv = g(z) * spec.profile_prob[static_cast<Eigen::Index>(p)];
                for (std::size_t l = 0; l < lat->size(); ++l)
                  out[static_cast<Eigen::Index>(l)] += logit_probability(spec, y, p, lat->node(l)) * gv;
              }
            return out;
          }};
}

}  // namespace identikit
