#include <cmath>

#include "identikit/error.hpp"
#include "identikit/models.hpp"

namespace identikit {

GridFunction ModelOperator::on_grid(const GridFunction& g) const {
  require(g.size() == kept.size(), "function does not live on the trimmed observation space");
  Vec full = Vec::Zero(static_cast<Eigen::Index>(grid->size()));
  for (std::size_t i = 0; i < kept.size(); ++i)
    full[static_cast<Eigen::Index>(kept[i])] = g.values[static_cast<Eigen::Index>(i)];
  return GridFunction(grid, std::move(full));
}

ModelOperator model_from_joint(const JointDensity& joint, double rel_floor) {
  auto trimmed = trim_observation_grid(joint, rel_floor);
  ModelOperator m{build_score_from_joint(trimmed.joint), joint.obs_space, trimmed.kept_rows,
                  trimmed.dropped_mass, {}};
  const auto dropped = joint.obs_space->size() - trimmed.kept_rows.size();
  if (dropped > 0)
    m.notes.push_back(std::to_string(dropped) + " observation nodes without mass dropped");
  return m;
}

Vec synthetic_values(const SyntheticSpec& spec) {
  require(spec.n >= 1 && spec.n <= kMaxNodesPerAxis, "synthetic sequence length out of range");
  Vec v(static_cast<Eigen::Index>(spec.n));
  for (std::size_t j = 1; j <= spec.n; ++j) {
    const double jj = static_cast<double>(j);
    if (spec.geometric) {
      require(spec.rate > 0.0 && spec.rate < 1.0, "geometric rate must lie in (0, 1)");
      v[static_cast<Eigen::Index>(j - 1)] = std::pow(spec.rate, jj);
    } else {
      require(spec.exponent > 0.0, "polynomial exponent must be positive");
      v[static_cast<Eigen::Index>(j - 1)] = std::pow(jj, -spec.exponent);
    }
  }
  return v;
}

LinOp synthetic_operator(const SyntheticSpec& spec) {
  const Vec v = synthetic_values(spec);
  NodeMat nodes(v.size(), 1);
  for (Eigen::Index j = 0; j < v.size(); ++j) nodes(j, 0) = static_cast<double>(j + 1);
  WeightedSpace::Options opt;
  opt.shape = {spec.n};
  auto s = make_space(nodes, Vec::Ones(v.size()), "mode", opt);
  return LinOp(s, s, Mat(v.asDiagonal()));
}

LinOp discrete_operator(const DiscreteSpec& spec) {
  const auto m = spec.p.rows(), n = spec.p.cols();
  require(m >= 1 && n >= 1 && spec.latent_weights.size() == n, "discrete model dimension mismatch");
  require(spec.p.minCoeff() >= 0.0, "conditional probabilities must be nonnegative");
  require((spec.p.colwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-8,
          "conditional probabilities must sum to one over observed values");
  require(spec.latent_weights.minCoeff() > 0.0, "latent weights must be positive");
  NodeMat zn(m, 1), ln(n, 1);
  for (Eigen::Index i = 0; i < m; ++i) zn(i, 0) = static_cast<double>(i);
  for (Eigen::Index j = 0; j < n; ++j) ln(j, 0) = static_cast<double>(j);
  WeightedSpace::Options zo, lo;
  zo.shape = {static_cast<std::size_t>(m)};
  lo.shape = {static_cast<std::size_t>(n)};
  lo.probability = true;
  JointDensity joint{make_space(zn, Vec::Ones(m), "z", zo),
                     make_space(ln, spec.latent_weights / spec.latent_weights.sum(), "z*", lo),
                     spec.p};
  auto model = model_from_joint(joint, 0.0);
  require(model.kept.size() == static_cast<std::size_t>(m),
          "every observed value needs positive probability");
  return model.op;
}

}  // namespace identikit
