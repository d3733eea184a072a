#include "identikit/linop.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "identikit/error.hpp"

namespace identikit {

WeightedSpace::WeightedSpace(NodeMat nodes, Vec weights, std::string label)
    : WeightedSpace(std::move(nodes), std::move(weights), std::move(label),
                    Options{}) {}

WeightedSpace::WeightedSpace(NodeMat nodes, Vec weights, std::string label,
                             Options options)
    : nodes_(std::move(nodes)),
      weights_(std::move(weights)),
      label_(std::move(label)),
      options_(std::move(options)) {
  require(nodes_.rows() == weights_.size(),
          "space '" + label_ + "': node count differs from weight count");
  require(weights_.size() > 0, "space '" + label_ + "' is empty");
  require(nodes_.cols() >= 1, "space '" + label_ + "': nodes need d >= 1");
  for (Eigen::Index i = 0; i < weights_.size(); ++i) {
    require(std::isfinite(weights_[i]) && weights_[i] > 0.0,
            "space '" + label_ + "': weights must be strictly positive");
  }
  if (!options_.shape.empty()) {
    std::size_t count = 1;
    for (auto n : options_.shape) {
      require(n <= kMaxNodesPerAxis, "grid exceeds 4096 nodes per axis");
      count *= n;
    }
    require(count == size(), "space '" + label_ + "': shape does not match node count");
  }
  if (options_.probability) {
    require(std::abs(weights_.sum() - 1.0) <= 1e-6,
            "space '" + label_ + "': probability weights must sum to 1");
  }
}

std::span<const double> WeightedSpace::node(std::size_t i) const {
  return {nodes_.data() + i * dim(), dim()};
}

SpacePtr make_space(NodeMat nodes, Vec weights, std::string label,
                    WeightedSpace::Options options) {
  return std::make_shared<const WeightedSpace>(std::move(nodes), std::move(weights),
                                               std::move(label), std::move(options));
}

bool same_space(const WeightedSpace& a, const WeightedSpace& b) {
  if (&a == &b) return true;
  if (a.size() != b.size() || a.dim() != b.dim()) return false;
  return a.weights() == b.weights() && a.nodes() == b.nodes();
}

bool same_space(const SpacePtr& a, const SpacePtr& b) {
  if (!a || !b) return false;
  return same_space(*a, *b);
}

SpacePtr reweight(const WeightedSpace& base, const Vec& density, std::string label,
                  double truncation_mass) {
  require(density.size() == base.weights().size(), "reweight: density size mismatch");
  Vec w = base.weights().cwiseProduct(density);
  const double mass = w.sum();
  require(mass > 0.0, "reweight: density has zero mass");
  w /= mass;
  WeightedSpace::Options opt;
  opt.shape = base.shape();
  opt.probability = true;
  opt.truncation_mass = truncation_mass;
  return make_space(base.nodes(), std::move(w), std::move(label), std::move(opt));
}

GridFunction::GridFunction(SpacePtr s, Vec v) : space(std::move(s)), values(std::move(v)) {
  require(space != nullptr, "grid function without space");
  require(static_cast<std::size_t>(values.size()) == space->size(),
          "grid function: value count differs from node count of '" + space->label() + "'");
}

GridFunction evaluate(const SpacePtr& space, const PointFunction& f) {
  Vec v(static_cast<Eigen::Index>(space->size()));
  for (std::size_t i = 0; i < space->size(); ++i) v[static_cast<Eigen::Index>(i)] = f(space->node(i));
  return {space, std::move(v)};
}

GridFunction constant(const SpacePtr& space, double c) {
  return {space, Vec::Constant(static_cast<Eigen::Index>(space->size()), c)};
}

double inner(const WeightedSpace& space, const GridFunction& f, const GridFunction& g) {
  if (!same_space(space, *f.space) || !same_space(space, *g.space))
    fail(ErrorKind::InvalidArgument, "space mismatch");
  return (space.weights().array() * f.values.array() * g.values.array()).sum();
}

double inner(const GridFunction& f, const GridFunction& g) { return inner(*f.space, f, g); }

double norm(const GridFunction& f) { return std::sqrt(std::max(0.0, inner(f, f))); }

double weighted_mean(const GridFunction& f) {
  const Vec& w = f.space->weights();
  return w.dot(f.values) / w.sum();
}

GridFunction centered(const GridFunction& f) {
  return {f.space, f.values.array() - weighted_mean(f)};
}

void JointDensity::validate() const {
  require(obs_space && latent_space, "joint density: missing space");
  require(static_cast<std::size_t>(values.rows()) == obs_space->size() &&
              static_cast<std::size_t>(values.cols()) == latent_space->size(),
          "joint density: matrix shape does not match spaces");
  require((values.array() >= 0.0).all() && values.allFinite(),
          "joint density: entries must be finite and nonnegative");
  const double mass = obs_space->weights().dot(values * latent_space->weights());
  require(std::abs(mass - 1.0) <= 1e-4, "joint density: total mass must be 1 (got " +
                                            std::to_string(mass) + ")");
  const Vec col = values.transpose() * obs_space->weights();
  require((col.array() > 0.0).all(), "joint density: latent marginal must be positive");
}

LinOp::LinOp(SpacePtr domain, SpacePtr codomain, Mat matrix)
    : domain_(std::move(domain)), codomain_(std::move(codomain)), matrix_(std::move(matrix)) {
  require(domain_ && codomain_, "operator without spaces");
  require(static_cast<std::size_t>(matrix_.rows()) == codomain_->size() &&
              static_cast<std::size_t>(matrix_.cols()) == domain_->size(),
          "operator matrix shape does not match its spaces");
}

GridFunction LinOp::apply(const GridFunction& b) const {
  if (!same_space(b.space, domain_)) fail(ErrorKind::InvalidArgument, "space mismatch");
  return {codomain_, matrix_ * b.values};
}

LinOp build_score_from_joint(const JointDensity& joint) {
  joint.validate();
  const Vec& wz = joint.obs_space->weights();
  const Vec& wl = joint.latent_space->weights();
  const Vec fz = joint.values * wl;  // observation marginal density
  for (Eigen::Index i = 0; i < fz.size(); ++i) {
    if (!(fz[i] > 0.0)) fail(ErrorKind::Numerical, "observation node has zero mass");
  }
  const Vec flat = joint.values.transpose() * wz;  // latent marginal density

  Mat a = joint.values.array().rowwise() * wl.transpose().array();
  a.array().colwise() /= fz.array();

  auto obs = reweight(*joint.obs_space, fz, "P", joint.obs_space->truncation_mass());
  auto lat = reweight(*joint.latent_space, flat, "G0", joint.latent_space->truncation_mass());
  return LinOp(std::move(lat), std::move(obs), std::move(a));
}

TrimmedJoint trim_observation_grid(const JointDensity& joint, double rel_floor) {
  const Vec& wz = joint.obs_space->weights();
  const Vec fz = joint.values * joint.latent_space->weights();
  const double cutoff = rel_floor * fz.maxCoeff();
  TrimmedJoint out;
  double kept_mass = 0.0;
  for (Eigen::Index i = 0; i < fz.size(); ++i) {
    if (fz[i] > cutoff) {
      out.kept_rows.push_back(static_cast<std::size_t>(i));
      kept_mass += wz[i] * fz[i];
    }
  }
  const double total = wz.dot(fz);
  out.dropped_mass = std::max(0.0, total - kept_mass);
  if (out.kept_rows.size() == static_cast<std::size_t>(fz.size())) {
    out.joint = joint;
    return out;
  }
  require(!out.kept_rows.empty(), "observation grid has no mass");
  const auto m = static_cast<Eigen::Index>(out.kept_rows.size());
  NodeMat nodes(m, joint.obs_space->nodes().cols());
  Vec w(m);
  Mat values(m, joint.values.cols());
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto src = static_cast<Eigen::Index>(out.kept_rows[static_cast<std::size_t>(r)]);
    nodes.row(r) = joint.obs_space->nodes().row(src);
    w[r] = wz[src];
    values.row(r) = joint.values.row(src) / kept_mass;
  }
  WeightedSpace::Options opt;
  opt.truncation_mass = joint.obs_space->truncation_mass() + out.dropped_mass;
  out.joint.obs_space = make_space(std::move(nodes), std::move(w), joint.obs_space->label(), opt);
  out.joint.latent_space = joint.latent_space;
  out.joint.values = std::move(values);
  // Renormalize to unit double-weighted mass.
  const double mass = out.joint.obs_space->weights().dot(out.joint.values *
                                                          joint.latent_space->weights());
  out.joint.values /= mass;
  return out;
}

LinOp adjoint(const LinOp& op) {
  const Vec& wd = op.domain()->weights();
  const Vec& wc = op.codomain()->weights();
  Mat a = op.matrix().transpose();
  a.array().rowwise() *= wc.transpose().array();
  a.array().colwise() /= wd.array();
  return LinOp(op.codomain(), op.domain(), std::move(a));
}

LinOp compose(const LinOp& outer, const LinOp& inner_op) {
  require(same_space(inner_op.codomain(), outer.domain()), "space mismatch");
  return LinOp(inner_op.domain(), outer.codomain(), outer.matrix() * inner_op.matrix());
}

LinOp information_operator(const LinOp& op) { return compose(adjoint(op), op); }


GridFunction TangentRestriction::lift(const Vec& coefficients) const {
  return {original_domain, basis * coefficients};
}

TangentRestriction restrict_tangent(const LinOp& op, const std::vector<GridFunction>& basis) {
  require(!basis.empty(), "degenerate tangent basis");
  const auto n = static_cast<Eigen::Index>(op.domain()->size());
  const auto k = static_cast<Eigen::Index>(basis.size());
  Mat b(n, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto& f = basis[static_cast<std::size_t>(j)];
    if (!same_space(f.space, op.domain())) fail(ErrorKind::InvalidArgument, "space mismatch");
    b.col(j) = f.values;
  }
  const Vec& w = op.domain()->weights();
  const Mat gram = b.transpose() * w.asDiagonal() * b;
  Eigen::SelfAdjointEigenSolver<Mat> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(hi > 0.0) || !(lo > 0.0) || hi / lo >= 1e10)
    fail(ErrorKind::Numerical, "degenerate tangent basis");

  Eigen::LLT<Mat> llt(gram);
  // Q = B L^{-T}: columns orthonormal in the weighted inner product.
  Mat q = llt.matrixU().solve<Eigen::OnTheRight>(b);

  NodeMat idx(k, 1);
  for (Eigen::Index j = 0; j < k; ++j) idx(j, 0) = static_cast<double>(j);
  auto coeff = make_space(std::move(idx), Vec::Ones(k), op.domain()->label() + "|tangent");
  TangentRestriction out{LinOp(coeff, op.codomain(), op.matrix() * q), op.domain(), q, hi / lo};
  return out;
}

std::vector<GridFunction> mean_zero_basis(const SpacePtr& space) {
  const auto n = static_cast<Eigen::Index>(space->size());
  require(n >= 2, "mean-zero basis needs at least two nodes");
  const Vec& w = space->weights();
  std::vector<GridFunction> out;
  out.reserve(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    Vec v = Vec::Zero(n);
    v[i] = 1.0 / w[i];
    v[n - 1] = -1.0 / w[n - 1];
    out.emplace_back(space, std::move(v));
  }
  return out;
}

double operator_norm(const LinOp& op) {
  const Mat m = op.codomain()->weights().cwiseSqrt().asDiagonal() * op.matrix() *
                op.domain()->weights().cwiseSqrt().cwiseInverse().asDiagonal();
  if (m.size() == 0) return 0.0;
  Eigen::BDCSVD<Mat> svd(m);
  if (svd.singularValues().allFinite()) return svd.singularValues()[0];
  // BDCSVD breaks down on some rank-deficient matrices.
  return Eigen::JacobiSVD<Mat>(m).singularValues()[0];
}

Axis trapezoid(double a, double b, std::size_t n) {
  require(n >= 2 && n <= kMaxNodesPerAxis, "trapezoid rule needs 2..4096 nodes");
  require(b > a, "trapezoid rule needs a < b");
  Axis ax{Vec(static_cast<Eigen::Index>(n)), Vec(static_cast<Eigen::Index>(n))};
  const double h = (b - a) / static_cast<double>(n - 1);
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  for (std::size_t i = 0; i < n; ++i) {
    // Symmetric construction: node i and node n-1-i are exact mirrors about
    // the midpoint.
    const double s = (2.0 * static_cast<double>(i) - static_cast<double>(n - 1)) /
                     static_cast<double>(n - 1);
    ax.nodes[static_cast<Eigen::Index>(i)] = mid + half * s;
    ax.weights[static_cast<Eigen::Index>(i)] = (i == 0 || i + 1 == n) ? 0.5 * h : h;
  }
  return ax;
}

Axis gauss_legendre(double a, double b, std::size_t n) {
  require(n >= 1 && n <= kMaxNodesPerAxis, "Gauss-Legendre rule needs 1..4096 nodes");
  require(b > a, "Gauss-Legendre rule needs a < b");
  Axis ax{Vec(static_cast<Eigen::Index>(n)), Vec(static_cast<Eigen::Index>(n))};
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const std::size_t m = (n + 1) / 2;
  for (std::size_t i = 0; i < m; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double kk = static_cast<double>(k);
        const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p1 = x, p0 = 1.0;
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double wgt = 2.0 / ((1.0 - x * x) * dp * dp);
    const auto lo = static_cast<Eigen::Index>(i);
    const auto hi = static_cast<Eigen::Index>(n - 1 - i);
    ax.nodes[lo] = mid - half * x;
    ax.nodes[hi] = mid + half * x;
    ax.weights[lo] = half * wgt;
    ax.weights[hi] = half * wgt;
  }
  return ax;
}

Axis periodic(double period, std::size_t n, double offset) {
  require(n >= 1 && n <= kMaxNodesPerAxis, "periodic grid needs 1..4096 nodes");
  Axis ax{Vec(static_cast<Eigen::Index>(n)), Vec::Constant(static_cast<Eigen::Index>(n),
                                                            period / static_cast<double>(n))};
  for (std::size_t i = 0; i < n; ++i)
    ax.nodes[static_cast<Eigen::Index>(i)] =
        offset + period * static_cast<double>(i) / static_cast<double>(n);
  return ax;
}

SpacePtr tensor_space(const std::vector<Axis>& axes, std::string label, bool probability) {
  require(!axes.empty(), "tensor grid needs at least one axis");
  std::vector<std::size_t> shape;
  std::size_t total = 1;
  for (const auto& ax : axes) {
    shape.push_back(static_cast<std::size_t>(ax.nodes.size()));
    total *= shape.back();
  }
  const auto d = static_cast<Eigen::Index>(axes.size());
  NodeMat nodes(static_cast<Eigen::Index>(total), d);
  Vec w(static_cast<Eigen::Index>(total));
  std::vector<std::size_t> idx(axes.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    double wt = 1.0;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      nodes(static_cast<Eigen::Index>(flat), static_cast<Eigen::Index>(a)) =
          axes[a].nodes[static_cast<Eigen::Index>(idx[a])];
      wt *= axes[a].weights[static_cast<Eigen::Index>(idx[a])];
    }
    w[static_cast<Eigen::Index>(flat)] = wt;
    for (std::size_t a = axes.size(); a-- > 0;) {
      if (++idx[a] < shape[a]) break;
      idx[a] = 0;
    }
  }
  WeightedSpace::Options opt;
  opt.shape = std::move(shape);
  opt.probability = probability;
  if (probability) w /= w.sum();
  return make_space(std::move(nodes), std::move(w), std::move(label), std::move(opt));
}

}  // namespace identikit
