#include <algorithm>
#include <cmath>
#include <numbers>

#include "identikit/error.hpp"
#include "identikit/models.hpp"

namespace identikit {

namespace {

// Antisymmetric midpoint grid on [-a, a]: node i and node n-1-i are exact
// negatives and no node sits at zero.
Axis alpha_grid(double a, std::size_t n) {
  Axis ax{Vec(static_cast<Eigen::Index>(n)),
          Vec::Constant(static_cast<Eigen::Index>(n), 2.0 * a / static_cast<double>(n))};
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<double>(2 * static_cast<long>(i) + 1 - static_cast<long>(n));
    ax.nodes[static_cast<Eigen::Index>(i)] = a * k / static_cast<double>(n);
  }
  return ax;
}

// 1 / (1 + e^x) without overflow.
double logistic_tail(double x) {
  if (x > 0.0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

}  // namespace

void IGMixtureSpec::validate() const {
  require(n_alpha >= 2 && n_alpha % 2 == 0, "alpha grid needs an even node count");
  require(n_beta >= 1, "beta grid needs at least one node");
  require(alpha_max > 0.0, "alpha_max must be positive");
  require(beta_min > 0.0 && beta_max > beta_min, "beta grid must be positive and increasing");
  require(n_t >= 2, "duration grid needs at least two nodes per spell");
  require(t_min > 0.0 && t_max > t_min && std::isfinite(t_max),
          "durations need 0 < t_min < t_max < inf");
  if (!lambda0) require(alpha_sd > 0.0 && beta_sd > 0.0, "heterogeneity scales must be positive");
}

double ig_density(double t, double alpha, double beta) {
  const double z = alpha * t - beta;
  return beta / std::sqrt(2.0 * std::numbers::pi * t * t * t) * std::exp(-z * z / (2.0 * t));
}

IGModel::IGModel(IGMixtureSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  alpha_ = alpha_grid(spec_.alpha_max, spec_.n_alpha);
  beta_ = gauss_legendre(spec_.beta_min, spec_.beta_max, spec_.n_beta);
  t_ = gauss_legendre(spec_.t_min, spec_.t_max, spec_.n_t);

  auto base = tensor_space({alpha_, beta_}, "pi");
  const auto nl = static_cast<Eigen::Index>(base->size());
  lambda0_.resize(nl);
  for (Eigen::Index l = 0; l < nl; ++l) {
    const double a = base->node(static_cast<std::size_t>(l))[0];
    const double b = base->node(static_cast<std::size_t>(l))[1];
    double v;
    if (spec_.lambda0) {
      v = spec_.lambda0(a, b);
    } else {
      const double za = (a - spec_.alpha_center) / spec_.alpha_sd;
      const double zb = (b - spec_.beta_center) / spec_.beta_sd;
      v = std::exp(-0.5 * (za * za + zb * zb));
    }
    require(std::isfinite(v) && v > 0.0, "heterogeneity density must be positive on the grid");
    lambda0_[l] = v;
  }
  lambda0_ /= base->weights().dot(lambda0_);
  latent_ = reweight(*base, lambda0_, "G0");
  g0_ = latent_->weights();

  const auto nt = static_cast<Eigen::Index>(spec_.n_t);
  k1_.resize(nt, nl);
  for (Eigen::Index l = 0; l < nl; ++l) {
    const double a = latent_->node(static_cast<std::size_t>(l))[0];
    const double b = latent_->node(static_cast<std::size_t>(l))[1];
    for (Eigen::Index i = 0; i < nt; ++i) k1_(i, l) = ig_density(t_.nodes[i], a, b);
  }
  const Mat f = k1_ * g0_.asDiagonal() * k1_.transpose();
  const double fmax = f.maxCoeff();
  std::vector<double> fk, qk;
  std::vector<std::array<double, 2>> nodes;
  for (Eigen::Index i = 0; i < nt; ++i)
    for (Eigen::Index j = 0; j < nt; ++j) {
      if (!(f(i, j) > 1e-14 * fmax)) continue;
      kept_.push_back(static_cast<std::size_t>(i * nt + j));
      fk.push_back(f(i, j));
      qk.push_back(t_.weights[i] * t_.weights[j]);
      nodes.push_back({t_.nodes[i], t_.nodes[j]});
    }
  require(!kept_.empty(), "duration density vanishes on the grid");
  f_ = Eigen::Map<Vec>(fk.data(), static_cast<Eigen::Index>(fk.size()));
  q_ = Eigen::Map<Vec>(qk.data(), static_cast<Eigen::Index>(qk.size()));
  NodeMat tn(static_cast<Eigen::Index>(nodes.size()), 2);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    tn(static_cast<Eigen::Index>(k), 0) = nodes[k][0];
    tn(static_cast<Eigen::Index>(k), 1) = nodes[k][1];
  }
  z_ = q_.dot(f_);
  WeightedSpace::Options opt;
  opt.probability = true;
  if (kept_.size() == static_cast<std::size_t>(nt * nt)) opt.shape = {spec_.n_t, spec_.n_t};
  opt.truncation_mass = 0.0;
  obs_ = make_space(std::move(tn), q_.cwiseProduct(f_) / z_, "P", std::move(opt));
}

std::size_t IGModel::mirror(std::size_t l) const {
  const std::size_t nb = spec_.n_beta;
  const std::size_t i = l / nb, j = l % nb;
  return (spec_.n_alpha - 1 - i) * nb + j;
}

Vec IGModel::apply(const Vec& b) const {
  require(b.size() == g0_.size(), "direction does not live on the latent grid");
  const Mat m = k1_ * g0_.cwiseProduct(b).asDiagonal() * k1_.transpose();
  const auto nt = static_cast<std::size_t>(k1_.rows());
  Vec out(static_cast<Eigen::Index>(kept_.size()));
  for (std::size_t k = 0; k < kept_.size(); ++k)
    out[static_cast<Eigen::Index>(k)] =
        m(static_cast<Eigen::Index>(kept_[k] / nt), static_cast<Eigen::Index>(kept_[k] % nt)) /
        f_[static_cast<Eigen::Index>(k)];
  return out;
}

Vec IGModel::apply_adjoint(const Vec& g) const {
  require(g.size() == static_cast<Eigen::Index>(kept_.size()),
          "function does not live on the duration grid");
  const auto nt = k1_.rows();
  Mat gq = Mat::Zero(nt, nt);
  for (std::size_t k = 0; k < kept_.size(); ++k)
    gq(static_cast<Eigen::Index>(kept_[k]) / nt, static_cast<Eigen::Index>(kept_[k]) % nt) =
        g[static_cast<Eigen::Index>(k)] * q_[static_cast<Eigen::Index>(k)];
  const Mat h = gq * k1_;
  return (k1_.cwiseProduct(h)).colwise().sum().transpose() / z_;
}

LinOp IGModel::dense() const {
  const auto nt = static_cast<std::size_t>(k1_.rows());
  Mat a(static_cast<Eigen::Index>(kept_.size()), k1_.cols());
  for (std::size_t k = 0; k < kept_.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(kept_[k] / nt);
    const auto j = static_cast<Eigen::Index>(kept_[k] % nt);
    a.row(static_cast<Eigen::Index>(k)) =
        (k1_.row(i).cwiseProduct(k1_.row(j)).cwiseProduct(g0_.transpose())) /
        f_[static_cast<Eigen::Index>(k)];
  }
  return LinOp(latent_, obs_, std::move(a));
}

ModelOperator IGModel::model() const {
  auto full = tensor_space({t_, t_}, "T2");
  ModelOperator m{dense(), full, kept_, 0.0, {}};
  if (dropped() > 0) {
    double lost = 0.0;
    const Mat f = k1_ * g0_.asDiagonal() * k1_.transpose();
    const auto nt = static_cast<Eigen::Index>(spec_.n_t);
    for (Eigen::Index i = 0; i < nt; ++i)
      for (Eigen::Index j = 0; j < nt; ++j) lost += t_.weights[i] * t_.weights[j] * f(i, j);
    m.dropped_mass = std::max(0.0, lost - z_);
    m.notes.push_back(std::to_string(dropped()) +
                      " duration nodes dropped: mixture density underflows");
  }
  return m;
}

double IGModel::reflection_defect() const {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < alpha_.nodes.size(); ++i)
    for (Eigen::Index j = 0; j < beta_.nodes.size(); ++j)
      for (Eigen::Index k = 0; k < t_.nodes.size(); ++k) {
        const double a = alpha_.nodes[i], b = beta_.nodes[j], t = t_.nodes[k];
        const double f = ig_density(t, a, b);
        if (!(f > 1e-300)) continue;
        const double mirrored = std::exp(2.0 * a * b) * ig_density(t, -a, b);
        worst = std::max(worst, std::abs(f - mirrored) / f);
      }
  return worst;
}

LinOp ig_operator(const IGMixtureSpec& spec) { return IGModel(spec).dense(); }

GridFunction ig_null_direction(const IGModel& model, const GridFunction& c) {
  const auto& lat = model.latent();
  require(c.size() == lat->size(), "C must live on the latent grid");
  const double scale = c.values.cwiseAbs().maxCoeff();
  Vec b(c.values.size());
  for (std::size_t l = 0; l < lat->size(); ++l) {
    const auto li = static_cast<Eigen::Index>(l);
    const auto mi = static_cast<Eigen::Index>(model.mirror(l));
    if (std::abs(c.values[li] + c.values[mi]) > 1e-12 * scale)
      fail(ErrorKind::InvalidArgument, "C must be odd in alpha");
    const double a = lat->node(l)[0], be = lat->node(l)[1];
    b[li] = c.values[li] * logistic_tail(4.0 * a * be) / model.lambda0()[li];
  }
  return GridFunction(lat, std::move(b));
}

IGAdjointReport ig_adjoint_structure_check(const IGModel& model, const GridFunction& g) {
  const Vec sg = model.apply_adjoint(g.values);
  const auto& lat = model.latent();
  Vec h(sg.size());
  for (std::size_t l = 0; l < lat->size(); ++l) {
    const double a = lat->node(l)[0], b = lat->node(l)[1];
    h[static_cast<Eigen::Index>(l)] = sg[static_cast<Eigen::Index>(l)] * std::exp(-2.0 * a * b) / (b * b);
  }
  IGAdjointReport rep;
  rep.scale = h.cwiseAbs().maxCoeff();
  const double denom = rep.scale > 0.0 ? rep.scale : 1.0;
  for (std::size_t l = 0; l < lat->size(); ++l)
    rep.evenness_defect =
        std::max(rep.evenness_defect, std::abs(h[static_cast<Eigen::Index>(l)] -
                                               h[static_cast<Eigen::Index>(model.mirror(l))]) /
                                          denom);

  const auto& al = model.alpha_axis().nodes;
  const auto& be = model.beta_axis().nodes;
  const auto na = al.size(), nb = be.size();
  auto at = [&](Eigen::Index i, Eigen::Index j) { return h[i * nb + j]; };
  for (Eigen::Index i = na / 2; i + 1 < na; ++i)
    for (Eigen::Index j = 0; j < nb; ++j)
      rep.dh_du_max = std::max(rep.dh_du_max, std::abs(at(i + 1, j) - at(i, j)) /
                                                  (al[i + 1] * al[i + 1] - al[i] * al[i]));
  for (Eigen::Index i = na / 2; i < na; ++i)
    for (Eigen::Index j = 0; j + 1 < nb; ++j)
      rep.dh_dv_max = std::max(rep.dh_dv_max, std::abs(at(i, j + 1) - at(i, j)) /
                                                  (be[j + 1] * be[j + 1] - be[j] * be[j]));
  return rep;
}

IGAdjointReport ig_adjoint_structure_check(const IGModel& model, const PointFunction& g) {
  return ig_adjoint_structure_check(model, evaluate(model.durations(), g));
}

std::vector<GridFunction> ig_symmetric_basis(const IGModel& model) {
  const auto& lat = model.latent();
  std::vector<PointFunction> fs{
      [](std::span<const double> x) { return x[0] * x[0]; },
      [](std::span<const double> x) { return x[1]; },
      [](std::span<const double> x) { return x[0] * x[0] * x[1]; },
      [](std::span<const double> x) { return x[1] * x[1]; },
      [](std::span<const double> x) { return x[0] * x[0] * x[0] * x[0]; },
  };
  std::vector<GridFunction> out;
  for (const auto& f : fs) out.push_back(centered(evaluate(lat, f)));
  return out;
}

}  // namespace identikit
