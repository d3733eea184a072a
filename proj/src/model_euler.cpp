#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "identikit/error.hpp"
#include "identikit/models.hpp"

namespace identikit {

namespace {

constexpr double kQuantileZ = 4.753424308822899;  // standard normal 1 - 1e-6 quantile

double normal_pdf(double x, double m, double s) {
  const double z = (x - m) / s;
  return std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * std::numbers::pi));
}

double consumption_sd(const EulerSpec& s) {
  return std::sqrt(s.latent_sd * s.latent_sd + s.error_sd * s.error_sd);
}

// Quadrature for E[h(log C*)] under the latent law.
const Axis& latent_rule(const EulerSpec& s, Axis& storage) {
  storage = gauss_legendre(s.latent_mu - 12.0 * s.latent_sd, s.latent_mu + 12.0 * s.latent_sd, 256);
  for (Eigen::Index k = 0; k < storage.nodes.size(); ++k)
    storage.weights[k] *= normal_pdf(storage.nodes[k], s.latent_mu, s.latent_sd);
  return storage;
}

double inner_mu(const SpacePtr& s, const Vec& a, const Vec& b) {
  return s->weights().dot(a.cwiseProduct(b));
}

// Real eigenpairs of m, largest eigenvalue first.
struct RealEigen {
  double value;
  Vec vector;
};

std::vector<RealEigen> real_eigenpairs(const Mat& m) {
  Eigen::EigenSolver<Mat> es(m);
  require(es.info() == Eigen::Success, "eigen-decomposition failed", ErrorKind::Numerical);
  std::vector<RealEigen> out;
  const auto& ev = es.eigenvalues();
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (std::abs(ev[k].imag()) > 1e-9 * std::max(1.0, std::abs(ev[k]))) continue;
    Vec v = es.eigenvectors().col(k).real();
    out.push_back({ev[k].real(), v});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.value > b.value; });
  return out;
}

Mat adjoint_matrix(const LinOp& a) {
  const Vec& w = a.domain()->weights();
  return w.cwiseInverse().asDiagonal() * a.matrix().transpose() * w.asDiagonal();
}

}  // namespace

void EulerSpec::validate() const {
  require(n_c >= 4 && n_c <= kMaxNodesPerAxis, "consumption grid needs 4..4096 nodes");
  require(latent_sd > 0.0 && error_sd > 0.0, "latent and error scales must be positive");
  require(crra > 0.0, "curvature must be positive");
  if (builder == EulerBuilder::Planted) require(theta0 > 0.0 && theta0 < 1.0, "theta0 must lie in (0, 1)");
  if (builder == EulerBuilder::PlantedSpectrum) {
    require(!spectrum.empty() && spectrum.size() <= n_c, "planted spectrum needs 1..n_c eigenvalues");
    require(spectrum[0] > 1.0, "the eigenvalue paired with eta0 must exceed 1");
  }
  if (builder == EulerBuilder::Copula) {
    require(std::abs(copula_rho) < 1.0, "copula correlation must lie in (-1, 1)");
    require(gross_return > 1.0, "gross return must exceed 1");
  }
  require(fft_size >= 256 && (fft_size & (fft_size - 1)) == 0, "FFT size must be a power of two >= 256");
}

double euler_projected_marginal_utility(const EulerSpec& s, double c) {
  Axis rule;
  latent_rule(s, rule);
  const double t = std::log(c);
  double num = 0.0, den = 0.0;
  for (Eigen::Index k = 0; k < rule.nodes.size(); ++k) {
    const double w = rule.weights[k] * normal_pdf(t - rule.nodes[k], 0.0, s.error_sd);
    num += w * std::exp(-s.crra * rule.nodes[k]);
    den += w;
  }
  return num / den;
}

EulerModel euler_model(const EulerSpec& spec) {
  spec.validate();
  const double sc = consumption_sd(spec);
  const Axis tau = gauss_legendre(spec.latent_mu - 5.0 * sc, spec.latent_mu + 5.0 * sc, spec.n_c);
  const auto n = tau.nodes.size();
  NodeMat nodes(n, 1);
  Vec w(n), eta(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    nodes(i, 0) = std::exp(tau.nodes[i]);
    w[i] = tau.weights[i] * normal_pdf(tau.nodes[i], spec.latent_mu, sc);
    eta[i] = euler_projected_marginal_utility(spec, nodes(i, 0));
  }
  WeightedSpace::Options opt;
  opt.probability = true;
  opt.shape = {spec.n_c};
  opt.truncation_mass = std::erfc(5.0 / std::numbers::sqrt2);
  auto space = make_space(nodes, w / w.sum(), "C", opt);

  EulerModel m{space, LinOp(space, space, Mat::Zero(n, n)), GridFunction(space, eta), 0.0};
  Mat a;
  switch (spec.builder) {
    case EulerBuilder::Planted: {
      Mat k(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
          const double d = (tau.nodes[i] - tau.nodes[j]) / sc;
          k(i, j) = std::exp(-0.5 * d * d) + 0.1;
        }
      Eigen::SelfAdjointEigenSolver<Mat> es(k);
      const double rho = es.eigenvalues()[n - 1];
      Vec v = es.eigenvectors().col(n - 1);
      if (v.sum() < 0.0) v = -v;
      require(v.minCoeff() > 0.0, "Perron vector is not positive", ErrorKind::Numerical);
      const Vec d = eta.cwiseQuotient(v);
      a = (1.0 / (spec.theta0 * rho)) * d.asDiagonal() * k * d.cwiseInverse().asDiagonal();
      m.theta0 = spec.theta0;
      break;
    }
    case EulerBuilder::PlantedSpectrum: {
      Mat p(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < n; ++k)
          p(i, k) = std::cos(std::numbers::pi * static_cast<double>(k) * (static_cast<double>(i) + 0.5) /
                             static_cast<double>(n));
      p.col(0) = eta;
      Vec ev(n);
      for (Eigen::Index k = 0; k < n; ++k)
        ev[k] = static_cast<std::size_t>(k) < spec.spectrum.size()
                    ? spec.spectrum[static_cast<std::size_t>(k)]
                    : 0.3 * std::pow(0.7, static_cast<double>(k) - static_cast<double>(spec.spectrum.size()));
      a = p * ev.asDiagonal() * p.inverse();
      m.theta0 = 1.0 / spec.spectrum[0];
      break;
    }
    case EulerBuilder::Copula: {
      // Gaussian copula of (log C_{t+1}, log C_t) with the marginal of log C;
      // rows are normalized on the grid so the gross return R is an exact
      // eigenvalue with a constant eigenfunction.
      a.resize(n, n);
      const double r = spec.copula_rho;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double mean = spec.latent_mu + r * (tau.nodes[i] - spec.latent_mu);
        const double sd = sc * std::sqrt(1.0 - r * r);
        for (Eigen::Index j = 0; j < n; ++j) a(i, j) = tau.weights[j] * normal_pdf(tau.nodes[j], mean, sd);
        a.row(i) *= spec.gross_return / a.row(i).sum();
      }
      m.theta0 = 1.0 / spec.gross_return;
      m.eta0 = constant(space, 1.0);
      break;
    }
  }
  require(a.allFinite(), "Euler operator has non-finite entries", ErrorKind::Numerical);
  m.A = LinOp(space, space, std::move(a));

  if (spec.orthogonal_eta) {
    const auto pairs = real_eigenpairs(adjoint_matrix(m.A));
    const RealEigen* hit = nullptr;
    for (const auto& p : pairs)
      if (std::abs(p.value * m.theta0 - 1.0) <= 1e-8) hit = &p;
    require(hit != nullptr, "planted eigenvalue not found", ErrorKind::Numerical);
    const Vec& g0 = hit->vector;
    const Vec e = m.eta0.values;
    m.eta0 = GridFunction(space, e - (inner_mu(space, e, g0) / inner_mu(space, g0, g0)) * g0);
  }
  return m;
}

DiscountReport euler_discount_check(const EulerModel& model) {
  const auto& s = model.consumption;
  const Vec& eta = model.eta0.values;
  DiscountReport rep;
  const double en = std::sqrt(inner_mu(s, eta, eta));
  if (model.theta0 > 0.0 && en > 0.0)
    rep.eigen_residual =
        std::sqrt(inner_mu(s, model.theta0 * model.A.apply(eta) - eta, model.theta0 * model.A.apply(eta) - eta)) / en;
  const Vec aeta = model.A.apply(eta);
  for (auto& p : real_eigenpairs(adjoint_matrix(model.A))) {
    if (!(p.value > 1.0 + 1e-12)) continue;
    DiscountCandidate c;
    c.rho = p.value;
    c.theta = 1.0 / p.value;
    Vec g0 = p.vector / std::sqrt(inner_mu(s, p.vector, p.vector));
    Eigen::Index top = 0;
    g0.cwiseAbs().maxCoeff(&top);
    if (g0[top] < 0.0) g0 = -g0;
    c.g0 = GridFunction(s, g0);
    c.eta_g0 = inner_mu(s, eta, g0);
    c.identified = std::abs(c.eta_g0) > 1e-8 * en;
    const double scale = inner_mu(s, aeta, g0);
    if (c.identified && scale != 0.0) {
      c.g = GridFunction(s, g0 / scale);
      c.moment = inner_mu(s, eta, c.g.values);
    } else {
      c.g = GridFunction(s, Vec::Zero(g0.size()));
      c.moment = std::numeric_limits<double>::quiet_NaN();
    }
    rep.candidates.push_back(std::move(c));
  }
  if (rep.candidates.empty()) fail(ErrorKind::Identification, "no admissible discount candidate");
  return rep;
}

AaraReport aara_pipeline(const EulerSpec& spec, const EulerModel& model) {
  spec.validate();
  const double mu = spec.latent_mu, s2 = spec.latent_sd * spec.latent_sd, a = spec.crra;
  auto udot = [a](double c) { return std::pow(c, -a); };
  auto score = [mu, s2](double c) { return -(1.0 + (std::log(c) - mu) / s2) / c; };
  auto r_chi = [&](double c) { return score(c) / udot(c); };

  AaraReport rep;
  Axis rule;
  latent_rule(spec, rule);
  for (Eigen::Index k = 0; k < rule.nodes.size(); ++k) {
    const double c = std::exp(rule.nodes[k]), w = rule.weights[k];
    rep.mean_score += w * score(c);
    rep.score_identity += w * r_chi(c) * udot(c);
    rep.aara += w * std::log(udot(c)) * score(c);
  }

  // Deconvolution on a log grid covering the latent bulk and the
  // consumption grid, padded by four kernel standard deviations. The input
  // is tapered to zero across the padding so its periodic extension is smooth.
  const double ql = mu - kQuantileZ * spec.latent_sd, qh = mu + kQuantileZ * spec.latent_sd;
  const auto& cn = model.consumption->nodes();
  const double cl = std::min(ql, std::log(cn.col(0).minCoeff()));
  const double ch = std::max(qh, std::log(cn.col(0).maxCoeff()));
  const auto bounds = log_grid_bounds(cl, ch, spec.error_sd);
  const double lo = bounds.first, hi = bounds.second;
  const double pad = 4.0 * spec.error_sd;
  auto smooth_step = [](double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double p = std::exp(-1.0 / x), q = std::exp(-1.0 / (1.0 - x));
    return p / (p + q);
  };
  auto taper = [&](double t) { return smooth_step((t - lo) / pad) * smooth_step((hi - t) / pad); };
  const double sd = spec.error_sd;
  auto f_eps = [sd](double e) { return e > 0.0 ? normal_pdf(std::log(e), 0.0, sd) / e : 0.0; };
  // The quadrature identity E[w(C) | C* = c*] = r_chi(c*) carries the
  // Jacobian 1/c*, hence the factor c* on the input.
  rep.deconvolution = deconvolve_multiplicative(
      [&](double c) { return c * r_chi(c) * taper(std::log(c)); }, f_eps, spec.fft_size, lo, hi);
  if (rep.deconvolution.clipped_energy > 0.1)
    fail(ErrorKind::Numerical, "severely ill-posed measurement layer");
  const auto& d = rep.deconvolution;

  // w at the consumption nodes by linear interpolation in log c.
  const auto n = static_cast<Eigen::Index>(model.consumption->size());
  Vec wc(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = (std::log(cn(i, 0)) - d.log_grid[0]) / d.h;
    const auto k = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(t)), 0, d.w.size() - 2);
    const double f = t - static_cast<double>(k);
    wc[i] = (1.0 - f) * d.w[k] + f * d.w[k + 1];
  }
  const auto& sp = model.consumption;
  const double wn = std::sqrt(inner_mu(sp, wc, wc));
  rep.orthogonal = true;
  for (const auto& p : real_eigenpairs(model.A.matrix())) {
    if (std::abs(p.value * model.theta0 - 1.0) > 1e-8) continue;
    const double en = std::sqrt(inner_mu(sp, p.vector, p.vector));
    const double ip = inner_mu(sp, wc, p.vector) / (wn * en);
    rep.orthogonality.push_back(ip);
    if (std::abs(ip) > 1e-3) rep.orthogonal = false;
  }

  // E[w(C) (Lb)(C)] = E[b(C*) E[w(C) | C*]] against E[b(C*) r_chi(C*)] for
  // b = u' log c, over the latent bulk where the taper is inactive.
  const Vec fwd = forward_multiplicative(d, f_eps);
  double lhs = 0.0, rhs = 0.0;
  for (Eigen::Index k = 0; k < d.w.size(); ++k) {
    const double t = d.log_grid[k];
    if (t < ql || t > qh) continue;
    const double c = std::exp(t);
    const double wt = d.h * normal_pdf(t, mu, spec.latent_sd) * udot(c) * t;
    lhs += wt * fwd[k] / c;
    rhs += wt * r_chi(c);
  }
  rep.representer_check = std::abs(lhs - rhs) / std::abs(rhs);
  return rep;
}

}  // namespace identikit
