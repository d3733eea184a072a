#include "identikit/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "identikit/error.hpp"

namespace identikit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Mat weighted_matrix(const LinOp& op) {
  return op.codomain()->weights().cwiseSqrt().asDiagonal() * op.matrix() *
         op.domain()->weights().cwiseSqrt().cwiseInverse().asDiagonal();
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 2) return kNaN;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxx > 0.0 ? sxy / sxx : kNaN;
}

struct ThinSvd {
  Mat u, v;
  Vec s;
};

// Divide-and-conquer SVD, checked against its own reconstruction. Eigen's
// BDCSVD can return NaN on matrices with many clustered tiny singular values;
// those cases are recomputed with one-sided Jacobi.
ThinSvd thin_svd(const Mat& a) {
  ThinSvd out;
  {
    Eigen::BDCSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.u = svd.matrixU();
    out.v = svd.matrixV();
    out.s = svd.singularValues();
  }
  const double scale = a.norm();
  const bool finite = out.u.allFinite() && out.v.allFinite() && out.s.allFinite();
  if (finite && (a * out.v - out.u * out.s.asDiagonal()).norm() <= 1e-10 * std::max(scale, 1e-300)) return out;
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.u = svd.matrixU();
  out.v = svd.matrixV();
  out.s = svd.singularValues();
  if (!out.s.allFinite()) fail(ErrorKind::Numerical, "singular value decomposition failed");
  return out;
}

}  // namespace

std::size_t SingularSystem::resolved() const { return std::min(rank_cutoff, size()); }

GridFunction SingularSystem::phi(std::size_t j) const {
  require(j < size(), "singular index out of range");
  return {domain, right.col(static_cast<Eigen::Index>(j))};
}

GridFunction SingularSystem::psi(std::size_t j) const {
  require(j < size(), "singular index out of range");
  return {codomain, left.col(static_cast<Eigen::Index>(j))};
}

SingularSystem singular_system(const LinOp& op, std::size_t k, double tau_null) {
  const std::size_t full = std::min(op.rows(), op.cols());
  require(k >= 1 && k <= full, "requested " + std::to_string(k) +
                                   " singular triples from an operator of rank at most " +
                                   std::to_string(full));
  require(tau_null > 0.0, "tau_null must be positive");
  const ThinSvd svd = thin_svd(weighted_matrix(op));
  const Vec& s = svd.s;
  const auto kk = static_cast<Eigen::Index>(k);

  SingularSystem out;
  out.domain = op.domain();
  out.codomain = op.codomain();
  out.tau_null = tau_null;
  out.values = s.head(kk);
  out.right = op.domain()->weights().cwiseSqrt().cwiseInverse().asDiagonal() *
              svd.v.leftCols(kk);
  out.left = op.codomain()->weights().cwiseSqrt().cwiseInverse().asDiagonal() *
             svd.u.leftCols(kk);
  // Fix signs so the largest entry of each phi_j is positive.
  for (Eigen::Index j = 0; j < kk; ++j) {
    Eigen::Index at = 0;
    out.right.col(j).cwiseAbs().maxCoeff(&at);
    if (out.right(at, j) < 0.0) {
      out.right.col(j) *= -1.0;
      out.left.col(j) *= -1.0;
    }
  }
  const double top = s.size() > 0 ? s[0] : 0.0;
  std::size_t cutoff = 0;
  if (top > 0.0)
    while (cutoff < static_cast<std::size_t>(s.size()) &&
           s[static_cast<Eigen::Index>(cutoff)] >= tau_null * top)
      ++cutoff;
  out.rank_cutoff = cutoff;
  return out;
}

SingularSystem singular_system(const LinOp& op) { return full_singular_system(op, 1e-10); }

SingularSystem full_singular_system(const LinOp& op, double tau_null) {
  return singular_system(op, std::min(op.rows(), op.cols()), tau_null);
}

GridFunction Functional::effective() const {
  return defined_up_to_constant ? centered(representer) : representer;
}

Functional restrict_functional(const TangentRestriction& t, const Functional& r) {
  require(same_space(r.representer.space, t.original_domain), "space mismatch");
  Functional out = r;
  const GridFunction eff = r.effective();
  out.representer = GridFunction(
      t.op.domain(), t.basis.transpose() * t.original_domain->weights().asDiagonal() * eff.values);
  out.defined_up_to_constant = false;
  return out;
}

SourceDiagnostics source_norm_profile(const Functional& r, const SingularSystem& sys,
                                      const std::vector<double>& betas) {
  const GridFunction f = r.effective();
  if (!same_space(f.space, sys.domain)) fail(ErrorKind::InvalidArgument, "space mismatch");
  for (double b : betas) require(b >= 0.0 && b <= 1.0, "betas must lie in [0, 1]");
  const std::size_t nres = sys.resolved();
  if (nres == 0) fail(ErrorKind::Numerical, "operator numerically rank-zero");

  SourceDiagnostics d;
  d.betas = betas;
  d.resolved = nres;
  const Vec& w = sys.domain->weights();
  d.coefficients = sys.right.transpose() * w.asDiagonal() * f.values;
  d.r_norm = norm(f);
  const auto J = static_cast<Eigen::Index>(nres);
  const Vec rest = f.values - sys.right.leftCols(J) * d.coefficients.head(J);
  d.null_mass = std::sqrt(std::max(0.0, rest.dot(w.cwiseProduct(rest))));

  for (double b : betas) {
    Vec sums(J);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < J; ++j) {
      const double c = d.coefficients[j];
      acc += std::pow(sys.values[j], -2.0 * b) * c * c;
      sums[j] = acc;
    }
    d.partial_sums.push_back(std::move(sums));
  }

  std::vector<double> x, y;
  for (Eigen::Index j = 0; j < J; ++j) {
    const double c = std::abs(d.coefficients[j]);
    if (c > 1e-12 * d.r_norm && sys.values[j] > 0.0) {
      x.push_back(std::log(sys.values[j]));
      y.push_back(2.0 * std::log(c));
    }
  }
  d.fitted_decay = slope(x, y);
  return d;
}

Plateau plateau_test(const Vec& s, double delta_conv) {
  Plateau p;
  const auto J = s.size();
  if (J == 0) return p;
  const double total = s[J - 1];
  if (total <= 0.0) {
    p.converged = true;
    return p;
  }
  // A single resolved term is a finite series.
  if (J == 1) {
    p.converged = true;
    return p;
  }
  const auto m = (3 * J) / 4;
  const double before = m > 0 ? s[m - 1] : 0.0;
  p.growth = (total - before) / total;
  // Strict inequality: ties count as not converged.
  p.converged = p.growth < delta_conv;
  return p;
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Regular:
      return "Regular";
    case Verdict::Irregular:
      return "Irregular";
    case Verdict::Unidentified:
      return "Unidentified";
  }
  return "?";
}

ResolutionVerdict classify_single(const Functional& r, const SingularSystem& sys,
                                  const Thresholds& policy) {
  require(policy.tau_ident > 0.0 && policy.delta_conv > 0.0, "thresholds must be positive");
  std::vector<double> betas = policy.betas;
  if (std::find(betas.begin(), betas.end(), 1.0) == betas.end()) betas.push_back(1.0);
  std::sort(betas.begin(), betas.end());
  betas.erase(std::unique(betas.begin(), betas.end()), betas.end());

  ResolutionVerdict out;
  out.diagnostics = source_norm_profile(r, sys, betas);
  for (const auto& s : out.diagnostics.partial_sums)
    out.plateaus.push_back(plateau_test(s, policy.delta_conv));

  const auto& d = out.diagnostics;
  if (d.null_mass > policy.tau_ident * d.r_norm) {
    out.verdict = Verdict::Unidentified;
    return out;
  }
  if (out.plateaus.back().converged) {
    out.verdict = Verdict::Regular;
    return out;
  }
  out.verdict = Verdict::Irregular;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    if (!out.plateaus[i].converged) break;
    out.beta_star = betas[i];
  }
  return out;
}

Classification classify_functional(const Functional& r_coarse, const SingularSystem& sys_coarse,
                                   const Functional& r_fine, const SingularSystem& sys_fine,
                                   const Thresholds& policy) {
  Classification c;
  c.coarse = classify_single(r_coarse, sys_coarse, policy);
  c.fine = classify_single(r_fine, sys_fine, policy);
  c.mesh_stable = c.coarse->verdict == c.fine->verdict;
  c.verdict = c.fine->verdict;
  c.beta_star = c.fine->beta_star;
  c.diagnostics = c.fine->diagnostics;
  return c;
}

FisherResult fisher_information(const Functional& r, const SingularSystem& sys,
                                double tau_ident) {
  const SourceDiagnostics d = source_norm_profile(r, sys, {1.0});
  FisherResult out;
  if (d.null_mass > tau_ident * d.r_norm) {
    out.unidentified = true;
    return out;
  }
  const double s = d.partial_sums.front()[static_cast<Eigen::Index>(d.resolved) - 1];
  if (s <= 0.0) {
    out.zero_functional = true;
    out.value = std::numeric_limits<double>::infinity();
    return out;
  }
  out.value = 1.0 / s;
  return out;
}

Gauge power_gauge(double rho) {
  require(rho >= 1.0, "power gauge needs rho >= 1");
  return {"power(" + std::to_string(rho) + ")",
          [rho](double e) { return std::pow(e, rho); },
          [rho](double e) { return rho * std::pow(e, rho - 1.0); }, true};
}

Gauge exp_gauge() {
  return {"exp", [](double e) { return std::expm1(e); }, [](double e) { return std::exp(e); },
          true};
}

Gauge log_gauge(double a) {
  require(a > 0.0, "log gauge needs a > 0");
  return {"log(" + std::to_string(a) + ")",
          [a](double e) { return e > 0.0 ? std::exp(-1.0 / std::pow(e, a)) : 0.0; },
          [a](double e) {
            return e > 0.0 ? a * std::pow(e, -a - 1.0) * std::exp(-1.0 / std::pow(e, a)) : 0.0;
          },
          false};
}

namespace {

// Objective of the generalized Fisher problem restricted to b = s u with u on
// the unit sphere; the scale s is optimized out for each u.
class GenFisherObjective {
 public:
  GenFisherObjective(const Vec& lambda, const Vec& r, const Gauge& gauge)
      : l2_(lambda.cwiseAbs2()), r_(r), gauge_(gauge) {}

  struct Eval {
    double value = std::numeric_limits<double>::infinity();
    double s = 0.0;
    Vec grad;  // Euclidean gradient in u at the optimal s
  };

  double h(double s, double q, double p) const {
    const double eps = s * s * p * p;
    const double g = gauge_.value(eps);
    if (!(g > 0.0)) return std::numeric_limits<double>::infinity();
    return s * s * q / g;
  }

  Eval eval(const Vec& u, bool with_grad) const {
    Eval e;
    const double q = u.dot(l2_.cwiseProduct(u));
    const double p = r_.dot(u);
    if (!(std::abs(p) > 0.0)) return e;
    const double smax = std::min(1.0, 1.0 / std::abs(p));

    // Coarse log-scan, then golden-section refinement inside the bracket.
    constexpr int kScan = 48;
    double best_s = smax;
    double best = h(smax, q, p);
    int best_i = kScan;
    for (int i = 0; i < kScan && !gauge_.scale_at_boundary; ++i) {
      const double s = smax * std::pow(10.0, -8.0 * (kScan - i) / kScan);
      const double v = h(s, q, p);
      if (v < best) {
        best = v;
        best_s = s;
        best_i = i;
      }
    }
    if (best_i < kScan) {
      double lo = std::log(smax) - 8.0 * (kScan - best_i + 1) / kScan * std::log(10.0);
      double hi = std::log(smax) - 8.0 * (kScan - best_i - 1) / kScan * std::log(10.0);
      hi = std::min(hi, std::log(smax));
      const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
      double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
      double fa = h(std::exp(a), q, p), fb = h(std::exp(b), q, p);
      for (int it = 0; it < 100; ++it) {
        if (fa < fb) {
          hi = b;
          b = a;
          fb = fa;
          a = hi - gr * (hi - lo);
          fa = h(std::exp(a), q, p);
        } else {
          lo = a;
          a = b;
          fa = fb;
          b = lo + gr * (hi - lo);
          fb = h(std::exp(b), q, p);
        }
      }
      const double s = std::exp(0.5 * (lo + hi));
      const double v = h(s, q, p);
      if (v < best) {
        best = v;
        best_s = s;
      }
    }
    e.value = best;
    e.s = best_s;
    if (!with_grad) return e;

    const bool bound_by_phi = smax < 1.0 && best_s >= smax * (1.0 - 1e-12);
    if (bound_by_phi) {
      // s = 1/|p|: h = q / (p^2 psi(1)).
      const double g1 = gauge_.value(1.0);
      e.grad = (2.0 * l2_.cwiseProduct(u) * p * p - 2.0 * q * p * r_) / (p * p * p * p * g1);
    } else {
      const double s2 = best_s * best_s;
      const double eps = s2 * p * p;
      const double g = gauge_.value(eps);
      const double dg = gauge_.derivative(eps);
      e.grad = s2 * (2.0 * l2_.cwiseProduct(u) * g - q * dg * 2.0 * s2 * p * r_) / (g * g);
    }
    return e;
  }

 private:
  Vec l2_;
  Vec r_;
  const Gauge& gauge_;
};

struct SphereResult {
  Vec u;
  double value;
  double s;
};

SphereResult descend(const GenFisherObjective& obj, Vec u) {
  u.normalize();
  auto e = obj.eval(u, true);
  Vec g = e.grad - e.grad.dot(u) * u;
  double step = g.norm() > 0.0 ? 0.1 / g.norm() : 0.0;
  Vec u_prev, g_prev;
  for (int it = 0; it < 5000; ++it) {
    const double gn = g.norm();
    if (!(gn > 1e-14 * std::max(1.0, e.value)) || !std::isfinite(e.value)) break;
    if (it > 0) {
      const Vec du = u - u_prev, dg = g - g_prev;
      const double den = std::abs(du.dot(dg));
      if (den > 0.0) step = du.squaredNorm() / den;
    }
    double t = step;
    Vec cand;
    GenFisherObjective::Eval ce;
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      cand = (u - t * g).normalized();
      ce = obj.eval(cand, true);
      if (ce.value <= e.value - 1e-4 * t * gn * gn) {
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;
    u_prev = u;
    g_prev = g;
    const double prev = e.value;
    u = cand;
    e = ce;
    g = e.grad - e.grad.dot(u) * u;
    if (prev - e.value <= 1e-16 * std::abs(prev) && it > 50) break;
  }
  return {u, e.value, e.s};
}

// Minimizer of |Lambda b|^2 over |b| <= 1 with <r, b> = c. Without the ball
// the answer is c Lambda^{-2} r / A; otherwise b is proportional to
// (Lambda^2 + mu)^{-1} r with mu fixed by |b| = 1.
Vec profile_point(const Vec& l2, const Vec& r, double c) {
  const Vec d0 = r.cwiseQuotient(l2);
  const double a = r.dot(d0);
  Vec b = (c / a) * d0;
  if (b.norm() <= 1.0) return b;
  auto dir = [&](double mu) { return Vec(r.array() / (l2.array() + mu)); };
  auto excess = [&](double mu) {
    const Vec d = dir(mu);
    return c * d.norm() / r.dot(d) - 1.0;  // decreasing in mu
  };
  double lo = -60.0, hi = std::log(l2.maxCoeff()) + 60.0;
  if (excess(std::exp(hi)) > 0.0) return r / r.norm();  // c at the bound |r|
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (excess(std::exp(mid)) > 0.0 ? lo : hi) = mid;
  }
  const Vec d = dir(std::exp(hi));
  b = (c / r.dot(d)) * d;
  return b / std::max(1.0, b.norm());
}

// Global minimizer over the feasible set through the one-dimensional profile
// c -> min |Lambda b|^2 / gauge(c^2), scanned in log c and refined by golden
// section.
Vec profile_minimizer(const Vec& l2, const Vec& r, const Gauge& gauge) {
  const double cmax = std::min(1.0, r.norm());
  auto value = [&](double logc) {
    const double c = std::exp(logc);
    const Vec b = profile_point(l2, r, c);
    const double g = gauge.value(c * c);
    return g > 0.0 ? b.dot(l2.cwiseProduct(b)) / g : std::numeric_limits<double>::infinity();
  };
  const double top = std::log(cmax), span = 30.0 * std::log(10.0);
  constexpr int kScan = 600;
  int best_i = kScan;
  double best = value(top);
  for (int i = 0; i < kScan; ++i) {
    const double v = value(top - span * (kScan - i) / kScan);
    if (v < best) best = v, best_i = i;
  }
  double lo = top - span * (kScan - best_i + 1) / kScan, hi = std::min(top, top - span * (kScan - best_i - 1) / kScan);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo), f1 = value(x1), f2 = value(x2);
  for (int it = 0; it < 120; ++it) {
    if (f1 < f2) {
      hi = x2, x2 = x1, f2 = f1, x1 = hi - gr * (hi - lo), f1 = value(x1);
    } else {
      lo = x1, x1 = x2, f1 = f2, x2 = lo + gr * (hi - lo), f2 = value(x2);
    }
  }
  double c = std::exp(0.5 * (lo + hi));
  if (best_i == kScan || value(std::log(c)) > best) c = std::exp(top - span * (kScan - best_i) / kScan);
  if (best_i == kScan) c = cmax;
  return profile_point(l2, r, c);
}

}  // namespace

GeneralizedFisher generalized_fisher(const Vec& lambda, const Vec& r, const Gauge& gauge,
                                     std::size_t starts, std::uint64_t seed) {
  require(lambda.size() == r.size() && lambda.size() > 0, "dimension mismatch");
  require(starts >= 1, "need at least one start");
  const double rn = r.norm();
  if (!(rn > 0.0)) fail(ErrorKind::Identification, "functional annihilated on tangent space");

  GenFisherObjective obj(lambda, r, gauge);
  const auto n = lambda.size();
  std::vector<Vec> seeds;
  // Every coordinate direction, then `starts` random directions.
  for (Eigen::Index j = 0; j < n; ++j) {
    Vec u = Vec::Unit(n, j);
    if (std::abs(r[j]) < 1e-8 * rn) u += 0.1 * r / rn;
    seeds.push_back(u);
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  while (seeds.size() < static_cast<std::size_t>(n) + starts) {
    Vec u(n);
    for (auto& x : u) x = z(rng);
    if (r.dot(u) < 0.0) u = -u;
    seeds.push_back(u);
  }

  // The exact profile solution starts first; descent can only improve it.
  const Vec l2 = lambda.cwiseAbs2();
  const Vec exact = profile_minimizer(l2, r, gauge);
  seeds.insert(seeds.begin(), exact);

  GeneralizedFisher best;
  best.value = std::numeric_limits<double>::infinity();
  best.starts = seeds.size();
  if (const double p = r.dot(exact); std::abs(p) > 0.0) {
    const double g = gauge.value(p * p);
    if (g > 0.0) {
      best.value = exact.dot(l2.cwiseProduct(exact)) / g;
      best.direction = exact;
      best.phi_dot = p;
    }
  }
  for (const auto& s : seeds) {
    auto res = descend(obj, s);
    if (res.value < best.value) {
      best.value = res.value;
      best.direction = res.s * res.u;
      best.phi_dot = r.dot(best.direction);
    }
  }
  return best;
}

GeneralizedFisher generalized_fisher(const Functional& r, const SingularSystem& sys,
                                     const Gauge& gauge, std::size_t starts, double tau_ident,
                                     std::uint64_t seed) {
  const SourceDiagnostics d = source_norm_profile(r, sys, {});
  if (!(d.r_norm > 0.0))
    fail(ErrorKind::Identification, "functional annihilated on tangent space");
  if (d.null_mass > tau_ident * d.r_norm) {
    GeneralizedFisher out;
    out.unidentified = true;
    return out;
  }
  const auto J = static_cast<Eigen::Index>(d.resolved);
  return generalized_fisher(sys.values.head(J), d.coefficients.head(J), gauge, starts, seed);
}

EfficientScore efficient_score(const GridFunction& score_theta, const LinOp& score_eta,
                               double ridge) {
  if (!same_space(score_theta.space, score_eta.codomain()))
    fail(ErrorKind::InvalidArgument, "space mismatch");
  const Vec sc = score_eta.codomain()->weights().cwiseSqrt();
  const Vec sd = score_eta.domain()->weights().cwiseSqrt();
  const Mat a = sc.asDiagonal() * score_eta.matrix();
  const Vec y = sc.cwiseProduct(score_theta.values);
  const double opn = operator_norm(score_eta);
  if (!(ridge > 0.0)) ridge = 1e-8 * opn * opn;
  if (!(ridge > 0.0)) ridge = 1e-300;

  const auto n = a.cols();
  auto solve = [&](double lam) {
    Mat stacked(a.rows() + n, n);
    stacked << a, std::sqrt(lam) * Mat(sd.asDiagonal());
    Vec rhs = Vec::Zero(a.rows() + n);
    rhs.head(a.rows()) = y;
    return Vec(stacked.colPivHouseholderQr().solve(rhs));
  };
  auto info_of = [&](const Vec& b) {
    const Vec res = score_theta.values - score_eta.matrix() * b;
    return res.dot(score_eta.codomain()->weights().cwiseProduct(res));
  };

  EfficientScore out;
  out.ridge = ridge;
  out.b = solve(ridge);
  out.score = GridFunction(score_theta.space, score_theta.values - score_eta.matrix() * out.b);
  out.information = info_of(out.b);
  for (double f : {0.1, 1.0, 10.0}) out.sensitivity.emplace_back(f * ridge, info_of(solve(f * ridge)));
  return out;
}

Completeness completeness_check(const LinOp& op, double tol) {
  const Vec s = thin_svd(weighted_matrix(op)).s;
  Completeness c;
  c.lambda_max = s.size() > 0 ? s[0] : 0.0;
  c.lambda_min = (op.cols() <= op.rows() && s.size() > 0) ? s[s.size() - 1] : 0.0;
  c.complete = c.lambda_min > tol * c.lambda_max;
  return c;
}

Classification classify_discrete(const Mat& p, const Vec& w, const Vec& r) {
  require(p.rows() >= 1 && p.cols() == w.size() && r.size() == w.size(), "dimension mismatch");
  for (Eigen::Index i = 0; i < w.size(); ++i) require(w[i] > 0.0, "latent weights must be positive");
  require(p.minCoeff() >= 0.0, "conditional probabilities must be nonnegative");
  const Vec colsum = p.colwise().sum().transpose();
  require((colsum.array() - 1.0).abs().maxCoeff() <= 1e-8,
          "conditional probabilities must sum to one over observed values");

  const double wsum = w.sum();
  auto center = [&](const Vec& f) { return Vec(f.array() - f.dot(w) / wsum); };
  const Vec sw = w.cwiseSqrt();
  const double rnorm = std::sqrt(r.dot(w.cwiseProduct(r)));
  const Vec rc = center(r);

  Mat basis(w.size(), p.rows());
  for (Eigen::Index j = 0; j < p.rows(); ++j) basis.col(j) = center(p.row(j).transpose());

  Classification c;
  c.mesh_stable = true;
  const Mat bw = sw.asDiagonal() * basis;
  const Vec tw = sw.cwiseProduct(rc);
  Vec resid = tw;
  if (bw.cwiseAbs().maxCoeff() > 0.0) {
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(bw);
    resid = tw - bw * cod.solve(tw);
  }
  c.residual = resid.norm();
  c.diagnostics.null_mass = c.residual;
  c.diagnostics.r_norm = rnorm;
  c.verdict = c.residual < 1e-8 * rnorm || rnorm == 0.0 ? Verdict::Regular : Verdict::Unidentified;
  return c;
}

AdjointMap adjoint_map(const LinOp& score) {
  auto adj = std::make_shared<const LinOp>(adjoint(score));
  return {score.domain(), [adj](const PointFunction& g) {
            return Vec(adj->matrix() * evaluate(adj->domain(), g).values);
          }};
}

double discrete_modulus(const GridFunction& f) {
  const auto& sp = *f.space;
  const auto& shape = sp.shape();
  double best = 0.0;
  auto consider = [&](std::size_t i, std::size_t k, std::size_t axis) {
    const double dx = std::abs(sp.node(k)[axis] - sp.node(i)[axis]);
    if (dx > 0.0)
      best = std::max(best, std::abs(f.values[static_cast<Eigen::Index>(k)] -
                                     f.values[static_cast<Eigen::Index>(i)]) / dx);
  };
  if (!shape.empty() && shape.size() == sp.dim()) {
    std::vector<std::size_t> stride(shape.size(), 1);
    for (std::size_t a = shape.size() - 1; a-- > 0;) stride[a] = stride[a + 1] * shape[a + 1];
    for (std::size_t i = 0; i < sp.size(); ++i)
      for (std::size_t a = 0; a < shape.size(); ++a)
        if ((i / stride[a]) % shape[a] + 1 < shape[a]) consider(i, i + stride[a], a);
    return best;
  }
  require(sp.dim() == 1, "modulus needs a tensor grid or one-dimensional nodes");
  std::vector<std::size_t> order(sp.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return sp.node(a)[0] < sp.node(b)[0]; });
  for (std::size_t i = 0; i + 1 < order.size(); ++i) consider(order[i], order[i + 1], 0);
  return best;
}

ProbeReport adjoint_smoothness_probe(const std::vector<AdjointMap>& resolutions,
                                     const std::vector<PointFunction>& dictionary,
                                     const PointFunction* target,
                                     std::vector<std::size_t> sizes) {
  require(resolutions.size() >= 2, "smoothness probe needs at least two resolutions");
  if (dictionary.empty()) fail(ErrorKind::InvalidArgument, "dictionary empty");

  ProbeReport rep;
  for (const auto& g : dictionary) {
    ProbeEntry e;
    for (const auto& res : resolutions)
      e.modulus.push_back(discrete_modulus(GridFunction(res.latent, res.apply(g))));
    const double first = e.modulus.front(), last = e.modulus.back();
    e.growth = first > 0.0 ? last / first : (last > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
    e.bounded = e.growth <= 1.5;
    rep.entries.push_back(std::move(e));
  }
  if (target == nullptr) return rep;

  const auto& fine = resolutions.back();
  const Vec sw = fine.latent->weights().cwiseSqrt();
  const Vec r = evaluate(fine.latent, *target).values;
  const Vec rw = sw.cwiseProduct(r);
  const double rn = rw.norm();
  require(rn > 0.0, "probe target vanishes on the grid");

  const auto n = dictionary.size();
  if (sizes.empty()) {
    for (std::size_t k = std::max<std::size_t>(1, n / 8); k < n; k *= 2) sizes.push_back(k);
    sizes.push_back(n);
  }
  Mat cols(static_cast<Eigen::Index>(fine.latent->size()), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    cols.col(static_cast<Eigen::Index>(i)) = sw.cwiseProduct(fine.apply(dictionary[i]));
  for (auto k : sizes) {
    require(k >= 1 && k <= n, "dictionary size out of range");
    const Mat a = cols.leftCols(static_cast<Eigen::Index>(k));
    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec res = rw - a * svd.solve(rw);
    rep.dictionary_sizes.push_back(k);
    rep.residuals.push_back(res.norm() / rn);
  }
  rep.drop = rep.residuals.back() > 0.0 ? rep.residuals.front() / rep.residuals.back()
                                        : std::numeric_limits<double>::infinity();
  return rep;
}

}  // namespace identikit
