// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
//
//   identikit_acceptance --cli PATH --configs DIR --work DIR [--only N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "identikit/diagnostics.hpp"
#include "identikit/error.hpp"
#include "identikit/linop.hpp"
#include "identikit/mc.hpp"
#include "identikit/models.hpp"
#include "identikit/solvers.hpp"

using namespace identikit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  // Records a named sub-check; the criterion passes only if all of them do.
  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "FAILED ") + what;
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vec uniform_vec(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

Vec normal_vec(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> z;
  Vec v(n);
  for (auto& x : v) x = z(rng);
  return v;
}

SpacePtr line_space(const Vec& w) {
  NodeMat nodes(w.size(), 1);
  for (Eigen::Index i = 0; i < w.size(); ++i) nodes(i, 0) = static_cast<double>(i);
  return make_space(nodes, w, "x");
}

double wnorm(const Vec& v, const Vec& w) { return std::sqrt(w.dot(v.cwiseAbs2())); }

// ---------------------------------------------------------------------------
// 1. Adjoint identity

Outcome adjoint_identity() {
  Outcome o;
  std::mt19937_64 rng(101);
  std::vector<LinOp> catalog;
  catalog.push_back(circle_rc_operator(CircleRCSpec{64}).op);
  catalog.push_back(WTPModel(WTPSpec{}).op());
  catalog.push_back(mixed_logit_operator(mixed_logit_default(32)));
  IGMixtureSpec ig;
  ig.n_alpha = 12;
  ig.n_beta = 10;
  ig.n_t = 10;
  catalog.push_back(IGModel(ig).dense());
  TriangularRCSpec tri;
  tri.n = 12;
  catalog.push_back(triangular_functionals(tri).forward.op);
  catalog.push_back(synthetic_operator(SyntheticSpec{}));

  std::uniform_int_distribution<int> dim(1, 60);
  double worst = 0.0;
  const int triples = 1000;
  for (int t = 0; t < triples; ++t) {
    std::optional<LinOp> op;
    if (t % 4 == 3) {
      op.emplace(catalog[static_cast<std::size_t>(t / 4) % catalog.size()]);
    } else {
      const int m = dim(rng), n = dim(rng);
      // Weights spanning three decades stress the weighting.
      const Vec wd = (uniform_vec(rng, n, -1.5, 1.5) * std::numbers::ln10).array().exp();
      const Vec wc = (uniform_vec(rng, m, -1.5, 1.5) * std::numbers::ln10).array().exp();
      op.emplace(line_space(wd), line_space(wc), Mat(normal_vec(rng, m * n).reshaped(m, n)));
    }
    const Vec& wd = op->domain()->weights();
    const Vec& wc = op->codomain()->weights();
    const Vec b = normal_vec(rng, wd.size()), g = normal_vec(rng, wc.size());
    const Vec sb = op->apply(b);
    const Vec sg = adjoint(*op).apply(g);
    const double lhs = wc.dot(sb.cwiseProduct(g)), rhs = wd.dot(b.cwiseProduct(sg));
    const double scale = wnorm(sb, wc) * wnorm(g, wc);
    worst = std::max(worst, scale > 0 ? std::abs(lhs - rhs) / scale : std::abs(lhs - rhs));
  }
  o.check(worst <= 1e-10, "max relative defect " + fmt(worst) + " over " + std::to_string(triples) + " triples");
  return o;
}

// ---------------------------------------------------------------------------
// 2. Circle random-coefficient spectrum

Outcome circle_spectrum() {
  Outcome o;
  const auto mo = circle_rc_operator(CircleRCSpec{1024});
  const LinOp& op = mo.op;
  const LinOp adj = adjoint(op);
  const double lmax = operator_norm(op);
  auto harmonic = [&](int k, bool sine) {
    return evaluate(op.domain(), [k, sine](std::span<const double> x) {
      return sine ? std::sin(k * x[0]) : std::cos(k * x[0]);
    });
  };
  auto gain = [&](const GridFunction& h) { return norm(op.apply(h)) / norm(h); };

  double even = 0.0;
  for (int k = 2; k <= 20; ++k)
    if (k % 2 == 0) even = std::max({even, gain(harmonic(k, false)), gain(harmonic(k, true))});
  o.check(even <= 1e-8 * lmax, "even harmonics max gain / lambda_max " + fmt(even / lmax));

  // Odd harmonics are singular functions; lambda_k k against the oracle
  // 2 sin(k pi / 2) / k up to a common factor.
  double lo = 1e300, hi = 0.0, eig = 0.0;
  for (int k = 1; k <= 15; k += 2) {
    for (bool sine : {true, false}) {
      const GridFunction h = harmonic(k, sine);
      const double lam = gain(h);
      const Vec ssh = adj.apply(op.apply(h.values));
      eig = std::max(eig, wnorm(ssh - lam * lam * h.values, op.domain()->weights()) / (lam * lam * norm(h)));
      const double oracle = std::abs(2.0 * std::sin(k * std::numbers::pi / 2.0) / k);
      const double v = lam / oracle;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  o.check(hi / lo - 1.0 <= 0.05, "odd lambda_k k spread " + fmt(hi / lo - 1.0));
  o.check(eig <= 1e-6, "odd harmonics are eigenfunctions of S*S to " + fmt(eig));
  return o;
}

// ---------------------------------------------------------------------------
// 3. Inverse-Gaussian mixture

double ig_kernel(double t, double a, double b) {
  return b / std::sqrt(2.0 * std::numbers::pi * t * t * t) * std::exp(-(b - a * t) * (b - a * t) / (2.0 * t));
}

Outcome ig_mixture() {
  Outcome o;
  {
    IGModel m{IGMixtureSpec{}};
    double worst = 0.0, lib = 0.0;
    for (double t : m.t_axis().nodes)
      for (double a : m.alpha_axis().nodes)
        for (double b : m.beta_axis().nodes) {
          const double f = ig_kernel(t, a, b);
          worst = std::max(worst, std::abs(f - std::exp(2.0 * a * b) * ig_kernel(t, -a, b)) / f);
          lib = std::max(lib, std::abs(ig_density(t, a, b) - f) / f);
        }
    o.check(worst <= 1e-10 && lib <= 1e-12 && m.reflection_defect() <= 1e-10,
            "reflection defect " + fmt(std::max(worst, m.reflection_defect())));
  }
  {
    IGMixtureSpec s;
    s.n_alpha = 200;
    s.n_beta = 200;
    IGModel m(s);
    // lambda0 b = C / (1 + e^{4 alpha beta}) with C odd in alpha.
    const auto& lat = *m.latent();
    Vec b(static_cast<Eigen::Index>(lat.size()));
    for (std::size_t l = 0; l < lat.size(); ++l) {
      const auto x = lat.node(l);
      const double c = x[0] * x[0] * x[0] * std::exp(-x[0] * x[0] - x[1]);
      b[static_cast<Eigen::Index>(l)] = c / ((1.0 + std::exp(4.0 * x[0] * x[1])) * m.lambda0()[static_cast<Eigen::Index>(l)]);
    }
    const Vec sb = m.apply(b);
    const double ratio = wnorm(sb, m.durations()->weights()) / wnorm(b, lat.weights());
    o.check(ratio <= 1e-6, "null direction |Sb|/|b| " + fmt(ratio) + " on 200x200");
  }
  {
    std::vector<double> ratios;
    for (std::size_t n : {20, 40}) {
      IGMixtureSpec s;
      s.n_alpha = n;
      s.n_beta = n;
      IGModel m(s);
      const auto t = restrict_tangent(m.dense(), ig_symmetric_basis(m));
      const auto c = completeness_check(t.op, 1e-4);
      ratios.push_back(c.lambda_min / c.lambda_max);
    }
    const bool ok = ratios[0] > 1e-4 && ratios[1] > 1e-4 && std::abs(ratios[0] - ratios[1]) <= 0.1 * ratios[1];
    o.check(ok, "symmetric completeness " + fmt(ratios[0]) + " / " + fmt(ratios[1]));
  }
  {
    IGMixtureSpec s;
    s.n_alpha = 40;
    s.n_beta = 30;
    IGModel m(s);
    std::mt19937_64 rng(303);
    double worst = 0.0;
    const auto& lat = *m.latent();
    for (int trial = 0; trial < 20; ++trial) {
      const Vec g = normal_vec(rng, static_cast<Eigen::Index>(m.durations()->size()));
      const Vec sg = m.apply_adjoint(g);
      Vec h(sg.size());
      for (std::size_t l = 0; l < lat.size(); ++l) {
        const auto x = lat.node(l);
        h[static_cast<Eigen::Index>(l)] = std::exp(-2.0 * x[0] * x[1]) * sg[static_cast<Eigen::Index>(l)] / (x[1] * x[1]);
      }
      const double scale = h.cwiseAbs().maxCoeff();
      for (std::size_t l = 0; l < lat.size(); ++l)
        worst = std::max(worst, std::abs(h[static_cast<Eigen::Index>(l)] - h[static_cast<Eigen::Index>(m.mirror(l))]) / scale);
      worst = std::max(worst, ig_adjoint_structure_check(m, GridFunction(m.durations(), g)).evenness_defect);
    }
    o.check(worst <= 1e-8, "adjoint evenness " + fmt(worst) + " over 20 g");
  }
  return o;
}

// ---------------------------------------------------------------------------
// 4. Fisher information

// min |Sb|^2 subject to <r, b> = 1 via the KKT system, no SVD.
double fisher_kkt(const LinOp& op, const Vec& r) {
  const Vec& wd = op.domain()->weights();
  const Vec& wc = op.codomain()->weights();
  const auto n = op.matrix().cols();
  const Mat q = op.matrix().transpose() * wc.asDiagonal() * op.matrix();
  const Vec a = wd.cwiseProduct(r);
  Mat kkt = Mat::Zero(n + 1, n + 1);
  kkt.topLeftCorner(n, n) = 2.0 * q;
  kkt.topRightCorner(n, 1) = a;
  kkt.bottomLeftCorner(1, n) = a.transpose();
  Vec rhs = Vec::Zero(n + 1);
  rhs[n] = 1.0;
  const Vec b = kkt.fullPivLu().solve(rhs).head(n);
  return b.dot(q * b);
}

// Grid search of |diag(lam) c|^2 / gauge(<r,c>^2) over the unit ball in
// spherical coordinates, then a zoomed pass around the best cell.
double grid_search(const Vec& lam, const Vec& r, const Gauge& gauge) {
  double best = std::numeric_limits<double>::infinity();
  double br = 1, bt = 0, bp = 0;
  auto eval = [&](double rad, double th, double ph) {
    if (rad <= 0 || rad > 1) return;
    const double c0 = rad * std::sin(th) * std::cos(ph), c1 = rad * std::sin(th) * std::sin(ph), c2 = rad * std::cos(th);
    const double p = r[0] * c0 + r[1] * c1 + r[2] * c2;
    if (p == 0.0 || std::abs(p) > 1.0) return;
    const double v = (lam[0] * lam[0] * c0 * c0 + lam[1] * lam[1] * c1 * c1 + lam[2] * lam[2] * c2 * c2) / gauge.value(p * p);
    if (v < best) best = v, br = rad, bt = th, bp = ph;
  };
  const int m = 100;
  const double dr = 1.0 / m, dt = std::numbers::pi / m, dp = std::numbers::pi / m;
  for (int i = 1; i <= m; ++i)
    for (int a = 0; a <= m; ++a)
      for (int b = 0; b < 2 * m; ++b) eval(i * dr, a * dt, b * dp);
  const double r0 = br, t0 = bt, p0 = bp;
  const int z = 40;
  for (int i = -z; i <= z; ++i)
    for (int a = -z; a <= z; ++a)
      for (int b = -z; b <= z; ++b) eval(r0 + i * dr / z, t0 + a * dt / z, p0 + b * dp / z);
  return best;
}

Outcome fisher() {
  Outcome o;
  std::mt19937_64 rng(404);
  double kkt_err = 0.0, gf_err = 0.0;
  bool monotone = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 20, m = 26;
    const Vec wd = uniform_vec(rng, n, 0.2, 1.5), wc = uniform_vec(rng, m, 0.2, 1.5);
    // Columns scaled to spread the spectrum over about three decades.
    Vec decay(n);
    for (int j = 0; j < n; ++j) decay[j] = std::pow(10.0, -3.0 * j / (n - 1.0));
    const Mat a = normal_vec(rng, m * n).reshaped(m, n) * decay.asDiagonal();
    const LinOp op(line_space(wd), line_space(wc), a);
    const Vec r = normal_vec(rng, n);
    const auto sys = singular_system(op);
    const Functional f{"r", GridFunction(op.domain(), r)};
    const double closed = fisher_information(f, sys).value;
    const double oracle = fisher_kkt(op, r);
    kkt_err = std::max(kkt_err, std::abs(closed - oracle) / oracle);
    std::vector<double> gf;
    for (double rho : {1.0, 1.5, 2.0})
      gf.push_back(generalized_fisher(f, sys, power_gauge(rho), 32, 1e-4, static_cast<std::uint64_t>(trial + 1)).value);
    gf_err = std::max(gf_err, std::abs(gf[0] - oracle) / oracle);
    monotone = monotone && gf[1] >= gf[0] * (1 - 1e-9) && gf[2] >= gf[1] * (1 - 1e-9);
  }
  o.check(kkt_err <= 1e-8, "closed form vs KKT " + fmt(kkt_err));
  o.check(gf_err <= 1e-6, "generalized rho=1 vs KKT " + fmt(gf_err));
  o.check(monotone, "monotone in rho on all 100 systems");

  double grid_err = 0.0;
  bool below = true;
  for (int trial = 0; trial < 6; ++trial) {
    Vec lam = (uniform_vec(rng, 3, -2.0, 0.0) * std::numbers::ln10).array().exp();
    std::sort(lam.data(), lam.data() + 3, std::greater<>());
    Vec r = normal_vec(rng, 3);
    r /= r.norm();
    for (const auto& gauge : {power_gauge(1.5), power_gauge(2.0)}) {
      const double g = generalized_fisher(lam, r, gauge, 32, static_cast<std::uint64_t>(trial + 7)).value;
      const double s = grid_search(lam, r, gauge);
      grid_err = std::max(grid_err, std::abs(g - s) / s);
      below = below && g <= s * (1 + 1e-9);
    }
  }
  o.check(grid_err <= 0.01 && below, "3-d grid search agreement " + fmt(grid_err));
  return o;
}

// ---------------------------------------------------------------------------
// 5. Mixed logit

Outcome mixed_logit() {
  Outcome o;
  const LinOp coarse = mixed_logit_operator(mixed_logit_default(64));
  const LinOp fine = mixed_logit_operator(mixed_logit_default(128));
  const auto sc = singular_system(coarse), sf = singular_system(fine);
  auto make = [](const LinOp& op, const std::string& name, const PointFunction& f) {
    return Functional{name, evaluate(op.domain(), f)};
  };
  const PointFunction cdf = [](std::span<const double> x) { return x[0] <= 0.0 ? 1.0 : 0.0; };
  const PointFunction smooth = [](std::span<const double> x) { return std::tanh(x[0]); };
  const auto c = classify_functional(make(coarse, "cdf", cdf), sc, make(fine, "cdf", cdf), sf);
  // betas default to {0, .25, .5, .75, 1}; the last entry is beta = 1.
  for (const auto* rv : {&*c.coarse, &*c.fine}) {
    const auto& p1 = rv->plateaus.back();
    o.check(rv->verdict != Verdict::Regular && !p1.converged && p1.growth > 0.1,
            std::string("cdf ") + to_string(rv->verdict) + " beta=1 growth " + fmt(p1.growth));
  }
  const auto s = classify_functional(make(coarse, "tanh", smooth), sc, make(fine, "tanh", smooth), sf);
  o.check(s.coarse->plateaus.front().converged && s.fine->plateaus.front().converged,
          "tanh moment beta=0 growth " + fmt(s.fine->plateaus.front().growth));
  return o;
}

// ---------------------------------------------------------------------------
// 6. Willingness to pay

Functional wtp_mean(const WTPModel& m) {
  return Functional{"mean", evaluate(m.op().domain(), [](std::span<const double> w) { return w[0]; })};
}

WTPSpec vanishing_fv() {
  WTPSpec s;
  s.f_v = [](double v) { return 6.0 / 7.0 * (v - 0.5) * (v - 0.5); };
  return s;
}

const std::vector<std::size_t> kRateNs{500, 2000, 8000, 32000};

Outcome wtp_point() {
  Outcome o;
  WTPModel m{WTPSpec{}};
  RegPolicy policy{RegMethod::TruncatedSVD, Selection::Balanced};
  policy.sample_size = 10000;
  const auto est = moment_estimator(m.model(), wtp_mean(m), policy);
  const NodeMat x = simulate(wtp_sampler(m), 10000, 606);
  const auto me = moment_estimate(est.g_on_grid, x);
  // E[W] = 1/2 for W uniform on [0, 1].
  const double z = (me.estimate - 0.5) / me.standard_error;
  o.check(std::abs(z) <= 3.0, "estimate " + fmt(me.estimate) + " se " + fmt(me.standard_error) + " z " + fmt(z));
  return o;
}

Outcome wtp_rate(bool vanishing) {
  Outcome o;
  WTPModel m{vanishing ? vanishing_fv() : WTPSpec{}};
  RegPolicy policy{RegMethod::TruncatedSVD, Selection::Balanced};
  const auto fit = rate_experiment(m.model(), wtp_mean(m), policy, wtp_sampler(m), 0.5, kRateNs, 200, 616, 1);
  const double slope = fit.slope.value_or(std::numeric_limits<double>::quiet_NaN());
  if (!vanishing) {
    o.check(std::abs(slope + 0.5) <= 0.1, "slope " + fmt(slope) + " +- " + fmt(fit.slope_se.value_or(0)));
    return o;
  }
  o.check(slope > -0.4, "slope " + fmt(slope) + " +- " + fmt(fit.slope_se.value_or(0)));
  // int 1 / f_V diverges at v = 1/2 like 1 / (v - 1/2)^2, so the midpoint
  // sum roughly doubles with every halving of the cell width.
  std::vector<double> ints;
  bool grows = true;
  for (std::size_t cells : {1000, 2000, 4000, 8000}) {
    ints.push_back(m.mean_regularity_integral(cells));
    if (ints.size() > 1) grows = grows && ints.back() > 1.8 * ints[ints.size() - 2];
  }
  std::string seq;
  for (double v : ints) seq += (seq.empty() ? "" : " -> ") + fmt(v);
  o.check(grows, "regularity integral " + seq);
  WTPModel reg{WTPSpec{}};
  // Uniform f_V = 1/2: int_0^1 1 / f_V = 2.
  o.check(std::abs(reg.mean_regularity_integral(8000) - 2.0) <= 1e-9, "regular integral stays at 2");
  return o;
}

// ---------------------------------------------------------------------------
// 7. Euler equation

Outcome euler() {
  Outcome o;
  EulerSpec spec;
  const auto m = euler_model(spec);
  const auto rep = euler_discount_check(m);
  bool found = false;
  for (const auto& c : rep.candidates) {
    if (!c.identified) continue;
    found = true;
    o.check(std::abs(c.theta - 0.95) <= 1e-6, "theta " + fmt(c.theta) + " err " + fmt(std::abs(c.theta - 0.95)));
    // E[eta0 g] by direct quadrature on the law of C.
    const double moment = m.consumption->weights().dot(m.eta0.values.cwiseProduct(c.g.values));
    o.check(std::abs(moment - 0.95) <= 1e-6, "E[eta0 g] err " + fmt(std::abs(moment - 0.95)));
    break;
  }
  if (!found) o.check(false, "no identified candidate");
  const Vec& w = m.consumption->weights();
  const double res = wnorm(0.95 * m.A.apply(m.eta0.values) - m.eta0.values, w) / wnorm(m.eta0.values, w);
  o.check(res <= 1e-8, "theta0 A eta0 = eta0 to " + fmt(res));

  spec.orthogonal_eta = true;
  const auto orth = euler_discount_check(euler_model(spec));
  bool flagged = !orth.candidates.empty();
  for (const auto& c : orth.candidates) flagged = flagged && !c.identified;
  o.check(flagged, "orthogonal eta0 flagged unidentified");
  return o;
}

// ---------------------------------------------------------------------------
// 8. Multiplicative deconvolution and AARA

std::function<double(double)> lognormal(double sigma) {
  return [sigma](double e) {
    if (e <= 0) return 0.0;
    const double l = std::log(e);
    return std::exp(-l * l / (2 * sigma * sigma)) / (e * sigma * std::sqrt(2 * std::numbers::pi));
  };
}

Outcome deconvolution() {
  Outcome o;
  auto r = [](double c) { return c * c * std::exp(-0.5 * std::log(c) * std::log(c)); };
  {
    const auto f = lognormal(0.2);
    const auto d = deconvolve_multiplicative(r, f, 4096, -8, 8);
    // Direct trapezoid in log c of f(c / c*) w(c) c against r(c*).
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < d.w.size(); i += 4) {
      if (std::abs(d.log_grid[i]) > 5.0) continue;
      const double cs = std::exp(d.log_grid[i]);
      double s = 0.0;
      for (Eigen::Index k = 0; k < d.w.size(); ++k) {
        const double c = std::exp(d.log_grid[k]);
        s += f(c / cs) * d.w[k] * c * d.h;
      }
      num += (s - r(cs)) * (s - r(cs));
      den += r(cs) * r(cs);
    }
    const double err = std::sqrt(num / den);
    o.check(err <= 1e-3, "round trip relative L2 " + fmt(err));
  }
  {
    const auto d = deconvolve_multiplicative(r, lognormal(1e-3), 4096, -8, 8);
    double worst = 0.0;
    for (Eigen::Index k = 0; k < d.w.size(); ++k) {
      if (std::abs(d.log_grid[k]) > 4.0) continue;
      const double c = std::exp(d.log_grid[k]);
      worst = std::max(worst, std::abs(d.w[k] - r(c) / c) / std::abs(r(c) / c));
    }
    o.check(worst <= 1e-3, "delta limit w - r/c " + fmt(worst));
  }
  {
    EulerSpec spec;
    const auto m = euler_model(spec);
    const auto rep = aara_pipeline(spec, m);
    // E[-u''(C*) / u'(C*)] = crra E[1 / C*] by trapezoid in log C*.
    double oracle = 0.0;
    const int n = 20001;
    const double lo = spec.latent_mu - 12 * spec.latent_sd, h = 24 * spec.latent_sd / (n - 1);
    for (int i = 0; i < n; ++i) {
      const double x = lo + i * h;
      const double dens = std::exp(-0.5 * std::pow((x - spec.latent_mu) / spec.latent_sd, 2)) /
                          (spec.latent_sd * std::sqrt(2 * std::numbers::pi));
      oracle += (i == 0 || i == n - 1 ? 0.5 : 1.0) * h * dens * spec.crra * std::exp(-x);
    }
    const double err = std::abs(rep.aara - oracle) / oracle;
    o.check(err <= 1e-3, "AARA " + fmt(rep.aara) + " vs quadrature " + fmt(oracle) + " rel " + fmt(err));
  }
  return o;
}

// ---------------------------------------------------------------------------
// 9. Discrete classifier

Outcome discrete_classifier() {
  Outcome o;
  std::mt19937_64 rng(909);
  std::uniform_int_distribution<int> rows(1, 6), extra(1, 4);
  int irregular = 0, wrong = 0;
  for (int t = 0; t < 100; ++t) {
    const int m = rows(rng), k = m + extra(rng);
    Mat p = uniform_vec(rng, m * k, 0.05, 1.0).reshaped(m, k);
    p = p.array().rowwise() / p.colwise().sum().array();
    Vec w = uniform_vec(rng, k, 0.2, 1.0);
    w /= w.sum();
    // In the span: r = P' a. Off the span: add a null vector of P, which is
    // orthogonal to every row.
    const Vec inside = p.transpose() * normal_vec(rng, m);
    Eigen::FullPivLU<Mat> lu(p);
    const Mat ker = lu.kernel();
    Vec nv = ker * normal_vec(rng, ker.cols());
    nv *= inside.norm() / nv.norm();
    const Vec outside = inside + nv;
    const auto a = classify_discrete(p, w, inside), b = classify_discrete(p, w, outside);
    irregular += (a.verdict == Verdict::Irregular) + (b.verdict == Verdict::Irregular);
    wrong += (a.verdict != Verdict::Regular) + (b.verdict != Verdict::Unidentified);
  }
  o.check(irregular == 0, std::to_string(irregular) + " Irregular verdicts");
  o.check(wrong == 0, std::to_string(wrong) + " of 200 verdicts disagree with the construction");
  return o;
}

// ---------------------------------------------------------------------------
// 10. Triangular smoothness probes

ProbeReport triangular_probe(const TriangularRCSpec& base, const PointFunction& target) {
  std::vector<AdjointMap> maps;
  std::optional<TriangularModel> fine;
  for (std::size_t n : {16, 32, 64}) {
    auto s = base;
    s.n = n;
    fine.emplace(triangular_functionals(s));
    maps.push_back(fine->adjoint);
  }
  return adjoint_smoothness_probe(maps, triangular_dictionary(*fine, 15), &target);
}

Outcome triangular() {
  Outcome o;
  const PointFunction ame = [](std::span<const double> b) { return b[0] / b[1]; };
  const PointFunction ppame = [](std::span<const double> b) { return b[0] * b[1] > 0 ? 1.0 : 0.0; };
  const PointFunction smooth = [](std::span<const double> b) { return std::exp(0.5 * b[0]) * std::cos(b[1]); };
  TriangularRCSpec straddle;
  const auto pp = triangular_probe(straddle, ppame);
  const double growth = double(pp.dictionary_sizes.back()) / double(pp.dictionary_sizes.front());
  o.check(growth >= 8.0, "dictionary " + std::to_string(pp.dictionary_sizes.front()) + " -> " +
                             std::to_string(pp.dictionary_sizes.back()));
  o.check(pp.residuals.back() >= 0.05 && pp.drop < 10.0,
          "PPAME residual " + fmt(pp.residuals.front()) + " -> " + fmt(pp.residuals.back()));
  const auto sm = triangular_probe(straddle, smooth);
  o.check(sm.drop >= 10.0, "smooth drop " + fmt(sm.drop));
  TriangularRCSpec mono;
  mono.delta_lo = 0.5;
  mono.delta_hi = 2.0;
  mono.delta_mean = 1.2;
  const auto am = triangular_probe(mono, ame);
  o.check(am.drop >= 10.0, "monotone-instrument AME drop " + fmt(am.drop));
  return o;
}

// ---------------------------------------------------------------------------
// 11. Impossibility path

Outcome path() {
  Outcome o;
  SyntheticSpec spec;
  const LinOp op = synthetic_operator(spec);
  const auto sys = singular_system(op);
  const Vec lam = synthetic_values(spec);
  const Functional r{"matched", GridFunction(op.domain(), lam)};
  const std::vector<double> ts{0.5, 0.25, 0.125, 0.0625};

  // Hand computation: lambda_j = 2^{-(j+1)} on unit weights, r_j = lambda_j.
  // The last resolved mode has lambda_J >= 1e-10 lambda_0, and along
  // b_t = t e_J / r_J: delta_phi = t, |S b_t| = t lambda_J / r_J = t.
  std::size_t J = 0;
  for (std::size_t j = 0; j < spec.n; ++j)
    if (std::pow(0.5, double(j + 1)) >= 1e-10 * 0.5) J = j;
  for (double rho : {1.0, 1.5}) {
    const auto rep = impossibility_path(sys, r, rho, ts, 11);
    if (!rep.attainable) {
      o.check(false, "rho " + fmt(rho) + ": " + rep.status);
      continue;
    }
    double worst = 0.0;
    double eps = 0.0, c = 1e300;
    bool conds = true;
    for (const auto& p : rep.points) {
      const double score = p.t, ratio = p.t * p.t / std::pow(p.t, 2 * rho);
      worst = std::max({worst, std::abs(p.delta_phi - p.t) / p.t, std::abs(p.score_norm - score) / score,
                        std::abs(p.ratio - ratio) / ratio});
      eps = std::max(eps, ratio);
      c = std::min(c, p.delta_phi / p.t);
      conds = conds && p.condition_i && p.condition_ii;
    }
    worst = std::max({worst, std::abs(rep.epsilon - eps) / eps, std::abs(rep.c - 1.0),
                      std::abs(rep.lambda - std::pow(0.5, double(J + 1))) / rep.lambda});
    o.check(rep.mode == J && worst <= 1e-8 && conds,
            "rho " + fmt(rho) + " mode " + std::to_string(rep.mode + 1) + " max deviation " + fmt(worst));
    // Generalized Fisher evaluated by diagnostics is at most the path ratio.
    const auto gf = generalized_fisher(r, sys, power_gauge(rho), 32, 1e-4, 11);
    o.check(rep.fisher_consistent && gf.value <= eps * (1 + 1e-6),
            "rho " + fmt(rho) + " generalized Fisher " + fmt(gf.value) + " <= eps " + fmt(eps));
  }
  return o;
}

// ---------------------------------------------------------------------------
// 12. CLI determinism

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream f(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    out[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return out;
}

Outcome determinism(const std::string& cli, const fs::path& configs, const fs::path& work) {
  Outcome o;
  if (cli.empty()) {
    o.check(false, "no --cli given");
    return o;
  }
  const std::vector<std::pair<std::string, std::string>> runs{
      {"diagnose", "circle_rc.json"}, {"diagnose", "discrete.json"},  {"estimate", "wtp.json"},
      {"estimate", "euler_planted.json"}, {"rates", "discrete.json"}, {"rates", "circle_rc.json"},
      {"path", "synthetic.json"},      {"dump-operator", "circle_rc.json"}};
  fs::remove_all(work);
  for (const auto& [cmd, cfg] : runs) {
    std::vector<std::map<std::string, std::string>> trees;
    bool ran = true;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path out = work / (cmd + "_" + fs::path(cfg).stem().string() + "_" + std::to_string(rep));
      const std::string line = "\"" + cli + "\" " + cmd + " --config \"" + (configs / cfg).string() + "\" --out \"" +
                               out.string() + "\" --seed 5 > /dev/null 2>&1";
      ran = ran && std::system(line.c_str()) == 0;
      trees.push_back(read_tree(out));
    }
    std::size_t files = trees[0].size();
    o.check(ran && files > 0 && trees[0] == trees[1],
            cmd + " " + cfg + " " + std::to_string(files) + " files" + (ran ? "" : " (nonzero exit)"));
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string cli, configs = "configs", work = "acceptance_work";
  int only = 0;
  app.add_option("--cli", cli, "Path to the identikit executable");
  app.add_option("--configs", configs, "Directory of example configs");
  app.add_option("--work", work, "Scratch directory for CLI outputs");
  app.add_option("--only", only, "Run a single criterion");
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    std::string name;
    double limit_s;  // runtime bound, 0 for none
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "adjoint identity", 10, adjoint_identity},
      {2, "circle harmonic spectrum", 60, circle_spectrum},
      {3, "inverse Gaussian mixture", 300, ig_mixture},
      {4, "Fisher information", 0, fisher},
      {5, "mixed logit classification", 180, mixed_logit},
      {6, "WTP point estimate", 0, wtp_point},
      {6, "WTP regular rate", 600, [] { return wtp_rate(false); }},
      {6, "WTP vanishing density", 0, [] { return wtp_rate(true); }},
      {7, "Euler discount factor", 0, euler},
      {8, "deconvolution and AARA", 0, deconvolution},
      {9, "discrete classifier", 0, discrete_classifier},
      {10, "triangular smoothness probes", 0, triangular},
      {11, "impossibility path", 0, path},
      {12, "CLI determinism", 0, [&] { return determinism(cli, configs, work); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (only && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double s = seconds_since(t0);
    if (c.limit_s > 0) o.check(s < c.limit_s, "runtime " + fmt(s) + " s < " + fmt(c.limit_s) + " s");
    if (!o.pass) ++failed;
    std::printf("%s [%2d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), o.detail.c_str(), s);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
