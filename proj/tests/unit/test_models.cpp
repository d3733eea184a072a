#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "identikit/error.hpp"
#include "identikit/models.hpp"

using namespace identikit;

namespace {

double rel_norm(const Vec& a, const Vec& b, const Vec& w) {
  return std::sqrt(w.dot((a - b).cwiseAbs2())) / std::sqrt(w.dot(b.cwiseAbs2()));
}

// Sb = 1 for b = 1, to 1e-12.
double constant_defect(const LinOp& op) {
  const Vec one = Vec::Ones(static_cast<Eigen::Index>(op.cols()));
  return (op.apply(one).array() - 1.0).abs().maxCoeff();
}

}  // namespace

TEST_CASE("inverse Gaussian kernel and operator") {
  IGMixtureSpec spec;
  spec.n_alpha = 16;
  spec.n_beta = 12;
  spec.n_t = 10;
  IGModel m(spec);
  CHECK(m.reflection_defect() <= 1e-10);
  auto op = m.dense();
  CHECK(constant_defect(op) <= 1e-12);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  Vec b(static_cast<Eigen::Index>(op.cols())), g(static_cast<Eigen::Index>(op.rows()));
  for (auto& v : b) v = nd(rng);
  for (auto& v : g) v = nd(rng);
  CHECK((m.apply(b) - op.apply(b)).cwiseAbs().maxCoeff() <= 1e-12 * op.apply(b).cwiseAbs().maxCoeff());
  CHECK((m.apply_adjoint(g) - adjoint(op).apply(g)).cwiseAbs().maxCoeff() <=
        1e-10 * adjoint(op).apply(g).cwiseAbs().maxCoeff());
}

TEST_CASE("inverse Gaussian null direction") {
  IGMixtureSpec spec;
  spec.n_alpha = 40;
  spec.n_beta = 30;
  spec.n_t = 16;
  IGModel m(spec);
  auto c = evaluate(m.latent(), [](std::span<const double> x) {
    return x[0] * x[0] * x[0] * std::exp(-x[0] * x[0] - x[1]);
  });
  auto b = ig_null_direction(m, c);
  const Vec sb = m.apply(b.values);
  CHECK(std::sqrt(m.durations()->weights().dot(sb.cwiseAbs2())) / norm(b) <= 1e-6);

  // lambda0 b = C / (1 + e^{4ab}) satisfies the reflection relation.
  double worst = 0.0;
  for (std::size_t l = 0; l < m.latent()->size(); ++l) {
    const auto x = m.latent()->node(l);
    const auto i = static_cast<Eigen::Index>(l), k = static_cast<Eigen::Index>(m.mirror(l));
    const double lb = m.lambda0()[i] * b.values[i], lbm = m.lambda0()[k] * b.values[k];
    worst = std::max(worst, std::abs(lb + std::exp(-4.0 * x[0] * x[1]) * lbm) / std::max(1e-300, std::abs(lb)));
  }
  CHECK(worst <= 1e-10);

  auto zero = ig_null_direction(m, constant(m.latent(), 0.0));
  CHECK(zero.values.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(ig_null_direction(m, evaluate(m.latent(), [](std::span<const double> x) { return x[0] * x[0]; })),
                  Error);
}

TEST_CASE("inverse Gaussian adjoint structure") {
  IGMixtureSpec spec;
  spec.n_alpha = 20;
  spec.n_beta = 16;
  spec.n_t = 12;
  IGModel m(spec);
  auto rep = ig_adjoint_structure_check(m, constant(m.durations(), 1.0));
  CHECK(rep.evenness_defect <= 1e-12);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 5; ++trial) {
    Vec g(static_cast<Eigen::Index>(m.durations()->size()));
    for (auto& v : g) v = nd(rng);
    CHECK(ig_adjoint_structure_check(m, GridFunction(m.durations(), g)).evenness_defect <= 1e-8);
  }
  auto box = [](std::span<const double> t) { return (t[0] < 1.0 && t[1] > 0.8 && t[1] < 2.0) ? 1.0 : 0.0; };
  auto coarse = ig_adjoint_structure_check(m, box);
  spec.n_alpha = 40;
  spec.n_beta = 32;
  auto fine = ig_adjoint_structure_check(IGModel(spec), box);
  CHECK(fine.evenness_defect <= 1e-8);
  CHECK(fine.dh_du_max <= 1.5 * coarse.dh_du_max);
  CHECK(fine.dh_dv_max <= 1.5 * coarse.dh_dv_max);
}

TEST_CASE("inverse Gaussian completeness on alpha-symmetric directions") {
  std::vector<double> ratios;
  for (std::size_t n : {20, 40}) {
    IGMixtureSpec spec;
    spec.n_alpha = n;
    spec.n_beta = n;
    spec.n_t = 16;
    IGModel m(spec);
    auto t = restrict_tangent(m.dense(), ig_symmetric_basis(m));
    auto c = completeness_check(t.op, 1e-4);
    MESSAGE("symmetric completeness ratio " << c.lambda_min / c.lambda_max);
    CHECK(c.complete);
    ratios.push_back(c.lambda_min / c.lambda_max);
    // Odd directions contain the null direction.
    auto odd = evaluate(m.latent(), [](std::span<const double> x) { return std::pow(x[0], 3) * std::exp(-x[1]); });
    auto b = ig_null_direction(m, odd);
    auto t2 = restrict_tangent(m.dense(), {b, ig_symmetric_basis(m)[0]});
    CHECK_FALSE(completeness_check(t2.op, 1e-4).complete);
  }
  CHECK(std::abs(ratios[0] - ratios[1]) <= 0.1 * ratios[1]);
}

TEST_CASE("mixed logit operator and classification") {
  auto spec = mixed_logit_default(64);
  auto op = mixed_logit_operator(spec);
  CHECK(constant_defect(op) <= 1e-12);

  // No covariate variation: S kills mean-zero directions.
  auto flat = spec;
  flat.profiles = {Mat::Zero(1, 1)};
  flat.profile_prob = Vec::Ones(1);
  auto fop = mixed_logit_operator(flat);
  Vec b = evaluate(fop.domain(), [](std::span<const double> x) { return x[0]; }).values;
  b = centered(GridFunction(fop.domain(), b)).values;
  CHECK(fop.apply(b).cwiseAbs().maxCoeff() <= 1e-12);

  auto fine_spec = mixed_logit_default(128);
  auto fop2 = mixed_logit_operator(fine_spec);
  auto sys_c = singular_system(op), sys_f = singular_system(fop2);
  auto cdf = [](const LinOp& o) {
    return Functional{"cdf_at_0", evaluate(o.domain(), [](std::span<const double> x) { return x[0] <= 0.0 ? 1.0 : 0.0; })};
  };
  auto cls = classify_functional(cdf(op), sys_c, cdf(fop2), sys_f, {});
  CHECK(cls.coarse->verdict != Verdict::Regular);
  CHECK(cls.fine->verdict != Verdict::Regular);
  CHECK(cls.coarse->plateaus.back().growth > 0.1);
  CHECK(cls.fine->plateaus.back().growth > 0.1);
  MESSAGE("cdf verdict " << std::string(to_string(cls.verdict)) << " growth " << cls.fine->plateaus.back().growth);

  auto smooth = [](const LinOp& o) {
    return Functional{"mean", evaluate(o.domain(), [](std::span<const double> x) { return std::tanh(x[0]); })};
  };
  auto s = classify_functional(smooth(op), sys_c, smooth(fop2), sys_f, {});
  CHECK(s.fine->plateaus.front().converged);
  CHECK(s.coarse->plateaus.front().converged);
}

TEST_CASE("mixed logit adjoint is smooth in beta") {
  std::vector<AdjointMap> maps;
  for (std::size_t n : {64, 128, 256}) {
    auto spec = mixed_logit_default(n);
    spec.profiles = {Mat::Constant(1, 1, -1.0), Mat::Constant(1, 1, 1.0)};
    spec.profile_prob = Vec::Constant(2, 0.5);
    maps.push_back(mixed_logit_adjoint(spec));
  }
  std::vector<PointFunction> dict;
  for (int y = 0; y < 2; ++y)
    for (int p = 0; p < 2; ++p)
      dict.push_back([y, p](std::span<const double> z) { return (z[0] == y && z[1] == p) ? 1.0 : 0.0; });
  auto rep = adjoint_smoothness_probe(maps, dict);
  for (const auto& e : rep.entries) CHECK(e.bounded);
  // The direct adjoint agrees with the weighted matrix adjoint.
  auto spec = mixed_logit_default(32);
  auto op = mixed_logit_operator(spec);
  auto direct = mixed_logit_adjoint(spec);
  auto g = [](std::span<const double> z) { return std::sin(z[0] + 0.3 * z[1]); };
  const Vec a = direct.apply(g);
  const Vec bm = adjoint(op).apply(evaluate(op.codomain(), g).values);
  CHECK((a - bm).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("circle harmonic oracle") {
  CircleRCSpec spec;
  spec.n = 1024;
  auto mo = circle_rc_operator(spec);
  CHECK(constant_defect(mo.op) <= 1e-12);
  auto lat = mo.op.domain();
  auto harmonic = [&](int k, bool sine) {
    return evaluate(lat, [k, sine](std::span<const double> x) { return sine ? std::sin(k * x[0]) : std::cos(k * x[0]); });
  };
  auto ratio = [&](const GridFunction& b) { return norm(mo.op.apply(b)) / norm(b); };
  for (int k = 2; k <= 20; k += 2) CHECK(ratio(harmonic(k, false)) <= 1e-8);
  double lo = 1e300, hi = 0.0;
  for (int k = 1; k <= 15; k += 2) {
    const double v = ratio(harmonic(k, true)) / circle_harmonic_oracle(k);
    lo = std::min(lo, v), hi = std::max(hi, v);
  }
  CHECK(hi / lo - 1.0 <= 0.05);

  spec.n = 10;  // n not divisible by four
  auto m10 = circle_rc_operator(spec);
  auto b = evaluate(m10.op.domain(), [](std::span<const double> x) { return std::cos(2 * x[0]); });
  CHECK(norm(m10.op.apply(b)) <= 1e-12);
  spec.n = 7;
  CHECK_THROWS_WITH(circle_rc_operator(spec), "grid must be even for harmonic oracle");
}

TEST_CASE("willingness to pay closed form") {
  WTPModel m{WTPSpec{}};
  CHECK(constant_defect(m.op()) <= 1e-12);
  auto r = [](double w) { return w; };
  auto g = m.solution_g(r);
  for (std::size_t i = 0; i < g.space->size(); ++i)
    CHECK(g.values[static_cast<Eigen::Index>(i)] == doctest::Approx(2.0 * g.space->node(i)[0] - 1.0).epsilon(1e-9));
  CHECK(m.calibration(r) == doctest::Approx(1.0));
  CHECK(m.p_buy() == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(m.truth(r) == doctest::Approx(0.5).epsilon(1e-12));
  // E[g] under P on the kept grid.
  const auto& w = m.op().codomain()->weights();
  double eg = 0.0;
  for (std::size_t k = 0; k < m.model().kept.size(); ++k)
    eg += w[static_cast<Eigen::Index>(k)] * g.values[static_cast<Eigen::Index>(m.model().kept[k])];
  CHECK(eg == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(eg + m.calibration(r) == doctest::Approx(0.5).epsilon(1e-9));

  auto zero = m.solution_g([](double) { return 3.0; });
  CHECK(zero.values.cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(m.calibration([](double) { return 3.0; }) == 3.0);
  CHECK_THROWS_WITH(m.check_representer([](double w) { return w < 0.5 ? 0.0 : 1.0; }),
                    "representer requires absolutely continuous r");
  m.check_representer(r);

  // Smooth nonlinear representer against the discrete adjoint.
  auto r2 = [](double w) { return std::sin(2.0 * w) + w * w; };
  auto g2 = m.solution_g(r2);
  Vec gk(static_cast<Eigen::Index>(m.model().kept.size()));
  for (std::size_t k = 0; k < m.model().kept.size(); ++k)
    gk[static_cast<Eigen::Index>(k)] = g2.values[static_cast<Eigen::Index>(m.model().kept[k])];
  const Vec sg = adjoint(m.op()).apply(gk);
  Vec target(sg.size());
  for (Eigen::Index j = 0; j < sg.size(); ++j) target[j] = r2(m.op().domain()->node(static_cast<std::size_t>(j))[0]) - m.calibration(r2);
  CHECK(rel_norm(sg, target, m.op().domain()->weights()) <= 1e-6);
}

TEST_CASE("willingness to pay regularity integral") {
  WTPModel reg{WTPSpec{}};
  CHECK(reg.mean_regularity_integral(400) == doctest::Approx(2.0).epsilon(1e-9));
  WTPSpec s;
  s.f_v = [](double v) { return 6.0 / 7.0 * (v - 0.5) * (v - 0.5); };
  WTPModel irr{s};
  const double a = irr.mean_regularity_integral(200), b = irr.mean_regularity_integral(400);
  MESSAGE("irregular integral " << a << " -> " << b);
  CHECK(b > 1.5 * a);
}

TEST_CASE("euler planted discount factor") {
  EulerSpec spec;
  auto m = euler_model(spec);
  // Projected marginal utility against the lognormal closed form.
  const double s2 = spec.latent_sd * spec.latent_sd, e2 = spec.error_sd * spec.error_sd;
  for (Eigen::Index i = 0; i < m.eta0.values.size(); i += 9) {
    const double t = std::log(m.consumption->node(static_cast<std::size_t>(i))[0]);
    const double mean = spec.latent_mu + s2 / (s2 + e2) * (t - spec.latent_mu), var = s2 * e2 / (s2 + e2);
    CHECK(m.eta0.values[i] == doctest::Approx(std::exp(-spec.crra * mean + 0.5 * spec.crra * spec.crra * var)).epsilon(1e-10));
  }
  auto rep = euler_discount_check(m);
  CHECK(rep.eigen_residual <= 1e-8);
  REQUIRE(rep.candidates.size() == 1);
  CHECK(std::abs(rep.candidates[0].theta - 0.95) <= 1e-6);
  CHECK(std::abs(rep.candidates[0].moment - 0.95) <= 1e-6);
  CHECK(rep.candidates[0].identified);

  spec.orthogonal_eta = true;
  auto orth = euler_discount_check(euler_model(spec));
  CHECK_FALSE(orth.candidates[0].identified);

  EulerSpec two;
  two.builder = EulerBuilder::PlantedSpectrum;
  two.spectrum = {1.0 / 0.95, 1.0 / 0.98, 0.5};
  auto r2 = euler_discount_check(euler_model(two));
  REQUIRE(r2.candidates.size() == 2);
  CHECK(std::abs(r2.candidates[0].theta - 0.95) <= 1e-6);
  CHECK(std::abs(r2.candidates[1].theta - 0.98) <= 1e-6);

  EulerSpec none;
  none.builder = EulerBuilder::PlantedSpectrum;
  none.spectrum = {1.01};
  none.theta0 = 0.5;
  auto low = euler_model(none);
  low.A = LinOp(low.consumption, low.consumption, low.A.matrix() * 0.5);
  CHECK_THROWS_WITH(euler_discount_check(low), "no admissible discount candidate");

  EulerSpec cop;
  cop.builder = EulerBuilder::Copula;
  auto rc = euler_discount_check(euler_model(cop));
  CHECK(std::abs(rc.candidates[0].theta - 1.0 / 1.05) <= 1e-10);
}

TEST_CASE("AARA pipeline") {
  EulerSpec spec;
  auto m = euler_model(spec);
  auto rep = aara_pipeline(spec, m);
  const double oracle = spec.crra * std::exp(-spec.latent_mu + 0.5 * spec.latent_sd * spec.latent_sd);
  MESSAGE("aara " << rep.aara << " oracle " << oracle << " E[d] " << rep.mean_score << " clipped "
                  << rep.deconvolution.clipped_energy << " representer " << rep.representer_check);
  for (double o : rep.orthogonality) MESSAGE("orthogonality " << o);
  CHECK(std::abs(rep.aara - oracle) <= 1e-3 * oracle);
  CHECK(std::abs(rep.mean_score) <= 1e-6);
  CHECK(std::abs(rep.score_identity) <= 1e-6);
  CHECK(rep.representer_check <= 1e-3);
  CHECK(rep.orthogonal);
}

TEST_CASE("triangular smoothness probes") {
  auto probe = [](const TriangularRCSpec& base, const PointFunction& target) {
    std::vector<AdjointMap> maps;
    std::optional<TriangularModel> fine;
    for (std::size_t n : {16, 32, 64}) {
      auto s = base;
      s.n = n;
      fine.emplace(triangular_functionals(s));
      maps.push_back(fine->adjoint);
    }
    auto dict = triangular_dictionary(*fine, 15);
    return adjoint_smoothness_probe(maps, dict, &target);
  };
  const PointFunction ame = [](std::span<const double> b) { return b[0] / b[1]; };
  const PointFunction ppame = [](std::span<const double> b) { return b[0] * b[1] > 0 ? 1.0 : 0.0; };
  const PointFunction smooth = [](std::span<const double> b) { return std::exp(0.5 * b[0]) * std::cos(b[1]); };
  TriangularRCSpec straddle;
  auto pp = probe(straddle, ppame);
  MESSAGE("ppame residuals " << pp.residuals.front() << " -> " << pp.residuals.back());
  CHECK(pp.residuals.back() > 0.05);
  CHECK(pp.drop < 10.0);
  auto sm = probe(straddle, smooth);
  MESSAGE("smooth residuals " << sm.residuals.front() << " -> " << sm.residuals.back());
  CHECK(sm.drop >= 10.0);

  TriangularRCSpec mono;
  mono.delta_lo = 0.5;
  mono.delta_hi = 2.0;
  mono.delta_mean = 1.2;
  auto am = probe(mono, ame);
  MESSAGE("ame residuals " << am.residuals.front() << " -> " << am.residuals.back());
  CHECK(am.drop >= 10.0);

  TriangularRCSpec odd;
  odd.n = 33;
  auto t = triangular_functionals(odd);
  CHECK(t.warnings.size() == 1);
  CHECK(constant_defect(t.forward.op) <= 1e-12);

  TriangularRCSpec point;
  point.n = 1;
  point.pi1_lo = point.pi1_hi = 0.6;
  point.delta_lo = point.delta_hi = 1.5;
  auto p = triangular_functionals(point);
  CHECK(p.ame.representer.values[0] == doctest::Approx(0.4));
}

TEST_CASE("synthetic and discrete operators") {
  auto op = synthetic_operator(SyntheticSpec{});
  auto sys = singular_system(op);
  CHECK(sys.values[3] == doctest::Approx(std::pow(0.5, 4)));
  DiscreteSpec d;
  d.p = Mat(2, 3);
  d.p << 0.2, 0.5, 1.0, 0.8, 0.5, 0.0;
  d.latent_weights = Vec::Constant(3, 1.0 / 3.0);
  CHECK(constant_defect(discrete_operator(d)) <= 1e-12);
}
