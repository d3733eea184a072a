#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "identikit/diagnostics.hpp"
#include "identikit/error.hpp"

using namespace identikit;

namespace {

SpacePtr line_space(const Vec& w, const std::string& label = "x") {
  NodeMat nodes(w.size(), 1);
  for (Eigen::Index i = 0; i < w.size(); ++i) nodes(i, 0) = static_cast<double>(i);
  return make_space(nodes, w, label);
}

// Diagonal operator on unit-weight spaces: phi_j = e_j.
LinOp diagonal_op(const Vec& lambda) {
  auto s = line_space(Vec::Ones(lambda.size()));
  return LinOp(s, s, Mat(lambda.asDiagonal()));
}

Functional func(const SpacePtr& s, const Vec& v, bool up_to_constant = false) {
  return {"f", GridFunction(s, v), up_to_constant, 0.0};
}

Vec random_vec(std::mt19937_64& rng, Eigen::Index n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Brute-force oracle: minimize |Sb|^2 subject to <r, b> = 1 through the KKT
// system of the weighted quadratic program, without any SVD.
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
  const Vec sol = kkt.fullPivLu().solve(rhs);
  const Vec b = sol.head(n);
  return b.dot(q * b);
}

}  // namespace

TEST_CASE("singular system invariants on a random weighted operator") {
  std::mt19937_64 rng(1);
  auto dom = line_space(random_vec(rng, 9, 0.2, 1.5));
  auto cod = line_space(random_vec(rng, 12, 0.2, 1.5));
  LinOp op(dom, cod, Mat::Random(12, 9));
  auto sys = singular_system(op);
  CHECK(sys.size() == 9);
  const double lmax = sys.values[0];
  for (Eigen::Index j = 1; j < sys.values.size(); ++j) CHECK(sys.values[j] <= sys.values[j - 1]);
  Mat gd = sys.right.transpose() * dom->weights().asDiagonal() * sys.right;
  Mat gc = sys.left.transpose() * cod->weights().asDiagonal() * sys.left;
  CHECK((gd - Mat::Identity(9, 9)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((gc - Mat::Identity(9, 9)).cwiseAbs().maxCoeff() < 1e-8);
  LinOp adj = adjoint(op);
  for (std::size_t j = 0; j < 9; ++j) {
    const double l = sys.values[static_cast<Eigen::Index>(j)];
    CHECK((op.apply(sys.phi(j)).values - l * sys.psi(j).values).cwiseAbs().maxCoeff() < 1e-8 * lmax);
    CHECK((adj.apply(sys.psi(j)).values - l * sys.phi(j).values).cwiseAbs().maxCoeff() < 1e-8 * lmax);
  }
  // Reconstruction: the rank-k remainder has weighted norm lambda_{k+1}.
  for (Eigen::Index k = 1; k < 9; ++k) {
    Mat approx = Mat::Zero(12, 9);
    for (Eigen::Index j = 0; j < k; ++j)
      approx += sys.values[j] * sys.left.col(j) * (sys.right.col(j).transpose() * dom->weights().asDiagonal());
    LinOp rest(dom, cod, op.matrix() - approx);
    CHECK(operator_norm(rest) <= sys.values[k] + 1e-8 * lmax);
  }
  CHECK_THROWS_AS(singular_system(op, std::size_t{10}), Error);
}

TEST_CASE("identity on a probability space has unit singular values") {
  auto s = line_space(Vec::Constant(5, 0.2));
  auto sys = singular_system(LinOp(s, s, Mat::Identity(5, 5)));
  CHECK((sys.values.array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(sys.rank_cutoff == 5);
}

TEST_CASE("source norms of a single mode") {
  std::mt19937_64 rng(2);
  auto dom = line_space(random_vec(rng, 6, 0.5, 1.0));
  LinOp op(dom, line_space(Vec::Ones(8)), Mat::Random(8, 6));
  auto sys = singular_system(op);
  auto r = Functional{"phi1", sys.phi(0), false, 0.0};
  auto d = source_norm_profile(r, sys, {0.0, 0.5, 1.0});
  for (std::size_t b = 0; b < 3; ++b) {
    const double beta = d.betas[b];
    const Vec& s = d.partial_sums[b];
    CHECK(std::sqrt(s[s.size() - 1]) == doctest::Approx(std::pow(sys.values[0], -beta)).epsilon(1e-10));
    CHECK(s[s.size() - 1] - s[0] < 1e-12);
  }
  CHECK(d.null_mass < 1e-10);
  auto c = classify_functional(r, sys, r, sys);
  CHECK(c.verdict == Verdict::Regular);
  CHECK(c.mesh_stable);
}

TEST_CASE("synthetic sequence source norms") {
  const int n = 20;
  Vec lam(n), r(n);
  for (int j = 0; j < n; ++j) lam[j] = r[j] = 1.0 / (j + 1);
  LinOp op = diagonal_op(lam);
  auto sys = singular_system(op);
  auto d = source_norm_profile(func(op.domain(), r), sys, {0.0, 1.0});
  for (int j = 0; j < n; ++j) CHECK(d.partial_sums[1][j] == doctest::Approx(j + 1.0).epsilon(1e-10));
  double z = 0.0;
  for (int j = 1; j <= n; ++j) z += 1.0 / (j * j);
  CHECK(d.partial_sums[0][n - 1] == doctest::Approx(z).epsilon(1e-12));
  // Every coefficient equals 1/j, so log r_j^2 = 2 log lambda_j.
  CHECK(d.fitted_decay == doctest::Approx(2.0).epsilon(1e-10));
  double sq = 0.0;
  for (int j = 0; j < n; ++j) sq += d.coefficients[j] * d.coefficients[j];
  CHECK(d.null_mass * d.null_mass + sq == doctest::Approx(d.r_norm * d.r_norm).epsilon(1e-8));
}

TEST_CASE("irregular classification of the harmonic sequence") {
  auto make = [](int n) {
    Vec lam(n), r(n);
    for (int j = 0; j < n; ++j) lam[j] = r[j] = 1.0 / (j + 1);
    LinOp op = diagonal_op(lam);
    return std::make_pair(singular_system(op), func(op.domain(), r));
  };
  auto [sc, rc] = make(200);
  auto [sf, rf] = make(400);
  auto c = classify_functional(rc, sc, rf, sf);
  CHECK(c.verdict == Verdict::Irregular);
  REQUIRE(c.beta_star.has_value());
  CHECK(*c.beta_star >= 0.25);
  CHECK(*c.beta_star < 0.5);
  CHECK(c.mesh_stable);

  // Scaling invariance.
  auto c2 = classify_functional(Functional{"s", GridFunction(rc.representer.space, -3.0 * rc.representer.values)},
                                sc, Functional{"s", GridFunction(rf.representer.space, -3.0 * rf.representer.values)},
                                sf);
  CHECK(c2.verdict == c.verdict);
  CHECK(c2.beta_star == c.beta_star);
}

TEST_CASE("null-space representer is unidentified") {
  Vec lam(4);
  lam << 1.0, 0.5, 0.0, 0.0;
  LinOp op = diagonal_op(lam);
  auto sys = singular_system(op);
  CHECK(sys.rank_cutoff == 2);
  Vec r(4);
  r << 0, 0, 1, 0;
  auto d = source_norm_profile(func(op.domain(), r), sys, {1.0});
  CHECK(d.null_mass == doctest::Approx(1.0));
  CHECK(d.coefficients.head(2).cwiseAbs().maxCoeff() < 1e-12);
  auto v = classify_single(func(op.domain(), r), sys, {});
  CHECK(v.verdict == Verdict::Unidentified);
  auto f = fisher_information(func(op.domain(), r), sys);
  CHECK(f.unidentified);
  CHECK(f.value == 0.0);
  auto g = generalized_fisher(func(op.domain(), r), sys, power_gauge(2.0));
  CHECK(g.unidentified);
  CHECK(g.value == 0.0);
  CHECK_THROWS_AS(generalized_fisher(func(op.domain(), Vec::Zero(4)), sys, power_gauge(1.0)), Error);
}

TEST_CASE("fisher information closed form") {
  auto s = line_space(Vec::Ones(3));
  Vec r(3);
  r << 0.6, 0.0, 0.8;
  auto sys = singular_system(LinOp(s, s, Mat::Identity(3, 3)));
  CHECK(fisher_information(func(s, r), sys).value == doctest::Approx(1.0).epsilon(1e-12));

  Vec lam(2);
  lam << 1.0, 0.5;
  LinOp op = diagonal_op(lam);
  Vec r2 = Vec::Ones(2) / std::sqrt(2.0);
  auto sys2 = singular_system(op);
  CHECK(fisher_information(func(op.domain(), r2), sys2).value == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(fisher_kkt(op, r2) == doctest::Approx(0.4).epsilon(1e-12));
  // Scaling: I(c r) = I(r) / c^2.
  CHECK(fisher_information(func(op.domain(), 3.0 * r2), sys2).value ==
        doctest::Approx(0.4 / 9.0).epsilon(1e-12));
}

TEST_CASE("fisher information matches the KKT oracle on weighted random systems") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto dom = line_space(random_vec(rng, 10, 0.3, 1.0));
    auto cod = line_space(random_vec(rng, 14, 0.3, 1.0));
    LinOp op(dom, cod, Mat::Random(14, 10));
    auto sys = singular_system(op);
    Vec r = random_vec(rng, 10);
    const double a = fisher_information(func(dom, r), sys).value;
    CHECK(a == doctest::Approx(fisher_kkt(op, r)).epsilon(1e-8));
  }
}

TEST_CASE("generalized fisher") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 12;
    Vec lam(n);
    for (int j = 0; j < n; ++j) lam[j] = std::pow(10.0, -2.0 * j / (n - 1.0)) * (1.0 + 0.01 * j);
    std::sort(lam.data(), lam.data() + n, std::greater<>());
    Vec r = random_vec(rng, n);
    r /= r.norm();
    const double closed = 1.0 / (r.cwiseQuotient(lam).squaredNorm());
    auto g1 = generalized_fisher(lam, r, power_gauge(1.0));
    CHECK(g1.value == doctest::Approx(closed).epsilon(1e-6));
    auto g15 = generalized_fisher(lam, r, power_gauge(1.5));
    auto g2 = generalized_fisher(lam, r, power_gauge(2.0));
    CHECK(g15.value >= g1.value * (1.0 - 1e-9));
    CHECK(g2.value >= g15.value * (1.0 - 1e-9));
    CHECK(g2.direction.norm() <= 1.0 + 1e-12);
    CHECK(std::abs(g2.phi_dot) <= 1.0 + 1e-12);
  }
}

TEST_CASE("generalized fisher against a coarse grid search on the unit ball") {
  Vec lam(3), r(3);
  lam << 1.0, 0.3, 0.05;
  r << 0.2, 0.5, 0.8;
  r /= r.norm();
  for (const auto& gauge : {power_gauge(2.0), exp_gauge(), log_gauge(0.5)}) {
    const auto g = generalized_fisher(lam, r, gauge);
    double best = std::numeric_limits<double>::infinity();
    const int m = 60;
    for (int i = 1; i <= m; ++i) {
      const double rad = static_cast<double>(i) / m;
      for (int a = 0; a < m; ++a) {
        const double th = std::numbers::pi * (a + 0.5) / m;
        for (int b = 0; b < 2 * m; ++b) {
          const double ph = std::numbers::pi * b / m;
          Vec c(3);
          c << rad * std::sin(th) * std::cos(ph), rad * std::sin(th) * std::sin(ph), rad * std::cos(th);
          const double p = r.dot(c);
          if (p == 0.0 || std::abs(p) > 1.0) continue;
          const double v = c.cwiseProduct(lam).squaredNorm() / gauge.value(p * p);
          best = std::min(best, v);
        }
      }
    }
    CHECK(g.value <= best * (1.0 + 1e-9));
    CHECK(g.value >= best * 0.95);
  }
}

TEST_CASE("efficient score") {
  auto obs = line_space(Vec::Ones(3));
  auto par = line_space(Vec::Ones(2));
  Mat a(3, 2);
  a << 1, 0, 0, 1, 0, 0;
  LinOp eta(par, obs, a);
  auto e = efficient_score(GridFunction(obs, Vec::Ones(3)), eta);
  CHECK(e.score.values[0] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(e.score.values[2] == doctest::Approx(1.0));
  CHECK(e.information == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(e.sensitivity.size() == 3);

  Vec orth(3);
  orth << 0, 0, 2;
  auto o = efficient_score(GridFunction(obs, orth), eta);
  CHECK(o.information == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(o.b.norm() < 1e-12);

  Vec inrange(3);
  inrange << 1, -2, 0;
  auto z = efficient_score(GridFunction(obs, inrange), eta);
  CHECK(z.information < 1e-12);
  CHECK(z.sensitivity[0].second <= z.sensitivity[2].second);
}

TEST_CASE("completeness") {
  auto s = line_space(Vec::Constant(4, 0.25));
  auto c = completeness_check(LinOp(s, s, Mat::Identity(4, 4)), 1e-6);
  CHECK(c.complete);
  CHECK(c.lambda_min == doctest::Approx(c.lambda_max));
  Mat prod = Mat::Ones(4, 4) * 0.25;
  auto basis = mean_zero_basis(s);
  auto t = restrict_tangent(LinOp(s, s, prod), basis);
  auto c2 = completeness_check(t.op, 1e-6);
  CHECK_FALSE(c2.complete);
  CHECK(c2.lambda_min < 1e-12);
}

TEST_CASE("discrete classifier") {
  std::mt19937_64 rng(8);
  Vec w = random_vec(rng, 5, 0.5, 1.5);
  Mat p = random_vec(rng, 15, 0.1, 1.0).reshaped(3, 5);
  p = p.array().rowwise() / p.colwise().sum().array();
  // First row is in the span.
  CHECK(classify_discrete(p, w, p.row(0).transpose()).verdict == Verdict::Regular);
  // Single observed value.
  Mat one = Mat::Ones(1, 5);
  CHECK(classify_discrete(one, w, random_vec(rng, 5)).verdict == Verdict::Unidentified);
  CHECK(classify_discrete(one, w, Vec::Constant(5, 2.0)).verdict == Verdict::Regular);
  CHECK_THROWS_AS(classify_discrete(p, w, Vec::Ones(4)), Error);
}

TEST_CASE("discrete modulus on a tensor grid") {
  auto sp = tensor_space({trapezoid(0, 1, 11), trapezoid(0, 2, 21)}, "box");
  auto f = evaluate(sp, [](std::span<const double> x) { return 3.0 * x[0] - 0.5 * x[1]; });
  CHECK(discrete_modulus(f) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("smoothness probe on the identity coupling") {
  std::vector<AdjointMap> maps;
  for (int n : {51, 101, 201}) {
    auto sp = tensor_space({trapezoid(0, 1, static_cast<std::size_t>(n))}, "u", true);
    maps.push_back(adjoint_map(LinOp(sp, sp, Mat::Identity(n, n))));
  }
  std::vector<PointFunction> dict;
  for (int k = 0; k < 16; ++k)
    dict.push_back([k](std::span<const double> x) { return std::cos(k * std::numbers::pi * x[0]); });
  PointFunction smooth = [](std::span<const double> x) { return std::exp(x[0]); };
  auto rep = adjoint_smoothness_probe(maps, dict, &smooth);
  CHECK(rep.entries[3].bounded);
  CHECK(rep.dictionary_sizes == std::vector<std::size_t>{2, 4, 8, 16});
  CHECK(rep.drop > 10.0);
  CHECK_THROWS_AS(adjoint_smoothness_probe(maps, {}), Error);
}
