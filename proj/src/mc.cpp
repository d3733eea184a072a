#include "identikit/mc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <set>
#include <thread>

#include "identikit/error.hpp"

namespace identikit {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (spare_) {
    const double z = *spare_;
    spare_.reset();
    return z;
  }
  const double u1 = 1.0 - uniform(), u2 = uniform();
  const double rad = std::sqrt(-2.0 * std::log(u1)), ang = 2.0 * std::numbers::pi * u2;
  spare_ = rad * std::sin(ang);
  return rad * std::cos(ang);
}

std::size_t Rng::index(std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)));
}

Sampler grid_sampler(const LinOp& op) {
  auto space = op.codomain();
  const Vec& w = space->weights();
  auto cum = std::make_shared<std::vector<double>>(static_cast<std::size_t>(w.size()));
  double s = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) (*cum)[static_cast<std::size_t>(i)] = (s += w[i]);
  require(s > 0.0, "observation weights carry no mass");
  for (double& c : *cum) c /= s;
  return [space, cum](Rng& rng, std::size_t n) {
    NodeMat out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(space->dim()));
    for (std::size_t i = 0; i < n; ++i) {
      const auto it = std::upper_bound(cum->begin(), cum->end(), rng.uniform());
      const auto k = std::min<std::size_t>(static_cast<std::size_t>(it - cum->begin()), cum->size() - 1);
      const auto x = space->node(k);
      for (std::size_t d = 0; d < x.size(); ++d) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = x[d];
    }
    return out;
  };
}

InverseCdf::InverseCdf(const ScalarFunction& density, double lo, double hi, std::size_t cells)
    : lo_(lo), h_((hi - lo) / static_cast<double>(cells)), cdf_(cells + 1, 0.0) {
  require(hi > lo && cells >= 1, "inverse CDF needs a nondegenerate interval");
  const Axis rule = gauss_legendre(0.0, 1.0, 4);
  for (std::size_t c = 0; c < cells; ++c) {
    double m = 0.0;
    for (Eigen::Index k = 0; k < rule.nodes.size(); ++k)
      m += rule.weights[k] * density(lo + h_ * (static_cast<double>(c) + rule.nodes[k]));
    require(m >= 0.0, "density must be nonnegative");
    cdf_[c + 1] = cdf_[c] + h_ * m;
  }
  require(cdf_.back() > 0.0, "density has no mass");
  for (double& v : cdf_) v /= cdf_.back();
}

double InverseCdf::operator()(double u) const {
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  const std::size_t c = std::clamp<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), 1, cdf_.size() - 1) - 1;
  const double span = cdf_[c + 1] - cdf_[c];
  const double frac = span > 0.0 ? std::clamp((u - cdf_[c]) / span, 0.0, 1.0) : 0.5;
  return lo_ + h_ * (static_cast<double>(c) + frac);
}

Sampler wtp_sampler(const WTPModel& model) {
  const auto& s = model.spec();
  auto w_inv = std::make_shared<InverseCdf>([&model](double w) { return model.f_w(w); }, 0.0, s.w_max);
  auto v_inv = std::make_shared<InverseCdf>([&model](double v) { return model.f_v(v); }, 0.0, s.v_max);
  return [w_inv, v_inv](Rng& rng, std::size_t n) {
    NodeMat out(static_cast<Eigen::Index>(n), 2);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double w = (*w_inv)(rng.uniform());
      const double v = (*v_inv)(rng.uniform());
      out(i, 0) = w > v ? 1.0 : 0.0;
      out(i, 1) = v;
    }
    return out;
  };
}

Sampler euler_sampler(const EulerSpec& spec) {
  spec.validate();
  const double mu = spec.latent_mu, sl = spec.latent_sd, se = spec.error_sd;
  return [mu, sl, se](Rng& rng, std::size_t n) {
    NodeMat out(static_cast<Eigen::Index>(n), 1);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double latent = mu + sl * rng.normal();
      out(i, 0) = std::exp(latent + se * rng.normal());
    }
    return out;
  };
}

NodeMat simulate(const Sampler& sampler, std::size_t n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0, 0));
  return sampler(rng, n);
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first) first = std::current_exception();
        next = count;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}

void fit_rate(RateFit& fit) {
  fit.slope.reset();
  fit.slope_se.reset();
  fit.degenerate = false;
  fit.note.clear();
  if (std::any_of(fit.rmse.begin(), fit.rmse.end(), [](double e) { return !(e > 0.0); })) {
    fit.degenerate = true;
    fit.note = "zero RMSE: slope undefined";
    return;
  }
  const std::size_t m = fit.ns.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += std::log(static_cast<double>(fit.ns[i]));
    my += std::log(fit.rmse[i]);
  }
  mx /= static_cast<double>(m), my /= static_cast<double>(m);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double dx = std::log(static_cast<double>(fit.ns[i])) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(fit.rmse[i]) - my);
  }
  const double b = sxy / sxx;
  double sse = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double e = std::log(fit.rmse[i]) - my - b * (std::log(static_cast<double>(fit.ns[i])) - mx);
    sse += e * e;
  }
  fit.slope = b;
  fit.slope_se = std::sqrt(sse / static_cast<double>(m - 2) / sxx);
}

RateFit rate_experiment(const Estimator& estimator, const Sampler& sampler, double truth,
                        const std::vector<std::size_t>& ns, std::size_t reps, std::uint64_t seed,
                        std::size_t threads) {
  return rate_experiment(std::vector<Estimator>(ns.size(), estimator), sampler, truth, ns, reps, seed,
                         threads);
}

RateFit rate_experiment(const std::vector<Estimator>& estimators, const Sampler& sampler, double truth,
                        const std::vector<std::size_t>& ns, std::size_t reps, std::uint64_t seed,
                        std::size_t threads) {
  require(estimators.size() == ns.size(), "one estimator per sample size");
  require(std::set<std::size_t>(ns.begin(), ns.end()).size() >= 3 && ns.size() == std::set<std::size_t>(ns.begin(), ns.end()).size(),
          "rate experiment needs at least three distinct sample sizes");
  require(std::all_of(ns.begin(), ns.end(), [](std::size_t n) { return n > 0; }), "sample sizes must be positive");
  require(reps >= 1, "rate experiment needs at least one replication");
  RateFit fit;
  fit.ns = ns;
  fit.reps = reps;
  fit.seed = seed;
  fit.truth = truth;
  fit.estimates.assign(ns.size(), std::vector<double>(reps, 0.0));
  parallel_for(ns.size() * reps, threads, [&](std::size_t job) {
    const std::size_t i = job / reps, rep = job % reps;
    Rng rng(derive_seed(seed, i, rep));
    fit.estimates[i][rep] = estimators[i](sampler(rng, ns[i]));
  });
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const auto& e = fit.estimates[i];
    double mse = 0.0, bias = 0.0;
    for (double v : e) {
      mse += (v - truth) * (v - truth);
      bias += v - truth;
    }
    mse /= static_cast<double>(reps);
    fit.bias.push_back(bias / static_cast<double>(reps));
    fit.rmse.push_back(std::sqrt(mse));
    if (reps < 2 || mse == 0.0) {
      fit.rmse_se.emplace_back();
      continue;
    }
    // Delta method on the mean of squared errors.
    double var = 0.0;
    for (double v : e) var += std::pow((v - truth) * (v - truth) - mse, 2);
    var /= static_cast<double>(reps - 1);
    fit.rmse_se.emplace_back(std::sqrt(var / static_cast<double>(reps)) / (2.0 * std::sqrt(mse)));
  }
  fit_rate(fit);
  return fit;
}

MomentEstimator moment_estimator(const ModelOperator& model, const Functional& r,
                                 const RegPolicy& policy, const Thresholds& thresholds) {
  return moment_estimator(model, full_singular_system(model.op, thresholds.tau_null), r, policy,
                          thresholds);
}

MomentEstimator moment_estimator(const ModelOperator& model, const SingularSystem& sys,
                                 const Functional& r, const RegPolicy& policy,
                                 const Thresholds& thresholds) {
  MomentEstimator out{solve_adjoint_equation(model.op, sys, r, policy, thresholds), {}, {}};
  out.g_on_grid = model.on_grid(out.solution.g);
  auto interp = std::make_shared<GridInterpolator>(out.g_on_grid);
  const double calib = r.defined_up_to_constant ? r.calibration_constant : 0.0;
  out.estimator = [interp, calib](const NodeMat& x) {
    require(x.rows() > 0, "moment estimate needs at least one sample");
    double s = 0.0, v = 0.0;
    std::size_t used = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if ((*interp)({x.data() + i * x.cols(), static_cast<std::size_t>(x.cols())}, v)) {
        s += v;
        ++used;
      }
    if (static_cast<double>(x.rows() - static_cast<Eigen::Index>(used)) > 0.01 * static_cast<double>(x.rows()))
      fail(ErrorKind::InvalidArgument, "grid does not cover data");
    return s / static_cast<double>(used) + calib;
  };
  return out;
}

RateFit rate_experiment(const ModelOperator& model, const Functional& r, const RegPolicy& policy,
                        const Sampler& sampler, double truth, const std::vector<std::size_t>& ns,
                        std::size_t reps, std::uint64_t seed, std::size_t threads,
                        const Thresholds& thresholds) {
  const SingularSystem sys = full_singular_system(model.op, thresholds.tau_null);
  std::vector<Estimator> per_n;
  for (std::size_t n : ns) {
    RegPolicy p = policy;
    if (p.selection == Selection::Balanced) p.sample_size = n;
    if (per_n.empty() || policy.selection == Selection::Balanced)
      per_n.push_back(moment_estimator(model, sys, r, p, thresholds).estimator);
    else
      per_n.push_back(per_n.front());
  }
  return rate_experiment(per_n, sampler, truth, ns, reps, seed, threads);
}

PathReport impossibility_path(const SingularSystem& sys, const Functional& r, double rho,
                              const std::vector<double>& ts, std::uint64_t seed) {
  require(!ts.empty(), "path needs at least one t");
  require(std::all_of(ts.begin(), ts.end(), [](double t) { return t > 0.0 && std::isfinite(t); }),
          "path parameters must be positive");
  require(rho >= 1.0, "rho must be at least 1");
  const GridFunction f = r.effective();
  const auto& dom = *sys.domain;
  const Vec& w = dom.weights();
  const double rn = std::sqrt(w.dot(f.values.cwiseAbs2()));
  require(rn > 0.0, "functional vanishes on the grid");

  PathReport rep;
  rep.rho = rho;
  const Gauge gauge = power_gauge(rho);
  rep.gauge = gauge.name;
  rep.generalized_fisher = generalized_fisher(r, sys, gauge, 32, 1e-4, seed).value;

  const Vec wr = w.cwiseProduct(f.values);
  const Vec coef = sys.right.transpose() * wr;
  const std::size_t resolved = sys.resolved();
  std::optional<std::size_t> last;
  for (std::size_t j = 0; j < resolved; ++j)
    if (std::abs(coef[static_cast<Eigen::Index>(j)]) > 1e-12 * rn) last = j;
  if (!last || *last < (3 * resolved) / 4) {
    rep.status = "conditions unattainable: I_{phi,rho} > 0";
    return rep;
  }
  const auto J = static_cast<Eigen::Index>(*last);
  rep.attainable = true;
  rep.status = "ok";
  rep.mode = *last;
  rep.lambda = sys.values[J];
  rep.coefficient = coef[J];
  rep.rho_mode = std::log(rep.lambda) / std::log(std::abs(rep.coefficient));

  const Vec b = sys.right.col(J) / std::abs(rep.coefficient);
  const bool prob = dom.is_probability();
  rep.c = std::numeric_limits<double>::infinity();
  rep.rho_max = std::numeric_limits<double>::infinity();
  for (double t : ts) {
    PathPoint p;
    p.t = t;
    Vec h = t * b;
    if (prob) {
      Vec d = (1.0 + h.array()).matrix();
      p.clip_fraction = w.dot((-d.array()).max(0.0).matrix());
      d = d.cwiseMax(0.0);
      h = (d / w.dot(d)).array() - 1.0;
    }
    p.delta_phi = std::abs(wr.dot(h));
    const Vec hc = sys.right.transpose() * w.cwiseProduct(h);
    p.score_norm = std::sqrt(sys.values.cwiseProduct(hc).squaredNorm());
    const double q = p.score_norm * p.score_norm;
    p.ratio = q / std::pow(t, 2.0 * rho);
    rep.c = std::min(rep.c, p.delta_phi / t);
    rep.epsilon = std::max(rep.epsilon, p.ratio);
    if (t < 1.0) rep.rho_max = std::min(rep.rho_max, q > 0.0 ? std::log(q) / (2.0 * std::log(t)) : rep.rho_max);
    rep.points.push_back(p);
  }
  const double tmax = *std::max_element(ts.begin(), ts.end());
  for (const auto& p : rep.points)
    if (p.t == tmax && p.clip_fraction > 0.2) fail(ErrorKind::Numerical, "path leaves the model");
  for (auto& p : rep.points) {
    p.condition_i = rep.c * p.t <= p.delta_phi * (1.0 + 1e-12) && p.delta_phi <= 1.0 + 1e-12;
    p.condition_ii = p.ratio <= rep.epsilon * (1.0 + 1e-12);
  }
  rep.fisher_consistent = rep.generalized_fisher <= rep.epsilon * (1.0 + 1e-6);
  return rep;
}

}  // namespace identikit
