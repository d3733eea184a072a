#pragma once

// Sampling from catalog models, Monte Carlo rate experiments for moment
// estimators, and single-mode impossibility paths.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "identikit/diagnostics.hpp"
#include "identikit/linop.hpp"
#include "identikit/models.hpp"
#include "identikit/solvers.hpp"

namespace identikit {

// Seed splitting rule: the stream for (seed, a, b) is seeded with
// splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b). Rate experiments use
// a = index of n, b = replication index.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

// Platform-independent draws: uniforms from the top 53 bits of mt19937_64,
// normals by Box-Muller.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform();  // [0, 1)
  double normal();
  std::size_t index(std::size_t n);  // uniform on {0, .., n-1}

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

// Returns n observation points, one per row.
using Sampler = std::function<NodeMat(Rng& rng, std::size_t n)>;

// Draws observation nodes with probabilities given by the codomain weights
// of a conditional-mean operator.
Sampler grid_sampler(const LinOp& op);
// (Y, V) with W and V drawn by inverse CDF.
Sampler wtp_sampler(const WTPModel& model);
// Observed consumption C = C* eps, lognormal.
Sampler euler_sampler(const EulerSpec& spec);

NodeMat simulate(const Sampler& sampler, std::size_t n, std::uint64_t seed);

// Inverse CDF of a density on [lo, hi], tabulated on `cells` cells and
// inverted by linear interpolation.
class InverseCdf {
 public:
  InverseCdf(const ScalarFunction& density, double lo, double hi, std::size_t cells = 8192);
  double operator()(double u) const;

 private:
  double lo_, h_;
  std::vector<double> cdf_;
};

using Estimator = std::function<double(const NodeMat&)>;

struct RateFit {
  std::vector<std::size_t> ns;
  std::vector<double> rmse;
  std::vector<std::optional<double>> rmse_se;  // empty when reps == 1
  std::vector<double> bias;
  std::optional<double> slope;  // empty when the fit is degenerate
  std::optional<double> slope_se;
  bool degenerate = false;
  std::string note;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  double truth = 0.0;
  std::vector<std::vector<double>> estimates;  // [n index][replication]
};

// Slope of log rmse on log n by ordinary least squares.
void fit_rate(RateFit& fit);

RateFit rate_experiment(const Estimator& estimator, const Sampler& sampler, double truth,
                        const std::vector<std::size_t>& ns, std::size_t reps, std::uint64_t seed,
                        std::size_t threads = 1);
// One estimator per sample size.
RateFit rate_experiment(const std::vector<Estimator>& estimators, const Sampler& sampler, double truth,
                        const std::vector<std::size_t>& ns, std::size_t reps, std::uint64_t seed,
                        std::size_t threads = 1);

// Moment estimator with g solving S* g = r under `policy`, interpolated on
// the model's observation grid. Unidentified functionals are rejected. The
// model-based rate experiment re-solves per n under balanced selection.
struct MomentEstimator {
  MomentSolution solution;
  GridFunction g_on_grid;
  Estimator estimator;
};
MomentEstimator moment_estimator(const ModelOperator& model, const Functional& r,
                                 const RegPolicy& policy, const Thresholds& thresholds = {});
MomentEstimator moment_estimator(const ModelOperator& model, const SingularSystem& sys,
                                 const Functional& r, const RegPolicy& policy,
                                 const Thresholds& thresholds = {});

RateFit rate_experiment(const ModelOperator& model, const Functional& r, const RegPolicy& policy,
                        const Sampler& sampler, double truth, const std::vector<std::size_t>& ns,
                        std::size_t reps, std::uint64_t seed, std::size_t threads = 1,
                        const Thresholds& thresholds = {});

struct PathPoint {
  double t = 0.0;
  double delta_phi = 0.0;   // |phi(lambda_t) - phi(lambda_0)|
  double score_norm = 0.0;  // |(f_t - f_0) / f_0|
  double ratio = 0.0;       // score_norm^2 / t^(2 rho)
  double clip_fraction = 0.0;
  bool condition_i = false;   // C t <= delta_phi <= 1
  bool condition_ii = false;  // score_norm^2 <= eps t^(2 rho)
};

struct PathReport {
  bool attainable = false;
  std::string status;
  std::string gauge;
  double rho = 1.0;
  std::size_t mode = 0;  // zero-based singular index J
  double lambda = 0.0;
  double coefficient = 0.0;  // r_J
  std::vector<PathPoint> points;
  double c = 0.0;        // min_t delta_phi / t
  double epsilon = 0.0;  // max_t score_norm^2 / t^(2 rho)
  // Largest rho with score_norm^2 <= t^(2 rho) at every tested t.
  double rho_max = 0.0;
  double rho_mode = 0.0;  // log lambda_J / log |r_J|
  double generalized_fisher = 0.0;
  bool fisher_consistent = false;  // generalized Fisher <= epsilon
};

// Perturbs lambda_0 along phi_J / |r_J| for the last resolved singular mode
// J carrying representer mass. On probability latent spaces the density
// ratio is clipped at zero and renormalized.
PathReport impossibility_path(const SingularSystem& sys, const Functional& r, double rho,
                              const std::vector<double>& ts, std::uint64_t seed = 1);

// Runs body(i) for i in [0, count) on up to `threads` workers.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace identikit
