#pragma once

// Catalog of example models. Each builder returns the score operator on
// configurable grids together with the model-specific oracles used by the
// tests and the command-line reports.

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "identikit/diagnostics.hpp"
#include "identikit/linop.hpp"
#include "identikit/solvers.hpp"

namespace identikit {

using ScalarFunction = std::function<double(double)>;

// A score operator whose observation grid may have lost zero-mass rows.
// `grid` is the untrimmed observation grid (a tensor grid where the model
// has one) and `kept` indexes the rows of `op` into it.
struct ModelOperator {
  LinOp op;
  SpacePtr grid;
  std::vector<std::size_t> kept;
  double dropped_mass = 0.0;
  std::vector<std::string> notes;

  // Copies g onto the full grid, zero on dropped rows.
  GridFunction on_grid(const GridFunction& g) const;
};

// Conditional-mean operator from a joint density, trimming observation
// nodes that carry no mass.
ModelOperator model_from_joint(const JointDensity& joint, double rel_floor = 1e-14);

// ---------------------------------------------------------------------------
// Inverse-Gaussian duration mixture with two spells.

struct IGMixtureSpec {
  std::size_t n_alpha = 40;  // even; the alpha grid is antisymmetric without a zero node
  std::size_t n_beta = 40;
  double alpha_max = 1.0;
  double beta_min = 0.5;
  double beta_max = 2.0;
  std::size_t n_t = 24;  // duration nodes per spell
  double t_min = 0.25;
  double t_max = 4.0;
  // Heterogeneity density; a product of Gaussians in alpha and beta when
  // `lambda0` is empty.
  double alpha_center = 0.0;
  double alpha_sd = 0.5;
  double beta_center = 1.2;
  double beta_sd = 0.4;
  std::function<double(double, double)> lambda0;

  void validate() const;
};

// Single-spell first-passage density with drift alpha and barrier beta.
double ig_density(double t, double alpha, double beta);

class IGModel {
 public:
  explicit IGModel(IGMixtureSpec spec);

  const IGMixtureSpec& spec() const { return spec_; }
  const SpacePtr& latent() const { return latent_; }      // L2(G0) on (alpha, beta)
  const SpacePtr& durations() const { return obs_; }      // L2(P) on kept (t1, t2)
  const Axis& alpha_axis() const { return alpha_; }
  const Axis& beta_axis() const { return beta_; }
  const Axis& t_axis() const { return t_; }
  const Vec& lambda0() const { return lambda0_; }  // density w.r.t. the pi weights
  const std::vector<std::size_t>& kept() const { return kept_; }
  std::size_t dropped() const { return t_.nodes.size() * t_.nodes.size() - kept_.size(); }

  // Matrix-free S b and S* g; the kernel separates over the two spells.
  Vec apply(const Vec& b) const;
  Vec apply_adjoint(const Vec& g) const;
  LinOp dense() const;
  ModelOperator model() const;

  // max |f(t;a,b) - e^{2ab} f(t;-a,b)| / f(t;a,b) over all kernel nodes.
  double reflection_defect() const;
  // Index of the node with alpha replaced by -alpha.
  std::size_t mirror(std::size_t latent_index) const;

 private:
  IGMixtureSpec spec_;
  Axis alpha_, beta_, t_;
  SpacePtr latent_, obs_;
  Vec lambda0_;
  Vec g0_;     // latent probability weights
  Mat k1_;     // t nodes x latent nodes
  Vec f_;      // mixture density at kept duration nodes
  Vec q_;      // product quadrature weight at kept nodes
  double z_ = 1.0;
  std::vector<std::size_t> kept_;
};

LinOp ig_operator(const IGMixtureSpec& spec);

// Direction annihilated by S: lambda0 * b = C / (1 + e^{4 alpha beta}) for
// C odd in alpha. Returns b as an element of L2(G0).
GridFunction ig_null_direction(const IGModel& model, const GridFunction& c_odd);

struct IGAdjointReport {
  double evenness_defect = 0.0;  // relative nodewise deviation
  double dh_du_max = 0.0;        // max |dh / d(alpha^2)|
  double dh_dv_max = 0.0;        // max |dh / d(beta^2)|
  double scale = 0.0;            // max |h|
};

IGAdjointReport ig_adjoint_structure_check(const IGModel& model, const GridFunction& g);
IGAdjointReport ig_adjoint_structure_check(const IGModel& model, const PointFunction& g);

// Basis of mean-zero functions even in alpha used for the completeness check.
std::vector<GridFunction> ig_symmetric_basis(const IGModel& model);

// ---------------------------------------------------------------------------
// Mixed logit with finitely supported covariates.

struct MixedLogitSpec {
  std::size_t J = 1;            // inside alternatives; alternative 0 is the outside option
  Vec theta;                    // intercepts of alternatives 1..J
  std::vector<Mat> profiles;    // J x K covariates of alternatives 1..J
  Vec profile_prob;
  std::vector<Axis> beta_axes;  // K quadrature axes
  PointFunction eta0;           // density on the beta grid

  std::size_t K() const { return beta_axes.size(); }
  void validate() const;
};

// J = 1, K = 1, 25 covariate values on [-3, 3], standard normal eta0 on
// n Gauss-Legendre nodes in [-3, 3].
MixedLogitSpec mixed_logit_default(std::size_t n_beta);

double logit_probability(const MixedLogitSpec& spec, std::size_t y, std::size_t profile,
                         std::span<const double> beta);
ModelOperator mixed_logit_model(const MixedLogitSpec& spec);
LinOp mixed_logit_operator(const MixedLogitSpec& spec);
// S* g evaluated directly from the choice probabilities.
AdjointMap mixed_logit_adjoint(const MixedLogitSpec& spec);

// ---------------------------------------------------------------------------
// Triangular random coefficients on the reduced-form slopes (pi1, delta).

struct TriangularRCSpec {
  double pi0 = 0.0;
  double u2 = 0.0;
  double pi1_lo = -1.0, pi1_hi = 1.0;
  double delta_lo = -1.0, delta_hi = 1.0;
  std::size_t n = 32;  // trapezoid nodes per axis before exclusions
  double pi1_mean = 0.2, pi1_sd = 0.6;
  double delta_mean = 0.3, delta_sd = 0.6;
  double correlation = 0.3;
  std::vector<double> x_values{1.0, 2.0};
  std::vector<double> x_probs{0.5, 0.5};
  std::size_t y_bins = 24;  // forward operator only

  void validate() const;
};

struct TriangularModel {
  SpacePtr latent;
  ModelOperator forward;  // binned outcomes
  AdjointMap adjoint;     // exact S* g(beta) = sum_x p(x) g(m(x, beta), x)
  Functional ame;         // pi1 / delta
  Functional ppame;       // 1(pi1 delta > 0)
  std::size_t bins = 0;
  std::vector<std::string> warnings;
  std::array<double, 4> y_range{};  // y1 lo, y1 hi, y2 lo, y2 hi over the support
};

TriangularModel triangular_functionals(const TriangularRCSpec& spec);

// Tensor Legendre polynomials in the rescaled outcomes, ordered by total
// degree, up to total degree `degree`.
std::vector<PointFunction> triangular_dictionary(const TriangularModel& m, std::size_t degree);

// ---------------------------------------------------------------------------
// Binary choice with a random coefficient on the circle.

struct CircleRCSpec {
  std::size_t n = 256;
  ScalarFunction covariate_density;  // on [0, 2 pi); uniform when empty
  ScalarFunction lambda0;            // on [0, 2 pi); uniform when empty
};

ModelOperator circle_rc_operator(const CircleRCSpec& spec);
// Singular value of harmonic k up to a common factor: |2 sin(k pi / 2) / k|.
double circle_harmonic_oracle(int k);

// ---------------------------------------------------------------------------
// Willingness to pay: Y = 1(W > V), (Y, V) observed.

struct WTPSpec {
  double w_max = 1.0;
  double v_max = 2.0;
  ScalarFunction f_w;  // uniform on [0, w_max] when empty
  ScalarFunction f_v;  // uniform on [0, v_max] when empty
  std::size_t n_w = 64;
  std::size_t panel_points = 6;

  void validate() const;
};

class WTPModel {
 public:
  explicit WTPModel(WTPSpec spec);

  const WTPSpec& spec() const { return spec_; }
  const ModelOperator& model() const { return *model_; }
  const LinOp& op() const { return model_->op; }
  double f_w(double w) const;
  double f_v(double v) const;

  // g(y, v) = (2y - 1) r'(v) / (2 f_V(v)) on the full observation grid.
  GridFunction solution_g(const ScalarFunction& r) const;
  double calibration(const ScalarFunction& r) const;  // (r(0) + r(v_max)) / 2
  // int_0^{w_max} r'(u)^2 / f_V(u) du by the midpoint rule on `cells` cells.
  double regularity_integral(const ScalarFunction& r, std::size_t cells) const;
  double mean_regularity_integral(std::size_t cells) const;  // r(w) = w
  // Latent truth E[r(W)] and P(W > V) by adaptive quadrature.
  double truth(const ScalarFunction& r) const;
  double p_buy() const;

  // Throws "representer requires absolutely continuous r" on a jump.
  void check_representer(const ScalarFunction& r) const;

 private:
  WTPSpec spec_;
  double fw_mass_ = 1.0, fv_mass_ = 1.0;
  std::optional<ModelOperator> model_;  // set once the densities are normalized
};

double derivative(const ScalarFunction& r, double x, double h);

// ---------------------------------------------------------------------------
// Consumption Euler equation with a multiplicative measurement layer.

enum class EulerBuilder { Planted, PlantedSpectrum, Copula };

struct EulerSpec {
  std::size_t n_c = 64;
  EulerBuilder builder = EulerBuilder::Planted;
  double theta0 = 0.95;
  std::vector<double> spectrum;  // PlantedSpectrum: eigenvalues, the first paired with eta0
  bool orthogonal_eta = false;   // replace eta0 by its part orthogonal to g0
  double copula_rho = 0.6;       // Copula builder
  double gross_return = 1.05;
  double latent_mu = 0.0;        // log C* ~ N(latent_mu, latent_sd^2)
  double latent_sd = 0.3;
  double error_sd = 0.1;         // log eps ~ N(0, error_sd^2)
  double crra = 2.0;             // u'(c) = c^{-crra}
  std::size_t fft_size = 4096;

  void validate() const;
};

struct EulerModel {
  SpacePtr consumption;  // nodes c, weights of the law of C
  LinOp A;
  GridFunction eta0;
  double theta0 = 0.0;
};

EulerModel euler_model(const EulerSpec& spec);

// E[u'(C*) | C = c] by quadrature over the latent law.
double euler_projected_marginal_utility(const EulerSpec& spec, double c);

struct DiscountCandidate {
  double rho = 0.0;
  double theta = 0.0;
  GridFunction g0;
  GridFunction g;  // g0 / <A eta0, g0>
  double eta_g0 = 0.0;
  bool identified = false;
  double moment = 0.0;  // E[eta0 g]
};

struct DiscountReport {
  std::vector<DiscountCandidate> candidates;
  double eigen_residual = 0.0;  // |theta0 A eta0 - eta0| / |eta0|
};

DiscountReport euler_discount_check(const EulerModel& model);

struct AaraReport {
  double aara = 0.0;         // E[log u'(C*) d(C*)]
  double mean_score = 0.0;   // E[d(C*)]
  double score_identity = 0.0;  // E[r_chi(C*) u'(C*)]
  Deconvolution deconvolution;
  std::vector<double> orthogonality;  // normalized <w, eta> per eigenfunction
  bool orthogonal = false;
  double representer_check = 0.0;  // relative error of E[w(C) Lb(C)] vs E[b r_chi]
};

AaraReport aara_pipeline(const EulerSpec& spec, const EulerModel& model);

// ---------------------------------------------------------------------------
// Diagonal operator with a prescribed singular-value sequence.

struct SyntheticSpec {
  std::size_t n = 40;
  bool geometric = true;
  double rate = 0.5;      // geometric: lambda_j = rate^j
  double exponent = 1.0;  // polynomial: lambda_j = j^{-exponent}
};

Vec synthetic_values(const SyntheticSpec& spec);
LinOp synthetic_operator(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Finite latent and observed supports.

struct DiscreteSpec {
  Mat p;          // observed x latent conditional probabilities
  Vec latent_weights;
};

LinOp discrete_operator(const DiscreteSpec& spec);

}  // namespace identikit
