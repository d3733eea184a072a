#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "identikit/linop.hpp"

namespace identikit {

struct Thresholds {
  double tau_null = 1e-10;   // relative singular-value cutoff
  double tau_ident = 1e-4;   // null-space mass tolerance, relative to |r|
  double delta_conv = 0.01;  // plateau tolerance on the last-quarter increment
  std::vector<double> betas{0.0, 0.25, 0.5, 0.75, 1.0};
};

// Weighted singular triples: S phi_j = lambda_j psi_j, S* psi_j = lambda_j phi_j.
struct SingularSystem {
  SpacePtr domain;
  SpacePtr codomain;
  Vec values;  // nonincreasing
  Mat right;   // domain nodes x k, columns phi_j
  Mat left;    // codomain nodes x k, columns psi_j
  std::size_t rank_cutoff = 0;  // values[j] for j >= rank_cutoff are numerical zeros
  double tau_null = 1e-10;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  std::size_t resolved() const;
  GridFunction phi(std::size_t j) const;
  GridFunction psi(std::size_t j) const;
};

SingularSystem singular_system(const LinOp& op, std::size_t k, double tau_null = 1e-10);
// All min(rows, cols) triples.
SingularSystem singular_system(const LinOp& op);
SingularSystem full_singular_system(const LinOp& op, double tau_null);

struct Functional {
  std::string name;
  GridFunction representer;
  bool defined_up_to_constant = false;
  double calibration_constant = 0.0;

  // Representer used for classification: weighted mean removed when the
  // functional is only defined up to a constant.
  GridFunction effective() const;
};

// Coordinates of a functional on the coefficient space of a tangent
// restriction: entries <r, q_k> for the orthonormal basis q_k.
Functional restrict_functional(const TangentRestriction& t, const Functional& r);

struct SourceDiagnostics {
  Vec coefficients;  // <r, phi_j> for every computed j
  std::vector<double> betas;
  std::vector<Vec> partial_sums;  // per beta, running sums over resolved j
  double null_mass = 0.0;
  double r_norm = 0.0;
  double fitted_decay = 0.0;  // slope of log r_j^2 on log lambda_j; NaN if < 2 points
  std::size_t resolved = 0;
};

SourceDiagnostics source_norm_profile(const Functional& r, const SingularSystem& sys,
                                      const std::vector<double>& betas);

struct Plateau {
  bool converged = false;
  double growth = 0.0;  // (S(J) - S(floor(3J/4))) / S(J)
};
Plateau plateau_test(const Vec& partial_sums, double delta_conv);

enum class Verdict { Regular, Irregular, Unidentified };
const char* to_string(Verdict v);

struct ResolutionVerdict {
  Verdict verdict = Verdict::Irregular;
  std::optional<double> beta_star;
  std::vector<Plateau> plateaus;  // one per beta
  SourceDiagnostics diagnostics;
};

struct Classification {
  Verdict verdict = Verdict::Irregular;
  std::optional<double> beta_star;
  bool mesh_stable = true;
  SourceDiagnostics diagnostics;  // fine resolution
  std::optional<ResolutionVerdict> coarse;
  std::optional<ResolutionVerdict> fine;
  double residual = 0.0;  // discrete classifier only
};

ResolutionVerdict classify_single(const Functional& r, const SingularSystem& sys,
                                  const Thresholds& policy);

// r_coarse and r_fine are the same functional discretized on the two meshes.
Classification classify_functional(const Functional& r_coarse, const SingularSystem& sys_coarse,
                                   const Functional& r_fine, const SingularSystem& sys_fine,
                                   const Thresholds& policy = {});

struct FisherResult {
  double value = 0.0;
  bool unidentified = false;  // representer has mass on the null space
  bool zero_functional = false;
};

// 1 / sum_{j < cutoff} (r_j / lambda_j)^2.
FisherResult fisher_information(const Functional& r, const SingularSystem& sys,
                                double tau_ident = 1e-4);

struct Gauge {
  std::string name;
  std::function<double(double)> value;
  std::function<double(double)> derivative;
  // eps / gauge(eps) nonincreasing, so the scale of b sits on the boundary.
  bool scale_at_boundary = false;
};
Gauge power_gauge(double rho);
Gauge exp_gauge();
Gauge log_gauge(double a);

struct GeneralizedFisher {
  double value = 0.0;
  Vec direction;  // singular coordinates of the minimizing b, |b| <= 1
  double phi_dot = 0.0;
  bool unidentified = false;
  std::size_t starts = 0;  // total descents
};

// inf over |b| <= 1, 0 < |phi(b)| <= 1 of |Sb|^2 / gauge(phi(b)^2).
// Multistart descent from every singular direction plus `starts` random
// directions.
GeneralizedFisher generalized_fisher(const Functional& r, const SingularSystem& sys,
                                     const Gauge& gauge, std::size_t starts = 32,
                                     double tau_ident = 1e-4, std::uint64_t seed = 1);

// Same problem on explicit singular coordinates (lambda, r).
GeneralizedFisher generalized_fisher(const Vec& lambda, const Vec& r, const Gauge& gauge,
                                     std::size_t starts = 32, std::uint64_t seed = 1);

struct EfficientScore {
  GridFunction score;  // l_theta - l_eta b*
  Vec b;
  double information = 0.0;
  double ridge = 0.0;
  std::vector<std::pair<double, double>> sensitivity;  // (ridge, information)
};

// ridge <= 0 selects 1e-8 * |l_eta|_op^2.
EfficientScore efficient_score(const GridFunction& score_theta, const LinOp& score_eta,
                               double ridge = 0.0);

struct Completeness {
  bool complete = false;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};
Completeness completeness_check(const LinOp& op, double tol);

// P: m x n conditional probabilities P[Z = z_j | Z* = z*_i]; columns sum to one.
Classification classify_discrete(const Mat& p, const Vec& weights_latent, const Vec& r);

// Adjoint map at one resolution: dictionary functions are evaluated on the
// observation side and mapped to the latent grid.
struct AdjointMap {
  SpacePtr latent;
  std::function<Vec(const PointFunction&)> apply;
};
AdjointMap adjoint_map(const LinOp& score);

struct ProbeEntry {
  std::vector<double> modulus;  // per resolution
  double growth = 0.0;          // finest / coarsest modulus
  bool bounded = false;         // growth <= 1.5
};

struct ProbeReport {
  std::vector<ProbeEntry> entries;  // per dictionary function
  std::vector<std::size_t> dictionary_sizes;
  std::vector<double> residuals;  // relative projection residual of the target
  double drop = 0.0;              // residuals.front() / residuals.back()
};

// Discrete modulus of continuity: max adjacent jump over spacing, taken along
// every tensor axis (or along sorted nodes for unstructured 1-d grids).
double discrete_modulus(const GridFunction& f);

ProbeReport adjoint_smoothness_probe(const std::vector<AdjointMap>& resolutions,
                                     const std::vector<PointFunction>& dictionary,
                                     const PointFunction* target = nullptr,
                                     std::vector<std::size_t> sizes = {});

}  // namespace identikit
