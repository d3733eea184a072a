#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "identikit/diagnostics.hpp"
#include "identikit/linop.hpp"

namespace identikit {

enum class RegMethod { TruncatedSVD, Tikhonov };
// Balanced minimizes |r - S* g|^2 + Var_P(g) / sample_size, the squared
// worst-case bias over unit perturbations plus the estimator variance.
enum class Selection { Fixed, Discrepancy, Balanced };

struct RegPolicy {
  RegMethod method = RegMethod::TruncatedSVD;
  Selection selection = Selection::Discrepancy;
  std::size_t truncation = 0;  // fixed TSVD index; 0 means every resolved mode
  double ridge = 0.0;          // fixed Tikhonov parameter
  double target = 1e-3;        // discrepancy target for the relative residual
  std::size_t sample_size = 0; // Balanced only
};

const char* to_string(RegMethod m);
const char* to_string(Selection s);

struct MomentSolution {
  GridFunction g;
  double residual = 0.0;  // |S* g - r| / |r|
  double g_norm = 0.0;
  bool norm_divergent = false;  // beta = 1 plateau failed
  bool target_reached = true;
  std::size_t truncation = 0;
  double ridge = 0.0;
  RegPolicy policy;
  std::vector<double> g_norm_path;  // TSVD: |g_J| for J = 1..resolved
};

// Solves S* g = r for g on the observation space.
MomentSolution solve_adjoint_equation(const LinOp& op, const SingularSystem& sys,
                                      const Functional& r, const RegPolicy& policy,
                                      const Thresholds& thresholds = {});
MomentSolution solve_adjoint_equation(const LinOp& op, const Functional& r,
                                      const RegPolicy& policy,
                                      const Thresholds& thresholds = {});

struct MomentEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
  std::size_t used = 0;
  std::size_t outside = 0;
};

// Interpolates g multilinearly on its tensor grid. Points outside the grid's
// bounding box are skipped; more than 1% of them is an error.
class GridInterpolator {
 public:
  explicit GridInterpolator(const GridFunction& g);
  // Returns false when x lies outside the grid.
  bool operator()(std::span<const double> x, double& out) const;

 private:
  std::vector<std::vector<double>> axes_;
  std::vector<std::size_t> stride_;
  std::vector<double> values_;
  std::vector<std::size_t> order_;  // unstructured 1-d grids: sort permutation
};

MomentEstimate moment_estimate(const GridFunction& g, const NodeMat& samples,
                               double calibration_constant = 0.0);

struct Deconvolution {
  Vec log_grid;  // tau_k = lo + k h
  Vec w;         // w(exp(tau_k))
  double h = 0.0;
  double clipped_energy = 0.0;
  bool severely_ill_posed = false;
  double symmetry_defect = 0.0;
  std::size_t clipped_frequencies = 0;
};

// Solves r(c*) = int f_eps(c / c*) w(c) dc on a uniform log grid of fft_size
// nodes spanning [lo, hi).
Deconvolution deconvolve_multiplicative(const std::function<double(double)>& r_chi,
                                        const std::function<double(double)>& error_density,
                                        std::size_t fft_size, double lo, double hi,
                                        double eps_k = 1e-8);

// Direct quadrature of int f_eps(c / c*) w(c) dc at c* = exp(tau_k).
Vec forward_multiplicative(const Deconvolution& d,
                           const std::function<double(double)>& error_density);

// Log-grid bounds from latent quantiles [1e-6, 1 - 1e-6] padded by four
// kernel standard deviations.
std::pair<double, double> log_grid_bounds(double log_q_lo, double log_q_hi, double kernel_sd);

}  // namespace identikit
