#include "identikit/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

#include <unsupported/Eigen/FFT>

#include "identikit/error.hpp"

namespace identikit {

const char* to_string(RegMethod m) {
  return m == RegMethod::TruncatedSVD ? "truncated_svd" : "tikhonov";
}

const char* to_string(Selection s) {
  switch (s) {
    case Selection::Fixed: return "fixed";
    case Selection::Discrepancy: return "discrepancy";
    case Selection::Balanced: return "balanced";
  }
  return "?";
}

namespace {

double relative_residual(const LinOp& adj, const Vec& g, const GridFunction& r) {
  const Vec res = adj.matrix() * g - r.values;
  const double rn = norm(r);
  const double num = std::sqrt(res.dot(r.space->weights().cwiseProduct(res)));
  return rn > 0.0 ? num / rn : num;
}

double variance(const Vec& g, const Vec& w) {
  const double m = w.dot(g);
  return std::max(0.0, w.dot(g.cwiseAbs2()) - m * m);
}

}  // namespace

MomentSolution solve_adjoint_equation(const LinOp& op, const SingularSystem& sys,
                                      const Functional& r, const RegPolicy& policy,
                                      const Thresholds& thresholds) {
  const ResolutionVerdict v = classify_single(r, sys, thresholds);
  if (v.verdict == Verdict::Unidentified)
    fail(ErrorKind::Identification, "representer has null-space mass");
  const SourceDiagnostics& d = v.diagnostics;
  const GridFunction f = r.effective();
  const LinOp adj = adjoint(op);

  MomentSolution out;
  out.policy = policy;
  out.norm_divergent = !v.plateaus.back().converged;
  const std::size_t J = d.resolved;
  const double rn2 = d.r_norm * d.r_norm;

  if (policy.selection == Selection::Balanced)
    require(policy.sample_size > 0, "balanced selection needs the sample size");
  const double n_bal = static_cast<double>(policy.sample_size);
  const Vec& wc = op.codomain()->weights();

  if (policy.method == RegMethod::TruncatedSVD) {
    std::size_t k = J;
    if (policy.selection == Selection::Balanced) {
      double best = std::numeric_limits<double>::infinity(), captured = 0.0;
      Vec g = Vec::Zero(static_cast<Eigen::Index>(op.rows()));
      for (std::size_t j = 0; j < J; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        g += (d.coefficients[jj] / sys.values[jj]) * sys.left.col(jj);
        captured += d.coefficients[jj] * d.coefficients[jj];
        const double risk = std::max(0.0, rn2 - captured) + variance(g, wc) / n_bal;
        if (risk < best) best = risk, k = j + 1;
      }
    } else if (policy.selection == Selection::Fixed) {
      if (policy.truncation != 0) {
        require(policy.truncation <= J, "truncation index exceeds the resolved rank");
        k = policy.truncation;
      }
    } else {
      require(policy.target > 0.0, "discrepancy target must be positive");
      double captured = 0.0;
      out.target_reached = false;
      for (std::size_t j = 0; j < J; ++j) {
        const double c = d.coefficients[static_cast<Eigen::Index>(j)];
        captured += c * c;
        const double res = rn2 > 0.0 ? std::sqrt(std::max(0.0, rn2 - captured) / rn2) : 0.0;
        if (res <= policy.target) {
          k = j + 1;
          out.target_reached = true;
          break;
        }
      }
    }
    Vec g = Vec::Zero(static_cast<Eigen::Index>(op.rows()));
    for (std::size_t j = 0; j < J; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      g += (d.coefficients[jj] / sys.values[jj]) * sys.left.col(jj);
      out.g_norm_path.push_back(std::sqrt(g.dot(wc.cwiseProduct(g))));
      if (j + 1 == k) out.g = GridFunction(op.codomain(), g);
    }
    out.truncation = k;
    out.g_norm = out.g_norm_path[k - 1];
  } else {
    const Mat a = op.matrix();
    const Mat ss = a * adj.matrix();
    const Vec rhs = a * f.values;
    auto solve = [&](double tau) {
      Mat sys_m = ss;
      sys_m.diagonal().array() += tau;
      return Vec(sys_m.partialPivLu().solve(rhs));
    };
    double tau = policy.ridge;
    const double lmax2 = sys.values[0] * sys.values[0];
    if (policy.selection == Selection::Fixed) {
      require(tau > 0.0, "Tikhonov ridge must be positive");
    } else if (policy.selection == Selection::Balanced) {
      const double rn = norm(f);
      double best = std::numeric_limits<double>::infinity();
      for (int k = 1; k <= 14; ++k) {
        const double t = lmax2 * std::pow(10.0, -k);
        const Vec g = solve(t);
        const double res = relative_residual(adj, g, f) * rn;
        const double risk = res * res + variance(g, wc) / n_bal;
        if (risk < best) best = risk, tau = t;
      }
    } else {
      require(policy.target > 0.0, "discrepancy target must be positive");
      // Largest ridge on a decade grid meeting the target.
      out.target_reached = false;
      for (int k = 1; k <= 14; ++k) {
        tau = lmax2 * std::pow(10.0, -k);
        if (relative_residual(adj, solve(tau), f) <= policy.target) {
          out.target_reached = true;
          break;
        }
      }
    }
    out.ridge = tau;
    out.g = GridFunction(op.codomain(), solve(tau));
    out.g_norm = norm(out.g);
  }
  out.residual = relative_residual(adj, out.g.values, f);
  return out;
}

MomentSolution solve_adjoint_equation(const LinOp& op, const Functional& r,
                                      const RegPolicy& policy, const Thresholds& thresholds) {
  return solve_adjoint_equation(op, full_singular_system(op, thresholds.tau_null), r, policy,
                                thresholds);
}

GridInterpolator::GridInterpolator(const GridFunction& g) {
  const auto& sp = *g.space;
  values_.assign(g.values.data(), g.values.data() + g.values.size());
  const auto& shape = sp.shape();
  if (!shape.empty() && shape.size() == sp.dim()) {
    stride_.assign(shape.size(), 1);
    for (std::size_t a = shape.size() - 1; a-- > 0;) stride_[a] = stride_[a + 1] * shape[a + 1];
    for (std::size_t a = 0; a < shape.size(); ++a) {
      std::vector<double> ax(shape[a]);
      for (std::size_t i = 0; i < shape[a]; ++i) ax[i] = sp.node(i * stride_[a])[a];
      require(std::is_sorted(ax.begin(), ax.end()), "interpolation axes must be increasing");
      axes_.push_back(std::move(ax));
    }
    return;
  }
  require(sp.dim() == 1, "interpolation needs a tensor grid or one-dimensional nodes");
  order_.resize(sp.size());
  std::iota(order_.begin(), order_.end(), 0);
  std::stable_sort(order_.begin(), order_.end(),
                   [&](auto a, auto b) { return sp.node(a)[0] < sp.node(b)[0]; });
  std::vector<double> ax;
  std::vector<double> vals;
  for (auto i : order_) {
    ax.push_back(sp.node(i)[0]);
    vals.push_back(values_[i]);
  }
  axes_.push_back(std::move(ax));
  values_ = std::move(vals);
  stride_ = {1};
}

bool GridInterpolator::operator()(std::span<const double> x, double& out) const {
  if (x.size() != axes_.size()) fail(ErrorKind::InvalidArgument, "sample dimension mismatch");
  const std::size_t d = axes_.size();
  std::size_t lo_idx[8];
  double frac[8];
  require(d <= 8, "interpolation supports at most 8 axes");
  for (std::size_t a = 0; a < d; ++a) {
    const auto& ax = axes_[a];
    if (!(x[a] >= ax.front() && x[a] <= ax.back())) return false;
    if (ax.size() == 1) {
      lo_idx[a] = 0;
      frac[a] = 0.0;
      continue;
    }
    auto it = std::upper_bound(ax.begin(), ax.end(), x[a]);
    std::size_t i = static_cast<std::size_t>(it - ax.begin());
    i = std::clamp<std::size_t>(i, 1, ax.size() - 1) - 1;
    lo_idx[a] = i;
    frac[a] = (x[a] - ax[i]) / (ax[i + 1] - ax[i]);
  }
  double acc = 0.0;
  for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
    double wgt = 1.0;
    std::size_t flat = 0;
    for (std::size_t a = 0; a < d; ++a) {
      const bool up = (corner >> a) & 1U;
      if (up && frac[a] == 0.0) {
        wgt = 0.0;
        break;
      }
      wgt *= up ? frac[a] : 1.0 - frac[a];
      flat += (lo_idx[a] + (up ? 1 : 0)) * stride_[a];
    }
    if (wgt != 0.0) acc += wgt * values_[flat];
  }
  out = acc;
  return true;
}

MomentEstimate moment_estimate(const GridFunction& g, const NodeMat& samples,
                               double calibration_constant) {
  require(samples.rows() > 0, "moment estimate needs at least one sample");
  GridInterpolator interp(g);
  MomentEstimate m;
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>(samples.rows()));
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    double v = 0.0;
    if (!interp({samples.data() + i * samples.cols(), static_cast<std::size_t>(samples.cols())}, v)) {
      ++m.outside;
      continue;
    }
    vals.push_back(v);
  }
  m.used = vals.size();
  if (static_cast<double>(m.outside) > 0.01 * static_cast<double>(samples.rows()))
    fail(ErrorKind::InvalidArgument, "grid does not cover data");
  if (m.used == 0) return m;
  const double n = static_cast<double>(m.used);
  const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  m.estimate = mean + calibration_constant;
  if (m.used > 1) m.standard_error = std::sqrt(ss / (n - 1.0) / n);
  return m;
}

namespace {

// 16-point Gauss-Legendre nodes and weights on [-1, 1].
const Axis& gl16() {
  static const Axis ax = gauss_legendre(-1.0, 1.0, 16);
  return ax;
}

double cell_average(const std::function<double(double)>& k, double a, double b) {
  const Axis& q = gl16();
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double s = 0.0;
  for (Eigen::Index i = 0; i < q.nodes.size(); ++i) s += q.weights[i] * k(mid + half * q.nodes[i]);
  return 0.5 * s;  // (1/(b-a)) * half * sum
}

}  // namespace

Deconvolution deconvolve_multiplicative(const std::function<double(double)>& r_chi,
                                        const std::function<double(double)>& error_density,
                                        std::size_t fft_size, double lo, double hi,
                                        double eps_k) {
  require(fft_size >= 256 && (fft_size & (fft_size - 1)) == 0,
          "fft_size must be a power of two >= 256");
  require(hi > lo, "log grid needs lo < hi");
  require(eps_k > 0.0, "clipping threshold must be positive");
  const auto n = static_cast<Eigen::Index>(fft_size);
  Deconvolution out;
  out.h = (hi - lo) / static_cast<double>(fft_size);
  const double h = out.h;
  out.log_grid = Vec::LinSpaced(n, lo, lo + h * static_cast<double>(n - 1));

  auto kernel = [&](double u) { return std::exp(u) * error_density(std::exp(u)); };
  // Symmetry K(u) = K(-u), checked on the lags the discrete kernel uses.
  double kmax = 0.0, defect = 0.0;
  for (Eigen::Index j = 0; j <= n / 2; ++j) {
    const double u = h * static_cast<double>(j);
    const double a = kernel(u), b = kernel(-u);
    require(std::isfinite(a) && std::isfinite(b) && a >= 0.0 && b >= 0.0,
            "error density must be finite and nonnegative");
    kmax = std::max({kmax, a, b});
    defect = std::max(defect, std::abs(a - b));
  }
  require(kmax > 0.0, "error density vanishes on the log grid");
  out.symmetry_defect = defect / kmax;
  if (out.symmetry_defect > 1e-6) fail(ErrorKind::InvalidArgument, "kernel symmetry violated");

  // Cell-averaged kernel times h, in wrapped order.
  std::vector<std::complex<double>> kern(fft_size), x(fft_size);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index lag = j <= n / 2 ? j : j - n;
    const double u = h * static_cast<double>(lag);
    kern[static_cast<std::size_t>(j)] = h * cell_average(kernel, u - 0.5 * h, u + 0.5 * h);
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = out.log_grid[k];
    x[static_cast<std::size_t>(k)] = std::exp(-t) * r_chi(std::exp(t));
  }

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> kh, xh;
  fft.fwd(kh, kern);
  fft.fwd(xh, x);
  double khmax = 0.0;
  for (const auto& c : kh) khmax = std::max(khmax, std::abs(c));
  double total = 0.0, clipped = 0.0;
  std::vector<std::complex<double>> yh(fft_size);
  for (std::size_t i = 0; i < fft_size; ++i) {
    const double e = std::norm(xh[i]);
    total += e;
    if (std::abs(kh[i]) < eps_k * khmax) {
      clipped += e;
      yh[i] = 0.0;
      ++out.clipped_frequencies;
    } else {
      yh[i] = xh[i] / kh[i];
    }
  }
  out.clipped_energy = total > 0.0 ? clipped / total : 0.0;
  out.severely_ill_posed = out.clipped_energy > 0.1;
  std::vector<std::complex<double>> y;
  fft.inv(y, yh);
  out.w.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) out.w[k] = y[static_cast<std::size_t>(k)].real();
  return out;
}

Vec forward_multiplicative(const Deconvolution& d,
                           const std::function<double(double)>& error_density) {
  const auto n = d.log_grid.size();
  Vec out(n);
  Vec c = d.log_grid.array().exp();
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) s += error_density(c[k] / c[i]) * d.w[k] * c[k];
    out[i] = s * d.h;
  }
  return out;
}

std::pair<double, double> log_grid_bounds(double log_q_lo, double log_q_hi, double kernel_sd) {
  require(log_q_hi > log_q_lo && kernel_sd >= 0.0, "invalid log-grid bounds");
  return {log_q_lo - 4.0 * kernel_sd, log_q_hi + 4.0 * kernel_sd};
}

}  // namespace identikit
