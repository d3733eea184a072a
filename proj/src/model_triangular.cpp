#include <algorithm>
#include <cmath>
#include <limits>

#include "identikit/error.hpp"
#include "identikit/models.hpp"

namespace identikit {

void TriangularRCSpec::validate() const {
  require(n >= 1, "coefficient grid needs at least one node per axis");
  require(pi1_hi >= pi1_lo && delta_hi >= delta_lo, "coefficient ranges must be ordered");
  require(n == 1 || (pi1_hi > pi1_lo && delta_hi > delta_lo), "coefficient ranges must be nondegenerate");
  require(pi1_sd > 0.0 && delta_sd > 0.0 && std::abs(correlation) < 1.0,
          "coefficient density needs positive scales and |correlation| < 1");
  require(!x_values.empty() && x_values.size() == x_probs.size(),
          "instrument values and probabilities differ in count");
  double mass = 0.0;
  for (double p : x_probs) {
    require(p > 0.0, "instrument probabilities must be positive");
    mass += p;
  }
  require(std::abs(mass - 1.0) <= 1e-10, "instrument probabilities must sum to 1");
  require(y_bins >= 2, "outcome binning needs at least two bins");
}

namespace {

Axis coefficient_axis(double lo, double hi, std::size_t n) {
  if (n == 1) return Axis{Vec::Constant(1, lo), Vec::Ones(1)};
  return trapezoid(lo, hi, n);
}

Axis drop_zero(const Axis& ax, bool& dropped) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < ax.nodes.size(); ++i)
    if (ax.nodes[i] != 0.0) keep.push_back(i);
  dropped = keep.size() != static_cast<std::size_t>(ax.nodes.size());
  require(!keep.empty(), "delta grid consists of the excluded node delta = 0");
  Axis out{Vec(static_cast<Eigen::Index>(keep.size())), Vec(static_cast<Eigen::Index>(keep.size()))};
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.nodes[static_cast<Eigen::Index>(k)] = ax.nodes[keep[k]];
    out.weights[static_cast<Eigen::Index>(k)] = ax.weights[keep[k]];
  }
  return out;
}

double legendre(std::size_t k, double x) {
  double p0 = 1.0, p1 = x;
  if (k == 0) return p0;
  for (std::size_t j = 2; j <= k; ++j) {
    const double jj = static_cast<double>(j);
    const double p2 = ((2.0 * jj - 1.0) * x * p1 - (jj - 1.0) * p0) / jj;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

}  // namespace

TriangularModel triangular_functionals(const TriangularRCSpec& spec) {
  spec.validate();
  std::vector<std::string> warnings;
  bool dropped = false;
  const Axis pa = coefficient_axis(spec.pi1_lo, spec.pi1_hi, spec.n);
  const Axis da = drop_zero(coefficient_axis(spec.delta_lo, spec.delta_hi, spec.n), dropped);
  if (dropped) warnings.push_back("delta = 0 node excluded: AME representer has a pole");

  auto base = tensor_space({pa, da}, "(pi1, delta)");
  const double rho = spec.correlation;
  auto density = [&](std::span<const double> b) {
    const double z1 = (b[0] - spec.pi1_mean) / spec.pi1_sd;
    const double z2 = (b[1] - spec.delta_mean) / spec.delta_sd;
    return std::exp(-(z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / (2.0 * (1.0 - rho * rho)));
  };
  Vec dens = evaluate(base, density).values;
  require(dens.minCoeff() > 0.0, "coefficient density underflows on the grid");
  SpacePtr latent = reweight(*base, dens, "G0");

  const Vec ame = evaluate(latent, [](std::span<const double> b) { return b[0] / b[1]; }).values;
  const Vec ppame = evaluate(latent, [](std::span<const double> b) { return b[0] * b[1] > 0.0 ? 1.0 : 0.0; }).values;

  // Outcome support over the grid and the instrument values.
  double y1lo = std::numeric_limits<double>::infinity(), y1hi = -y1lo, y2lo = y1lo, y2hi = -y1lo;
  for (double x : spec.x_values)
    for (std::size_t l = 0; l < latent->size(); ++l) {
      const auto b = latent->node(l);
      const double y1 = spec.pi0 + b[0] * x, y2 = spec.u2 + b[1] * x;
      y1lo = std::min(y1lo, y1), y1hi = std::max(y1hi, y1);
      y2lo = std::min(y2lo, y2), y2hi = std::max(y2hi, y2);
    }
  const double pad1 = 1e-9 * std::max(1.0, y1hi - y1lo), pad2 = 1e-9 * std::max(1.0, y2hi - y2lo);
  y1lo -= pad1, y1hi += pad1, y2lo -= pad2, y2hi += pad2;
  if (y1hi - y1lo < 1e-6) y1lo -= 0.5, y1hi += 0.5;
  if (y2hi - y2lo < 1e-6) y2lo -= 0.5, y2hi += 0.5;
  const std::array<double, 4> y_range{y1lo, y1hi, y2lo, y2hi};

  const std::size_t nb = spec.y_bins, nx = spec.x_values.size();
  
  const double h1 = (y1hi - y1lo) / static_cast<double>(nb), h2 = (y2hi - y2lo) / static_cast<double>(nb);
  Axis b1{Vec(static_cast<Eigen::Index>(nb)), Vec::Constant(static_cast<Eigen::Index>(nb), h1)};
  Axis b2{Vec(static_cast<Eigen::Index>(nb)), Vec::Constant(static_cast<Eigen::Index>(nb), h2)};
  for (std::size_t i = 0; i < nb; ++i) {
    b1.nodes[static_cast<Eigen::Index>(i)] = y1lo + (static_cast<double>(i) + 0.5) * h1;
    b2.nodes[static_cast<Eigen::Index>(i)] = y2lo + (static_cast<double>(i) + 0.5) * h2;
  }
  Axis xa{Vec(static_cast<Eigen::Index>(nx)), Vec::Ones(static_cast<Eigen::Index>(nx))};
  for (std::size_t k = 0; k < nx; ++k) xa.nodes[static_cast<Eigen::Index>(k)] = spec.x_values[k];
  // Instrument values must be increasing for the tensor grid.
  require(std::is_sorted(spec.x_values.begin(), spec.x_values.end()) &&
              std::adjacent_find(spec.x_values.begin(), spec.x_values.end()) == spec.x_values.end(),
          "instrument values must be strictly increasing");
  auto obs = tensor_space({b1, b2, xa}, "(y1, y2, x)");

  Mat vals = Mat::Zero(static_cast<Eigen::Index>(obs->size()), static_cast<Eigen::Index>(latent->size()));
  const Vec& gw = latent->weights();
  const Vec& bw = base->weights();
  for (std::size_t l = 0; l < latent->size(); ++l) {
    const auto b = latent->node(l);
    const double d = gw[static_cast<Eigen::Index>(l)] / bw[static_cast<Eigen::Index>(l)];
    for (std::size_t k = 0; k < nx; ++k) {
      const double x = spec.x_values[k];
      auto i1 = static_cast<std::size_t>((spec.pi0 + b[0] * x - y1lo) / h1);
      auto i2 = static_cast<std::size_t>((spec.u2 + b[1] * x - y2lo) / h2);
      i1 = std::min(i1, nb - 1), i2 = std::min(i2, nb - 1);
      vals(static_cast<Eigen::Index>((i1 * nb + i2) * nx + k), static_cast<Eigen::Index>(l)) =
          spec.x_probs[k] * d / (h1 * h2);
    }
  }
  ModelOperator forward = model_from_joint(JointDensity{obs, base, std::move(vals)}, 0.0);
  forward.notes.push_back(std::to_string(nb * nb) + " outcome bins per instrument value");

  auto lat = forward.op.domain();
  AdjointMap adj{lat, [spec, lat](const PointFunction& g) {
                           Vec out = Vec::Zero(static_cast<Eigen::Index>(lat->size()));
                           for (std::size_t l = 0; l < lat->size(); ++l) {
                             const auto b = lat->node(l);
                             double s = 0.0;
                             for (std::size_t k = 0; k < spec.x_values.size(); ++k) {
                               const double x = spec.x_values[k];
                               const double z[3] = {spec.pi0 + b[0] * x, spec.u2 + b[1] * x, x};
                               s += spec.x_probs[k] * g(z);
                             }
                             out[static_cast<Eigen::Index>(l)] = s;
                           }
                           return out;
                         }};
  return TriangularModel{lat,
                         std::move(forward),
                         std::move(adj),
                         Functional{"ame", GridFunction(lat, ame)},
                         Functional{"ppame", GridFunction(lat, ppame)},
                         nb * nb,
                         std::move(warnings),
                         y_range};
}

std::vector<PointFunction> triangular_dictionary(const TriangularModel& m, std::size_t degree) {
  const auto r = m.y_range;
  std::vector<PointFunction> out;
  for (std::size_t d = 0; d <= degree; ++d)
    for (std::size_t i = 0; i <= d; ++i) {
      const std::size_t j = d - i;
      out.push_back([r, i, j](std::span<const double> z) {
        const double u = 2.0 * (z[0] - r[0]) / (r[1] - r[0]) - 1.0;
        const double v = 2.0 * (z[1] - r[2]) / (r[3] - r[2]) - 1.0;
        return legendre(i, u) * legendre(j, v);
      });
    }
  return out;
}

}  // namespace identikit
