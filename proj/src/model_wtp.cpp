#include <algorithm>
#include <cmath>

#include "identikit/error.hpp"
#include "identikit/models.hpp"

namespace identikit {

void WTPSpec::validate() const {
  require(w_max > 0.0 && v_max > 0.0 && std::isfinite(w_max) && std::isfinite(v_max),
          "support bounds must be positive and finite");
  require(v_max >= w_max, "the support of V must cover the support of W");
  require(n_w >= 2, "W grid needs at least two nodes");
  require(panel_points >= 1 && panel_points <= 32, "panel rule needs 1..32 points");
}

double derivative(const ScalarFunction& r, double x, double h) {
  return (r(x - 2.0 * h) - 8.0 * r(x - h) + 8.0 * r(x + h) - r(x + 2.0 * h)) / (12.0 * h);
}

namespace {

// Composite Gauss-Legendre quadrature of f over [a, b].
double integrate(const ScalarFunction& f, double a, double b, std::size_t panels = 64) {
  if (b <= a) return 0.0;
  static const Axis unit = gauss_legendre(0.0, 1.0, 16);
  const double h = (b - a) / static_cast<double>(panels);
  double s = 0.0;
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + h * static_cast<double>(p);
    for (Eigen::Index k = 0; k < unit.nodes.size(); ++k) s += h * unit.weights[k] * f(lo + h * unit.nodes[k]);
  }
  return s;
}

}  // namespace

WTPModel::WTPModel(WTPSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const double wmax = spec_.w_max, vmax = spec_.v_max;
  fw_mass_ = spec_.f_w ? integrate(spec_.f_w, 0.0, wmax, 256) : 1.0;
  fv_mass_ = spec_.f_v ? integrate(spec_.f_v, 0.0, vmax, 256) : 1.0;
  require(fw_mass_ > 0.0 && fv_mass_ > 0.0, "densities need positive mass");

  const Axis w_axis = trapezoid(0.0, wmax, spec_.n_w);
  // Panel breakpoints include every W node so the indicator 1(w > v) is
  // constant on each panel.
  std::vector<double> breaks(w_axis.nodes.data(), w_axis.nodes.data() + w_axis.nodes.size());
  const double h = wmax / static_cast<double>(spec_.n_w - 1);
  if (vmax > wmax) {
    const auto extra = static_cast<std::size_t>(std::ceil((vmax - wmax) / h - 1e-9));
    for (std::size_t k = 1; k <= extra; ++k)
      breaks.push_back(wmax + (vmax - wmax) * static_cast<double>(k) / static_cast<double>(extra));
  }
  const Axis unit = gauss_legendre(0.0, 1.0, spec_.panel_points);
  std::vector<double> vn, vw;
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    const double lo = breaks[p], len = breaks[p + 1] - breaks[p];
    for (Eigen::Index k = 0; k < unit.nodes.size(); ++k) {
      vn.push_back(lo + len * unit.nodes[k]);
      vw.push_back(len * unit.weights[k]);
    }
  }
  Axis v_axis{Eigen::Map<Vec>(vn.data(), static_cast<Eigen::Index>(vn.size())),
              Eigen::Map<Vec>(vw.data(), static_cast<Eigen::Index>(vw.size()))};
  Axis ys{Vec(2), Vec::Ones(2)};
  ys.nodes << 0.0, 1.0;
  auto obs = tensor_space({ys, v_axis}, "(y, v)");
  auto lat = tensor_space({w_axis}, "w");

  Vec fv(v_axis.nodes.size()), fw(w_axis.nodes.size());
  for (Eigen::Index i = 0; i < fv.size(); ++i) fv[i] = f_v(v_axis.nodes[i]);
  for (Eigen::Index j = 0; j < fw.size(); ++j) fw[j] = f_w(w_axis.nodes[j]);
  fv /= v_axis.weights.dot(fv);
  fw /= w_axis.weights.dot(fw);
  require(fw.minCoeff() > 0.0, "W density must be positive on its grid");

  const auto nv = v_axis.nodes.size();
  Mat vals = Mat::Zero(2 * nv, fw.size());
  for (Eigen::Index j = 0; j < fw.size(); ++j)
    for (Eigen::Index i = 0; i < nv; ++i) {
      const bool buy = w_axis.nodes[j] > v_axis.nodes[i];
      vals((buy ? nv : 0) + i, j) = fv[i] * fw[j];
    }
  model_.emplace(model_from_joint(JointDensity{obs, lat, std::move(vals)}, 0.0));

  // Build-time check of the explicit solution against the discrete adjoint.
  const ScalarFunction ident = [](double w) { return w; };
  const GridFunction g = solution_g(ident);
  Vec gk(static_cast<Eigen::Index>(model_->kept.size()));
  for (std::size_t k = 0; k < model_->kept.size(); ++k)
    gk[static_cast<Eigen::Index>(k)] = g.values[static_cast<Eigen::Index>(model_->kept[k])];
  const Vec sg = adjoint(model_->op).apply(gk);
  const auto& wn = model_->op.domain()->nodes();
  const double c = calibration(ident);
  double err = 0.0, ref = 0.0;
  const Vec& dw = model_->op.domain()->weights();
  for (Eigen::Index j = 0; j < sg.size(); ++j) {
    err += dw[j] * std::pow(sg[j] - (wn(j, 0) - c), 2);
    ref += dw[j] * wn(j, 0) * wn(j, 0);
  }
  if (std::sqrt(err / ref) > 1e-6)
    fail(ErrorKind::Numerical, "explicit WTP solution fails the quadrature check");
}

double WTPModel::f_w(double w) const {
  if (w < 0.0 || w > spec_.w_max) return 0.0;
  return (spec_.f_w ? spec_.f_w(w) : 1.0 / spec_.w_max) / fw_mass_;
}

double WTPModel::f_v(double v) const {
  if (v < 0.0 || v > spec_.v_max) return 0.0;
  return (spec_.f_v ? spec_.f_v(v) : 1.0 / spec_.v_max) / fv_mass_;
}

GridFunction WTPModel::solution_g(const ScalarFunction& r) const {
  const auto& grid = model_->grid;
  const double h = 1e-3 * spec_.v_max;
  Vec g(static_cast<Eigen::Index>(grid->size()));
  for (std::size_t i = 0; i < grid->size(); ++i) {
    const auto z = grid->node(i);
    const double sign = 2.0 * z[0] - 1.0;
    g[static_cast<Eigen::Index>(i)] = sign * derivative(r, z[1], h) / (2.0 * f_v(z[1]));
  }
  return GridFunction(grid, std::move(g));
}

double WTPModel::calibration(const ScalarFunction& r) const {
  return 0.5 * (r(0.0) + r(spec_.v_max));
}

double WTPModel::regularity_integral(const ScalarFunction& r, std::size_t cells) const {
  require(cells >= 1, "regularity integral needs at least one cell");
  const double h = spec_.w_max / static_cast<double>(cells);
  double s = 0.0;
  for (std::size_t i = 0; i < cells; ++i) {
    const double u = (static_cast<double>(i) + 0.5) * h;
    const double d = derivative(r, u, 1e-3 * h);
    s += h * d * d / f_v(u);
  }
  return s;
}

double WTPModel::mean_regularity_integral(std::size_t cells) const {
  return regularity_integral([](double w) { return w; }, cells);
}

double WTPModel::truth(const ScalarFunction& r) const {
  return integrate([&](double w) { return r(w) * f_w(w); }, 0.0, spec_.w_max, 256);
}

double WTPModel::p_buy() const {
  // P(W > V) = int f_W(w) F_V(w) dw.
  return integrate([&](double w) { return f_w(w) * integrate([&](double v) { return f_v(v); }, 0.0, w, 8); },
                   0.0, spec_.w_max, 128);
}

void WTPModel::check_representer(const ScalarFunction& r) const {
  auto max_jump = [&](std::size_t n) {
    double worst = 0.0, prev = r(0.0);
    for (std::size_t i = 1; i <= n; ++i) {
      const double cur = r(spec_.v_max * static_cast<double>(i) / static_cast<double>(n));
      worst = std::max(worst, std::abs(cur - prev));
      prev = cur;
    }
    return worst;
  };
  const double coarse = max_jump(1024), fine = max_jump(2048);
  if (coarse > 1e-12 && fine > 0.75 * coarse)
    fail(ErrorKind::InvalidArgument, "representer requires absolutely continuous r");
}

}  // namespace identikit
