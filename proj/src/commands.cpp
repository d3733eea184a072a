#include "identikit/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <numbers>
#include <numeric>

#include "identikit/error.hpp"
#include "identikit/io.hpp"
#include "identikit/mc.hpp"

namespace identikit {

namespace {

namespace fs = std::filesystem;

// One model built at one grid size, with whatever the commands need beyond
// the operator itself.
struct Instance {
  std::string model;
  std::optional<ModelOperator> mo;
  std::shared_ptr<IGModel> ig;
  std::shared_ptr<WTPModel> wtp;
  std::shared_ptr<TriangularModel> tri;
  std::shared_ptr<EulerSpec> euler_spec;
  std::shared_ptr<EulerModel> euler;
  std::optional<DiscreteSpec> discrete;
  SyntheticSpec synthetic;
  Sampler sampler;

  const LinOp& op() const { return mo->op; }
  const SpacePtr& latent() const { return mo->op.domain(); }
};

ModelOperator wrap(LinOp op) {
  std::vector<std::size_t> kept(op.rows());
  std::iota(kept.begin(), kept.end(), std::size_t{0});
  auto grid = op.codomain();
  return ModelOperator{std::move(op), std::move(grid), std::move(kept), 0.0, {}};
}

double num(const Json& p, const char* k) { return p.at(k).get<double>(); }

std::vector<double> nums(const Json& p, const char* k) {
  std::vector<double> v;
  for (const auto& e : p.at(k)) {
    if (!e.is_number()) fail(ErrorKind::Config, std::string("config field 'params.") + k + "': expected numbers");
    v.push_back(e.get<double>());
  }
  return v;
}

Instance build(const RunConfig& c, std::size_t n) {
  const Json& p = c.params;
  Instance I;
  I.model = c.model;
  if (c.model == "ig_mixture") {
    IGMixtureSpec s;
    s.n_alpha = s.n_beta = n;
    s.alpha_max = num(p, "alpha_max");
    s.beta_min = num(p, "beta_min");
    s.beta_max = num(p, "beta_max");
    s.n_t = p.at("n_t").get<std::size_t>();
    s.t_min = num(p, "t_min");
    s.t_max = num(p, "t_max");
    s.alpha_center = num(p, "alpha_center");
    s.alpha_sd = num(p, "alpha_sd");
    s.beta_center = num(p, "beta_center");
    s.beta_sd = num(p, "beta_sd");
    I.ig = std::make_shared<IGModel>(s);
    I.mo = I.ig->model();
    I.sampler = grid_sampler(I.mo->op);
  } else if (c.model == "mixed_logit") {
    MixedLogitSpec s = mixed_logit_default(n);
    s.theta = Vec::Constant(1, num(p, "intercept"));
    const auto cov = nums(p, "covariates");
    if (!cov.empty()) {
      s.profiles.clear();
      for (double x : cov) s.profiles.push_back(Mat::Constant(1, 1, x));
      s.profile_prob = Vec::Constant(static_cast<Eigen::Index>(cov.size()), 1.0 / static_cast<double>(cov.size()));
    }
    const double lo = num(p, "beta_lo"), hi = num(p, "beta_hi"), m = num(p, "eta_mean"), sd = num(p, "eta_sd");
    require(hi > lo, "beta_hi must exceed beta_lo");
    require(sd > 0.0, "eta_sd must be positive");
    s.beta_axes = {gauss_legendre(lo, hi, n)};
    s.eta0 = [m, sd](std::span<const double> b) { return std::exp(-0.5 * (b[0] - m) * (b[0] - m) / (sd * sd)); };
    I.mo = mixed_logit_model(s);
    I.sampler = grid_sampler(I.mo->op);
  } else if (c.model == "triangular_rc") {
    TriangularRCSpec s;
    s.n = n;
    s.pi0 = num(p, "pi0");
    s.u2 = num(p, "u2");
    s.pi1_lo = num(p, "pi1_lo");
    s.pi1_hi = num(p, "pi1_hi");
    s.delta_lo = num(p, "delta_lo");
    s.delta_hi = num(p, "delta_hi");
    s.pi1_mean = num(p, "pi1_mean");
    s.pi1_sd = num(p, "pi1_sd");
    s.delta_mean = num(p, "delta_mean");
    s.delta_sd = num(p, "delta_sd");
    s.correlation = num(p, "correlation");
    s.x_values = nums(p, "x_values");
    s.x_probs = nums(p, "x_probs");
    s.y_bins = p.at("y_bins").get<std::size_t>();
    I.tri = std::make_shared<TriangularModel>(triangular_functionals(s));
    I.mo = I.tri->forward;
    I.sampler = grid_sampler(I.mo->op);
  } else if (c.model == "circle_rc") {
    CircleRCSpec s;
    s.n = n;
    const double k = num(p, "lambda0_kappa"), mu = num(p, "lambda0_mu"), kx = num(p, "covariate_kappa");
    require(k >= 0.0 && kx >= 0.0, "von Mises concentrations must be nonnegative");
    if (k > 0.0) s.lambda0 = [k, mu](double t) { return std::exp(k * std::cos(t - mu)); };
    if (kx > 0.0) s.covariate_density = [kx](double t) { return std::exp(kx * std::cos(t)); };
    I.mo = circle_rc_operator(s);
    I.sampler = grid_sampler(I.mo->op);
  } else if (c.model == "wtp") {
    WTPSpec s;
    s.n_w = n;
    s.w_max = num(p, "w_max");
    s.v_max = num(p, "v_max");
    s.panel_points = p.at("panel_points").get<std::size_t>();
    const std::string fv = p.at("f_v").get<std::string>();
    if (fv == "vanishing") {
      const double z = num(p, "f_v_zero");
      require(z > 0.0 && z < s.v_max, "f_v_zero must lie inside (0, v_max)");
      s.f_v = [z](double v) { return (v - z) * (v - z); };
    } else if (fv != "uniform") {
      fail(ErrorKind::Config, "config field 'params.f_v': expected 'uniform' or 'vanishing', got '" + fv + "'");
    }
    I.wtp = std::make_shared<WTPModel>(s);
    I.mo = I.wtp->model();
    I.sampler = wtp_sampler(*I.wtp);
  } else if (c.model == "euler") {
    auto s = std::make_shared<EulerSpec>();
    s->n_c = n;
    const std::string b = p.at("builder").get<std::string>();
    if (b == "planted") s->builder = EulerBuilder::Planted;
    else if (b == "planted_spectrum") s->builder = EulerBuilder::PlantedSpectrum;
    else if (b == "copula") s->builder = EulerBuilder::Copula;
    else
      fail(ErrorKind::Config,
           "config field 'params.builder': expected 'planted', 'planted_spectrum' or 'copula', got '" + b + "'");
    s->theta0 = num(p, "theta0");
    s->spectrum = nums(p, "spectrum");
    s->orthogonal_eta = p.at("orthogonal_eta").get<bool>();
    s->copula_rho = num(p, "copula_rho");
    s->gross_return = num(p, "gross_return");
    s->latent_mu = num(p, "latent_mu");
    s->latent_sd = num(p, "latent_sd");
    s->error_sd = num(p, "error_sd");
    s->crra = num(p, "crra");
    s->fft_size = p.at("fft_size").get<std::size_t>();
    I.euler_spec = s;
    I.euler = std::make_shared<EulerModel>(euler_model(*s));
    I.mo = wrap(I.euler->A);
  } else if (c.model == "discrete") {
    DiscreteSpec s;
    const Json& pm = p.at("p");
    if (!pm.is_array() || pm.empty() || !pm[0].is_array() || pm[0].empty())
      fail(ErrorKind::Config, "config field 'params.p': expected a nonempty matrix (array of rows)");
    const auto rows = pm.size(), cols = pm[0].size();
    s.p = Mat(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
      if (!pm[i].is_array() || pm[i].size() != cols)
        fail(ErrorKind::Config, "config field 'params.p': row " + std::to_string(i) + " has the wrong length");
      for (std::size_t j = 0; j < cols; ++j) {
        if (!pm[i][j].is_number()) fail(ErrorKind::Config, "config field 'params.p': expected numbers");
        s.p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = pm[i][j].get<double>();
      }
    }
    const auto w = nums(p, "latent_weights");
    s.latent_weights = Eigen::Map<const Vec>(w.data(), static_cast<Eigen::Index>(w.size()));
    I.mo = wrap(discrete_operator(s));
    I.discrete = s;
    I.sampler = grid_sampler(I.mo->op);
  } else if (c.model == "synthetic_sequence") {
    I.synthetic.n = n;
    I.synthetic.geometric = p.at("geometric").get<bool>();
    I.synthetic.rate = num(p, "rate");
    I.synthetic.exponent = num(p, "exponent");
    require(!I.synthetic.geometric || (I.synthetic.rate > 0.0 && I.synthetic.rate < 1.0), "rate must lie in (0, 1)");
    require(I.synthetic.geometric || I.synthetic.exponent > 0.0, "exponent must be positive");
    I.mo = wrap(synthetic_operator(I.synthetic));
  } else {
    fail(ErrorKind::Config, "unknown model " + c.model);
  }
  return I;
}

const std::map<std::string, std::vector<std::string>>& builtin_names() {
  static const std::map<std::string, std::vector<std::string>> m{
      {"ig_mixture", {"mean_alpha", "mean_beta", "alpha_beta"}},
      {"mixed_logit", {"cdf_at_0", "mean_tanh", "mean"}},
      {"triangular_rc", {"ame", "ppame"}},
      {"circle_rc", {"sin1", "sin3", "cos2", "halfcircle", "cdf_quarter"}},
      {"wtp", {"mean", "second_moment"}},
      {"euler", {}},
      {"discrete", {}},
      {"synthetic_sequence", {"mode1", "matched", "half", "flat"}},
  };
  return m;
}

std::optional<PointFunction> builtin_point(const Instance& I, const std::string& name) {
  const std::string& m = I.model;
  if (m == "ig_mixture") {
    if (name == "mean_alpha") return [](std::span<const double> x) { return x[0]; };
    if (name == "mean_beta") return [](std::span<const double> x) { return x[1]; };
    if (name == "alpha_beta") return [](std::span<const double> x) { return x[0] * x[1]; };
  } else if (m == "mixed_logit") {
    if (name == "cdf_at_0") return [](std::span<const double> x) { return x[0] <= 0.0 ? 1.0 : 0.0; };
    if (name == "mean_tanh") return [](std::span<const double> x) { return std::tanh(x[0]); };
    if (name == "mean") return [](std::span<const double> x) { return x[0]; };
  } else if (m == "circle_rc") {
    if (name == "sin1") return [](std::span<const double> x) { return std::sin(x[0]); };
    if (name == "sin3") return [](std::span<const double> x) { return std::sin(3.0 * x[0]); };
    if (name == "cos2") return [](std::span<const double> x) { return std::cos(2.0 * x[0]); };
    if (name == "halfcircle") return [](std::span<const double> x) { return x[0] < std::numbers::pi ? 1.0 : 0.0; };
    if (name == "cdf_quarter")
      return [](std::span<const double> x) { return x[0] < std::numbers::pi / 2 ? 1.0 : 0.0; };
  } else if (m == "triangular_rc") {
    if (name == "ame") return [](std::span<const double> x) { return x[0] / x[1]; };
    if (name == "ppame") return [](std::span<const double> x) { return x[0] * x[1] > 0.0 ? 1.0 : 0.0; };
  } else if (m == "wtp") {
    if (name == "mean") return [](std::span<const double> x) { return x[0]; };
    if (name == "second_moment") return [](std::span<const double> x) { return x[0] * x[0]; };
  } else if (m == "synthetic_sequence") {
    auto lam = std::make_shared<Vec>(synthetic_values(I.synthetic));
    auto at = [lam](std::span<const double> x) { return (*lam)[static_cast<Eigen::Index>(std::lround(x[0])) - 1]; };
    if (name == "mode1") return [](std::span<const double> x) { return std::lround(x[0]) == 1 ? 1.0 : 0.0; };
    if (name == "matched") return at;
    if (name == "half") return [at](std::span<const double> x) { return std::sqrt(at(x)); };
    if (name == "flat") return [](std::span<const double>) { return 1.0; };
  }
  return std::nullopt;
}

const FunctionalSpec& find_spec(const RunConfig& c, const std::string& name) {
  for (const auto& f : c.functionals)
    if (f.name == name) return f;
  fail(ErrorKind::Config, "functional '" + name + "' is not listed in functionals");
}

// Pointwise form of the functional where one exists (used for the
// continuous-model truth).
std::optional<PointFunction> point_form(const Instance& I, const FunctionalSpec& f) {
  if (f.builtin) return builtin_point(I, f.name);
  if (f.points.empty()) return std::nullopt;
  auto pts = std::make_shared<std::vector<std::pair<double, double>>>(f.points);
  return [pts](std::span<const double> x) {
    const auto& p = *pts;
    const double v = x[0];
    if (v <= p.front().first) return p.front().second;
    if (v >= p.back().first) return p.back().second;
    const auto it = std::upper_bound(p.begin(), p.end(), v, [](double a, const auto& q) { return a < q.first; });
    const auto& b = *it;
    const auto& a = *(it - 1);
    return a.second + (b.second - a.second) * (v - a.first) / (b.first - a.first);
  };
}

Functional make_functional(const Instance& I, const RunConfig& c, const std::string& name) {
  const FunctionalSpec& f = find_spec(c, name);
  if (I.model == "euler")
    fail(ErrorKind::Config, "functional '" + name + "': the euler model has no linear functionals; use estimate");
  Functional out{name, GridFunction(), f.up_to_constant, 0.0};
  if (f.builtin && I.tri) {
    if (name == "ame") return I.tri->ame;
    if (name == "ppame") return I.tri->ppame;
  }
  if (!f.builtin && !f.values.empty()) {
    if (f.values.size() != I.latent()->size())
      fail(ErrorKind::Config, "functional '" + name + "': table has " + std::to_string(f.values.size()) +
                                  " values but the latent grid has " + std::to_string(I.latent()->size()) + " nodes");
    out.representer =
        GridFunction(I.latent(), Eigen::Map<const Vec>(f.values.data(), static_cast<Eigen::Index>(f.values.size())));
  } else {
    if (!f.builtin && I.latent()->dim() != 1)
      fail(ErrorKind::Config, "functional '" + name + "': point tables need a one-dimensional latent space");
    auto pf = point_form(I, f);
    if (!pf) {
      std::string list;
      for (const auto& b : builtin_names().at(I.model)) list += (list.empty() ? "" : ", ") + b;
      fail(ErrorKind::Config, "unknown functional '" + name + "' for model " + I.model +
                                  (list.empty() ? std::string(" (explicit tables only)") : " (built-ins: " + list + ")"));
    }
    out.representer = evaluate(I.latent(), *pf);
  }
  if (f.up_to_constant) out.calibration_constant = weighted_mean(out.representer);
  return out;
}

double truth_of(const Instance& I, const RunConfig& c, const Functional& r) {
  if (I.wtp) {
    if (auto pf = point_form(I, find_spec(c, r.name))) {
      auto f = *pf;
      return I.wtp->truth([f](double w) { return f(std::span<const double>(&w, 1)); });
    }
  }
  return weighted_mean(r.representer);
}

std::string file_stem(const std::string& name) {
  std::string s = name;
  for (char& ch : s)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  return s;
}

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json plateau_json(const ResolutionVerdict& v, const std::vector<double>& betas) {
  Json ps = Json::array();
  for (std::size_t i = 0; i < v.plateaus.size(); ++i)
    ps.push_back(Json{{"beta", i < betas.size() ? betas[i] : 0.0},
                      {"converged", v.plateaus[i].converged},
                      {"growth", v.plateaus[i].growth}});
  return Json{{"verdict", to_string(v.verdict)},
              {"beta_star", opt(v.beta_star)},
              {"null_mass", v.diagnostics.null_mass},
              {"resolved", v.diagnostics.resolved},
              {"plateaus", ps}};
}

Json space_json(const WeightedSpace& s) {
  return Json{{"label", s.label()}, {"nodes", s.size()}, {"dim", s.dim()}, {"truncation_mass", s.truncation_mass()}};
}

Json instance_json(const Instance& I) {
  Json notes = Json::array();
  for (const auto& n : I.mo->notes) notes.push_back(n);
  if (I.tri)
    for (const auto& w : I.tri->warnings) notes.push_back(w);
  return Json{{"latent", space_json(*I.latent())},
              {"observation", space_json(*I.op().codomain())},
              {"dropped_mass", I.mo->dropped_mass},
              {"notes", notes}};
}

Json spectrum_json(const SingularSystem& s) {
  return Json{{"count", s.size()},
              {"resolved", s.resolved()},
              {"lambda_max", s.size() ? s.values[0] : 0.0},
              {"lambda_min_resolved", s.resolved() ? s.values[static_cast<Eigen::Index>(s.resolved() - 1)] : 0.0},
              {"tau_null", s.tau_null}};
}

Json policy_json(const RegPolicy& p) {
  return Json{{"method", p.method == RegMethod::TruncatedSVD ? "tsvd" : "tikhonov"},
              {"selection", to_string(p.selection)},
              {"truncation", p.truncation},
              {"ridge", p.ridge},
              {"target", p.target},
              {"sample_size", p.sample_size}};
}

struct Pair {
  std::optional<Instance> coarse, fine;
  std::optional<SingularSystem> sys_coarse, sys_fine;
};

// Builds both resolutions and their singular systems; the two
// decompositions run concurrently when threads allow.
Pair build_pair(const RunConfig& c, std::size_t threads, bool need_coarse = true) {
  Pair p;
  const bool same = !c.coarse || !need_coarse;
  p.fine = build(c, c.fine);
  if (same)
    p.coarse = p.fine;
  else
    p.coarse = build(c, c.coarse);
  std::vector<std::optional<SingularSystem>> out(2);
  parallel_for(same ? 1 : 2, threads, [&](std::size_t i) {
    const Instance& I = i == 0 ? *p.fine : *p.coarse;
    out[i] = full_singular_system(I.op(), c.thresholds.tau_null);
  });
  p.sys_fine = std::move(out[0]);
  p.sys_coarse = same ? p.sys_fine : std::move(out[1]);
  return p;
}

Classification classify(const RunConfig& c, const Pair& p, const Functional& rc, const Functional& rf) {
  if (p.fine->discrete)
    return classify_discrete(p.fine->discrete->p, p.fine->discrete->latent_weights, rf.effective().values);
  return classify_functional(rc, *p.sys_coarse, rf, *p.sys_fine, c.thresholds);
}

Json classification_json(const Classification& cl, const RunConfig& c) {
  Json j{{"verdict", to_string(cl.verdict)},
         {"beta_star", opt(cl.beta_star)},
         {"mesh_stable", cl.mesh_stable},
         {"null_mass", cl.diagnostics.null_mass},
         {"r_norm", cl.diagnostics.r_norm},
         {"fitted_decay", cl.diagnostics.fitted_decay},
         {"resolved", cl.diagnostics.resolved}};
  if (cl.coarse) j["coarse"] = plateau_json(*cl.coarse, c.thresholds.betas);
  if (cl.fine) j["fine"] = plateau_json(*cl.fine, c.thresholds.betas);
  if (!cl.coarse && !cl.fine) j["residual"] = cl.residual;
  return j;
}

struct Output {
  fs::path dir;
  CommandResult result;

  std::string path(const std::string& name) const { return (dir / name).string(); }
  void json(const Json& j, const std::string& name) {
    write_text(j.dump(2) + "\n", path(name));
    result.files.push_back(path(name));
  }
  void csv(const CsvTable& t, const std::string& name) {
    write_csv(t, path(name));
    result.files.push_back(path(name));
  }
  void svg(const Plot& p, const std::string& name) {
    write_svg(p, path(name));
    result.files.push_back(path(name));
  }
  void op(const LinOp& o, const std::string& name) {
    write_operator(o, path(name));
    result.files.push_back(path(name));
  }
};

Json header(const std::string& command, const RunConfig& c) {
  return Json{{"command", command}, {"version", kVersion}, {"config", c.resolved}};
}

// ---------------------------------------------------------------------------

Json model_checks(const Instance& coarse, const Instance& I, const RunConfig& c) {
  Json j = Json::object();
  if (I.ig) {
    const IGModel& m = *I.ig;
    j["reflection_defect"] = m.reflection_defect();
    auto c_odd = evaluate(m.latent(), [](std::span<const double> x) { return x[0] * std::exp(-x[1]); });
    auto b = ig_null_direction(m, c_odd);
    j["null_direction_ratio"] = norm(I.op().apply(b)) / norm(b);
    auto t = restrict_tangent(I.op(), ig_symmetric_basis(m));
    auto comp = completeness_check(t.op, 1e-4);
    j["symmetric_completeness"] = Json{{"complete", comp.complete},
                                       {"lambda_min", comp.lambda_min},
                                       {"lambda_max", comp.lambda_max},
                                       {"ratio", comp.lambda_max > 0 ? comp.lambda_min / comp.lambda_max : 0.0}};
  } else if (I.wtp) {
    Json reg = Json::array();
    for (std::size_t cells : {1000, 2000, 4000, 8000})
      reg.push_back(Json{{"cells", cells}, {"integral", I.wtp->mean_regularity_integral(cells)}});
    j["mean_regularity_integral"] = reg;
    j["p_buy"] = I.wtp->p_buy();
  } else if (I.model == "circle_rc") {
    auto ratio = [&](int k, bool sine) {
      auto b = evaluate(I.latent(), [k, sine](std::span<const double> x) {
        return sine ? std::sin(k * x[0]) : std::cos(k * x[0]);
      });
      return norm(I.op().apply(b)) / norm(b);
    };
    double even = 0.0;
    for (int k = 2; k <= 20 && static_cast<std::size_t>(k) < I.latent()->size() / 2; k += 2)
      even = std::max(even, ratio(k, false));
    Json odd = Json::array();
    for (int k = 1; k <= 15 && static_cast<std::size_t>(k) < I.latent()->size() / 2; k += 2)
      odd.push_back(Json{{"k", k}, {"gain", ratio(k, true)}, {"oracle", circle_harmonic_oracle(k)}});
    j["even_harmonic_max_gain"] = even;
    j["odd_harmonics"] = odd;
  } else if (I.euler) {
    auto rep = euler_discount_check(*I.euler);
    Json cands = Json::array();
    for (const auto& cd : rep.candidates)
      cands.push_back(Json{{"rho", cd.rho}, {"theta", cd.theta}, {"eta_g0", cd.eta_g0}, {"identified", cd.identified},
                           {"moment", cd.moment}});
    j["discount"] = Json{{"theta0", I.euler->theta0}, {"eigen_residual", rep.eigen_residual}, {"candidates", cands}};
    auto a = aara_pipeline(*I.euler_spec, *I.euler);
    j["aara"] = Json{{"value", a.aara},
                     {"mean_score", a.mean_score},
                     {"score_identity", a.score_identity},
                     {"orthogonal", a.orthogonal},
                     {"representer_check", a.representer_check},
                     {"clipped_energy", a.deconvolution.clipped_energy},
                     {"severely_ill_posed", a.deconvolution.severely_ill_posed}};
  } else if (I.tri) {
    // Projection of each representer on adjoint images of a growing
    // polynomial dictionary; a residual floor marks a non-smooth functional.
    const std::vector<AdjointMap> maps{coarse.tri->adjoint, I.tri->adjoint};
    const auto dict = triangular_dictionary(*I.tri, 15);
    Json probes = Json::array();
    for (const auto& f : c.functionals) {
      auto pf = point_form(I, f);
      if (!pf) continue;
      const ProbeReport rep = adjoint_smoothness_probe(maps, dict, &*pf);
      probes.push_back(Json{{"functional", f.name},
                            {"dictionary_sizes", rep.dictionary_sizes},
                            {"residuals", rep.residuals},
                            {"drop", rep.drop}});
    }
    j["smoothness_probes"] = probes;
  }
  return j;
}

CommandResult diagnose(const RunConfig& c, Output& out, std::size_t threads) {
  Pair p = build_pair(c, threads);
  Json rep = header("diagnose", c);
  rep["model"] = Json{{"name", c.model}, {"coarse", instance_json(*p.coarse)}, {"fine", instance_json(*p.fine)}};
  rep["spectra"] = Json{{"coarse", spectrum_json(*p.sys_coarse)}, {"fine", spectrum_json(*p.sys_fine)}};

  CsvTable sv{{"resolution", "grid", "index", "singular_value"}, {}};
  Plot svp{"Singular values", "index j", "lambda_j", false, true, {}};
  for (int r = 0; r < 2; ++r) {
    const SingularSystem& s = r == 0 ? *p.sys_coarse : *p.sys_fine;
    const std::size_t grid = r == 0 ? c.coarse : c.fine;
    PlotSeries ser{r == 0 ? "coarse" : "fine", {}, {}, r == 0};
    for (std::size_t j = 0; j < s.size(); ++j) {
      const double v = s.values[static_cast<Eigen::Index>(j)];
      sv.add({r == 0 ? "coarse" : "fine", std::to_string(grid), std::to_string(j + 1), format_number(v)});
      ser.x.push_back(static_cast<double>(j + 1));
      ser.y.push_back(v);
    }
    svp.series.push_back(std::move(ser));
  }

  CsvTable ps{{"functional", "resolution", "beta", "J", "partial_sum"}, {}};
  Json funcs = Json::array();
  std::vector<Plot> plots;
  for (const auto& fspec : c.functionals) {
    const Functional rc = make_functional(*p.coarse, c, fspec.name);
    const Functional rf = make_functional(*p.fine, c, fspec.name);
    const Classification cl = classify(c, p, rc, rf);
    Json fj{{"name", fspec.name}};
    fj.update(classification_json(cl, c));

    const FisherResult fi = fisher_information(rf, *p.sys_fine, c.thresholds.tau_ident);
    fj["fisher"] = Json{{"value", fi.value}, {"unidentified", fi.unidentified}, {"zero_functional", fi.zero_functional}};
    Json gf = Json::array();
    for (double rho : c.fisher.rhos) {
      const auto g = generalized_fisher(rf, *p.sys_fine, power_gauge(rho), c.fisher.starts, c.thresholds.tau_ident, c.seed);
      gf.push_back(Json{{"rho", rho}, {"value", g.value}, {"phi_dot", g.phi_dot}, {"unidentified", g.unidentified}});
    }
    fj["generalized_fisher"] = gf;
    funcs.push_back(fj);

    Plot pp{"Source-norm partial sums: " + fspec.name, "J", "sum_{j<=J} lambda_j^(-2 beta) r_j^2", false, true, {}};
    for (int r = 0; r < 2; ++r) {
      const ResolutionVerdict* v = r == 0 ? (cl.coarse ? &*cl.coarse : nullptr) : (cl.fine ? &*cl.fine : nullptr);
      const SourceDiagnostics& d = v ? v->diagnostics : cl.diagnostics;
      if (!v && r == 0) continue;
      const char* res = r == 0 ? "coarse" : "fine";
      for (std::size_t b = 0; b < d.partial_sums.size(); ++b) {
        const double beta = b < d.betas.size() ? d.betas[b] : 0.0;
        PlotSeries ser{std::string(res) + " beta=" + format_number(beta), {}, {}, r == 0};
        for (Eigen::Index J = 0; J < d.partial_sums[b].size(); ++J) {
          ps.add({fspec.name, res, format_number(beta), std::to_string(J + 1), format_number(d.partial_sums[b][J])});
          ser.x.push_back(static_cast<double>(J + 1));
          ser.y.push_back(d.partial_sums[b][J]);
        }
        if (r == 1) pp.series.push_back(std::move(ser));
      }
    }
    plots.push_back(std::move(pp));
  }
  rep["functionals"] = funcs;
  rep["checks"] = model_checks(*p.coarse, *p.fine, c);

  out.json(rep, "report.json");
  out.csv(sv, "singular_values.csv");
  out.csv(ps, "partial_sums.csv");
  out.svg(svp, "singular_values.svg");
  for (std::size_t i = 0; i < plots.size(); ++i)
    out.svg(plots[i], "partial_sums_" + file_stem(c.functionals[i].name) + ".svg");

  Json summary{{"command", "diagnose"}};
  Json verdicts = Json::object();
  for (const auto& f : funcs) verdicts[f["name"].get<std::string>()] = f["verdict"];
  summary["verdicts"] = verdicts;
  out.result.summary = summary;
  return out.result;
}

[[noreturn]] void not_identified() {
  fail(ErrorKind::Identification, "functional not identified under this model");
}

CommandResult estimate_euler(const RunConfig& c, Output& out) {
  if (!c.estimate.data.empty() || c.estimate.simulate)
    fail(ErrorKind::Config, "the euler estimate uses the population pricing operator; drop --simulate and data");
  Instance I = build(c, c.fine);
  auto rep = euler_discount_check(*I.euler);
  const DiscountCandidate* pick = nullptr;
  for (const auto& cd : rep.candidates)
    if (cd.identified) {
      pick = &cd;
      break;
    }
  if (!pick) not_identified();
  Json j = header("estimate", c);
  j["route"] = "eigen";
  j["theta"] = pick->theta;
  j["rho"] = pick->rho;
  j["moment"] = pick->moment;
  j["eta_g0"] = pick->eta_g0;
  j["eigen_residual"] = rep.eigen_residual;
  j["theta0"] = I.euler->theta0;
  out.json(j, "estimate.json");

  CsvTable g{{"c", "g0", "g"}, {}};
  for (std::size_t i = 0; i < pick->g.size(); ++i)
    g.add({format_number(I.latent()->node(i)[0]), format_number(pick->g0.values[static_cast<Eigen::Index>(i)]),
           format_number(pick->g.values[static_cast<Eigen::Index>(i)])});
  out.csv(g, "estimate_g.csv");
  out.result.summary = Json{{"command", "estimate"}, {"theta", pick->theta}};
  return out.result;
}

CommandResult estimate(const RunConfig& c, Output& out, std::size_t threads) {
  if (c.model == "euler") return estimate_euler(c, out);
  const std::string& name = c.functional_for(c.estimate.functional);
  const bool sim = c.estimate.simulate > 0;
  if (sim == !c.estimate.data.empty())
    fail(ErrorKind::Config, "estimate needs exactly one of a data file or --simulate N");

  Pair p = build_pair(c, threads);
  const Functional rc = make_functional(*p.coarse, c, name);
  const Functional rf = make_functional(*p.fine, c, name);
  const Classification cl = classify(c, p, rc, rf);
  if (cl.verdict == Verdict::Unidentified) not_identified();

  NodeMat x;
  if (sim) {
    if (!p.fine->sampler) fail(ErrorKind::Config, "model " + c.model + " has no sampling distribution for --simulate");
    x = simulate(p.fine->sampler, c.estimate.simulate, c.seed);
  } else {
    x = read_numeric_csv(c.estimate.data);
  }
  const std::size_t dim = p.fine->mo->grid->dim();
  if (static_cast<std::size_t>(x.cols()) != dim)
    fail(ErrorKind::InvalidArgument, "data has " + std::to_string(x.cols()) + " columns; the observation space has " +
                                         std::to_string(dim));

  RegPolicy pol = c.policy;
  if (pol.selection == Selection::Balanced) pol.sample_size = static_cast<std::size_t>(x.rows());
  const MomentEstimator est = moment_estimator(*p.fine->mo, *p.sys_fine, rf, pol, c.thresholds);
  MomentEstimate me;
  try {
    me = moment_estimate(est.g_on_grid, x, rf.defined_up_to_constant ? rf.calibration_constant : 0.0);
  } catch (const Error&) {
    fail(ErrorKind::InvalidArgument, "more than 1% of the data points fall outside the observation grid");
  }

  Json j = header("estimate", c);
  j["functional"] = name;
  j["verdict"] = to_string(cl.verdict);
  j["beta_star"] = opt(cl.beta_star);
  j["irregular"] = cl.verdict == Verdict::Irregular;
  j["mesh_stable"] = cl.mesh_stable;
  j["policy"] = policy_json(est.solution.policy);
  j["truncation"] = est.solution.truncation;
  j["ridge"] = est.solution.ridge;
  j["residual"] = est.solution.residual;
  j["g_norm"] = est.solution.g_norm;
  j["norm_divergent"] = est.solution.norm_divergent;
  j["target_reached"] = est.solution.target_reached;
  j["data"] = Json{{"source", sim ? "simulate" : "file"},
                   {"n", x.rows()},
                   {"used", me.used},
                   {"outside", me.outside}};
  j["estimate"] = me.estimate;
  j["standard_error"] = me.standard_error;
  if (sim) {
    const double truth = truth_of(*p.fine, c, rf);
    j["truth"] = truth;
    j["z_score"] = me.standard_error > 0 ? (me.estimate - truth) / me.standard_error : 0.0;
  }
  out.json(j, "estimate.json");

  const auto& grid = est.g_on_grid.space;
  CsvTable g{{}, {}};
  for (std::size_t d = 0; d < grid->dim(); ++d) g.header.push_back("z" + std::to_string(d + 1));
  g.header.push_back("g");
  for (std::size_t i = 0; i < grid->size(); ++i) {
    std::vector<std::string> row;
    for (double v : grid->node(i)) row.push_back(format_number(v));
    row.push_back(format_number(est.g_on_grid.values[static_cast<Eigen::Index>(i)]));
    g.add(std::move(row));
  }
  out.csv(g, "estimate_g.csv");
  out.result.summary = Json{{"command", "estimate"},
                            {"functional", name},
                            {"estimate", me.estimate},
                            {"standard_error", me.standard_error},
                            {"verdict", to_string(cl.verdict)}};
  return out.result;
}

CommandResult rates(const RunConfig& c, Output& out, std::size_t threads) {
  const std::string& name = c.functional_for(c.rates.functional);
  Pair p = build_pair(c, threads, false);
  if (!p.fine->sampler) fail(ErrorKind::Config, "model " + c.model + " has no sampling distribution for rates");
  const Functional r = make_functional(*p.fine, c, name);
  Classification cl;
  if (p.fine->discrete)
    cl = classify(c, p, r, r);
  else
    cl.verdict = classify_single(r, *p.sys_fine, c.thresholds).verdict;
  if (cl.verdict == Verdict::Unidentified) not_identified();
  const double truth = truth_of(*p.fine, c, r);
  RateFit fit = rate_experiment(*p.fine->mo, r, c.policy, p.fine->sampler, truth, c.rates.ns, c.rates.reps, c.seed,
                                threads, c.thresholds);

  Json j = header("rates", c);
  j["functional"] = name;
  j["verdict"] = to_string(cl.verdict);
  j["truth"] = fit.truth;
  j["reps"] = fit.reps;
  j["seed"] = fit.seed;
  j["ns"] = fit.ns;
  j["rmse"] = fit.rmse;
  Json se = Json::array();
  for (std::size_t i = 0; i < fit.ns.size(); ++i)
    se.push_back(i < fit.rmse_se.size() ? opt(fit.rmse_se[i]) : Json(nullptr));
  j["rmse_se"] = se;
  j["rmse_se_available"] = fit.reps > 1;
  j["bias"] = fit.bias;
  j["slope"] = opt(fit.slope);
  j["slope_se"] = opt(fit.slope_se);
  j["degenerate"] = fit.degenerate;
  j["note"] = fit.note;
  out.json(j, "rates.json");

  CsvTable t{{"n", "rmse", "rmse_se", "bias"}, {}};
  for (std::size_t i = 0; i < fit.ns.size(); ++i)
    t.add({std::to_string(fit.ns[i]), format_number(fit.rmse[i]),
           i < fit.rmse_se.size() && fit.rmse_se[i] ? format_number(*fit.rmse_se[i]) : "NA", format_number(fit.bias[i])});
  out.csv(t, "rates.csv");
  CsvTable reps{{"n", "replication", "estimate"}, {}};
  for (std::size_t i = 0; i < fit.ns.size(); ++i)
    for (std::size_t k = 0; k < fit.estimates[i].size(); ++k)
      reps.add({std::to_string(fit.ns[i]), std::to_string(k), format_number(fit.estimates[i][k])});
  out.csv(reps, "replications.csv");

  Plot pl{"RMSE against sample size: " + name, "n", "RMSE", true, true, {}};
  PlotSeries obs{"observed", {}, {}, false};
  for (std::size_t i = 0; i < fit.ns.size(); ++i) {
    obs.x.push_back(static_cast<double>(fit.ns[i]));
    obs.y.push_back(fit.rmse[i]);
  }
  pl.series.push_back(obs);
  if (fit.slope) {
    // Least-squares line through the log points.
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < obs.x.size(); ++i) mx += std::log(obs.x[i]), my += std::log(obs.y[i]);
    mx /= static_cast<double>(obs.x.size());
    my /= static_cast<double>(obs.x.size());
    PlotSeries line{"fit slope " + format_number(std::round(*fit.slope * 1000) / 1000), {}, {}, true};
    for (double xv : obs.x) {
      line.x.push_back(xv);
      line.y.push_back(std::exp(my + *fit.slope * (std::log(xv) - mx)));
    }
    pl.series.push_back(line);
  }
  out.svg(pl, "rates.svg");
  out.result.summary = Json{{"command", "rates"}, {"functional", name}, {"slope", opt(fit.slope)}, {"slope_se", opt(fit.slope_se)}};
  return out.result;
}

CommandResult path(const RunConfig& c, Output& out, std::size_t threads) {
  const std::string& name = c.functional_for(c.path.functional);
  Pair p = build_pair(c, threads, false);
  const Functional r = make_functional(*p.fine, c, name);
  const PathReport rep = impossibility_path(*p.sys_fine, r, c.path.rho, c.path.ts, c.seed);

  Json j = header("path", c);
  j["functional"] = name;
  j["attainable"] = rep.attainable;
  j["status"] = rep.status;
  j["gauge"] = rep.gauge;
  j["rho"] = rep.rho;
  Json pts = Json::array();
  CsvTable t{{"t", "delta_phi", "score_norm", "ratio", "clip_fraction", "condition_i", "condition_ii"}, {}};
  Plot pl{"Impossibility path: " + name, "t", "value", true, true, {}};
  PlotSeries s1{"delta_phi / t", {}, {}, false}, s2{"|score|^2 / t^(2 rho)", {}, {}, false};
  if (rep.attainable) {
    j["mode"] = rep.mode + 1;
    j["lambda"] = rep.lambda;
    j["coefficient"] = rep.coefficient;
    j["c"] = rep.c;
    j["epsilon"] = rep.epsilon;
    j["rho_max"] = rep.rho_max;
    j["rho_mode"] = rep.rho_mode;
    j["generalized_fisher"] = rep.generalized_fisher;
    j["fisher_consistent"] = rep.fisher_consistent;
    for (const auto& q : rep.points) {
      pts.push_back(Json{{"t", q.t},
                         {"delta_phi", q.delta_phi},
                         {"score_norm", q.score_norm},
                         {"ratio", q.ratio},
                         {"clip_fraction", q.clip_fraction},
                         {"condition_i", q.condition_i},
                         {"condition_ii", q.condition_ii}});
      t.add({format_number(q.t), format_number(q.delta_phi), format_number(q.score_norm), format_number(q.ratio),
             format_number(q.clip_fraction), q.condition_i ? "1" : "0", q.condition_ii ? "1" : "0"});
      s1.x.push_back(q.t);
      s1.y.push_back(q.delta_phi / q.t);
      s2.x.push_back(q.t);
      s2.y.push_back(q.ratio);
    }
  }
  j["points"] = pts;
  pl.series = {s1, s2};
  out.json(j, "path.json");
  out.csv(t, "path.csv");
  out.svg(pl, "path.svg");
  out.result.summary = Json{{"command", "path"}, {"functional", name}, {"attainable", rep.attainable}, {"status", rep.status}};
  return out.result;
}

CommandResult dump_operator(const RunConfig& c, Output& out) {
  Json j = header("dump-operator", c);
  Json ops = Json::array();
  auto one = [&](const Instance& I, const std::string& file, const char* res) {
    out.op(I.op(), file);
    ops.push_back(Json{{"resolution", res},
                       {"file", file},
                       {"rows", I.op().rows()},
                       {"cols", I.op().cols()},
                       {"domain", space_json(*I.op().domain())},
                       {"codomain", space_json(*I.op().codomain())}});
  };
  if (c.coarse) {
    one(build(c, c.coarse), "operator_coarse.ikop", "coarse");
    one(build(c, c.fine), "operator_fine.ikop", "fine");
  } else {
    one(build(c, 0), "operator.ikop", "fixed");
  }
  j["operators"] = ops;
  out.json(j, "operator.json");
  out.result.summary = Json{{"command", "dump-operator"}, {"operators", ops.size()}};
  return out.result;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> n{"diagnose", "estimate", "rates", "path", "dump-operator"};
  return n;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Identification: return 3;
    case ErrorKind::Numerical: return 4;
    case ErrorKind::Config:
    case ErrorKind::InvalidArgument:
    case ErrorKind::Io: return 2;
  }
  return 4;
}

LinOp build_operator(const RunConfig& config, bool fine) {
  return build(config, fine ? config.fine : config.coarse).op();
}

CommandResult run_command(const std::string& command, RunConfig c, const CommandOptions& o) {
  if (std::find(command_names().begin(), command_names().end(), command) == command_names().end())
    fail(ErrorKind::Config, "unknown command '" + command + "'");
  if (o.seed) c.seed = *o.seed;
  if (o.simulate || !o.data.empty()) {
    c.estimate.simulate = o.simulate.value_or(0);
    c.estimate.data = o.data;
  }
  refresh_resolved(c);
  const std::size_t threads = std::max<std::size_t>(1, o.threads);

  Output out;
  out.dir = o.out_dir.empty() ? fs::path(c.output) : fs::path(o.out_dir);
  std::error_code ec;
  fs::create_directories(out.dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create output directory " + out.dir.string() + ": " + ec.message());

  if (command == "diagnose") return diagnose(c, out, threads);
  if (command == "estimate") return estimate(c, out, threads);
  if (command == "rates") return rates(c, out, threads);
  if (command == "path") return path(c, out, threads);
  return dump_operator(c, out);
}

}  // namespace identikit
