#include "identikit/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "identikit/error.hpp"

namespace identikit {

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& msg) {
  fail(ErrorKind::Config, "config field '" + field + "': " + msg);
}

struct ModelDefaults {
  Json params;
  std::size_t coarse = 0, fine = 0;  // zero: the model has no grid
};

// Every accepted parameter with its default; null marks a required one.
const std::map<std::string, ModelDefaults>& defaults() {
  static const std::map<std::string, ModelDefaults> table = [] {
    std::map<std::string, ModelDefaults> m;
    m["ig_mixture"] = {Json{{"alpha_max", 1.0},
                            {"beta_min", 0.5},
                            {"beta_max", 2.0},
                            {"n_t", 24},
                            {"t_min", 0.25},
                            {"t_max", 4.0},
                            {"alpha_center", 0.0},
                            {"alpha_sd", 0.5},
                            {"beta_center", 1.2},
                            {"beta_sd", 0.4}},
                       20, 40};
    m["mixed_logit"] = {Json{{"intercept", 0.2},
                             {"covariates", Json::array()},
                             {"beta_lo", -3.0},
                             {"beta_hi", 3.0},
                             {"eta_mean", 0.0},
                             {"eta_sd", 1.0}},
                        64, 128};
    m["triangular_rc"] = {Json{{"pi0", 0.0},
                               {"u2", 0.0},
                               {"pi1_lo", -1.0},
                               {"pi1_hi", 1.0},
                               {"delta_lo", -1.0},
                               {"delta_hi", 1.0},
                               {"pi1_mean", 0.2},
                               {"pi1_sd", 0.6},
                               {"delta_mean", 0.3},
                               {"delta_sd", 0.6},
                               {"correlation", 0.3},
                               {"x_values", Json::array({1.0, 2.0})},
                               {"x_probs", Json::array({0.5, 0.5})},
                               {"y_bins", 24}},
                          16, 32};
    m["circle_rc"] = {Json{{"lambda0_kappa", 0.0}, {"lambda0_mu", 0.0}, {"covariate_kappa", 0.0}}, 64, 128};
    m["wtp"] = {Json{{"w_max", 1.0}, {"v_max", 2.0}, {"f_v", "uniform"}, {"f_v_zero", 0.5}, {"panel_points", 6}}, 32,
                64};
    m["euler"] = {Json{{"builder", "planted"},
                       {"theta0", 0.95},
                       {"spectrum", Json::array()},
                       {"orthogonal_eta", false},
                       {"copula_rho", 0.6},
                       {"gross_return", 1.05},
                       {"latent_mu", 0.0},
                       {"latent_sd", 0.3},
                       {"error_sd", 0.1},
                       {"crra", 2.0},
                       {"fft_size", 4096}},
                  32, 64};
    m["discrete"] = {Json{{"p", nullptr}, {"latent_weights", nullptr}}, 0, 0};
    m["synthetic_sequence"] = {Json{{"geometric", true}, {"rate", 0.5}, {"exponent", 1.0}}, 20, 40};
    return m;
  }();
  return table;
}

const char* kind_name(const Json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

bool same_kind(const Json& a, const Json& b) { return std::string(kind_name(a)) == kind_name(b); }

// Reads the members of one JSON object, recording every value (given or
// defaulted) and rejecting members that were never asked for.
class Fields {
 public:
  Fields(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) bad(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return obj_.contains(key); }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  double number(const std::string& key, double def) {
    seen_.insert(key);
    if (!obj_.contains(key)) return def;
    const Json& v = obj_.at(key);
    if (!v.is_number()) bad(where(key), std::string("expected number, got ") + kind_name(v));
    return v.get<double>();
  }

  std::size_t count(const std::string& key, std::size_t def) {
    seen_.insert(key);
    if (!obj_.contains(key)) return def;
    const Json& v = obj_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
      bad(where(key), "expected a nonnegative integer");
    return v.get<std::size_t>();
  }

  bool flag(const std::string& key, bool def) {
    seen_.insert(key);
    if (!obj_.contains(key)) return def;
    const Json& v = obj_.at(key);
    if (!v.is_boolean()) bad(where(key), std::string("expected boolean, got ") + kind_name(v));
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::string& def) {
    seen_.insert(key);
    if (!obj_.contains(key)) return def;
    const Json& v = obj_.at(key);
    if (v.is_null()) return def;
    if (!v.is_string()) bad(where(key), std::string("expected string, got ") + kind_name(v));
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> def) {
    seen_.insert(key);
    if (!obj_.contains(key)) return def;
    const Json& v = obj_.at(key);
    if (!v.is_array()) bad(where(key), "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) bad(where(key), "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> def) {
    seen_.insert(key);
    if (!obj_.contains(key)) return def;
    const Json& v = obj_.at(key);
    if (!v.is_array()) bad(where(key), "expected an array of positive integers");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
      if (!e.is_number_integer() || e.get<long long>() <= 0) bad(where(key), "expected an array of positive integers");
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) bad(where(it.key()), "unknown field");
  }

 private:
  const Json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

Json merge_params(const std::string& model, const Json* given) {
  const Json& def = defaults().at(model).params;
  Json out = def;
  if (given) {
    if (!given->is_object()) bad("params", "expected an object");
    for (auto it = given->begin(); it != given->end(); ++it) {
      if (!def.contains(it.key())) bad("params." + it.key(), "unknown field for model " + model);
      const Json& d = def.at(it.key());
      if (!d.is_null() && !same_kind(d, it.value()))
        bad("params." + it.key(), std::string("expected ") + kind_name(d) + ", got " + kind_name(it.value()));
      out[it.key()] = it.value();
    }
  }
  for (auto it = out.begin(); it != out.end(); ++it)
    if (it.value().is_null()) bad("params." + it.key(), "required for model " + model);
  return out;
}

FunctionalSpec parse_functional(const Json& v, std::size_t index) {
  const std::string path = "functionals[" + std::to_string(index) + "]";
  FunctionalSpec f;
  if (v.is_string()) {
    f.name = v.get<std::string>();
    if (f.name.empty()) bad(path, "empty functional name");
    return f;
  }
  Fields o(v, path);
  f.builtin = false;
  f.name = o.text("name", "");
  if (f.name.empty()) bad(o.where("name"), "required");
  f.up_to_constant = o.flag("up_to_constant", false);
  const bool has_points = o.has("points"), has_values = o.has("values");
  if (has_points == has_values) bad(path, "give exactly one of 'points' or 'values'");
  if (has_points) {
    const Json& p = o.raw("points");
    if (!p.is_array() || p.size() < 2) bad(o.where("points"), "expected at least two [x, value] pairs");
    for (const auto& e : p) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
        bad(o.where("points"), "expected [x, value] pairs");
      f.points.emplace_back(e[0].get<double>(), e[1].get<double>());
    }
    for (std::size_t i = 1; i < f.points.size(); ++i)
      if (!(f.points[i].first > f.points[i - 1].first)) bad(o.where("points"), "x must be strictly increasing");
  } else {
    f.values = o.numbers("values", {});
    if (f.values.empty()) bad(o.where("values"), "expected a nonempty array");
  }
  o.finish();
  return f;
}

Json functional_json(const FunctionalSpec& f) {
  if (f.builtin) return f.name;
  Json o{{"name", f.name}, {"up_to_constant", f.up_to_constant}};
  if (!f.points.empty()) {
    Json pts = Json::array();
    for (const auto& p : f.points) pts.push_back({p.first, p.second});
    o["points"] = pts;
  } else {
    o["values"] = f.values;
  }
  return o;
}

RegMethod parse_method(const std::string& s) {
  if (s == "tsvd") return RegMethod::TruncatedSVD;
  if (s == "tikhonov") return RegMethod::Tikhonov;
  bad("policy.method", "expected 'tsvd' or 'tikhonov', got '" + s + "'");
}

Selection parse_selection(const std::string& s) {
  if (s == "fixed") return Selection::Fixed;
  if (s == "discrepancy") return Selection::Discrepancy;
  if (s == "balanced") return Selection::Balanced;
  bad("policy.selection", "expected 'fixed', 'discrepancy' or 'balanced', got '" + s + "'");
}

const char* method_key(RegMethod m) { return m == RegMethod::TruncatedSVD ? "tsvd" : "tikhonov"; }

}  // namespace

const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& kv : defaults()) v.push_back(kv.first);
    return v;
  }();
  return names;
}

const std::string& RunConfig::functional_for(const std::string& requested) const {
  if (!requested.empty()) return requested;
  if (functionals.empty()) fail(ErrorKind::Config, "config lists no functionals for this command");
  return functionals.front().name;
}

void refresh_resolved(RunConfig& c) {
  Json r;
  r["schema_version"] = kSchemaVersion;
  r["model"] = c.model;
  r["params"] = c.params;
  if (c.coarse) r["grid"] = Json{{"coarse", c.coarse}, {"fine", c.fine}};
  Json fs = Json::array();
  for (const auto& f : c.functionals) fs.push_back(functional_json(f));
  r["functionals"] = fs;
  r["thresholds"] = Json{{"tau_null", c.thresholds.tau_null},
                         {"tau_ident", c.thresholds.tau_ident},
                         {"delta_conv", c.thresholds.delta_conv},
                         {"betas", c.thresholds.betas}};
  r["policy"] = Json{{"method", method_key(c.policy.method)},
                     {"selection", to_string(c.policy.selection)},
                     {"truncation", c.policy.truncation},
                     {"ridge", c.policy.ridge},
                     {"target", c.policy.target}};
  r["fisher"] = Json{{"rhos", c.fisher.rhos}, {"starts", c.fisher.starts}};
  r["rates"] = Json{{"functional", c.rates.functional}, {"ns", c.rates.ns}, {"reps", c.rates.reps}};
  r["path"] = Json{{"functional", c.path.functional}, {"rho", c.path.rho}, {"ts", c.path.ts}};
  r["estimate"] = Json{{"functional", c.estimate.functional}, {"data", c.estimate.data}, {"simulate", c.estimate.simulate}};
  r["seed"] = c.seed;
  c.resolved = std::move(r);
}

RunConfig parse_config(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(ErrorKind::Config, std::string("malformed config: ") + e.what());
  }
  Fields top(root, "");
  RunConfig c;

  if (!top.has("schema_version")) bad("schema_version", "required");
  const Json& ver = top.raw("schema_version");
  if (!ver.is_number_integer() || ver.get<long long>() != kSchemaVersion)
    bad("schema_version", "unsupported version (expected " + std::to_string(kSchemaVersion) + ")");

  c.model = top.text("model", "");
  if (c.model.empty()) bad("model", "required");
  if (!defaults().count(c.model)) {
    std::string list;
    for (const auto& n : model_names()) list += (list.empty() ? "" : ", ") + n;
    bad("model", "unknown model '" + c.model + "' (expected one of " + list + ")");
  }
  c.params = merge_params(c.model, top.has("params") ? &top.raw("params") : nullptr);

  const auto& md = defaults().at(c.model);
  if (md.coarse == 0) {
    if (top.has("grid")) bad("grid", "model " + c.model + " has a fixed support");
  } else {
    c.coarse = md.coarse;
    c.fine = md.fine;
    if (top.has("grid")) {
      Fields g(top.raw("grid"), "grid");
      c.coarse = g.count("coarse", c.coarse);
      c.fine = g.count("fine", c.fine);
      g.finish();
    }
    if (c.coarse < 2) bad("grid.coarse", "must be at least 2");
    if (c.fine < 2 * c.coarse) bad("grid.fine", "fine grid must be at least twice the coarse grid per axis");
    if (c.fine > kMaxNodesPerAxis) bad("grid.fine", "at most " + std::to_string(kMaxNodesPerAxis) + " nodes per axis");
  }

  if (top.has("functionals")) {
    const Json& fs = top.raw("functionals");
    if (!fs.is_array()) bad("functionals", "expected an array");
    std::set<std::string> names;
    for (std::size_t i = 0; i < fs.size(); ++i) {
      c.functionals.push_back(parse_functional(fs[i], i));
      if (!names.insert(c.functionals.back().name).second)
        bad("functionals[" + std::to_string(i) + "]", "duplicate name '" + c.functionals.back().name + "'");
    }
  }

  if (top.has("thresholds")) {
    Fields t(top.raw("thresholds"), "thresholds");
    c.thresholds.tau_null = t.number("tau_null", c.thresholds.tau_null);
    c.thresholds.tau_ident = t.number("tau_ident", c.thresholds.tau_ident);
    c.thresholds.delta_conv = t.number("delta_conv", c.thresholds.delta_conv);
    c.thresholds.betas = t.numbers("betas", c.thresholds.betas);
    t.finish();
  }
  if (!(c.thresholds.tau_null > 0)) bad("thresholds.tau_null", "must be positive");
  if (!(c.thresholds.tau_ident > 0)) bad("thresholds.tau_ident", "must be positive");
  if (!(c.thresholds.delta_conv > 0)) bad("thresholds.delta_conv", "must be positive");
  if (c.thresholds.betas.empty()) bad("thresholds.betas", "must be nonempty");
  for (double b : c.thresholds.betas)
    if (!(b >= 0.0)) bad("thresholds.betas", "must be nonnegative");
  if (!std::is_sorted(c.thresholds.betas.begin(), c.thresholds.betas.end()))
    bad("thresholds.betas", "must be increasing");

  if (top.has("policy")) {
    Fields p(top.raw("policy"), "policy");
    c.policy.method = parse_method(p.text("method", method_key(c.policy.method)));
    c.policy.selection = parse_selection(p.text("selection", to_string(c.policy.selection)));
    c.policy.truncation = p.count("truncation", c.policy.truncation);
    c.policy.ridge = p.number("ridge", c.policy.ridge);
    c.policy.target = p.number("target", c.policy.target);
    p.finish();
  }
  if (c.policy.ridge < 0) bad("policy.ridge", "must be nonnegative");
  if (!(c.policy.target > 0)) bad("policy.target", "must be positive");
  if (c.policy.method == RegMethod::Tikhonov && c.policy.selection == Selection::Fixed && !(c.policy.ridge > 0))
    bad("policy.ridge", "fixed Tikhonov selection needs a positive ridge");

  if (top.has("fisher")) {
    Fields f(top.raw("fisher"), "fisher");
    c.fisher.rhos = f.numbers("rhos", c.fisher.rhos);
    c.fisher.starts = f.count("starts", c.fisher.starts);
    f.finish();
  }
  for (double r : c.fisher.rhos)
    if (!(r >= 1.0)) bad("fisher.rhos", "every rho must be at least 1");

  if (top.has("rates")) {
    Fields r(top.raw("rates"), "rates");
    c.rates.functional = r.text("functional", "");
    c.rates.ns = r.counts("ns", c.rates.ns);
    c.rates.reps = r.count("reps", c.rates.reps);
    r.finish();
  }
  {
    std::set<std::size_t> distinct(c.rates.ns.begin(), c.rates.ns.end());
    if (distinct.size() != c.rates.ns.size() || distinct.size() < 3)
      bad("rates.ns", "need at least three distinct sample sizes");
    if (c.rates.reps < 1) bad("rates.reps", "must be at least 1");
  }

  if (top.has("path")) {
    Fields p(top.raw("path"), "path");
    c.path.functional = p.text("functional", "");
    c.path.rho = p.number("rho", c.path.rho);
    c.path.ts = p.numbers("ts", c.path.ts);
    p.finish();
  }
  if (!(c.path.rho >= 1.0)) bad("path.rho", "must be at least 1");
  if (c.path.ts.empty()) bad("path.ts", "must be nonempty");
  for (double t : c.path.ts)
    if (!(t > 0.0)) bad("path.ts", "every t must be positive");

  if (top.has("estimate")) {
    Fields e(top.raw("estimate"), "estimate");
    c.estimate.functional = e.text("functional", "");
    c.estimate.data = e.text("data", "");
    c.estimate.simulate = e.count("simulate", 0);
    e.finish();
  }

  if (top.has("seed")) {
    const Json& s = top.raw("seed");
    if (!s.is_number_unsigned()) bad("seed", "expected a nonnegative integer");
    c.seed = s.get<std::uint64_t>();
  }
  c.output = top.text("output", c.output);
  top.finish();

  auto known = [&](const std::string& name, const char* field) {
    if (name.empty()) return;
    for (const auto& f : c.functionals)
      if (f.name == name) return;
    bad(field, "functional '" + name + "' is not listed in functionals");
  };
  known(c.rates.functional, "rates.functional");
  known(c.path.functional, "path.functional");
  known(c.estimate.functional, "estimate.functional");

  refresh_resolved(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::Config, "cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

}  // namespace identikit
