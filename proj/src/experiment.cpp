#include "freeent/experiment.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "freeent/entropy.hpp"
#include "freeent/errors.hpp"
#include "freeent/orbital.hpp"
#include "freeent/parallel.hpp"
#include "freeent/reference.hpp"
#include "freeent/sampler.hpp"

namespace freeent {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

CounterRng stream(const CounterRng& root, std::string_view name, std::uint64_t index = 0) {
  return root.fork(fnv1a(name) + index);
}

// ---------------------------------------------------------------- YAML <-> JSON

json scalar_from_yaml(const YAML::Node& node) {
  const std::string& text = node.Scalar();
  if (node.Tag() == "!") return text;
  if (text.empty() || text == "~" || text == "null") return nullptr;
  if (text == "true") return true;
  if (text == "false") return false;
  static const std::regex integer(R"([-+]?[0-9]+)");
  if (std::regex_match(text, integer)) {
    try {
      if (text[0] == '-') return std::stoll(text);
      return std::stoull(text);
    } catch (const std::out_of_range&) {
      throw ConfigError("config: integer out of range: " + text);
    }
  }
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end && *end == '\0' && end != text.c_str()) return v;
  return text;
}

json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return scalar_from_yaml(node);
    case YAML::NodeType::Sequence: {
      json a = json::array();
      for (const auto& item : node) a.push_back(yaml_to_json(item));
      return a;
    }
    case YAML::NodeType::Map: {
      json o = json::object();
      for (const auto& kv : node) {
        const std::string key = kv.first.as<std::string>();
        if (o.contains(key)) throw ConfigError("config: duplicate key '" + key + "'");
        o[key] = yaml_to_json(kv.second);
      }
      return o;
    }
  }
  return nullptr;
}

// Maps become block mappings; everything else is written as JSON, which is
// valid YAML flow syntax and keeps strings and floats unambiguous.
void emit_yaml(std::ostream& os, const json& j, int indent) {
  const std::string pad(static_cast<std::size_t>(indent), ' ');
  for (const auto& [key, value] : j.items()) {
    if (value.is_object() && !value.empty()) {
      os << pad << key << ":\n";
      emit_yaml(os, value, indent + 2);
    } else {
      os << pad << key << ": " << value.dump() << '\n';
    }
  }
}

// ---------------------------------------------------------------- validation

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"sample", {"n", "N", "R", "V", "beta", "chain", "bins", "moments"}},
      {"volume", {"N", "N_list", "R", "mc_points"}},
      {"fit", {"target", "N", "K", "R", "eps", "fit"}},
      {"rho", {"target", "N", "K", "R", "eps", "fit"}},
      {"chi-tilde", {"target", "N_list", "K", "R", "eps", "fit"}},
      {"pressure", {"n", "N", "R", "P", "chain", "ti_nodes"}},
      {"orbital", {"n", "N", "R", "V", "c_grid", "groups", "S_out", "S_in", "inner", "chain"}},
      {"chain-rule", {"n", "N", "R", "V", "groups", "S_out", "S_in", "inner", "chain", "ti_chain", "ti_nodes"}},
      {"talagrand", {"n", "N", "R", "V", "c_grid", "groups", "K", "S_out", "S_in", "inner", "chain"}},
      {"duality-check", {"R", "K", "target", "constraints", "grid_size", "data_processing_pairs", "grid"}},
      {"arcsine-demo", {"N", "R", "chain", "bins"}},
      {"compression-check", {"N", "T", "R", "S", "chain"}},
  };
  return keys;
}

const std::set<std::string> kChainKeys = {"steps", "burnin", "thin", "kernel", "step_scale", "tune"};
const std::set<std::string> kFitKeys = {"max_iterations", "chain_steps",  "chain_burnin",    "warm_burnin",
                                        "max_chain_steps", "final_steps", "final_burnin",    "ti_steps",
                                        "ti_burnin",      "ti_nodes",     "tol_scale",       "trust_radius",
                                        "step_cap",       "divergence_bound", "kernel"};
const std::set<std::string> kTargetKeys = {"generator", "variance", "n", "file", "inline"};

// Typed access to one parameter tree with the error messages in one place.
class Params {
 public:
  Params(const json& j, std::string where) : j_(j), where_(std::move(where)) {}

  [[nodiscard]] bool has(const std::string& k) const { return j_.contains(k) && !j_.at(k).is_null(); }

  [[nodiscard]] double num(const std::string& k, double def) const {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_number()) fail(k, "expected a number");
    return v.get<double>();
  }
  [[nodiscard]] double positive(const std::string& k, double def) const {
    const double v = num(k, def);
    if (!(v > 0.0) || !std::isfinite(v)) fail(k, "must be positive");
    return v;
  }
  [[nodiscard]] double nonnegative(const std::string& k, double def) const {
    const double v = num(k, def);
    if (!(v >= 0.0) || !std::isfinite(v)) fail(k, "must be >= 0");
    return v;
  }
  [[nodiscard]] long integer(const std::string& k, long def, long min = 1) const {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_number_integer()) fail(k, "expected an integer");
    const long x = v.get<long>();
    if (x < min) fail(k, "must be >= " + std::to_string(min));
    return x;
  }
  [[nodiscard]] std::string str(const std::string& k, const std::string& def) const {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_string()) fail(k, "expected a string");
    return v.get<std::string>();
  }
  [[nodiscard]] bool boolean(const std::string& k, bool def) const {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_boolean()) fail(k, "expected true or false");
    return v.get<bool>();
  }
  [[nodiscard]] std::vector<double> num_list(const std::string& k, std::vector<double> def) const {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_array() || v.empty()) fail(k, "expected a non-empty list of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) fail(k, "expected a non-empty list of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  [[nodiscard]] std::vector<int> int_list(const std::string& k, std::vector<int> def, int min = 1) const {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_array() || v.empty()) fail(k, "expected a non-empty list of integers");
    std::vector<int> out;
    for (const auto& e : v) {
      if (!e.is_number_integer() || e.get<long>() < min)
        fail(k, "expected integers >= " + std::to_string(min));
      out.push_back(e.get<int>());
    }
    return out;
  }
  [[nodiscard]] Params sub(const std::string& k) const {
    static const json empty = json::object();
    if (!has(k)) return Params(empty, where_ + "." + k);
    if (!j_.at(k).is_object()) fail(k, "expected a mapping");
    return Params(j_.at(k), where_ + "." + k);
  }
  void check_keys(const std::set<std::string>& allowed) const {
    for (const auto& [key, value] : j_.items())
      if (!allowed.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
  }
  [[noreturn]] void fail(const std::string& k, const std::string& msg) const {
    throw ConfigError(where_ + "." + k + ": " + msg);
  }
  [[nodiscard]] const json& raw() const { return j_; }

 private:
  const json& j_;
  std::string where_;
};

ChainOptions chain_options(const Params& p, long steps, long burnin, long thin) {
  ChainOptions co;
  co.steps = p.integer("steps", steps);
  co.burnin = p.integer("burnin", burnin, 0);
  co.thin = p.integer("thin", thin);
  co.step_scale = p.positive("step_scale", 1.0);
  co.tune = p.boolean("tune", true);
  const std::string kernel = p.str("kernel", "spectral");
  if (kernel == "spectral") {
    co.kernel = Kernel::Spectral;
  } else if (kernel == "full") {
    co.kernel = Kernel::FullMatrix;
  } else {
    p.fail("kernel", "expected 'spectral' or 'full'");
  }
  if (co.steps <= co.burnin) p.fail("steps", "must exceed burnin");
  return co;
}

FitOptions fit_options(const Params& p, int threads) {
  FitOptions o;
  o.max_iterations = static_cast<int>(p.integer("max_iterations", o.max_iterations));
  o.chain_steps = p.integer("chain_steps", o.chain_steps);
  o.chain_burnin = p.integer("chain_burnin", o.chain_burnin, 0);
  o.warm_burnin = p.integer("warm_burnin", o.warm_burnin, 0);
  o.max_chain_steps = p.integer("max_chain_steps", o.max_chain_steps);
  o.final_steps = p.integer("final_steps", o.final_steps);
  o.final_burnin = p.integer("final_burnin", o.final_burnin, 0);
  o.ti_steps = p.integer("ti_steps", o.ti_steps);
  o.ti_burnin = p.integer("ti_burnin", o.ti_burnin, 0);
  o.ti_nodes = static_cast<int>(p.integer("ti_nodes", o.ti_nodes, 2));
  o.tol_scale = p.positive("tol_scale", o.tol_scale);
  o.trust_radius = p.positive("trust_radius", o.trust_radius);
  o.step_cap = p.positive("step_cap", o.step_cap);
  o.divergence_bound = p.positive("divergence_bound", o.divergence_bound);
  const std::string kernel = p.str("kernel", "spectral");
  if (kernel == "spectral") {
    o.kernel = Kernel::Spectral;
  } else if (kernel == "full") {
    o.kernel = Kernel::FullMatrix;
  } else {
    p.fail("kernel", "expected 'spectral' or 'full'");
  }
  o.threads = threads;
  return o;
}

InnerMethod inner_method(const Params& p) {
  const std::string s = p.str("inner", "auto");
  if (s == "auto") return InnerMethod::Auto;
  if (s == "mc") return InnerMethod::MonteCarlo;
  if (s == "exact") return InnerMethod::Exact;
  p.fail("inner", "expected 'auto', 'mc' or 'exact'");
}

NcPoly parse_poly(const Params& p, const std::string& key, int n, const std::string& def) {
  const std::string text = p.str(key, def);
  try {
    const NcPoly poly = NcPoly::parse(n, text);
    if (!is_self_adjoint(poly)) p.fail(key, "potential must be self-adjoint");
    return poly;
  } catch (const InvalidArgument& e) {
    p.fail(key, e.what());
  }
}

MomentSpec load_target(const Params& root, int K, double R, const std::filesystem::path& base) {
  if (!root.has("target")) root.fail("target", "missing");
  const Params t = root.sub("target");
  t.check_keys(kTargetKeys);
  const int sources = t.has("generator") + t.has("file") + t.has("inline");
  if (sources != 1) root.fail("target", "give exactly one of generator, file, inline");
  try {
    if (t.has("generator")) {
      const std::string g = t.str("generator", "");
      if (g == "semicircle") return semicircle_moments(t.positive("variance", 1.0), K, R);
      if (g == "arcsine") return arcsine_moments(R, K);
      if (g == "free-semicircle") {
        const int n = static_cast<int>(t.integer("n", 2));
        const double var = t.positive("variance", 1.0);
        return free_product_moments(std::vector<MomentSpec>(static_cast<std::size_t>(n), semicircle_moments(var, K, R)),
                                    K);
      }
      t.fail("generator", "unknown generator '" + g + "'");
    }
    json spec;
    if (t.has("file")) {
      std::filesystem::path path = t.str("file", "");
      if (path.is_relative()) path = base / path;
      std::ifstream in(path);
      if (!in) throw ConfigError("target: cannot read " + path.string());
      try {
        in >> spec;
      } catch (const json::exception& e) {
        throw ConfigError("target: " + path.string() + ": " + e.what());
      }
    } else {
      spec = t.raw().at("inline");
    }
    MomentSpec s = moment_spec_from_json(spec);
    if (s.K() < K) throw ConfigError("target: stored degree " + std::to_string(s.K()) + " below K");
    return s.K() > K ? s.truncate(K) : s;
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("target: ") + e.what());
  }
}

void check_chain(const Params& p, const std::string& key) {
  const Params c = p.sub(key);
  c.check_keys(kChainKeys);
  (void)chain_options(c, 4000, 1000, 1);
}

void validate_params(const ExperimentConfig& cfg) {
  const Params p(cfg.params, cfg.kind);
  p.check_keys(allowed_keys().at(cfg.kind));
  for (const std::string k : {"R", "T", "S", "beta"})
    if (p.has(k)) (void)p.positive(k, 1.0);
  if (p.has("eps")) (void)p.nonnegative("eps", 0.0);
  for (const std::string k : {"n", "N", "K", "S_out", "S_in", "bins", "moments", "mc_points", "ti_nodes", "grid_size",
                              "grid"})
    if (p.has(k)) (void)p.integer(k, 1);
  if (p.has("data_processing_pairs")) (void)p.integer("data_processing_pairs", 0, 0);
  if (p.has("N_list")) {
    const std::vector<int> Ns = p.int_list("N_list", {});
    if (!std::is_sorted(Ns.begin(), Ns.end()) || std::adjacent_find(Ns.begin(), Ns.end()) != Ns.end())
      p.fail("N_list", "must be increasing");
  }
  if (p.has("c_grid")) (void)p.num_list("c_grid", {});
  if (p.has("groups")) (void)p.int_list("groups", {});
  if (p.has("inner")) (void)inner_method(p);
  for (const std::string k : {"chain", "ti_chain"})
    if (p.has(k)) check_chain(p, k);
  if (p.has("fit")) {
    const Params f = p.sub("fit");
    f.check_keys(kFitKeys);
    (void)fit_options(f, 1);
  }
  if (p.has("target")) {
    const Params t = p.sub("target");
    t.check_keys(kTargetKeys);
  }
  if (cfg.kind == "compression-check") {
    const double T = p.positive("T", 3.0), R = p.positive("R", 2.0), S = p.positive("S", 1.0);
    if (!(T > R && R > S)) throw ConfigError("compression-check: need T > R > S > 0");
  }
  if (cfg.kind == "duality-check" && p.has("constraints")) {
    const json& c = p.raw().at("constraints");
    if (!c.is_array()) p.fail("constraints", "expected a list of {power, target}");
    for (const auto& e : c)
      if (!e.is_object() || !e.contains("power") || !e.contains("target") || !e.at("power").is_number_integer() ||
          !e.at("target").is_number())
        p.fail("constraints", "expected a list of {power, target}");
  }
}

// ---------------------------------------------------------------- result records

json estimate_json(const ScalarEstimate& e) { return {{"value", e.value}, {"stderr", e.std_error}, {"count", e.count}}; }

json diagnostics_json(const ChainDiagnostics& d) {
  return {{"acceptance", d.acceptance},
          {"eigen_acceptance", d.eigen_acceptance},
          {"rotation_acceptance", d.rotation_acceptance},
          {"autocorr_time", d.autocorr_time},
          {"effective_samples", d.effective_samples},
          {"samples", d.samples}};
}

std::vector<double> vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

json orbital_json(const OrbitalEstimate& o) {
  return {{"value", o.value},
          {"stderr", o.std_error},
          {"bias_bound", o.bias_bound},
          {"half_inner_value", o.half_inner_value},
          {"doubling_consistent", o.doubling_consistent},
          {"S_out", o.S_out},
          {"S_in", o.S_in},
          {"exact_inner", o.exact_inner},
          {"diagnostics", diagnostics_json(o.diagnostics)}};
}

json chain_rule_json(const ChainRuleReport& r) {
  return {{"joint", estimate_json(r.joint)},
          {"orbital", estimate_json(r.orbital)},
          {"averaged", estimate_json(r.averaged)},
          {"residual", r.residual},
          {"residual_stderr", r.residual_stderr},
          {"bias_bound", r.bias_bound},
          {"exact_inner", r.exact_inner},
          {"logI", estimate_json(r.logI)},
          {"log_volume", r.log_volume},
          {"holds", r.holds()}};
}

json fit_json(const FitResult& f) {
  json traj = json::array();
  for (const FitIteration& it : f.trajectory)
    traj.push_back({{"iteration", it.iteration},
                    {"max_excess_residual", it.max_excess_residual},
                    {"newton_decrement", it.newton_decrement},
                    {"trust_radius", it.trust_radius},
                    {"acceptance", it.acceptance},
                    {"truncated", it.truncated}});
  return {{"status", to_string(f.status)},
          {"message", f.message},
          {"n", f.n},
          {"N", f.N},
          {"K", f.K},
          {"R", f.R},
          {"eps", f.eps},
          {"lambda", vec(f.lambda)},
          {"potential", to_string(f.potential)},
          {"targets", vec(f.targets)},
          {"model_moments", vec(f.model_moments)},
          {"moment_stderr", vec(f.moment_stderr)},
          {"residuals", vec(f.residuals)},
          {"logI", estimate_json(f.logI)},
          {"discretization_bound", f.discretization_bound},
          {"rho", estimate_json(f.rho)},
          {"dual", estimate_json(f.dual_value)},
          {"gap", f.gap},
          {"gap_stderr", f.gap_stderr},
          {"diagnostics", diagnostics_json(f.final_diagnostics)},
          {"trajectory", traj}};
}

json histogram_json(int block, const std::vector<double>& values, double R, int bins) {
  std::vector<double> edges(static_cast<std::size_t>(bins) + 1), density(static_cast<std::size_t>(bins), 0.0);
  const double w = 2.0 * R / bins;
  for (int i = 0; i <= bins; ++i) edges[static_cast<std::size_t>(i)] = -R + i * w;
  for (double x : values) {
    const int b = std::clamp(static_cast<int>(std::floor((x + R) / w)), 0, bins - 1);
    density[static_cast<std::size_t>(b)] += 1.0;
  }
  const double total = static_cast<double>(values.size());
  if (total > 0)
    for (double& d : density) d /= total * w;
  return {{"op", "histogram"}, {"block", block}, {"edges", edges}, {"density", density}};
}

// ---------------------------------------------------------------- experiments

struct Context {
  const ExperimentConfig& cfg;
  Params p;
  CounterRng root;
  int threads;
  RunRecord& rec;
};

GibbsModel model_from(const Params& p, int n_default, int N_default, const std::string& V_default, double c = 1.0) {
  const int n = static_cast<int>(p.integer("n", n_default));
  const int N = static_cast<int>(p.integer("N", N_default));
  const double R = p.positive("R", 2.0);
  NcPoly V = parse_poly(p, "V", n, V_default);
  if (c != 1.0) V *= cdouble(c);
  return GibbsModel(n, N, R, V, p.positive("beta", 1.0));
}

BlockMap block_map(const Params& p, int n) {
  if (!p.has("groups")) return BlockMap::full(n);
  const std::vector<int> g = p.int_list("groups", {});
  if (static_cast<int>(g.size()) != n) p.fail("groups", "needs one entry per block");
  try {
    return BlockMap::from_groups(g);
  } catch (const InvalidArgument& e) {
    p.fail("groups", e.what());
  }
}

void run_sample(Context& ctx) {
  const GibbsModel model = model_from(ctx.p, 1, 8, "0");
  ChainOptions co = chain_options(ctx.p.sub("chain"), 4000, 1000, 1);
  const int powers = static_cast<int>(ctx.p.integer("moments", 4));
  for (int b = 1; b <= model.n(); ++b)
    for (int k = 1; k <= powers; ++k)
      co.tracked.push_back(NcPoly::monomial(model.n(), Word(std::vector<int>(static_cast<std::size_t>(k), b))));
  CounterRng rng = stream(ctx.root, "sample");
  const ChainResult chain = mcmc_chain(model, co, rng);
  ctx.rec.results.push_back({{"op", "chain"}, {"diagnostics", diagnostics_json(chain.diagnostics)}});
  std::ostringstream records;
  write_chain_records(records, chain);
  ctx.rec.artifacts.emplace_back("samples.jsonl", records.str());
  for (int b = 1; b <= model.n(); ++b)
    for (int k = 1; k <= powers; ++k) {
      const std::size_t idx = static_cast<std::size_t>((b - 1) * powers + k - 1);
      const std::vector<double> series = tracked_series(chain, idx);
      const ScalarEstimate e = mean_estimate(series);
      ctx.rec.results.push_back({{"op", "moment"},
                                 {"block", b},
                                 {"k", k},
                                 {"value", e.value},
                                 {"stderr", e.std_error},
                                 {"count", e.count},
                                 {"reference", nullptr}});
    }
  const int bins = static_cast<int>(ctx.p.integer("bins", 40));
  for (int b = 0; b < model.n(); ++b) {
    std::vector<double> all;
    for (const ChainSample& s : chain.samples)
      all.insert(all.end(), s.spectra[static_cast<std::size_t>(b)].data(),
                 s.spectra[static_cast<std::size_t>(b)].data() + s.spectra[static_cast<std::size_t>(b)].size());
    ctx.rec.results.push_back(histogram_json(b + 1, all, model.R(), bins));
  }
}

void run_arcsine_demo(Context& ctx) {
  const int N = static_cast<int>(ctx.p.integer("N", 64));
  const double R = ctx.p.positive("R", 2.0);
  ChainOptions co = chain_options(ctx.p.sub("chain"), 3000, 1000, 1);
  co.tracked = {NcPoly::parse(1, "X1^2"), NcPoly::parse(1, "X1^4")};
  CounterRng rng = stream(ctx.root, "arcsine-demo");
  const ChainResult chain = mcmc_chain(GibbsModel::uniform(1, N, R), co, rng);
  ctx.rec.results.push_back({{"op", "chain"}, {"diagnostics", diagnostics_json(chain.diagnostics)}});
  const MomentSpec oracle = arcsine_moments(R, 4);
  for (int i = 0; i < 2; ++i) {
    const int k = 2 * (i + 1);
    const double scale = std::pow(R, k);
    const ScalarEstimate e = mean_estimate(tracked_series(chain, static_cast<std::size_t>(i)));
    ctx.rec.results.push_back({{"op", "moment"},
                               {"block", 1},
                               {"k", k},
                               {"normalized", true},
                               {"value", e.value / scale},
                               {"stderr", e.std_error / scale},
                               {"count", e.count},
                               {"reference", oracle.value(Word(std::vector<int>(static_cast<std::size_t>(k), 1))).real() / scale}});
  }
  std::vector<double> all;
  for (const ChainSample& s : chain.samples) all.insert(all.end(), s.spectra[0].data(), s.spectra[0].data() + N);
  ctx.rec.results.push_back(histogram_json(1, all, R, static_cast<int>(ctx.p.integer("bins", 50))));
}

void run_volume(Context& ctx) {
  const double R = ctx.p.positive("R", 2.0);
  std::vector<int> Ns = ctx.p.int_list("N_list", {static_cast<int>(ctx.p.integer("N", 1))});
  const long points = ctx.p.integer("mc_points", 0, 0);
  for (int N : Ns) {
    const double v = log_ball_volume(N, R);
    ctx.rec.results.push_back({{"op", "log_ball_volume"}, {"N", N}, {"R", R}, {"value", v}});
    if (points > 0) {
      CounterRng rng = stream(ctx.root, "volume", static_cast<std::uint64_t>(N));
      const ScalarEstimate e = ball_volume_hit_or_miss(N, R, points, rng);
      json r = estimate_json(e);
      r["op"] = "ball_volume_hit_or_miss";
      r["N"] = N;
      r["R"] = R;
      r["closed_form"] = v;
      ctx.rec.results.push_back(r);
    }
  }
}

struct FitSetup {
  MomentSpec tau;
  int N, K;
  double R, eps;
  FitOptions opts;
};

FitSetup fit_setup(Context& ctx) {
  const int K = static_cast<int>(ctx.p.integer("K", 4));
  const double R = ctx.p.positive("R", 4.0);
  return {load_target(ctx.p, K, R, ctx.cfg.base_dir),
          static_cast<int>(ctx.p.integer("N", 8)),
          K,
          R,
          ctx.p.nonnegative("eps", 0.0),
          fit_options(ctx.p.sub("fit"), ctx.threads)};
}

void run_fit(Context& ctx) {
  const FitSetup s = fit_setup(ctx);
  CounterRng rng = stream(ctx.root, "fit");
  const FitResult f = fit_projection(s.tau, s.N, s.K, s.R, s.eps, s.opts, rng);
  json r = fit_json(f);
  r["op"] = "fit";
  ctx.rec.results.push_back(r);
  if (f.status == FitStatus::Infeasible) ctx.rec.outcome = RunOutcome::Infeasible;
}

void run_rho(Context& ctx) {
  const FitSetup s = fit_setup(ctx);
  CounterRng rng = stream(ctx.root, "rho");
  const RhoEstimate r = rho(s.tau, s.N, s.K, s.R, s.eps, s.opts, rng);
  ctx.rec.results.push_back({{"op", "rho"},
                             {"N", s.N},
                             {"K", s.K},
                             {"R", s.R},
                             {"eps", s.eps},
                             {"status", to_string(r.status)},
                             {"primal", estimate_json(r.primal)},
                             {"dual", estimate_json(r.dual)},
                             {"gap", r.gap},
                             {"gap_stderr", r.gap_stderr}});
}

void run_chi_tilde(Context& ctx) {
  FitSetup s = fit_setup(ctx);
  const std::vector<int> Ns = ctx.p.int_list("N_list", {8, 16});
  CounterRng rng = stream(ctx.root, "chi-tilde");
  for (const CurvePoint& pt : chi_tilde_curve(s.tau, Ns, s.K, s.R, s.eps, s.opts, rng))
    ctx.rec.results.push_back({{"op", "chi_tilde_point"},
                               {"N", pt.N},
                               {"value", pt.value},
                               {"stderr", pt.std_error},
                               {"status", to_string(pt.status)}});
  const Params t = ctx.p.sub("target");
  const std::string gen = t.str("generator", "");
  std::optional<ScalarDensity> d;
  if (gen == "semicircle") d = ScalarDensity::semicircle(t.positive("variance", 1.0));
  if (gen == "arcsine") d = ScalarDensity::arcsine(s.R);
  if (d) ctx.rec.results.push_back({{"op", "chi_reference"}, {"value", one_variable_chi_reference(*d)}});
}

void run_pressure(Context& ctx) {
  const int n = static_cast<int>(ctx.p.integer("n", 1));
  const int N = static_cast<int>(ctx.p.integer("N", 8));
  const double R = ctx.p.positive("R", 2.0);
  const NcPoly P = parse_poly(ctx.p, "P", n, "0.5*X1^2");
  EstimatorBudget b;
  b.chain = chain_options(ctx.p.sub("chain"), 4000, 1000, 1);
  b.ti_nodes = static_cast<int>(ctx.p.integer("ti_nodes", 21, 2));
  b.threads = ctx.threads;
  CounterRng rng = stream(ctx.root, "pressure");
  json r = estimate_json(free_pressure(P, N, R, b, rng));
  r["op"] = "free_pressure";
  r["N"] = N;
  r["P"] = to_string(P);
  ctx.rec.results.push_back(r);
}

void run_orbital(Context& ctx) {
  const std::vector<double> cs = ctx.p.num_list("c_grid", {1.0});
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const GibbsModel m = model_from(ctx.p, 2, 8, "(X1 - X2)^2", cs[i]);
    OrbitalRequest req{m, block_map(ctx.p, m.n()), static_cast<int>(ctx.p.integer("S_out", 400)),
                       static_cast<int>(ctx.p.integer("S_in", 256)),
                       chain_options(ctx.p.sub("chain"), 4000, 1000, 5), {}, ctx.threads, inner_method(ctx.p)};
    CounterRng rng = stream(ctx.root, "orbital", i);
    json r = orbital_json(orbital_entropy(req, rng));
    r["op"] = "orbital";
    r["c"] = cs[i];
    ctx.rec.results.push_back(r);
  }
}

void run_chain_rule(Context& ctx) {
  const GibbsModel m = model_from(ctx.p, 2, 8, "(X1 - X2)^2");
  ChainRuleBudget b;
  b.S_out = static_cast<int>(ctx.p.integer("S_out", 400));
  b.S_in = static_cast<int>(ctx.p.integer("S_in", 256));
  b.chain = chain_options(ctx.p.sub("chain"), 4000, 1000, 5);
  b.ti_chain = chain_options(ctx.p.sub("ti_chain"), 4000, 1000, 1);
  b.ti_nodes = static_cast<int>(ctx.p.integer("ti_nodes", 21, 2));
  b.threads = ctx.threads;
  b.inner = inner_method(ctx.p);
  CounterRng rng = stream(ctx.root, "chain-rule");
  json r = chain_rule_json(chain_rule_check(m, block_map(ctx.p, m.n()), b, rng));
  r["op"] = "chain_rule";
  ctx.rec.results.push_back(r);
}

void run_talagrand(Context& ctx) {
  const std::vector<double> cs = ctx.p.num_list("c_grid", {0.25, 0.5, 1.0});
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const GibbsModel m = model_from(ctx.p, 2, 8, "(X1 - X2)^2", cs[i]);
    TalagrandBudget b;
    b.K = static_cast<int>(ctx.p.integer("K", 4));
    b.S_out = static_cast<int>(ctx.p.integer("S_out", 400));
    b.S_in = static_cast<int>(ctx.p.integer("S_in", 256));
    b.chain = chain_options(ctx.p.sub("chain"), 4000, 1000, 5);
    b.threads = ctx.threads;
    b.inner = inner_method(ctx.p);
    CounterRng rng = stream(ctx.root, "talagrand", i);
    const TalagrandReport t = talagrand_report(m, block_map(ctx.p, m.n()), b, rng);
    json o = orbital_json(t.orbital);
    o["op"] = "orbital";
    o["c"] = cs[i];
    ctx.rec.results.push_back(o);
    ctx.rec.results.push_back({{"op", "talagrand"},
                               {"c", cs[i]},
                               {"lhs_free_product", t.lhs_free_product},
                               {"lhs_randomized", t.lhs_randomized},
                               {"lhs_stderr", t.lhs_stderr},
                               {"rhs", t.rhs},
                               {"slack", t.slack},
                               {"freeness_gap", t.freeness_gap},
                               {"max_group_size", t.max_group_size},
                               {"holds", t.holds()}});
  }
}

void run_duality(Context& ctx) {
  const double R = ctx.p.positive("R", 2.0);
  std::vector<MomentConstraint> cons;
  if (ctx.p.has("constraints")) {
    for (const auto& e : ctx.p.raw().at("constraints"))
      cons.push_back({e.at("power").get<int>(), e.at("target").get<double>()});
  } else {
    const int K = static_cast<int>(ctx.p.integer("K", 4));
    const MomentSpec tau = ctx.p.has("target") ? load_target(ctx.p, K, R, ctx.cfg.base_dir) : semicircle_moments(1.0, K, R);
    if (tau.n() != 1) ctx.p.fail("target", "duality-check needs a one-variable target");
    for (int k = 1; k <= K; ++k)
      cons.push_back({k, tau.value(Word(std::vector<int>(static_cast<std::size_t>(k), 1))).real()});
  }
  const MaxentResult m = scalar_maxent_oracle(cons, R, static_cast<int>(ctx.p.integer("grid_size", 20000)));
  json c = json::array();
  for (const MomentConstraint& k : cons) c.push_back({{"power", k.power}, {"target", k.target}});
  ctx.rec.results.push_back({{"op", "maxent"},
                             {"R", R},
                             {"constraints", c},
                             {"entropy", m.entropy},
                             {"dual", m.dual},
                             {"gap", m.gap},
                             {"lambda", vec(m.lambda)},
                             {"iterations", m.iterations},
                             {"converged", m.converged}});
  const long pairs = ctx.p.integer("data_processing_pairs", 0, 0);
  const int M = static_cast<int>(ctx.p.integer("grid", 400));
  for (long i = 0; i < pairs; ++i) {
    CounterRng rng = stream(ctx.root, "data-processing", static_cast<std::uint64_t>(i));
    auto quad = [&rng]() {
      const double a = rng.uniform(0.2, 2.0), b = rng.uniform(0.2, 2.0), c = rng.uniform(-1.0, 1.0);
      return std::array<double, 3>{a, b, c};
    };
    const auto qm = quad(), qn = quad();
    const DataProcessingReport d = data_processing_check(
        [qm](double x, double y) { return qm[0] * x * x + qm[1] * y * y + qm[2] * x * y; },
        [qn](double x, double y) { return qn[0] * x * x + qn[1] * y * y + qn[2] * x * y; }, R, M);
    ctx.rec.results.push_back({{"op", "data_processing"},
                               {"pair", i},
                               {"mu", qm},
                               {"nu", qn},
                               {"joint", d.joint},
                               {"projected", d.projected},
                               {"holds", d.holds()}});
  }
}

void run_compression(Context& ctx) {
  const int N = static_cast<int>(ctx.p.integer("N", 1));
  const CompressionFn g = build_compression(ctx.p.positive("T", 3.0), ctx.p.positive("R", 2.0), ctx.p.positive("S", 1.0));
  if (N == 1) {
    const ScalarCompressionReport s = scalar_compression_check(g, [](double) { return 0.0; });
    ctx.rec.results.push_back({{"op", "compression_quadrature"},
                               {"entropy", s.entropy},
                               {"pushed_entropy", s.pushed_entropy},
                               {"mean_log_derivative", s.mean_log_derivative},
                               {"discrepancy", s.discrepancy()}});
  }
  CounterRng rng = stream(ctx.root, "compression");
  const CompressionReport r = compression_check(g, N, chain_options(ctx.p.sub("chain"), 21000, 1000, 1), rng);
  ctx.rec.results.push_back({{"op", "compression"},
                             {"N", N},
                             {"alpha", g.alpha()},
                             {"formula", estimate_json(r.formula)},
                             {"direct", estimate_json(r.direct)},
                             {"max_abs_log_jacobian", r.max_abs_log_jacobian},
                             {"jacobian_bound", r.jacobian_bound},
                             {"bound_holds", r.bound_holds},
                             {"importance_ess", r.importance_ess},
                             {"matches", r.matches()}});
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {"sample",   "volume",     "fit",       "rho",
                                                 "chi-tilde", "pressure",  "orbital",   "chain-rule",
                                                 "talagrand", "duality-check", "arcsine-demo", "compression-check"};
  return kinds;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a mapping");
  for (const auto& [key, value] : j.items())
    if (key != "kind" && key != "seed" && key != "out" && key != "params")
      throw ConfigError("config: unknown top-level key '" + key + "'");
  ExperimentConfig c;
  if (!j.contains("kind") || !j.at("kind").is_string()) throw ConfigError("config: 'kind' missing");
  c.kind = j.at("kind").get<std::string>();
  if (!j.contains("seed") || j.at("seed").is_null()) throw ConfigError("config: 'seed' missing");
  if (!j.at("seed").is_number_unsigned()) throw ConfigError("config: 'seed' must be a non-negative integer");
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("out") && !j.at("out").is_null()) {
    if (!j.at("out").is_string()) throw ConfigError("config: 'out' must be a string");
    c.out = j.at("out").get<std::string>();
  }
  if (j.contains("params") && !j.at("params").is_null()) {
    if (!j.at("params").is_object()) throw ConfigError("config: 'params' must be a mapping");
    c.params = j.at("params");
  }
  validate(c);
  return c;
}

ExperimentConfig ExperimentConfig::parse(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return from_json(yaml_to_json(root));
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig c = parse(ss.str());
  c.base_dir = path.parent_path();
  return c;
}

json ExperimentConfig::to_json() const {
  json j = {{"kind", kind}, {"seed", seed}, {"params", params}};
  if (!out.empty()) j["out"] = out;
  return j;
}

std::string ExperimentConfig::to_yaml() const {
  std::ostringstream os;
  emit_yaml(os, to_json(), 0);
  return os.str();
}

std::uint64_t ExperimentConfig::hash() const {
  const json j = {{"kind", kind}, {"seed", seed}, {"params", params}};
  return fnv1a(j.dump());
}

void validate(const ExperimentConfig& cfg) {
  if (!allowed_keys().count(cfg.kind)) throw ConfigError("config: unknown experiment kind '" + cfg.kind + "'");
  validate_params(cfg);
}

ExperimentConfig default_config(const std::string& kind, std::uint64_t seed) {
  ExperimentConfig c;
  c.kind = kind;
  c.seed = seed;
  if (kind == "fit" || kind == "rho" || kind == "chi-tilde") c.params["target"] = {{"generator", "semicircle"}};
  validate(c);
  return c;
}

RunRecord run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  validate(cfg);
  RunRecord rec;
  rec.kind = cfg.kind;
  rec.config_hash = hex16(cfg.hash());
  rec.version = FREEENT_VERSION;
  rec.started = utc_now();
  Context ctx{cfg, Params(cfg.params, cfg.kind), CounterRng(cfg.seed), opts.threads > 0 ? opts.threads : default_threads(),
              rec};
  static const std::map<std::string, void (*)(Context&)> table = {
      {"sample", run_sample},       {"volume", run_volume},
      {"fit", run_fit},             {"rho", run_rho},
      {"chi-tilde", run_chi_tilde}, {"pressure", run_pressure},
      {"orbital", run_orbital},     {"chain-rule", run_chain_rule},
      {"talagrand", run_talagrand}, {"duality-check", run_duality},
      {"arcsine-demo", run_arcsine_demo}, {"compression-check", run_compression},
  };
  table.at(cfg.kind)(ctx);
  rec.finished = utc_now();
  return rec;
}

std::string results_jsonl(const RunRecord& record) {
  std::string out;
  for (const json& r : record.results) out += r.dump() + '\n';
  return out;
}

RunRecord read_results(const std::filesystem::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw ConfigError("cannot read " + jsonl.string());
  RunRecord rec;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      rec.results.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ConfigError(jsonl.string() + ": " + e.what());
    }
  }
  return rec;
}

void write_run(const RunRecord& record, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "results.jsonl");
    os << results_jsonl(record);
  }
  {
    std::ofstream os(dir / "config.yaml");
    os << cfg.to_yaml();
  }
  {
    const json meta = {{"kind", record.kind},
                       {"config_hash", record.config_hash},
                       {"started", record.started},
                       {"finished", record.finished},
                       {"version", record.version},
                       {"outcome", record.outcome == RunOutcome::Ok ? "ok" : "infeasible"},
                       {"records", record.results.size()}};
    std::ofstream os(dir / "run.json");
    os << meta.dump(2) << '\n';
  }
  for (const auto& [name, contents] : record.artifacts) {
    std::ofstream os(dir / name);
    os << contents;
  }
  for (PlotKind k : {PlotKind::Histogram, PlotKind::ChiTilde, PlotKind::OrbitalGrid, PlotKind::Moments}) {
    const PlotTable t = emit_plot_data(record, k);
    if (t.rows.empty()) continue;
    std::ofstream os(dir / (t.name + ".tsv"));
    t.write(os);
  }
}

std::string to_string(PlotKind k) {
  switch (k) {
    case PlotKind::Histogram:
      return "histogram";
    case PlotKind::ChiTilde:
      return "chi-tilde";
    case PlotKind::OrbitalGrid:
      return "orbital-grid";
    case PlotKind::Moments:
      return "moments";
  }
  return "?";
}

PlotKind plot_kind_from_string(std::string_view name) {
  for (PlotKind k : {PlotKind::Histogram, PlotKind::ChiTilde, PlotKind::OrbitalGrid, PlotKind::Moments})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown table '" + std::string(name) + "'");
}

void PlotTable::write(std::ostream& os) const {
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "\t" : "") << header[i];
  os << '\n';
  char buf[32];
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", row[i]);
      os << (i ? "\t" : "") << buf;
    }
    os << '\n';
  }
}

PlotTable emit_plot_data(const RunRecord& record, PlotKind kind) {
  PlotTable t;
  t.name = to_string(kind);
  auto num = [](const json& v) { return v.is_number() ? v.get<double>() : std::nan(""); };
  switch (kind) {
    case PlotKind::Histogram:
      t.header = {"block", "lo", "hi", "density"};
      for (const json& r : record.results) {
        if (r.value("op", "") != "histogram") continue;
        const auto& e = r.at("edges");
        const auto& d = r.at("density");
        for (std::size_t i = 0; i < d.size(); ++i)
          t.rows.push_back({num(r.at("block")), num(e[i]), num(e[i + 1]), num(d[i])});
      }
      break;
    case PlotKind::ChiTilde:
      t.header = {"N", "value", "stderr"};
      for (const json& r : record.results)
        if (r.value("op", "") == "chi_tilde_point") t.rows.push_back({num(r.at("N")), num(r.at("value")), num(r.at("stderr"))});
      break;
    case PlotKind::OrbitalGrid:
      t.header = {"c", "value", "stderr"};
      for (const json& r : record.results)
        if (r.value("op", "") == "orbital") t.rows.push_back({num(r.at("c")), num(r.at("value")), num(r.at("stderr"))});
      break;
    case PlotKind::Moments:
      t.header = {"block", "k", "value", "stderr", "reference"};
      for (const json& r : record.results)
        if (r.value("op", "") == "moment")
          t.rows.push_back({num(r.at("block")), num(r.at("k")), num(r.at("value")), num(r.at("stderr")),
                            num(r.at("reference"))});
      break;
  }
  return t;
}

}  // namespace freeent
