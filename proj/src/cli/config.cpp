#include "dbpi/cli/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <openssl/evp.h>

namespace dbpi::cli {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& msg)
{
  throw Error(ErrorKind::InvalidConfig, where + ": " + msg);
}

void check_keys(const Json& obj, const std::string& where, std::initializer_list<std::string_view> allowed)
{
  if (!obj.is_object()) fail(where, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) fail(where, "unknown key \"" + key + "\"");
  }
}

const Json* member(const Json& obj, const char* key)
{
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

const Json& required(const Json& obj, const char* key, const std::string& where)
{
  const Json* j = member(obj, key);
  if (!j) fail(where, std::string("missing required key \"") + key + "\"");
  return *j;
}

/// JSON number or a decimal string, parsed without locale.
double number(const Json& j, const std::string& where)
{
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::general);
    if (res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty()) return v;
    fail(where, "\"" + s + "\" is not a decimal number");
  }
  fail(where, "expected a number or a decimal string");
}

double finite_number(const Json& j, const std::string& where)
{
  const double v = number(j, where);
  if (!std::isfinite(v)) fail(where, "must be finite");
  return v;
}

std::uint64_t unsigned_integer(const Json& j, const std::string& where)
{
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) {
    if (j.get<std::int64_t>() < 0) fail(where, "must be non-negative");
    return static_cast<std::uint64_t>(j.get<std::int64_t>());
  }
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty()) return v;
  }
  fail(where, "expected a non-negative integer");
}

Index count(const Json& j, const std::string& where, Index min)
{
  const auto v = unsigned_integer(j, where);
  if (v < static_cast<std::uint64_t>(min)) fail(where, "must be at least " + std::to_string(min));
  return static_cast<Index>(v);
}

std::vector<double> number_list(const Json& j, const std::string& where)
{
  if (!j.is_array()) fail(where, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(finite_number(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

Vector<double> vector_of(const Json& j, const std::string& where)
{
  const auto v = number_list(j, where);
  return Eigen::Map<const Vector<double>>(v.data(), static_cast<Index>(v.size()));
}

Matrix<double> matrix_of(const Json& j, const std::string& where)
{
  if (!j.is_array() || j.empty()) fail(where, "expected a non-empty array of rows");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < j.size(); ++i) rows.push_back(number_list(j[i], where + "[" + std::to_string(i) + "]"));
  const std::size_t cols = rows.front().size();
  Matrix<double> m(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) fail(where, "rows have different lengths");
    for (std::size_t k = 0; k < cols; ++k) m(Index(i), Index(k)) = rows[i][k];
  }
  return m;
}

std::string string_of(const Json& j, const std::string& where)
{
  if (!j.is_string()) fail(where, "expected a string");
  return j.get<std::string>();
}

bool boolean(const Json& j, const std::string& where)
{
  if (!j.is_boolean()) fail(where, "expected true or false");
  return j.get<bool>();
}

GraphDescriptor parse_graph(const Json& j)
{
  const std::string where = "graph";
  if (!j.is_object()) fail(where, "expected an object");
  const Index n = count(required(j, "n", where), where + ".n", 1);
  if (member(j, "edges")) {
    check_keys(j, where, {"n", "edges"});
    EdgeListGraph g{n, {}};
    const Json& edges = j["edges"];
    if (!edges.is_array()) fail(where + ".edges", "expected an array of [s, t] pairs");
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const std::string at = where + ".edges[" + std::to_string(i) + "]";
      if (!edges[i].is_array() || edges[i].size() != 2) fail(at, "expected an [s, t] pair");
      for (const auto& v : edges[i]) {
        if (!v.is_number_integer()) fail(at, "agent indices must be integers");
      }
      // External indices are 1-based.
      g.edges.push_back({edges[i][0].get<Index>() - 1, edges[i][1].get<Index>() - 1});
    }
    return g;
  }
  check_keys(j, where, {"n", "family", "p", "seed"});
  NamedGraph g;
  g.n = n;
  const std::string family = string_of(required(j, "family", where), where + ".family");
  if (family == "path") {
    g.family = GraphFamily::path;
  } else if (family == "cycle") {
    g.family = GraphFamily::cycle;
  } else if (family == "complete") {
    g.family = GraphFamily::complete;
  } else if (family == "star") {
    g.family = GraphFamily::star;
  } else if (family == "erdos_renyi") {
    g.family = GraphFamily::erdos_renyi;
  } else {
    fail(where + ".family", "unknown family \"" + family + "\"");
  }
  if (const Json* p = member(j, "p")) {
    g.p = finite_number(*p, where + ".p");
    if (g.p < 0 || g.p > 1) fail(where + ".p", "must lie in [0, 1]");
  }
  if (const Json* s = member(j, "seed")) g.seed = unsigned_integer(*s, where + ".seed");
  return g;
}

MapSpec parse_map(const Json& j, const std::string& where, bool allow_replicate)
{
  if (!j.is_object()) fail(where, "expected a map descriptor object");
  const std::string family = string_of(required(j, "family", where), where + ".family");
  MapSpec m;
  m.family = family;
  if (family == "affine") {
    allow_replicate ? check_keys(j, where, {"family", "A", "b", "replicate", "perturbation", "seed"})
                    : check_keys(j, where, {"family", "A", "b"});
    m.a = matrix_of(required(j, "A", where), where + ".A");
    m.b = vector_of(required(j, "b", where), where + ".b");
    m.dim = m.b.size();
  } else if (family == "quadratic_gradient") {
    allow_replicate ? check_keys(j, where, {"family", "Q", "c", "replicate", "perturbation", "seed"})
                    : check_keys(j, where, {"family", "Q", "c"});
    m.a = matrix_of(required(j, "Q", where), where + ".Q");
    m.b = vector_of(required(j, "c", where), where + ".c");
    m.dim = m.b.size();
  } else if (family == "logistic") {
    allow_replicate ? check_keys(j, where, {"family", "r", "dim", "replicate", "perturbation", "seed"})
                    : check_keys(j, where, {"family", "r", "dim"});
    m.r = finite_number(required(j, "r", where), where + ".r");
    if (const Json* d = member(j, "dim")) m.dim = count(*d, where + ".dim", 1);
  } else {
    fail(where + ".family", "unknown family \"" + family + "\"");
  }
  return m;
}

SystemSpec parse_system(const Json& j)
{
  SystemSpec s;
  if (j.is_array()) {
    if (j.empty()) fail("system", "needs at least one agent");
    for (std::size_t i = 0; i < j.size(); ++i) s.maps.push_back(parse_map(j[i], "system[" + std::to_string(i) + "]", false));
    return s;
  }
  s.maps.push_back(parse_map(j, "system", true));
  if (const Json* r = member(j, "replicate")) s.replicate = count(*r, "system.replicate", 1);
  if (const Json* p = member(j, "perturbation")) {
    s.perturbation = finite_number(*p, "system.perturbation");
    if (s.perturbation < 0) fail("system.perturbation", "must be non-negative");
  }
  if (const Json* seed = member(j, "seed")) s.seed = unsigned_integer(*seed, "system.seed");
  return s;
}

VectorInit parse_init(const Json& j, const std::string& where)
{
  VectorInit v;
  if (j.is_string()) {
    if (j.get<std::string>() != "zeros") fail(where, "expected \"zeros\", {\"values\": [...]} or {\"random\": {...}}");
    return v;
  }
  check_keys(j, where, {"values", "random"});
  if (j.size() != 1) fail(where, "give exactly one of \"values\" or \"random\"");
  if (const Json* vals = member(j, "values")) {
    v.kind = VectorInit::Kind::given;
    v.values = number_list(*vals, where + ".values");
    return v;
  }
  const Json& r = j["random"];
  const std::string at = where + ".random";
  check_keys(r, at, {"seed", "scale", "center"});
  v.kind = VectorInit::Kind::random;
  v.seed = unsigned_integer(required(r, "seed", at), at + ".seed");
  if (const Json* s = member(r, "scale")) {
    v.scale = finite_number(*s, at + ".scale");
    if (v.scale < 0) fail(at + ".scale", "must be non-negative");
  }
  if (const Json* c = member(r, "center")) {
    const std::string center = string_of(*c, at + ".center");
    if (center == "fixed_point") {
      v.around_fixed_point = true;
    } else if (center != "zero") {
      fail(at + ".center", "expected \"zero\" or \"fixed_point\"");
    }
  }
  return v;
}

ParamsSpec parse_params(const Json& j)
{
  check_keys(j, "params", {"alpha", "beta2", "eta", "variant"});
  ParamsSpec p;
  if (const Json* a = member(j, "alpha")) {
    if (a->is_string() && a->get<std::string>() == "auto") {
      p.alpha.reset();
    } else {
      p.alpha = finite_number(*a, "params.alpha");
      if (!(*p.alpha > 0)) fail("params.alpha", "must be positive or \"auto\"");
    }
  } else {
    p.alpha.reset();
  }
  if (const Json* b = member(j, "beta2")) {
    p.beta2 = finite_number(*b, "params.beta2");
    if (p.beta2 < 0) fail("params.beta2", "must be non-negative");
  }
  if (const Json* e = member(j, "eta")) p.eta = finite_number(*e, "params.eta");
  if (const Json* v = member(j, "variant")) {
    const std::string name = string_of(*v, "params.variant");
    bool found = false;
    for (Variant cand : {Variant::algorithm1, Variant::parametric, Variant::lifted, Variant::reduced}) {
      if (name == to_string(cand)) {
        p.variant = cand;
        found = true;
      }
    }
    if (!found) fail("params.variant", "unknown variant \"" + name + "\"");
  }
  if (p.variant == Variant::algorithm1 && (p.eta != 1 || p.beta2 != 0.5)) {
    fail("params", "algorithm1 fixes eta = 1 and beta2 = 0.5");
  }
  return p;
}

}  // namespace

Json parse_json(std::string_view text)
{
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("malformed JSON: ") + e.what());
  }
}

Json read_json_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_json(ss.str());
}

void apply_seed_override(Json& doc, std::uint64_t seed)
{
  if (!doc.is_object() || !doc.contains("init") || !doc["init"].is_object()) return;
  Json& init = doc["init"];
  const std::pair<const char*, std::uint64_t> targets[] = {{"z0", seed}, {"w0", seed + 1}};
  for (const auto& [key, value] : targets) {
    if (init.contains(key) && init[key].is_object() && init[key].contains("random") && init[key]["random"].is_object()) {
      init[key]["random"]["seed"] = value;
    }
  }
}

ExperimentConfig parse_config(const Json& doc)
{
  check_keys(doc, "config",
             {"description", "graph", "gauge", "system", "params", "init", "oracle", "stopping", "outputs", "rate",
              "spectrum", "sweep"});
  ExperimentConfig cfg;
  cfg.source = doc;
  cfg.graph = parse_graph(required(doc, "graph", "config"));
  if (const Json* d = member(doc, "description")) (void)string_of(*d, "description");
  if (const Json* g = member(doc, "gauge")) {
    check_keys(*g, "gauge", {"weights", "l_tilde"});
    if (g->contains("l_tilde") && g->contains("weights")) fail("gauge", "give either \"weights\" or \"l_tilde\"");
    if (const Json* w = member(*g, "weights")) {
      if (string_of(*w, "gauge.weights") != "metropolis") fail("gauge.weights", "only \"metropolis\" is built in");
    }
    if (const Json* l = member(*g, "l_tilde")) cfg.l_tilde = matrix_of(*l, "gauge.l_tilde");
  }
  cfg.system = parse_system(required(doc, "system", "config"));
  if (const Json* p = member(doc, "params")) {
    cfg.params = parse_params(*p);
  } else {
    cfg.params.alpha.reset();
  }
  if (const Json* init = member(doc, "init")) {
    check_keys(*init, "init", {"z0", "w0"});
    if (const Json* z = member(*init, "z0")) cfg.z0 = parse_init(*z, "init.z0");
    if (const Json* w = member(*init, "w0")) {
      cfg.w0 = parse_init(*w, "init.w0");
      if (cfg.w0.around_fixed_point) fail("init.w0.random.center", "only z0 can be centered at the fixed point");
    }
  }
  if (const Json* o = member(doc, "oracle")) {
    check_keys(*o, "oracle", {"start"});
    if (const Json* s = member(*o, "start")) cfg.oracle_start = number_list(*s, "oracle.start");
  }
  if (const Json* s = member(doc, "stopping")) {
    check_keys(*s, "stopping", {"tol_step", "tol_cons", "max_iters", "divergence_guard"});
    if (const Json* v = member(*s, "tol_step")) cfg.stopping.tol_step = finite_number(*v, "stopping.tol_step");
    if (const Json* v = member(*s, "tol_cons")) cfg.stopping.tol_cons = finite_number(*v, "stopping.tol_cons");
    if (const Json* v = member(*s, "max_iters")) cfg.stopping.max_iters = count(*v, "stopping.max_iters", 1);
    if (const Json* v = member(*s, "divergence_guard")) {
      cfg.stopping.divergence_guard = finite_number(*v, "stopping.divergence_guard");
    }
  }
  if (const Json* o = member(doc, "outputs")) {
    check_keys(*o, "outputs", {"dir", "thinning", "states"});
    if (const Json* v = member(*o, "dir")) cfg.outputs.dir = string_of(*v, "outputs.dir");
    if (const Json* v = member(*o, "thinning")) cfg.outputs.thinning = count(*v, "outputs.thinning", 1);
    if (const Json* v = member(*o, "states")) cfg.outputs.states = boolean(*v, "outputs.states");
  }
  cfg.stopping.thinning = cfg.outputs.thinning;
  cfg.stopping.record_states = cfg.outputs.states;
  if (const Json* r = member(doc, "rate")) {
    check_keys(*r, "rate", {"window_fraction"});
    if (const Json* v = member(*r, "window_fraction")) {
      cfg.window_fraction = finite_number(*v, "rate.window_fraction");
      if (!(cfg.window_fraction > 0 && cfg.window_fraction <= 1)) fail("rate.window_fraction", "must lie in (0, 1]");
    }
  }
  if (const Json* s = member(doc, "spectrum")) {
    check_keys(*s, "spectrum", {"alpha_max", "curve_points"});
    if (const Json* v = member(*s, "alpha_max")) {
      cfg.alpha_max = finite_number(*v, "spectrum.alpha_max");
      if (!(cfg.alpha_max > 0)) fail("spectrum.alpha_max", "must be positive");
    }
    if (const Json* v = member(*s, "curve_points")) cfg.curve_points = count(*v, "spectrum.curve_points", 2);
  }
  if (const Json* s = member(doc, "sweep")) {
    check_keys(*s, "sweep", {"parameter", "values", "relative_to_alpha_star"});
    SweepSpec sw;
    sw.parameter = string_of(required(*s, "parameter", "sweep"), "sweep.parameter");
    if (sw.parameter != "alpha" && sw.parameter != "eta" && sw.parameter != "beta2" && sw.parameter != "n") {
      fail("sweep.parameter", "expected alpha, eta, beta2 or n");
    }
    sw.values = number_list(required(*s, "values", "sweep"), "sweep.values");
    if (sw.values.empty()) fail("sweep.values", "needs at least one value");
    if (const Json* v = member(*s, "relative_to_alpha_star")) {
      sw.relative_to_alpha_star = boolean(*v, "sweep.relative_to_alpha_star");
      if (sw.relative_to_alpha_star && sw.parameter != "alpha") {
        fail("sweep.relative_to_alpha_star", "only applies to the alpha parameter");
      }
    }
    if (sw.parameter == "n") {
      for (double v : sw.values) {
        if (!(v >= 1) || v != std::floor(v)) fail("sweep.values", "agent counts must be positive integers");
      }
    }
    cfg.sweep = std::move(sw);
  }
  return cfg;
}

std::string config_hash(const Json& doc)
{
  const std::string text = io::dump(doc);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

CommGraph build_graph(const ExperimentConfig& cfg) { return dbpi::build_graph(cfg.graph); }

AgentSystem<double> build_system(const SystemSpec& spec, Index agents)
{
  std::vector<MapSpec> maps = spec.maps;
  if (maps.size() == 1 && (spec.replicate || agents > 1)) {
    const Index copies = spec.replicate.value_or(agents);
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u(-spec.perturbation, spec.perturbation);
    auto draw = [&] { return spec.perturbation > 0 ? u(rng) : 0.0; };
    const MapSpec base = maps.front();
    maps.clear();
    for (Index n = 0; n < copies; ++n) {
      MapSpec m = base;
      if (m.family == "logistic") {
        m.r += draw();
      } else {
        Matrix<double> delta(m.a.rows(), m.a.cols());
        for (Index i = 0; i < delta.rows(); ++i)
          for (Index k = 0; k < delta.cols(); ++k) delta(i, k) = draw();
        if (m.family == "quadratic_gradient") delta = ((delta + delta.transpose()) / 2.0).eval();
        m.a += delta;
        for (Index i = 0; i < m.b.size(); ++i) m.b(i) += draw();
      }
      maps.push_back(std::move(m));
    }
  }
  require_dimension(static_cast<Index>(maps.size()), agents, "number of agent maps vs graph size");

  std::vector<AgentMap<double>> out;
  for (const auto& m : maps) {
    if (m.family == "logistic") {
      out.push_back(logistic_map<double>(m.r, m.dim));
      continue;
    }
    require_dimension(m.a.rows(), m.b.size(), m.family + " matrix rows");
    require_dimension(m.a.cols(), m.b.size(), m.family + " matrix columns");
    out.push_back(m.family == "affine" ? affine_map<double>(m.a, m.b) : quadratic_gradient_map<double>(m.a, m.b));
  }
  return AgentSystem<double>(std::move(out));
}

GaugeMatrix<double> build_gauge(const ExperimentConfig& cfg, const CommGraph& g, Index d)
{
  if (cfg.l_tilde) {
    require_dimension(cfg.l_tilde->rows(), g.size(), "gauge.l_tilde rows");
    require_dimension(cfg.l_tilde->cols(), g.size(), "gauge.l_tilde columns");
    return gauge_from_custom<double>(*cfg.l_tilde, g, d);
  }
  return gauge_from_weights(metropolis_weights<double>(g, d));
}

IterationParams<double> iteration_params(const ParamsSpec& p, double alpha)
{
  return {alpha, std::sqrt(p.beta2), p.eta, p.variant};
}

Vector<double> build_vector(const VectorInit& spec, Index size, const Vector<double>* center, std::string_view what)
{
  switch (spec.kind) {
    case VectorInit::Kind::zeros: return Vector<double>::Zero(size);
    case VectorInit::Kind::given: {
      require_dimension(static_cast<Index>(spec.values.size()), size, std::string(what));
      return Eigen::Map<const Vector<double>>(spec.values.data(), size);
    }
    case VectorInit::Kind::random: {
      std::mt19937_64 rng(spec.seed);
      std::uniform_real_distribution<double> u(-spec.scale, spec.scale);
      Vector<double> v(size);
      for (Index i = 0; i < size; ++i) v(i) = spec.scale > 0 ? u(rng) : 0.0;
      if (spec.around_fixed_point) {
        if (!center) throw Error(ErrorKind::NotFixedPoint, std::string(what) + ": no fixed point to center on");
        v += *center;
      }
      return v;
    }
  }
  return Vector<double>::Zero(size);
}

}  // namespace dbpi::cli
