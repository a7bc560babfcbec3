#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dbpi/graph.hpp"
#include "dbpi/io.hpp"
#include "dbpi/iteration.hpp"
#include "dbpi/operators.hpp"

namespace dbpi::cli {

using Json = io::Json;

/// One agent map. Affine uses a/b, quadratic_gradient uses a as Q and b as c,
/// logistic uses r and dim.
struct MapSpec {
  std::string family;
  Matrix<double> a;
  Vector<double> b;
  double r = 0;
  Index dim = 1;
};

/// Either an explicit per-agent list, or one map replicated with optional
/// seeded per-agent perturbations.
struct SystemSpec {
  std::vector<MapSpec> maps;
  std::optional<Index> replicate;
  double perturbation = 0;
  std::uint64_t seed = 0;
};

struct VectorInit {
  enum class Kind { zeros, given, random };
  Kind kind = Kind::zeros;
  std::vector<double> values;
  std::uint64_t seed = 0;
  double scale = 1;
  bool around_fixed_point = false;
};

struct ParamsSpec {
  std::optional<double> alpha;  // nullopt means "auto"
  double beta2 = 0.5;
  double eta = 1;
  Variant variant = Variant::parametric;
};

struct OutputSpec {
  std::optional<std::string> dir;
  Index thinning = 1;
  bool states = false;
};

struct SweepSpec {
  std::string parameter;  // alpha, eta, beta2 or n
  std::vector<double> values;
  bool relative_to_alpha_star = false;
};

struct ExperimentConfig {
  GraphDescriptor graph;
  std::optional<Matrix<double>> l_tilde;
  SystemSpec system;
  ParamsSpec params;
  VectorInit z0;
  VectorInit w0;
  std::optional<std::vector<double>> oracle_start;
  StoppingRule<double> stopping;
  OutputSpec outputs;
  double window_fraction = 0.5;
  double alpha_max = 4;
  Index curve_points = 101;
  std::optional<SweepSpec> sweep;
  Json source;  // the document the fields were read from
};

/// Parses JSON text. Syntax errors and schema violations throw Error(InvalidConfig).
Json parse_json(std::string_view text);
Json read_json_file(const std::filesystem::path& path);

/// Replaces the seeds of random init specs: z0 gets `seed`, w0 gets `seed + 1`.
void apply_seed_override(Json& doc, std::uint64_t seed);

ExperimentConfig parse_config(const Json& doc);

/// Hex SHA-256 of the sorted-key pretty form of the document.
std::string config_hash(const Json& doc);

CommGraph build_graph(const ExperimentConfig& cfg);
AgentSystem<double> build_system(const SystemSpec& spec, Index agents);
GaugeMatrix<double> build_gauge(const ExperimentConfig& cfg, const CommGraph& g, Index d);
IterationParams<double> iteration_params(const ParamsSpec& p, double alpha);

/// Materializes an init spec of the given length; `center` is used by
/// random specs marked around_fixed_point.
Vector<double> build_vector(const VectorInit& spec, Index size, const Vector<double>* center, std::string_view what);

}  // namespace dbpi::cli
