#include "dbpi/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <system_error>

namespace dbpi::io {

std::string format_number(double v)
{
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_atomic(const std::filesystem::path& path, std::string_view content)
{
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot rename " + tmp.string() + ": " + ec.message());
  }
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string trajectory_csv(const Trajectory<double>& traj)
{
  std::string out = "k,residual_norm,consensus_error,dist_to_ref\n";
  for (std::size_t k = 0; k < traj.residual_norm.size(); ++k) {
    out += std::to_string(k);
    out += ',' + format_number(traj.residual_norm[k]);
    out += ',' + format_number(traj.consensus_error[k]);
    out += ',' + format_number(traj.dist_to_ref[k]);
    out += '\n';
  }
  return out;
}

Json states_json(const Trajectory<double>& traj)
{
  Json states = Json::array();
  for (const auto& s : traj.states) {
    Json row = {{"k", s.k}, {"z", to_json(s.z)}};
    if (s.w) row["w"] = to_json(*s.w);
    if (s.w_tilde) row["w_tilde"] = to_json(*s.w_tilde);
    states.push_back(std::move(row));
  }
  return {{"variant", std::string(to_string(traj.variant))},
          {"status", std::string(to_string(traj.status))},
          {"iterations", traj.iterations()},
          {"states", std::move(states)}};
}

std::string eigencurves_csv(const Eigencurves<double>& curves)
{
  std::string out = "alpha,curve_id,re,im\n";
  for (std::size_t i = 0; i < curves.alphas.size(); ++i) {
    const std::string alpha = format_number(curves.alphas[i]);
    for (std::size_t c = 0; c < curves.curves.size(); ++c) {
      const auto v = curves.curves[c][i];
      out += alpha + ',' + std::to_string(c) + ',' + format_number(v.real()) + ',' + format_number(v.imag()) + '\n';
    }
  }
  return out;
}

Json to_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json to_json(std::complex<double> v) { return {{"re", to_json(v.real())}, {"im", to_json(v.imag())}}; }

Json to_json(const Vector<double>& v)
{
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(to_json(v(i)));
  return out;
}

Json to_json(const ComplexList<double>& v)
{
  Json out = Json::array();
  for (const auto& x : v) out.push_back(to_json(x));
  return out;
}

Json to_json(const FixedPointCertificate<double>& c)
{
  return {{"x_star", to_json(c.x_star)},
          {"residual_norm", to_json(c.residual_norm)},
          {"spectral_radius", to_json(c.spectral_radius)},
          {"is_attractor", c.is_attractor}};
}

Json to_json(const Theorem1Report<double>& r)
{
  Json rows = Json::array();
  for (const auto& e : r.entries) {
    rows.push_back({{"lambda", to_json(e.roots.lambda)},
                    {"gamma1", to_json(e.roots.gamma1)},
                    {"gamma2", to_json(e.roots.gamma2)},
                    {"modulus1", to_json(e.roots.magnitude1)},
                    {"modulus2", to_json(e.roots.magnitude2)},
                    {"zero_eigenvalue", e.zero_eigenvalue},
                    {"condition1", e.condition1},
                    {"condition2", e.condition2}});
  }
  return {{"ok", r.ok}, {"margin", to_json(r.margin)}, {"roots", std::move(rows)}};
}

Json to_json(const SemisimpleReport<double>& r)
{
  return {{"ok", r.ok},
          {"expected_multiplicity", r.expected_multiplicity},
          {"unit_multiplicity", r.unit_multiplicity},
          {"max_other_modulus", to_json(r.max_other_magnitude)},
          {"gap", to_json(r.gap)},
          {"principal_angle", to_json(r.principal_angle)},
          {"rank", r.rank},
          {"size", r.size},
          {"eigenvalues", to_json(r.eigenvalues)}};
}

Json to_json(const AlphaStarResult<double>& r)
{
  Json grid = Json::array();
  for (std::size_t i = 0; i < r.grid_alpha.size(); ++i) {
    grid.push_back({{"alpha", to_json(r.grid_alpha[i])}, {"rho", to_json(r.grid_rho[i])}});
  }
  return {{"alpha_star", to_json(r.alpha_star)},
          {"bracket_high", to_json(r.bracket_high)},
          {"saturated", r.saturated},
          {"probes", std::move(grid)}};
}

Json to_json(const DerivativeReport<double>& r)
{
  Json levels = Json::array();
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    levels.push_back({{"h", to_json(r.steps[i])},
                      {"slopes", to_json(r.slopes[i])},
                      {"distance", to_json(r.distances[i])},
                      {"hausdorff", to_json(r.hausdorff[i])}});
  }
  return {{"target", to_json(r.target)},
          {"levels", std::move(levels)},
          {"finest_distance", to_json(r.finest_distance)},
          {"decreasing", r.decreasing},
          {"negative_real_parts", r.negative_real_parts},
          {"mismatch", r.mismatch},
          {"ambiguous", r.ambiguous}};
}

Json to_json(const SpectralReport<double>& r)
{
  Json out = {{"laplacian_eigenvalues", to_json(r.laplacian_eigenvalues)},
              {"root_conditions", to_json(r.roots)},
              {"semisimple", r.semisimple ? to_json(*r.semisimple) : Json(nullptr)},
              {"alpha_status", r.alpha_status},
              {"alpha_star", r.alpha_star ? to_json(*r.alpha_star) : Json(nullptr)},
              {"derivative_check", to_json(r.derivative)}};
  Json curves = {{"count", r.curves.curves.size()},
                 {"unit_curves", r.curves.unit_curves},
                 {"ambiguous", r.curves.ambiguous},
                 {"ambiguous_steps", r.curves.ambiguous_steps}};
  out["eigencurves"] = std::move(curves);
  return out;
}

Json to_json(const RateReport<double>& r)
{
  return {{"empirical_rate", to_json(r.empirical_rate)},
          {"theoretical_rate", to_json(r.theoretical_rate)},
          {"slope", to_json(r.slope)},
          {"r_squared", to_json(r.r_squared)},
          {"window_begin", r.window_begin},
          {"window_end", r.window_end},
          {"usable_points", r.usable_points}};
}

}  // namespace dbpi::io
