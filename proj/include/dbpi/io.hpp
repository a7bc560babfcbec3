#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "dbpi/iteration.hpp"
#include "dbpi/operators.hpp"
#include "dbpi/spectral.hpp"

namespace dbpi::io {

using Json = nlohmann::json;

/// Shortest round-trip decimal form; "nan", "inf" and "-inf" for non-finite values.
std::string format_number(double v);

/// Writes to a sibling temporary file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);

/// Pretty-printed with two-space indent and sorted keys, newline-terminated.
std::string dump(const Json& j);

/// Columns k,residual_norm,consensus_error,dist_to_ref; one row per iterate.
std::string trajectory_csv(const Trajectory<double>& traj);

/// Recorded states with their duals, for full-state export.
Json states_json(const Trajectory<double>& traj);

/// Columns alpha,curve_id,re,im.
std::string eigencurves_csv(const Eigencurves<double>& curves);

Json to_json(double v);
Json to_json(std::complex<double> v);
Json to_json(const Vector<double>& v);
Json to_json(const ComplexList<double>& v);
Json to_json(const FixedPointCertificate<double>& c);
Json to_json(const Theorem1Report<double>& r);
Json to_json(const SemisimpleReport<double>& r);
Json to_json(const AlphaStarResult<double>& r);
Json to_json(const DerivativeReport<double>& r);
Json to_json(const SpectralReport<double>& r);
Json to_json(const RateReport<double>& r);

}  // namespace dbpi::io
