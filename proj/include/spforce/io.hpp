#ifndef SPFORCE_IO_HPP
#define SPFORCE_IO_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spforce/pipeline.hpp"

namespace spforce {

inline constexpr const char* tool_version = "0.1.0";

// ---------------------------------------------------------------------------
// Run datasets
// ---------------------------------------------------------------------------

/// CSV dialect: comma separated, '#'-prefixed comment/metadata lines,
/// mandatory header row with optional bracketed units, '.' decimal point.
RunDataset load_run_csv(const std::string& path);
void write_run_csv(const RunDataset& run, const std::string& path);

// ---------------------------------------------------------------------------
// Generic numeric tables
// ---------------------------------------------------------------------------

struct Table {
  std::vector<std::string> columns;            // unit-normalized names
  std::vector<std::vector<double>> rows;       // SI values
  std::map<std::string, std::string> metadata; // '# key: value' lines

  std::vector<double> column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

Table load_table_csv(const std::string& path,
                     const std::vector<std::string>& required_columns = {});

void write_series_csv(const std::string& path,
                      const std::map<std::string, std::string>& metadata,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows);

/// Two-column optical loss table: photon energy (eV) and eps''; converted to
/// rad/s on load and wrapped with the standard Drude low-frequency tail.
MaterialResponse load_optical_table(const std::string& path);

// ---------------------------------------------------------------------------
// Analysis reports
// ---------------------------------------------------------------------------

nlohmann::json report_to_json(const AnalysisReport& report,
                              const std::map<std::string, std::string>& metadata);

/// Writes the key-value report plus plot-ready sidecar series next to it;
/// returns the sidecar paths. Residual sidecars carry exactly two numeric
/// columns per branch.
std::vector<std::string> write_report(const AnalysisReport& report, const std::string& path,
                                      const std::map<std::string, std::string>& metadata);

nlohmann::json load_report(const std::string& path);

// ---------------------------------------------------------------------------
// Command dispatch
// ---------------------------------------------------------------------------

struct CommandConfig {
  std::string subcommand;  // simulate | calibrate | contact-potential | residuals |
                           // lifshitz | stability
  std::string input_path;
  std::string output_path;
  std::string config_path;       // simulate: JSON simulation config
  std::string v0_table;          // residuals/contact-potential: reduced inputs
  std::string residual_table;
  std::string material = "gold";  // gold | ideal | file:<path>
  std::string v0_form = "both";   // exponential | logarithmic | both
  double temperature = 300.0;
  double x_min = 50e-9, x_max = 3e-6;
  int n_x = 30;
  double sphere_radius = 30.9e-3;
  double mass_effective = 0.46e-3;
  double nu_p = 889.09;
  double beta = 87e-9;
  double ode_abs_tol = 1e-9;
  double quad_rel_tol = 1e-8;
  std::optional<double> x_n;

  void validate() const;
};

SimulationConfig simulation_config_from_json(const nlohmann::json& j);

/// Runs one subcommand; exit status 0 on success, 1 validation failure,
/// 2 numerical failure, 3 I/O failure.
int run_command(const CommandConfig& cfg);

}  // namespace spforce

#endif
