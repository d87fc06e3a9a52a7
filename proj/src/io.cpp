#include "spforce/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "spforce/constants.hpp"
#include "spforce/core_models.hpp"
#include "spforce/errors.hpp"

namespace spforce {

namespace k = constants;

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

double unit_factor(const std::string& unit, const std::string& column) {
  static const std::map<std::string, double> factors = {
      {"", 1.0},      {"m", 1.0},    {"mm", 1e-3},  {"um", 1e-6}, {"µm", 1e-6},
      {"nm", 1e-9},   {"V", 1.0},    {"mV", 1e-3},  {"uV", 1e-6}, {"Hz", 1.0},
      {"kHz", 1e3},   {"s", 1.0},    {"min", 60.0}, {"h", 3600.0}, {"F", 1.0},
      {"nF", 1e-9},   {"pF", 1e-12}, {"fF", 1e-15}, {"Hz^2", 1.0}, {"Hz2", 1.0},
      {"Hz^2/V^2", 1.0}, {"J/m^2", 1.0}, {"eV", 1.0}};
  auto it = factors.find(unit);
  if (it == factors.end())
    throw io_error("unit mismatch in column '" + column + "': unknown unit '" + unit + "'");
  return it->second;
}

struct ParsedHeader {
  std::vector<std::string> names;
  std::vector<double> factors;
};

ParsedHeader parse_header(const std::string& line) {
  ParsedHeader h;
  for (const auto& cell : split_csv(line)) {
    std::string name = cell, unit;
    const auto lb = cell.find('[');
    if (lb != std::string::npos) {
      const auto rb = cell.find(']', lb);
      if (rb == std::string::npos) throw io_error("malformed column header: " + cell);
      name = trim(cell.substr(0, lb));
      unit = trim(cell.substr(lb + 1, rb - lb - 1));
    }
    h.names.push_back(name);
    h.factors.push_back(unit_factor(unit, name));
  }
  return h;
}

struct RawFile {
  std::map<std::string, std::string> metadata;
  ParsedHeader header;
  std::vector<std::pair<int, std::vector<std::string>>> rows;  // line number + cells
};

RawFile read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  RawFile f;
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const auto body = trim(t.substr(1));
      const auto colon = body.find(':');
      if (colon != std::string::npos)
        f.metadata[trim(body.substr(0, colon))] = trim(body.substr(colon + 1));
      continue;
    }
    if (!have_header) {
      f.header = parse_header(t);
      have_header = true;
      continue;
    }
    f.rows.emplace_back(lineno, split_csv(t));
  }
  if (!have_header) throw io_error(path + ": missing header row");
  return f;
}

double parse_number(const std::string& cell, const std::string& path, int lineno) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    std::ostringstream os;
    os << path << ":" << lineno << ": malformed numeric field '" << cell << "'";
    throw io_error(os.str());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Run datasets
// ---------------------------------------------------------------------------

RunDataset load_run_csv(const std::string& path) {
  const RawFile f = read_csv_file(path);

  static const std::vector<std::string> expected = {"record", "V_pzt", "V_bias",
                                                    "nu_m",   "t",     "C"};
  for (const auto& name : expected)
    if (std::find(f.header.names.begin(), f.header.names.end(), name) == f.header.names.end())
      throw io_error(path + ": missing required column '" + name + "'");
  for (const auto& name : f.header.names)
    if (std::find(expected.begin(), expected.end(), name) == expected.end())
      throw io_error(path + ": unknown column '" + name + "'");

  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < f.header.names.size(); ++i) idx[f.header.names[i]] = i;

  RunDataset run;
  auto meta = [&](const std::string& key) -> std::optional<std::string> {
    auto it = f.metadata.find(key);
    if (it == f.metadata.end()) return std::nullopt;
    return it->second;
  };
  if (auto v = meta("format_version")) {
    run.metadata.format_version = std::stoi(*v);
    if (run.metadata.format_version != 1)
      throw io_error(path + ": unsupported format_version " + *v);
  } else {
    throw io_error(path + ": missing format_version");
  }
  if (auto v = meta("beta_m_per_V")) run.metadata.beta = std::stod(*v);
  if (auto v = meta("sphere_radius_m")) run.metadata.sphere_radius = std::stod(*v);
  if (auto v = meta("nu_p_hz")) run.metadata.nu_p = std::stod(*v);
  if (auto v = meta("temperature_k")) run.metadata.temperature = std::stod(*v);
  if (auto v = meta("seed")) run.metadata.seed = std::stoull(*v);
  if (auto v = meta("config_hash")) run.metadata.config_hash = *v;

  for (const auto& [lineno, cells] : f.rows) {
    if (cells.size() != f.header.names.size()) {
      std::ostringstream os;
      os << path << ":" << lineno << ": expected " << f.header.names.size() << " fields, got "
         << cells.size();
      throw io_error(os.str());
    }
    const std::string& kind = cells[idx["record"]];
    auto cell = [&](const std::string& name) { return cells[idx[name]]; };
    auto num = [&](const std::string& name) {
      return parse_number(cell(name), path, lineno) * f.header.factors[idx[name]];
    };
    if (kind == "freq" || kind == "ref") {
      FrequencySample s;
      s.v_pzt = num("V_pzt");
      s.nu_m = num("nu_m");
      s.t = num("t");
      if (kind == "freq") {
        if (cell("V_bias").empty()) {
          std::ostringstream os;
          os << path << ":" << lineno << ": freq record without V_bias";
          throw io_error(os.str());
        }
        s.v_bias = num("V_bias");
      }
      run.samples.push_back(s);
    } else if (kind == "cap") {
      CapacitanceSample s;
      s.v_pzt = num("V_pzt");
      s.capacitance = num("C");
      run.capacitance_samples.push_back(s);
    } else {
      std::ostringstream os;
      os << path << ":" << lineno << ": unknown record kind '" << kind << "'";
      throw io_error(os.str());
    }
  }
  return run;
}

void write_run_csv(const RunDataset& run, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << "# sphere-plane run dataset\n";
  out << "# format_version: " << run.metadata.format_version << "\n";
  out << "# tool_version: " << tool_version << "\n";
  out << "# beta_m_per_V: " << format_double(run.metadata.beta) << "\n";
  out << "# sphere_radius_m: " << format_double(run.metadata.sphere_radius) << "\n";
  out << "# nu_p_hz: " << format_double(run.metadata.nu_p) << "\n";
  out << "# temperature_k: " << format_double(run.metadata.temperature) << "\n";
  out << "# seed: " << run.metadata.seed << "\n";
  out << "# config_hash: " << run.metadata.config_hash << "\n";
  out << "record,V_pzt [V],V_bias [V],nu_m [Hz],t [s],C [F]\n";
  for (const auto& s : run.samples) {
    out << (s.v_bias ? "freq" : "ref") << ',' << format_double(s.v_pzt) << ','
        << (s.v_bias ? format_double(*s.v_bias) : "") << ',' << format_double(s.nu_m) << ','
        << format_double(s.t) << ",\n";
  }
  for (const auto& s : run.capacitance_samples)
    out << "cap," << format_double(s.v_pzt) << ",,,," << format_double(s.capacitance) << "\n";
  if (!out) throw io_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

std::vector<double> Table::column(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw io_error("table has no column '" + name + "'");
  const std::size_t i = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[i]);
  return out;
}

bool Table::has_column(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

Table load_table_csv(const std::string& path, const std::vector<std::string>& required_columns) {
  const RawFile f = read_csv_file(path);
  Table t;
  t.columns = f.header.names;
  t.metadata = f.metadata;
  for (const auto& name : required_columns)
    if (!t.has_column(name)) throw io_error(path + ": missing required column '" + name + "'");
  for (const auto& [lineno, cells] : f.rows) {
    if (cells.size() != t.columns.size()) {
      std::ostringstream os;
      os << path << ":" << lineno << ": expected " << t.columns.size() << " fields, got "
         << cells.size();
      throw io_error(os.str());
    }
    std::vector<double> row;
    for (std::size_t i = 0; i < cells.size(); ++i)
      row.push_back(parse_number(cells[i], path, lineno) * f.header.factors[i]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_series_csv(const std::string& path,
                      const std::map<std::string, std::string>& metadata,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << "# tool_version: " << tool_version << "\n";
  for (const auto& [key, val] : metadata) out << "# " << key << ": " << val << "\n";
  for (std::size_t i = 0; i < header.size(); ++i)
    out << header[i] << (i + 1 < header.size() ? "," : "\n");
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i)
      out << format_double(r[i]) << (i + 1 < r.size() ? "," : "\n");
  }
  if (!out) throw io_error("write failed: " + path);
}

MaterialResponse load_optical_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  std::vector<double> omega, eps2;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream is(t);
    double w_ev = 0.0, e2 = 0.0;
    if (!(is >> w_ev >> e2)) {
      std::ostringstream os;
      os << path << ":" << lineno << ": expected two numeric columns";
      throw io_error(os.str());
    }
    omega.push_back(k::ev_to_rad_s(w_ev));
    eps2.push_back(e2);
  }
  if (omega.empty()) throw io_error(path + ": empty optical table");
  const auto gold = MaterialResponse::gold();
  return MaterialResponse::tabulated_loss(std::move(omega), std::move(eps2),
                                          std::get<MaterialResponse::Drude>(gold.kind));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace {

nlohmann::json fit_to_json(const FitResult& f) {
  nlohmann::json j;
  j["names"] = f.names;
  j["values"] = f.values;
  j["sigmas"] = f.sigmas;
  j["covariance"] = f.covariance;
  j["chi2"] = f.chi2;
  j["dof"] = f.dof;
  j["chi2_red"] = f.chi2_red;
  j["converged"] = f.converged;
  j["n_iter"] = f.n_iter;
  return j;
}

nlohmann::json power_to_json(const PowerLawFit& p) {
  nlohmann::json j;
  j["alpha"] = p.model.alpha;
  j["alpha_unit"] = p.model.alpha_unit();
  j["v0_pzt"] = p.model.v0_pzt;
  j["exponent"] = p.model.exponent;
  j["x0"] = p.model.x0;
  j["beta"] = p.model.beta;
  j["fit"] = fit_to_json(p.fit);
  return j;
}

nlohmann::json branch_to_json(const BranchResult& b) {
  nlohmann::json j;
  j["ok"] = b.ok;
  if (!b.ok) {
    j["error"] = b.error;
    return j;
  }
  j["v0_fit"] = fit_to_json(b.v0.fit);
  j["v0_model"] = b.v0.model.describe();
  j["x_n"] = b.x_n;
  j["xn_sensitivity"] = {{"vc_at_xmin_nominal", b.xn_sensitivity.vc_at_xmin_nominal},
                         {"vc_at_xmin_low", b.xn_sensitivity.vc_at_xmin_low},
                         {"vc_at_xmin_high", b.xn_sensitivity.vc_at_xmin_high},
                         {"spread", b.xn_sensitivity.spread()}};
  j["x"] = b.x;
  j["residual_raw"] = b.residual_raw;
  j["residual_corrected"] = b.residual_corrected;
  j["residual_sigma"] = b.residual_sigma;
  j["casimir_fit"] = fit_to_json(b.casimir);
  j["k_cas_sigma_total"] = b.k_cas_sigma_total;
  return j;
}

}  // namespace

nlohmann::json report_to_json(const AnalysisReport& report,
                              const std::map<std::string, std::string>& metadata) {
  nlohmann::json j;
  j["kind"] = "analysis_report";
  j["tool_version"] = tool_version;
  for (const auto& [key, val] : metadata) j["metadata"][key] = val;
  j["tolerances"] = report.tolerances;

  j["calibration"] = nlohmann::json::array();
  for (const auto& c : report.calibration) {
    nlohmann::json ci;
    ci["v_pzt"] = c.v_pzt;
    ci["n_bias"] = c.n_bias;
    ci["nu0_sq"] = c.parabola.parabola.nu0_sq;
    ci["k_el"] = c.parabola.parabola.k_el;
    ci["v0"] = c.parabola.parabola.v0;
    ci["concave"] = c.parabola.concave;
    ci["fit"] = fit_to_json(c.parabola.fit);
    j["calibration"].push_back(ci);
  }

  if (report.capacitance_ok) {
    j["capacitance"]["ok"] = true;
    j["capacitance"]["c0"] = report.capacitance.c0;
    j["capacitance"]["a"] = report.capacitance.a_coeff;
    j["capacitance"]["v0_pzt"] = report.capacitance.v0_pzt;
    j["capacitance"]["theory_a"] = report.capacitance.theory_a;
    j["capacitance"]["theory_discrepancy"] = report.capacitance.theory_discrepancy;
    j["capacitance"]["fit"] = fit_to_json(report.capacitance.fit);
  } else if (!report.capacitance_error.empty()) {
    j["capacitance"] = {{"ok", false}, {"error", report.capacitance_error}};
  }

  if (report.power_fixed_ok)
    j["power_law"]["fixed"] = power_to_json(report.power_fixed);
  else
    j["power_law"]["fixed"] = {{"ok", false}, {"error", report.power_fixed_error}};
  if (report.power_free_ok)
    j["power_law"]["free"] = power_to_json(report.power_free);
  else
    j["power_law"]["free"] = {{"ok", false}, {"error", report.power_free_error}};
  j["effective_mass"] = report.effective_mass;

  auto distances_json = [](const std::vector<DistanceEstimates>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& d : v)
      a.push_back({{"v_pzt", d.v_pzt},
                   {"x_asymptote", d.x_asymptote},
                   {"x_curvature", d.x_curvature}});
    return a;
  };
  j["distances"]["fixed"] = distances_json(report.distances_fixed);
  j["distances"]["free"] = distances_json(report.distances_free);

  j["branches"]["exponential"] = branch_to_json(report.exponential_branch);
  j["branches"]["logarithmic"] = branch_to_json(report.logarithmic_branch);

  j["lifshitz_overlay"]["x"] = report.overlay_x;
  j["lifshitz_overlay"]["nu_sq"] = report.overlay_nu_sq;
  j["lifshitz_overlay"]["m0_prescription"] = "metallic TM (r_TM^2 = 1), TE dropped";
  return j;
}

std::vector<std::string> write_report(const AnalysisReport& report, const std::string& path,
                                      const std::map<std::string, std::string>& metadata) {
  std::string stem = path;
  const auto dot = stem.rfind('.');
  if (dot != std::string::npos && stem.find('/', dot) == std::string::npos)
    stem = stem.substr(0, dot);

  std::vector<std::string> sidecars;
  std::map<std::string, std::string> md = metadata;
  md["tool_version"] = tool_version;

  auto emit = [&](const std::string& suffix, const std::vector<std::string>& header,
                  const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return;
    const std::string p = stem + "." + suffix + ".csv";
    write_series_csv(p, md, header, rows);
    sidecars.push_back(p);
  };

  // Calibration curvature versus PZT voltage.
  {
    std::vector<std::vector<double>> rows;
    for (const auto& c : report.calibration)
      rows.push_back({c.v_pzt, c.parabola.parabola.k_el, c.parabola.fit.sigma("k_el"),
                      c.parabola.parabola.v0, c.parabola.parabola.nu0_sq});
    emit("calibration_curvature",
         {"V_pzt [V]", "K_el [Hz^2/V^2]", "sigma_K [Hz^2/V^2]", "V0 [V]", "nu0_sq [Hz^2]"},
         rows);
  }
  // Distance cross-checks for both exponent conventions.
  for (const auto& [name, vec] :
       {std::pair{"distance_consistency_fixed", &report.distances_fixed},
        std::pair{"distance_consistency_free", &report.distances_free}}) {
    std::vector<std::vector<double>> rows;
    for (const auto& d : *vec) rows.push_back({d.x_asymptote, d.x_curvature});
    emit(name, {"x_asymptote [m]", "x_curvature [m]"}, rows);
  }
  // Per-branch contact potential and residual series.
  for (const auto& [name, br] :
       {std::pair{"exponential", &report.exponential_branch},
        std::pair{"logarithmic", &report.logarithmic_branch}}) {
    if (!br->ok) continue;
    std::vector<std::vector<double>> vc_rows, res_rows, raw_rows;
    for (double xi : br->x) {
      const auto p = br->vc.eval(xi);
      vc_rows.push_back({xi, br->v0.model.value(xi), p.vc});
    }
    for (std::size_t i = 0; i < br->x.size(); ++i) {
      res_rows.push_back({br->x[i], br->residual_corrected[i]});
      raw_rows.push_back({br->x[i], br->residual_raw[i]});
    }
    emit(std::string("contact_potential_") + name, {"x [m]", "V0_fit [V]", "Vc [V]"}, vc_rows);
    emit(std::string("residuals_") + name, {"x [m]", "nu_sq [Hz^2]"}, res_rows);
    if (name == std::string("exponential"))
      emit("residuals_raw", {"x [m]", "nu_sq [Hz^2]"}, raw_rows);
  }
  // Lifshitz prediction overlay.
  {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < report.overlay_x.size(); ++i)
      rows.push_back({report.overlay_x[i], report.overlay_nu_sq[i]});
    emit("lifshitz_overlay", {"x [m]", "nu_sq [Hz^2]"}, rows);
  }

  nlohmann::json j = report_to_json(report, metadata);
  j["sidecars"] = sidecars;
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw io_error("write failed: " + path);
  return sidecars;
}

nlohmann::json load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw io_error(path + ": invalid report JSON: " + e.what());
  }
  return j;
}

// ---------------------------------------------------------------------------
// Command dispatch
// ---------------------------------------------------------------------------

void CommandConfig::validate() const {
  static const std::vector<std::string> known = {"simulate", "calibrate", "contact-potential",
                                                 "residuals", "lifshitz", "stability"};
  if (std::find(known.begin(), known.end(), subcommand) == known.end())
    throw std::invalid_argument("unknown subcommand '" + subcommand + "'");
  if (!(x_min > 0.0) || !(x_max > x_min))
    throw std::invalid_argument("need 0 < x_min < x_max");
  if (n_x < 1) throw std::invalid_argument("n_x must be >= 1");
  if (temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
  if (v0_form != "both" && v0_form != "exponential" && v0_form != "logarithmic")
    throw std::invalid_argument("v0_form must be exponential, logarithmic or both");
}

namespace {

ContactPotentialModel contact_model_from_json(const nlohmann::json& j) {
  const std::string form = j.at("form").get<std::string>();
  if (form == "constant") return ContactPotentialModel::constant(j.at("params").at(0));
  if (form == "exponential")
    return ContactPotentialModel::exponential(j.at("params").at(0), j.at("params").at(1),
                                              j.at("params").at(2));
  if (form == "logarithmic")
    return ContactPotentialModel::logarithmic(j.at("params").at(0), j.at("params").at(1),
                                              j.at("params").at(2));
  if (form == "tabulated")
    return ContactPotentialModel::tabulated(j.at("x").get<std::vector<double>>(),
                                            j.at("v").get<std::vector<double>>());
  throw std::invalid_argument("unknown contact model form '" + form + "'");
}

MaterialResponse material_from_spec(const std::string& spec) {
  if (spec == "gold") return MaterialResponse::gold();
  if (spec == "ideal") return MaterialResponse::perfect_conductor();
  if (spec.rfind("file:", 0) == 0) return load_optical_table(spec.substr(5));
  if (spec.rfind("drude:", 0) == 0) {
    const auto body = spec.substr(6);
    const auto comma = body.find(',');
    if (comma == std::string::npos)
      throw std::invalid_argument("drude material spec needs omega_p_ev,gamma_p_ev");
    return MaterialResponse::drude_ev(std::stod(body.substr(0, comma)),
                                      std::stod(body.substr(comma + 1)));
  }
  throw std::invalid_argument("unknown material '" + spec + "'");
}

std::string command_hash(const CommandConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << c.subcommand << '|' << c.input_path << '|' << c.config_path << '|' << c.v0_table << '|'
     << c.residual_table << '|' << c.material << '|' << c.v0_form << '|' << c.temperature << '|'
     << c.x_min << '|' << c.x_max << '|' << c.n_x << '|' << c.sphere_radius << '|'
     << c.mass_effective << '|' << c.nu_p << '|' << c.beta << '|' << c.ode_abs_tol << '|'
     << c.quad_rel_tol << '|' << (c.x_n ? *c.x_n : 0.0);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(os.str())));
  return buf;
}

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g;
  if (n == 1) {
    g.push_back(lo);
    return g;
  }
  for (int i = 0; i < n; ++i)
    g.push_back(lo * std::pow(hi / lo, i / static_cast<double>(n - 1)));
  return g;
}

std::vector<WeightedPoint> table_points(const Table& t, const std::string& xcol,
                                        const std::string& ycol, const std::string& scol) {
  std::vector<WeightedPoint> pts;
  const auto x = t.column(xcol);
  const auto y = t.column(ycol);
  std::vector<double> s;
  if (t.has_column(scol)) s = t.column(scol);
  for (std::size_t i = 0; i < x.size(); ++i)
    pts.push_back({x[i], y[i], s.empty() ? 0.0 : s[i]});
  return pts;
}

void cmd_simulate(const CommandConfig& cfg) {
  if (cfg.config_path.empty() || cfg.output_path.empty())
    throw std::invalid_argument("simulate requires --config and --output");
  std::ifstream in(cfg.config_path);
  if (!in) throw io_error("cannot open " + cfg.config_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw io_error(cfg.config_path + ": invalid JSON: " + e.what());
  }
  const SimulationConfig sim = simulation_config_from_json(j);
  const RunDataset run = simulate_run(sim);
  write_run_csv(run, cfg.output_path);
  std::cout << "wrote " << cfg.output_path << " (" << run.samples.size() << " rows, seed "
            << sim.seed << ", hash " << run.metadata.config_hash << ")\n";
}

void cmd_calibrate(const CommandConfig& cfg) {
  if (cfg.input_path.empty() || cfg.output_path.empty())
    throw std::invalid_argument("calibrate requires --input and --output");
  const RunDataset run = load_run_csv(cfg.input_path);
  AnalysisOptions opts;
  opts.ode.abs_tol = cfg.ode_abs_tol;
  opts.quad_rel_tol = cfg.quad_rel_tol;
  opts.lifshitz_overlay = false;
  const AnalysisReport rep = analyze_run(run, opts);

  std::map<std::string, std::string> md = {
      {"config_hash", command_hash(cfg)},
      {"input", cfg.input_path},
      {"seed", std::to_string(run.metadata.seed)},
  };
  write_report(rep, cfg.output_path, md);

  // Stability trajectories on the extracted curvature points.
  std::vector<WeightedPoint> kel_pts;
  for (const auto& c : rep.calibration) {
    double sig = c.parabola.fit.sigma("k_el");
    if (!(sig > 0.0) || !std::isfinite(sig)) sig = 0.04 * c.parabola.parabola.k_el;
    kel_pts.push_back({c.v_pzt, c.parabola.parabola.k_el, sig});
  }
  std::string stem = cfg.output_path;
  const auto dot = stem.rfind('.');
  if (dot != std::string::npos) stem = stem.substr(0, dot);
  for (const auto& [name, mode] :
       {std::pair{"stability_fixed", ExponentMode::fixed_minus_2},
        std::pair{"stability_free", ExponentMode::free}}) {
    const StabilityScan scan = stability_scan(kel_pts, mode, run.metadata.beta);
    std::vector<std::vector<double>> rows;
    for (const auto& s : scan.steps) {
      if (!s.ok) {
        rows.push_back({static_cast<double>(s.n_points), 0, 0, 0, 0, 0});
        continue;
      }
      rows.push_back({static_cast<double>(s.n_points), 1, s.fit.model.alpha, s.fit.model.x0,
                      s.fit.model.exponent, s.fit.fit.chi2_red});
    }
    write_series_csv(stem + "." + name + ".csv", md,
                     {"n_points", "ok", "alpha", "x0 [m]", "e", "chi2_red"}, rows);
  }
  std::cout << "wrote " << cfg.output_path << "\n";
}

void cmd_contact_potential(const CommandConfig& cfg) {
  if (cfg.v0_table.empty() || cfg.output_path.empty())
    throw std::invalid_argument("contact-potential requires --v0-table and --output");
  const Table t = load_table_csv(cfg.v0_table, {"x", "V0"});
  auto pts = table_points(t, "x", "V0", "sigma");
  for (auto& p : pts)
    if (!(p.sigma > 0.0)) p.sigma = 1e-3;

  double x_lo = pts.front().x, x_hi = pts.front().x;
  for (const auto& p : pts) {
    x_lo = std::min(x_lo, p.x);
    x_hi = std::max(x_hi, p.x);
  }
  const double x_n = cfg.x_n.value_or(x_hi);

  OdeOptions ode;
  ode.abs_tol = cfg.ode_abs_tol;

  nlohmann::json j;
  j["kind"] = "contact_potential_report";
  j["tool_version"] = tool_version;
  j["metadata"]["config_hash"] = command_hash(cfg);
  j["metadata"]["input"] = cfg.v0_table;
  j["x_n"] = x_n;

  std::map<std::string, std::string> md = {{"config_hash", command_hash(cfg)},
                                           {"input", cfg.v0_table},
                                           {"seed", "0"}};
  std::string stem = cfg.output_path;
  const auto dot = stem.rfind('.');
  if (dot != std::string::npos) stem = stem.substr(0, dot);

  for (const auto& [name, form] :
       {std::pair{"exponential", V0Form::exponential},
        std::pair{"logarithmic", V0Form::logarithmic}}) {
    if (cfg.v0_form != "both" && cfg.v0_form != name) continue;
    nlohmann::json bj;
    try {
      const V0FitResult vfit = fit_v0_model(pts, form);
      const auto sol = solve_vc_ode(vfit.model, cfg.sphere_radius,
                                    BoundaryCondition::asymptotic(vfit.model, x_n), x_lo, ode);
      const auto sens = assess_xn_sensitivity(vfit.model, cfg.sphere_radius, x_n, x_lo, ode);
      bj["ok"] = true;
      bj["v0_fit"] = fit_to_json(vfit.fit);
      bj["v0_model"] = vfit.model.describe();
      bj["xn_sensitivity"] = {{"vc_at_xmin_nominal", sens.vc_at_xmin_nominal},
                              {"vc_at_xmin_low", sens.vc_at_xmin_low},
                              {"vc_at_xmin_high", sens.vc_at_xmin_high},
                              {"spread", sens.spread()}};
      std::vector<std::vector<double>> rows;
      for (double xi : log_grid(x_lo, x_n, 200)) {
        const auto p = sol.eval(xi);
        rows.push_back({xi, vfit.model.value(xi), p.vc, p.vc1});
      }
      write_series_csv(stem + ".vc_" + name + ".csv", md,
                       {"x [m]", "V0_fit [V]", "Vc [V]", "dVc_dx"}, rows);
    } catch (const std::exception& e) {
      bj["ok"] = false;
      bj["error"] = e.what();
    }
    j["branches"][name] = bj;
  }

  std::ofstream out(cfg.output_path);
  if (!out) throw io_error("cannot write " + cfg.output_path);
  out << j.dump(2) << "\n";
  std::cout << "wrote " << cfg.output_path << "\n";
}

void cmd_residuals(const CommandConfig& cfg) {
  if (cfg.output_path.empty()) throw std::invalid_argument("residuals requires --output");
  AnalysisOptions opts;
  opts.ode.abs_tol = cfg.ode_abs_tol;
  opts.quad_rel_tol = cfg.quad_rel_tol;
  opts.overlay_material = material_from_spec(cfg.material);
  opts.overlay_temperature = cfg.temperature;

  std::map<std::string, std::string> md = {{"config_hash", command_hash(cfg)}};
  AnalysisReport rep;
  if (!cfg.input_path.empty()) {
    const RunDataset run = load_run_csv(cfg.input_path);
    md["input"] = cfg.input_path;
    md["seed"] = std::to_string(run.metadata.seed);
    rep = analyze_run(run, opts);
  } else {
    if (cfg.v0_table.empty() || cfg.residual_table.empty())
      throw std::invalid_argument(
          "residuals requires --input, or --v0-table with --residual-table");
    const Table vt = load_table_csv(cfg.v0_table, {"x", "V0"});
    const Table rt = load_table_csv(cfg.residual_table, {"x", "nu0_sq"});
    auto v0_pts = table_points(vt, "x", "V0", "sigma");
    auto res_pts = table_points(rt, "x", "nu0_sq", "sigma");
    for (auto& p : v0_pts)
      if (!(p.sigma > 0.0)) p.sigma = 1e-3;
    for (auto& p : res_pts)
      if (!(p.sigma > 0.0)) p.sigma = 1.0;
    Geometry g;
    g.sphere_radius = cfg.sphere_radius;
    md["input"] = cfg.v0_table + "," + cfg.residual_table;
    md["seed"] = "0";
    rep = analyze_reduced(v0_pts, res_pts, g, cfg.mass_effective, cfg.nu_p, opts);
  }
  write_report(rep, cfg.output_path, md);
  std::cout << "wrote " << cfg.output_path << "\n";
}

void cmd_lifshitz(const CommandConfig& cfg) {
  if (cfg.output_path.empty()) throw std::invalid_argument("lifshitz requires --output");
  const MaterialResponse mat = material_from_spec(cfg.material);
  LifshitzConfig lc;
  lc.temperature = cfg.temperature;
  lc.quad_rel_tol = cfg.quad_rel_tol;
  Geometry g;
  g.sphere_radius = cfg.sphere_radius;
  Cantilever cant;
  cant.mass_effective = cfg.mass_effective;

  if (!pfa_gap_valid(cfg.x_max, cfg.sphere_radius))
    std::cerr << "warning: x_max/R = " << cfg.x_max / cfg.sphere_radius
              << " exceeds the proximity-force regime (x/R <= 1e-2)\n";

  std::vector<std::vector<double>> rows;
  for (double x : log_grid(cfg.x_min, cfg.x_max, cfg.n_x)) {
    const double e_pp = plane_plane_free_energy(x, mat, lc);
    const double shift = sphere_plane_casimir_shift(x, g, cant, mat, lc);
    rows.push_back({x, e_pp, shift});
  }
  write_series_csv(cfg.output_path,
                   {{"config_hash", command_hash(cfg)},
                    {"material", cfg.material},
                    {"temperature_k", format_double(cfg.temperature)},
                    {"sphere_radius_m", format_double(cfg.sphere_radius)},
                    {"mass_effective_kg", format_double(cfg.mass_effective)},
                    // The zero-frequency term is physically contested; record
                    // the convention used for real metals.
                    {"m0_prescription", "metallic TM (r_TM^2 = 1), TE dropped"},
                    {"seed", "0"}},
                   {"x [m]", "E_pp [J/m^2]", "dnu_sq_cas [Hz^2]"}, rows);
  std::cout << "wrote " << cfg.output_path << "\n";
}

void cmd_stability(const CommandConfig& cfg) {
  if (cfg.input_path.empty() || cfg.output_path.empty())
    throw std::invalid_argument("stability requires --input and --output");
  const Table t = load_table_csv(cfg.input_path, {"V_pzt", "K_el"});
  auto pts = table_points(t, "V_pzt", "K_el", "sigma_K");
  for (auto& p : pts)
    if (!(p.sigma > 0.0)) p.sigma = 0.04 * p.y;  // documented default

  std::string stem = cfg.output_path;
  const auto dot = stem.rfind('.');
  if (dot != std::string::npos) stem = stem.substr(0, dot);
  const std::map<std::string, std::string> md = {{"config_hash", command_hash(cfg)},
                                                 {"input", cfg.input_path},
                                                 {"seed", "0"}};
  for (const auto& [name, mode] :
       {std::pair{"fixed", ExponentMode::fixed_minus_2}, std::pair{"free", ExponentMode::free}}) {
    const StabilityScan scan = stability_scan(pts, mode, cfg.beta);
    std::vector<std::vector<double>> rows;
    for (const auto& s : scan.steps) {
      if (!s.ok) {
        rows.push_back({static_cast<double>(s.n_points), 0, 0, 0, 0, 0, 0});
        continue;
      }
      rows.push_back({static_cast<double>(s.n_points), 1, s.fit.model.alpha,
                      s.fit.fit.sigma("alpha"), s.fit.model.x0, s.fit.model.exponent,
                      s.fit.fit.chi2_red});
    }
    write_series_csv(stem + ".stability_" + name + ".csv", md,
                     {"n_points", "ok", "alpha", "sigma_alpha", "x0 [m]", "e", "chi2_red"},
                     rows);
  }
  std::cout << "wrote " << stem << ".stability_{fixed,free}.csv\n";
}

}  // namespace

SimulationConfig simulation_config_from_json(const nlohmann::json& j) {
  SimulationConfig c;
  const auto& g = j.at("geometry");
  c.geometry.sphere_radius = g.at("sphere_radius");
  c.geometry.mirror_diameter = g.value("mirror_diameter", 8.0e-3);
  c.geometry.roughness_var_sphere = g.value("roughness_var_sphere", 0.0);
  c.geometry.roughness_var_plane = g.value("roughness_var_plane", 0.0);

  const auto& cl = j.at("cantilever");
  c.cantilever.length = cl.value("length", 22.56e-3);
  c.cantilever.width = cl.value("width", 9.93e-3);
  c.cantilever.thickness = cl.value("thickness", 330e-6);
  c.cantilever.density = cl.value("density", 2.3e3);
  c.cantilever.youngs_modulus = cl.value("youngs_modulus", 1.69e11);
  c.cantilever.mass_physical = cl.value("mass_physical", 1.72e-4);
  c.cantilever.mass_effective = cl.at("mass_effective");
  c.cantilever.proper_frequency = cl.at("proper_frequency");
  c.cantilever.stiffness = cl.value("stiffness", 5.4e3);

  if (j.contains("contact_model")) {
    c.vc_model = contact_model_from_json(j.at("contact_model"));
    const std::string role = j.at("contact_model").value("role", "contact_potential");
    if (role == "minimizing_potential")
      c.vc_role = ContactModelRole::minimizing_potential;
    else if (role == "contact_potential")
      c.vc_role = ContactModelRole::contact_potential;
    else
      throw std::invalid_argument("unknown contact model role '" + role + "'");
  }

  c.include_casimir = j.value("include_casimir", false);
  c.ideal_casimir = j.value("ideal_casimir", true);
  if (j.contains("material")) c.material = material_from_spec(j.at("material").get<std::string>());
  if (j.contains("temperature")) c.lifshitz.temperature = j.at("temperature");

  const auto& gr = j.at("grid");
  c.grid.beta = gr.at("beta");
  c.grid.v0_pzt = gr.at("v0_pzt");
  if (gr.contains("v_pzt")) {
    c.grid.v_pzt = gr.at("v_pzt").get<std::vector<double>>();
  } else {
    const double x0 = gr.at("x_min"), x1 = gr.at("x_max");
    const int n = gr.at("n");
    for (double x : log_grid(x0, x1, n)) c.grid.v_pzt.push_back(c.grid.v0_pzt - x / c.grid.beta);
  }

  if (j.contains("bias")) {
    c.bias.n_bias = j.at("bias").value("n_bias", 9);
    c.bias.target_shift_hz = j.at("bias").value("target_shift_hz", 1.0);
  }
  if (j.contains("noise")) {
    c.noise.freq_sigma_hz = j.at("noise").value("freq_sigma_hz", 0.0);
    c.noise.kel_rel_sigma = j.at("noise").value("kel_rel_sigma", 0.0);
  }
  if (j.contains("drift")) {
    c.drift.amplitude = j.at("drift").value("amplitude", 0.0);
    c.drift.timescale = j.at("drift").value("timescale", 12.0 * 3600.0);
  }
  if (j.contains("anomaly_exponent") && !j.at("anomaly_exponent").is_null())
    c.anomaly_exponent = j.at("anomaly_exponent").get<double>();
  c.stray_capacitance = j.value("stray_capacitance", 175.7e-12);
  c.cap_sigma = j.value("cap_sigma", 0.0);
  c.sample_interval = j.value("sample_interval", 30.0);
  c.seed = j.value("seed", 0ull);
  return c;
}

int run_command(const CommandConfig& cfg) {
  try {
    cfg.validate();
    if (cfg.subcommand == "simulate")
      cmd_simulate(cfg);
    else if (cfg.subcommand == "calibrate")
      cmd_calibrate(cfg);
    else if (cfg.subcommand == "contact-potential")
      cmd_contact_potential(cfg);
    else if (cfg.subcommand == "residuals")
      cmd_residuals(cfg);
    else if (cfg.subcommand == "lifshitz")
      cmd_lifshitz(cfg);
    else if (cfg.subcommand == "stability")
      cmd_stability(cfg);
    return 0;
  } catch (const io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace spforce
