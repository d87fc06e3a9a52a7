#include <CLI11.hpp>

#include "spforce/io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"sphere-plane force experiment analysis"};
  app.require_subcommand(1);

  spforce::CommandConfig cfg;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-o,--output", cfg.output_path, "output file");
    sub->add_option("--ode-abs-tol", cfg.ode_abs_tol, "ODE absolute tolerance (V)");
    sub->add_option("--quad-rel-tol", cfg.quad_rel_tol, "quadrature relative tolerance");
  };

  auto* sim = app.add_subcommand("simulate", "generate a synthetic experimental run");
  sim->add_option("-c,--config", cfg.config_path, "simulation config (JSON)")->required();
  add_common(sim);

  auto* cal = app.add_subcommand("calibrate", "electrostatic calibration of a run");
  cal->add_option("-i,--input", cfg.input_path, "run dataset (CSV)")->required();
  add_common(cal);

  auto* cp = app.add_subcommand("contact-potential",
                                "fit V0 laws and reconstruct the contact potential");
  cp->add_option("--v0-table", cfg.v0_table, "minimizing-potential table (x, V0[, sigma])")
      ->required();
  cp->add_option("--form", cfg.v0_form, "exponential | logarithmic | both");
  cp->add_option("--radius", cfg.sphere_radius, "sphere radius of curvature (m)");
  cp->add_option("--x-n", [&cfg](const std::vector<std::string>& v) {
       cfg.x_n = std::stod(v.at(0));
       return true;
     },
     "boundary-condition distance (m); default: largest tabulated distance");
  add_common(cp);

  auto* res = app.add_subcommand("residuals", "full residual analysis chain");
  res->add_option("-i,--input", cfg.input_path, "run dataset (CSV)");
  res->add_option("--v0-table", cfg.v0_table, "reduced input: minimizing-potential table");
  res->add_option("--residual-table", cfg.residual_table,
                  "reduced input: parabola peak values (x, nu0_sq[, sigma])");
  res->add_option("--radius", cfg.sphere_radius, "sphere radius (m)");
  res->add_option("--m-eff", cfg.mass_effective, "effective mass (kg)");
  res->add_option("--nu-p", cfg.nu_p, "proper frequency (Hz)");
  res->add_option("--material", cfg.material, "gold | ideal | drude:wp,gp | file:<path>");
  res->add_option("-T,--temperature", cfg.temperature, "overlay temperature (K)");
  add_common(res);

  auto* lif = app.add_subcommand("lifshitz", "free energy and frequency-shift sweep");
  lif->add_option("--material", cfg.material, "gold | ideal | drude:wp,gp | file:<path>");
  lif->add_option("-T,--temperature", cfg.temperature, "temperature (K); 0 = zero-T limit");
  lif->add_option("--x-min", cfg.x_min, "smallest gap (m)");
  lif->add_option("--x-max", cfg.x_max, "largest gap (m)");
  lif->add_option("-n,--n-x", cfg.n_x, "number of sweep points");
  lif->add_option("--radius", cfg.sphere_radius, "sphere radius (m)");
  lif->add_option("--m-eff", cfg.mass_effective, "effective mass (kg)");
  add_common(lif);

  auto* st = app.add_subcommand("stability", "progressive-inclusion fit stability scan");
  st->add_option("-i,--input", cfg.input_path, "curvature table (V_pzt, K_el[, sigma_K])")
      ->required();
  st->add_option("--beta", cfg.beta, "PZT actuation coefficient (m/V)");
  add_common(st);

  CLI11_PARSE(app, argc, argv);

  for (auto* sub : {sim, cal, cp, res, lif, st})
    if (sub->parsed()) cfg.subcommand = sub->get_name();

  return spforce::run_command(cfg);
}
