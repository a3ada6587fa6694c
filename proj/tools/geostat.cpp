// Command-line front end: simulate, fit, predict, experiment, summarize.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "geostat/errors.hpp"
#include "geostat/experiments.hpp"
#include "geostat/fullgp.hpp"
#include "geostat/io.hpp"
#include "geostat/metrics.hpp"
#include "geostat/pipeline.hpp"
#include "geostat/simulate.hpp"

namespace fs = std::filesystem;
using namespace geostat;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::optional<std::string> out;
};

fs::path out_dir(const Globals& g, const fs::path& fallback) { return g.out ? fs::path(*g.out) : fallback; }

struct SimulateArgs {
  std::string paper;
  double scale = 1.0;
  double range = 0.5;
  std::optional<std::size_t> n;
  double sigma2 = 1.0;
  double tau2 = 0.1;
  double phi = 3.0;
  double beta0 = 0.0;
  std::string layout = "uniform";
  double holdout = 0.0;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
  sim::SimDesign d;
  if (!a.paper.empty()) {
    d = sim::paper_design(a.paper, a.scale, a.range);
    if (a.n) throw InvalidParams("--n cannot be combined with --paper");
  } else {
    d.n = a.n.value_or(100);
    d.params.sigma2 = a.sigma2;
    d.params.tau2 = a.tau2;
    d.params.phi = a.phi;
    d.beta = {a.beta0};
    if (a.layout == "grid")
      d.layout = sim::Layout::Grid;
    else if (a.layout != "uniform")
      throw InvalidParams("--layout must be 'uniform' or 'grid'");
    d.holdout_fraction = a.holdout;
  }
  d.seed = g.seed.value_or(1);
  const sim::SimResult r = sim::simulate(d);
  const fs::path dir = out_dir(g, ".");

  io::write_file(dir / "data.csv", io::dataset_csv(r.data));
  if (!r.holdout.empty()) {
    io::write_file(dir / "train.csv", io::dataset_csv(r.data.subset(r.train)));
    io::write_file(dir / "holdout.csv", io::dataset_csv(r.data.subset(r.holdout)));
  }
  io::Json truth{{"design", d.tag},
                 {"seed", d.seed},
                 {"n", d.n},
                 {"beta", d.beta},
                 {"sigma2", d.params.sigma2},
                 {"tau2", d.params.tau2},
                 {"phi", d.params.phi},
                 {"family", to_string(d.params.family)},
                 {"effective_range", effective_range(d.params)},
                 {"holdout", r.holdout},
                 {"w", r.w}};
  io::write_file(dir / "truth.json", truth.dump(2) + "\n");
  return 0;
}

int cmd_fit(const Globals& g, const std::string& config_path) {
  io::RunConfig cfg = io::read_config(config_path);
  if (g.seed) cfg.chain.seed = *g.seed;
  if (g.out) cfg.output = *g.out;
  const io::LoadedRun run = io::load_run(cfg);
  auto backend = make_backend(run.model, run.data);
  const mcmc::PosteriorSamples s = mcmc::run_chain(*backend, run.data, run.priors, cfg.chain);

  io::write_file(cfg.output / "samples.csv", io::samples_csv(s));
  io::write_file(cfg.output / "summary.json", io::summary_json(s).dump(2) + "\n");
  io::write_file(cfg.output / "chain_log.jsonl", io::chain_log_jsonl(s));
  if (!s.latent.empty()) io::write_file(cfg.output / "w_samples.csv", io::latent_csv(s));
  if (const auto* nb = dynamic_cast<const nngp::ResponseBackend*>(backend.get()))
    io::write_file(cfg.output / "neighbors.csv", nngp::graph_csv(nb->graph()));

  if (cfg.parity_oracle) {
    // Dense full-GP log target at every retained draw, next to the model's.
    std::string csv = "draw,log_target,oracle_log_target\n";
    for (std::size_t i = 0; i < s.size(); ++i) {
      CovarianceParams p = s.draws[i].params;
      p.family = run.model.family;
      p.nu = run.model.nu;
      const double oracle = run.priors.log_density(p) + fullgp::dense_loglik(run.data, s.draws[i].beta, p);
      csv += std::to_string(i) + "," + io::format_double(s.log_target[i]) + "," + io::format_double(oracle) + "\n";
    }
    io::write_file(cfg.output / "parity.csv", csv);
  }
  return 0;
}

struct PredictArgs {
  std::string config;
  std::string samples;
  std::string targets;
  std::string latent;
  bool dump_draws = false;
};

int cmd_predict(const Globals& g, const PredictArgs& a) {
  io::RunConfig cfg = io::read_config(a.config);
  if (g.out) cfg.output = *g.out;
  const io::LoadedRun run = io::load_run(cfg);
  const fs::path samples_path = a.samples.empty() ? cfg.output / "samples.csv" : fs::path(a.samples);

  mcmc::PosteriorSamples s;
  s.model = to_string(run.model.kind);
  s.draws = io::parse_samples_csv(io::read_file(samples_path));
  for (const ParameterDraw& d : s.draws)
    if (d.beta.size() != run.data.p()) throw LengthMismatch("samples do not match the data's regressors");
  if (run.model.kind == ModelKind::NngpLatent) {
    const fs::path wp = a.latent.empty() ? samples_path.parent_path() / "w_samples.csv" : fs::path(a.latent);
    s.latent = io::parse_latent_csv(io::read_file(wp));
  }

  const io::Table targets = io::parse_table_csv(io::read_file(a.targets));
  if (targets.x.cols() != run.data.p()) throw LengthMismatch("targets carry a different number of regressors");
  const Matrix draws =
      predictive_draws(run.model, run.data, s, targets.locations, targets.x, g.seed.value_or(cfg.chain.seed));

  io::write_file(cfg.output / "predictions.csv", io::predictions_csv(draws));
  if (a.dump_draws) {
    std::string csv;
    for (std::size_t t = 0; t < draws.cols(); ++t) csv += (t ? ",t_" : "t_") + std::to_string(t);
    csv += "\n";
    for (std::size_t i = 0; i < draws.rows(); ++i) {
      for (std::size_t t = 0; t < draws.cols(); ++t) csv += (t ? "," : "") + io::format_double(draws(i, t));
      csv += "\n";
    }
    io::write_file(cfg.output / "predictive_draws.csv", csv);
  }
  io::Json summary{{"model", s.model}, {"targets", targets.locations.size()}, {"draws", draws.rows()}};
  if (targets.y) {
    const metrics::PredictionScore sc = metrics::score(*targets.y, metrics::summarize_predictive(draws));
    summary["rmspe"] = sc.rmspe;
    summary["coverage95"] = sc.coverage95;
  }
  io::write_file(cfg.output / "predict_summary.json", summary.dump(2) + "\n");
  return 0;
}

int cmd_experiment(const Globals& g, experiments::ExperimentOptions opt) {
  opt.seed = g.seed.value_or(1);
  opt.threads = g.threads;
  opt.verbose = true;
  const experiments::ExperimentReport r = experiments::run_experiment(opt);
  experiments::write_report(r, out_dir(g, fs::path("experiment_" + opt.tag)));
  if (r.failed) {
    std::cerr << "error: at least one configuration failed; see report.json\n";
    return 3;
  }
  return 0;
}

int cmd_summarize(const Globals& g, const std::string& samples_path) {
  mcmc::PosteriorSamples s;
  s.draws = io::parse_samples_csv(io::read_file(samples_path));
  io::Json j = io::Json::object();
  for (const mcmc::ParamSummary& p : mcmc::summarize(s))
    j[p.name] = io::Json{{"mean", p.mean}, {"sd", p.sd}, {"q025", p.q025}, {"q50", p.q50}, {"q975", p.q975}};
  const std::string text = j.dump(2) + "\n";
  if (g.out)
    io::write_file(fs::path(*g.out) / "summary.json", text);
  else
    std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian geostatistical models: full GP, low-rank and nearest-neighbor Gaussian processes"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--threads", g.threads, "Worker threads for independent configurations")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset");
  simulate->add_option("--paper", sim_args.paper, "Design tag: fig2, table1, fig5, table2");
  simulate->add_option("--scale", sim_args.scale, "Size factor in (0, 1] for --paper designs");
  simulate->add_option("--range", sim_args.range, "Effective range for the fig5 design");
  simulate->add_option("--n", sim_args.n, "Number of locations");
  simulate->add_option("--sigma2", sim_args.sigma2, "Partial sill");
  simulate->add_option("--tau2", sim_args.tau2, "Nugget");
  simulate->add_option("--phi", sim_args.phi, "Decay");
  simulate->add_option("--beta0", sim_args.beta0, "Intercept");
  simulate->add_option("--layout", sim_args.layout, "uniform or grid");
  simulate->add_option("--holdout", sim_args.holdout, "Holdout fraction");

  std::string config_path;
  auto* fit = app.add_subcommand("fit", "Run MCMC for a model configuration");
  fit->add_option("--config", config_path, "Config JSON")->required();

  PredictArgs pred_args;
  auto* predict = app.add_subcommand("predict", "Posterior predictive draws at new locations");
  predict->add_option("--config", pred_args.config, "Config JSON")->required();
  predict->add_option("--samples", pred_args.samples, "Samples CSV (default: <output>/samples.csv)");
  predict->add_option("--targets", pred_args.targets, "Targets CSV (dataset format, y optional)")->required();
  predict->add_option("--latent", pred_args.latent, "Latent draws CSV for nngp_latent");
  predict->add_flag("--draws", pred_args.dump_draws, "Also write every predictive draw");

  experiments::ExperimentOptions exp_opt;
  std::optional<double> exp_scale;
  auto* experiment = app.add_subcommand("experiment", "Run a scaled reproduction of a study design");
  experiment->add_option("--tag", exp_opt.tag, "fig2, table1, fig5 or table2")->required();
  experiment->add_option("--scale", exp_scale, "Size factor in (0, 1]");
  experiment->add_option("--iterations", exp_opt.iterations, "MCMC iterations");
  experiment->add_option("--burn-in", exp_opt.burn_in, "Burn-in iterations");
  experiment->add_option("--thin", exp_opt.thin, "Thinning interval");
  experiment->add_option("--knots", exp_opt.knots, "fig2 knot counts");
  experiment->add_option("--knot-grid", exp_opt.knot_grid, "table1 knot counts (perfect squares)");
  experiment->add_option("--ranges", exp_opt.ranges, "fig5 effective ranges");
  experiment->add_option("--neighbors", exp_opt.neighbors, "NNGP neighbor count");
  experiment->add_flag("--kl-average", exp_opt.kl_average, "table2: also average KL over posterior draws");

  std::string samples_path;
  auto* summarize = app.add_subcommand("summarize", "Posterior summaries of a samples CSV");
  summarize->add_option("--samples", samples_path, "Samples CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*simulate) return cmd_simulate(g, sim_args);
    if (*fit) return cmd_fit(g, config_path);
    if (*predict) return cmd_predict(g, pred_args);
    if (*experiment) {
      exp_opt.scale = exp_scale;
      return cmd_experiment(g, exp_opt);
    }
    if (*summarize) return cmd_summarize(g, samples_path);
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
