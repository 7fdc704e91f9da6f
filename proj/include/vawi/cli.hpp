#pragma once

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "vawi/io.hpp"
#include "vawi/scenario.hpp"

namespace vawi::cli {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hw, 1u, 8u));
}

inline Grid2D parse_grid_spec(const std::string& spec) {
  int nx, nz, npml;
  double dx, dz;
  if (std::sscanf(spec.c_str(), "%d:%d:%lf:%lf:%d", &nx, &nz, &dx, &dz, &npml) != 5)
    throw std::invalid_argument("--grid expects nx:nz:dx:dz:npml, got '" + spec + "'");
  return make_grid(nx, nz, dx, dz, npml);
}

inline std::vector<std::vector<int>> parse_batches(const std::string& spec) {
  std::vector<std::vector<int>> out;
  std::stringstream groups(spec);
  std::string group;
  while (std::getline(groups, group, ';')) {
    std::vector<int> g;
    std::stringstream items(group);
    std::string item;
    while (std::getline(items, item, ',')) {
      if (item.empty()) continue;
      size_t pos = 0;
      int v = std::stoi(item, &pos);
      if (pos != item.size())
        throw std::invalid_argument("--batches: bad frequency index '" + item + "'");
      g.push_back(v);
    }
    if (!g.empty()) out.push_back(std::move(g));
  }
  return out;
}

// load a model file as squared slowness, converting from velocity if needed
inline RealField load_slowness_model(const fs::path& path) {
  ModelFile mf = read_model_vafld(path);
  if (mf.quantity == "velocity") return velocity_to_slowness_sq(mf.field);
  if (mf.quantity == "slowness_sq" || mf.quantity.empty()) return mf.field;
  throw std::runtime_error(path.string() + ": expected a slowness_sq or velocity model, got quantity '" +
                           mf.quantity + "'");
}

inline RealField load_velocity_model(const fs::path& path) {
  ModelFile mf = read_model_vafld(path);
  if (mf.quantity == "velocity") return mf.field;
  if (mf.quantity == "slowness_sq" || mf.quantity.empty())
    return slowness_sq_to_velocity(mf.field);
  throw std::runtime_error(path.string() + ": expected a slowness_sq or velocity model, got quantity '" +
                           mf.quantity + "'");
}

namespace detail {

// --config <json> supplies defaults for flags the user did not pass; the
// applier runs before parsing, so explicit flags win
class ConfigDefaults {
 public:
  void load(const std::vector<std::string>& args) {
    for (size_t i = 0; i < args.size(); ++i) {
      std::string v;
      if (args[i] == "--config" && i + 1 < args.size()) v = args[i + 1];
      else if (args[i].rfind("--config=", 0) == 0) v = args[i].substr(9);
      else continue;
      std::ifstream in(v);
      if (!in) throw std::runtime_error("cannot open config file " + v);
      cfg_ = json::parse(in);
      if (!cfg_.is_object()) throw std::invalid_argument("config file must hold a JSON object");
    }
  }

  bool has(const std::string& key) const { return cfg_.contains(key); }

  template <class T>
  void apply(const std::string& key, T& target) {
    seen_.push_back(key);
    if (!cfg_.contains(key)) return;
    target = cfg_.at(key).get<T>();
  }

  void finish() const {
    for (const auto& [key, _] : cfg_.items())
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
        throw std::invalid_argument("config file: unknown key '" + key + "'");
  }

 private:
  json cfg_ = json::object();
  std::vector<std::string> seen_;
};

// returns false when parsing already settled the outcome (help or usage error)
inline bool parse(CLI::App& app, const std::vector<std::string>& args, int& code) {
  std::vector<std::string> full = {app.get_name()};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<char*> argv;
  argv.reserve(full.size());
  for (auto& s : full) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    code = app.exit(e) == 0 ? 0 : 1;
    return false;
  }
  return true;
}

}  // namespace detail

inline int cmd_scenario(const std::vector<std::string>& args) {
  CLI::App app{"generate the inclusion benchmark scenario", "vawi scenario"};
  std::string name = "inclusion", outdir = ".", grid_spec, config;
  int threads = 0;
  app.add_option("name", name, "scenario name (inclusion)");
  app.add_option("--outdir", outdir, "output directory");
  app.add_option("--grid", grid_spec, "override grid as nx:nz:dx:dz:npml");
  app.add_option("--config", config, "JSON file with flag defaults");
  app.add_option("--threads", threads, "worker threads (0 = auto)");

  detail::ConfigDefaults cfg;
  cfg.load(args);
  cfg.apply("outdir", outdir);
  cfg.apply("grid", grid_spec);
  cfg.apply("threads", threads);
  cfg.finish();
  int code = 0;
  if (!detail::parse(app, args, code)) return code;

  if (name != "inclusion")
    throw std::invalid_argument("unknown scenario '" + name + "' (available: inclusion)");
  InclusionScenario sc = grid_spec.empty()
                             ? build_inclusion_scenario()
                             : build_inclusion_scenario(parse_grid_spec(grid_spec));
  fs::create_directories(outdir);
  fs::path dir(outdir);
  write_model_vafld(dir / "m_true.vafld", velocity_to_slowness_sq(sc.v_true),
                    "slowness_sq", "s^2/m^2");
  write_model_vafld(dir / "alpha_true.vafld", sc.alpha_true, "attenuation_rate", "1");
  write_model_vafld(dir / "m_init.vafld", velocity_to_slowness_sq(sc.v_init),
                    "slowness_sq", "s^2/m^2");
  write_model_vafld(dir / "alpha_init.vafld", sc.alpha_init, "attenuation_rate", "1");
  write_acquisition_json(dir / "acquisition.json", sc.acq);
  write_frequencies_json(dir / "frequencies.json", sc.frequencies_hz);
  std::printf("wrote scenario '%s' (%dx%d grid) to %s\n", name.c_str(), sc.grid.nx,
              sc.grid.nz, outdir.c_str());
  return 0;
}

inline int cmd_forward(const std::vector<std::string>& args) {
  CLI::App app{"forward-model frequency-domain data", "vawi forward"};
  std::string model, alpha, acquisition, frequencies, out, config;
  double snr = 0.0, pml_vref = 2000.0;
  std::uint64_t seed = 0;
  int threads = 0;
  bool with_noise = false;
  app.add_option("--model", model, "squared-slowness or velocity model (VAFLD)")->required();
  app.add_option("--alpha", alpha, "attenuation model (VAFLD)")->required();
  app.add_option("--acquisition", acquisition, "acquisition JSON")->required();
  app.add_option("--frequencies", frequencies, "frequency list JSON")->required();
  app.add_option("--out", out, "output data file (VDATA)")->required();
  auto* snr_opt = app.add_option("--snr", snr, "add noise at this SNR in dB");
  app.add_option("--seed", seed, "noise seed");
  app.add_option("--pml-vref", pml_vref,
                 "absorbing-layer reference velocity in m/s (0 = derive from model)");
  app.add_option("--config", config, "JSON file with flag defaults");
  app.add_option("--threads", threads, "worker threads (0 = auto)");

  detail::ConfigDefaults cfg;
  cfg.load(args);
  cfg.apply("model", model);
  cfg.apply("alpha", alpha);
  cfg.apply("acquisition", acquisition);
  cfg.apply("frequencies", frequencies);
  cfg.apply("out", out);
  cfg.apply("snr", snr);
  cfg.apply("seed", seed);
  cfg.apply("pml-vref", pml_vref);
  cfg.apply("threads", threads);
  cfg.finish();
  int code = 0;
  if (!detail::parse(app, args, code)) return code;
  with_noise = cfg.has("snr") || snr_opt->count() > 0;

  RealField m = load_slowness_model(model);
  ModelFile af = read_model_vafld(alpha);
  if (!(af.field.grid == m.grid))
    throw std::runtime_error("model and alpha files use different grids");
  Acquisition acq = read_acquisition_json(acquisition);
  std::vector<double> freqs = read_frequencies_json(frequencies);
  ModelingOptions opt;
  opt.pml_ref_velocity = pml_vref;
  SurveyData survey = generate_data(m.grid, m, af.field, acq, freqs, opt,
                                    resolve_threads(threads));
  if (with_noise) add_noise(survey, snr, seed);
  write_survey_vdata(out, survey);
  std::printf("wrote %zu sources x %zu frequencies x %zu receivers to %s\n",
              acq.sources.size(), freqs.size(), acq.receivers.size(), out.c_str());
  return 0;
}

inline int cmd_invert(const std::vector<std::string>& args) {
  CLI::App app{"joint velocity/attenuation inversion", "vawi invert"};
  std::string data, m_init, alpha_init, outdir = ".", reg = "btv", mode = "pr";
  std::string batches_spec, config;
  double eps_b = 1e-3, eps_d = 1e-5, lambda = 1.0, gamma = 0.0, mu = 0.6, nu = 0.4;
  double xi_m = 0.0, xi_alpha = 0.0, pml_vref = 2000.0;
  double vmin = 0.0, vmax = 0.0, alpha_min = 0.0, alpha_max = 0.0;
  int max_iters = 30, threads = 0;
  std::uint64_t seed = 0;
  app.add_option("--data", data, "observed data (VDATA)")->required();
  app.add_option("--m-init", m_init, "initial squared-slowness model")->required();
  app.add_option("--alpha-init", alpha_init, "initial attenuation model")->required();
  app.add_option("--outdir", outdir, "output directory");
  app.add_option("--reg", reg, "regularization: btv or none")
      ->check(CLI::IsMember({"btv", "none"}));
  app.add_option("--mode", mode, "dual update schedule: pr or admm")
      ->check(CLI::IsMember({"pr", "admm"}));
  app.add_option("--max-iters", max_iters, "iteration cap per batch");
  app.add_option("--eps-b", eps_b, "wave-equation residual threshold");
  app.add_option("--eps-d", eps_d, "data residual threshold");
  auto* vmin_opt = app.add_option("--vmin", vmin, "lower velocity bound in m/s");
  auto* vmax_opt = app.add_option("--vmax", vmax, "upper velocity bound in m/s");
  auto* amin_opt = app.add_option("--alpha-min", alpha_min, "lower attenuation bound");
  auto* amax_opt = app.add_option("--alpha-max", alpha_max, "upper attenuation bound");
  app.add_option("--lambda", lambda, "wavefield penalty weight");
  app.add_option("--gamma", gamma, "data penalty weight (0 = tune per batch)");
  app.add_option("--mu", mu, "TV weight on squared slowness");
  app.add_option("--nu", nu, "TV weight on attenuation");
  app.add_option("--xi-m", xi_m, "split penalty for the m step (0 = tune)");
  app.add_option("--xi-alpha", xi_alpha, "split penalty for the alpha step (0 = tune)");
  app.add_option("--batches", batches_spec,
                 "frequency batches, e.g. '0;1,2' (default: all jointly)");
  app.add_option("--pml-vref", pml_vref,
                 "absorbing-layer reference velocity in m/s (0 = derive from model)");
  app.add_option("--config", config, "JSON file with flag defaults");
  app.add_option("--threads", threads, "worker threads (0 = auto)");
  app.add_option("--seed", seed, "unused; accepted for uniformity");

  detail::ConfigDefaults cfg;
  cfg.load(args);
  cfg.apply("data", data);
  cfg.apply("m-init", m_init);
  cfg.apply("alpha-init", alpha_init);
  cfg.apply("outdir", outdir);
  cfg.apply("reg", reg);
  cfg.apply("mode", mode);
  cfg.apply("max-iters", max_iters);
  cfg.apply("eps-b", eps_b);
  cfg.apply("eps-d", eps_d);
  cfg.apply("vmin", vmin);
  cfg.apply("vmax", vmax);
  cfg.apply("alpha-min", alpha_min);
  cfg.apply("alpha-max", alpha_max);
  cfg.apply("lambda", lambda);
  cfg.apply("gamma", gamma);
  cfg.apply("mu", mu);
  cfg.apply("nu", nu);
  cfg.apply("xi-m", xi_m);
  cfg.apply("xi-alpha", xi_alpha);
  cfg.apply("batches", batches_spec);
  cfg.apply("pml-vref", pml_vref);
  cfg.apply("threads", threads);
  cfg.finish();
  int code = 0;
  if (!detail::parse(app, args, code)) return code;

  SurveyData survey = read_survey_vdata(data);
  RealField m0 = load_slowness_model(m_init);
  ModelFile a0 = read_model_vafld(alpha_init);
  if (!(a0.field.grid == m0.grid))
    throw std::runtime_error("initial m and alpha files use different grids");

  InversionSettings st;
  st.penalties = {lambda, gamma, mu, nu, xi_m, xi_alpha};
  st.stop = {eps_b, eps_d, max_iters};
  st.mode = mode == "admm" ? IterationMode::admm : IterationMode::peaceman_rachford;
  st.regularize = reg == "btv";
  st.modeling.pml_ref_velocity = pml_vref;
  st.threads = resolve_threads(threads);
  if (!batches_spec.empty()) st.batches = parse_batches(batches_spec);
  // velocity bounds map to squared-slowness bounds in reverse order
  if (vmax_opt->count() > 0 || cfg.has("vmax")) st.m_bounds.lo = 1.0 / (vmax * vmax);
  if (vmin_opt->count() > 0 || cfg.has("vmin")) st.m_bounds.hi = 1.0 / (vmin * vmin);
  if (amin_opt->count() > 0 || cfg.has("alpha-min")) st.alpha_bounds.lo = alpha_min;
  if (amax_opt->count() > 0 || cfg.has("alpha-max")) st.alpha_bounds.hi = alpha_max;

  InversionResult res = run_inversion(m0.grid, survey, m0, a0.field, st);

  fs::create_directories(outdir);
  fs::path dir(outdir);
  write_model_vafld(dir / "m_final.vafld", res.m, "slowness_sq", "s^2/m^2");
  write_model_vafld(dir / "alpha_final.vafld", res.alpha, "attenuation_rate", "1");
  write_model_vafld(dir / "v_final.vafld", slowness_sq_to_velocity(res.m), "velocity", "m/s");
  for (size_t bi = 0; bi < res.batch_models.size(); ++bi) {
    write_model_vafld(dir / ("m_batch" + std::to_string(bi) + ".vafld"),
                      res.batch_models[bi].first, "slowness_sq", "s^2/m^2");
    write_model_vafld(dir / ("alpha_batch" + std::to_string(bi) + ".vafld"),
                      res.batch_models[bi].second, "attenuation_rate", "1");
  }
  write_history_csv(dir / "history.csv", res.history);
  write_run_summary_json(dir / "summary.json", res);
  for (const auto& r : res.reports)
    std::printf("batch %d: %d iterations, %s (src %.3e, data %.3e)\n", r.batch,
                r.iterations, r.hit_thresholds ? "residual thresholds met" : "iteration cap",
                r.final_src_residual_sq, r.final_data_residual_sq);
  return 0;
}

inline int cmd_scan(const std::vector<std::string>& args) {
  CLI::App app{"FWI vs reconstruction-penalty misfit surfaces", "vawi scan"};
  std::string m_true, alpha_true, m_init, alpha_init, acquisition, frequencies;
  std::string out = "scan.csv", config;
  double lambda = 1.0, gamma = 0.0, pml_vref = 2000.0;
  int na = 21, nb = 21, threads = 0;
  app.add_option("--m-true", m_true, "true squared-slowness model")->required();
  app.add_option("--alpha-true", alpha_true, "true attenuation model")->required();
  app.add_option("--m-init", m_init, "initial squared-slowness model")->required();
  app.add_option("--alpha-init", alpha_init, "initial attenuation model")->required();
  app.add_option("--acquisition", acquisition, "acquisition JSON")->required();
  app.add_option("--frequencies", frequencies, "frequency list JSON")->required();
  app.add_option("--out", out, "output CSV");
  app.add_option("--na", na, "samples along the velocity axis");
  app.add_option("--nb", nb, "samples along the attenuation axis");
  app.add_option("--lambda", lambda, "wavefield penalty weight");
  app.add_option("--gamma", gamma, "data penalty weight (0 = tune once)");
  app.add_option("--pml-vref", pml_vref,
                 "absorbing-layer reference velocity in m/s (0 = derive from model)");
  app.add_option("--config", config, "JSON file with flag defaults");
  app.add_option("--threads", threads, "worker threads (0 = auto)");

  detail::ConfigDefaults cfg;
  cfg.load(args);
  cfg.apply("m-true", m_true);
  cfg.apply("alpha-true", alpha_true);
  cfg.apply("m-init", m_init);
  cfg.apply("alpha-init", alpha_init);
  cfg.apply("acquisition", acquisition);
  cfg.apply("frequencies", frequencies);
  cfg.apply("out", out);
  cfg.apply("na", na);
  cfg.apply("nb", nb);
  cfg.apply("lambda", lambda);
  cfg.apply("gamma", gamma);
  cfg.apply("pml-vref", pml_vref);
  cfg.apply("threads", threads);
  cfg.finish();
  int code = 0;
  if (!detail::parse(app, args, code)) return code;

  RealField mt = load_slowness_model(m_true);
  ModelFile at = read_model_vafld(alpha_true);
  RealField mi = load_slowness_model(m_init);
  ModelFile ai = read_model_vafld(alpha_init);
  if (!(at.field.grid == mt.grid) || !(mi.grid == mt.grid) || !(ai.field.grid == mt.grid))
    throw std::runtime_error("scan model files use different grids");
  Acquisition acq = read_acquisition_json(acquisition);
  std::vector<double> freqs = read_frequencies_json(frequencies);

  ModelingOptions opt;
  opt.pml_ref_velocity = pml_vref;
  int nthreads = resolve_threads(threads);
  SurveyData survey = generate_data(mt.grid, mt, at.field, acq, freqs, opt, nthreads);

  ScanOptions so;
  so.na = na;
  so.nb = nb;
  so.lambda = lambda;
  so.gamma = gamma;
  so.threads = nthreads;
  ScanResult res = misfit_scan(mt.grid, slowness_sq_to_velocity(mt), at.field,
                               slowness_sq_to_velocity(mi), ai.field, survey, so, opt);
  write_scan_csv(out, res);
  std::printf("wrote %dx%d misfit surfaces to %s\n", na, nb, out.c_str());
  return 0;
}

inline int cmd_seismogram(const std::vector<std::string>& args) {
  CLI::App app{"time-domain gather from frequency sweeps", "vawi seismogram"};
  std::string model, alpha, acquisition, out = "traces.csv", config;
  double fdom = 10.0, vred = 2500.0, fmax = 25.0, df = 0.5, pml_vref = 2000.0;
  int source = 0, threads = 0;
  app.add_option("--model", model, "squared-slowness or velocity model (VAFLD)")->required();
  app.add_option("--alpha", alpha, "attenuation model (VAFLD)")->required();
  app.add_option("--acquisition", acquisition, "acquisition JSON")->required();
  app.add_option("--out", out, "output CSV (plus .json sidecar)");
  app.add_option("--source", source, "source index");
  app.add_option("--fdom", fdom, "Ricker dominant frequency in Hz");
  app.add_option("--vred", vred, "reduction velocity in m/s (0 disables)");
  app.add_option("--fmax", fmax, "highest synthesized frequency in Hz");
  app.add_option("--df", df, "frequency spacing in Hz; duration is 1/df");
  app.add_option("--pml-vref", pml_vref,
                 "absorbing-layer reference velocity in m/s (0 = derive from model)");
  app.add_option("--config", config, "JSON file with flag defaults");
  app.add_option("--threads", threads, "worker threads (0 = auto)");

  detail::ConfigDefaults cfg;
  cfg.load(args);
  cfg.apply("model", model);
  cfg.apply("alpha", alpha);
  cfg.apply("acquisition", acquisition);
  cfg.apply("out", out);
  cfg.apply("source", source);
  cfg.apply("fdom", fdom);
  cfg.apply("vred", vred);
  cfg.apply("fmax", fmax);
  cfg.apply("df", df);
  cfg.apply("pml-vref", pml_vref);
  cfg.apply("threads", threads);
  cfg.finish();
  int code = 0;
  if (!detail::parse(app, args, code)) return code;

  RealField m = load_slowness_model(model);
  ModelFile af = read_model_vafld(alpha);
  if (!(af.field.grid == m.grid))
    throw std::runtime_error("model and alpha files use different grids");
  Acquisition acq = read_acquisition_json(acquisition);

  SeismogramConfig sc;
  sc.f_max = fmax;
  sc.df = df;
  sc.f_dom = fdom;
  sc.v_reduction = vred;
  sc.source_index = source;
  sc.threads = resolve_threads(threads);
  ModelingOptions opt;
  opt.pml_ref_velocity = pml_vref;
  SeismogramResult res = synthesize_seismogram(m.grid, m, af.field, acq, sc, opt);
  write_traces_csv(out, res);
  std::printf("wrote %ld traces x %ld samples to %s\n",
              static_cast<long>(res.traces.rows()), static_cast<long>(res.traces.cols()),
              out.c_str());
  return 0;
}

inline void print_usage() {
  std::printf(
      "usage: vawi <command> [options]\n"
      "\n"
      "commands:\n"
      "  scenario    generate the inclusion benchmark (models, acquisition, frequencies)\n"
      "  forward     forward-model frequency-domain data (VDATA)\n"
      "  invert      joint velocity/attenuation inversion\n"
      "  scan        FWI vs reconstruction-penalty misfit surfaces\n"
      "  seismogram  time-domain gather from frequency sweeps\n"
      "\n"
      "run 'vawi <command> --help' for command options\n");
}

// exit-code policy: 0 success, 1 usage/configuration problem, 2 numerical failure
inline int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const SolverError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

inline int run(const std::vector<std::string>& args) {
  if (args.empty() || args[0] == "-h" || args[0] == "--help") {
    print_usage();
    return args.empty() ? 1 : 0;
  }
  const std::string cmd = args[0];
  std::vector<std::string> rest(args.begin() + 1, args.end());
  return guarded([&]() -> int {
    if (cmd == "scenario") return cmd_scenario(rest);
    if (cmd == "forward") return cmd_forward(rest);
    if (cmd == "invert") return cmd_invert(rest);
    if (cmd == "scan") return cmd_scan(rest);
    if (cmd == "seismogram") return cmd_seismogram(rest);
    std::fprintf(stderr, "unknown command '%s'\n", cmd.c_str());
    print_usage();
    return 1;
  });
}

}  // namespace vawi::cli
