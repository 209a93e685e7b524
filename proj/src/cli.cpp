#include "ivgae/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "ivgae/bayesopt.hpp"
#include "ivgae/config_io.hpp"
#include "ivgae/errors.hpp"
#include "ivgae/graphdata.hpp"
#include "ivgae/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ivgae {

std::vector<std::uint64_t> parse_range(const std::string& text) {
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (s.empty() || used != s.size() || s.front() == '-') throw ConfigError("bad number '" + s + "' in '" + text + "'");
    return static_cast<std::uint64_t>(v);
  };
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const auto lo = number(text.substr(0, dots));
    const auto hi = number(text.substr(dots + 2));
    if (hi < lo) throw ConfigError("empty range '" + text + "'");
    return seed_range(lo, hi);
  }
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(number(part));
  if (out.empty()) throw ConfigError("empty list '" + text + "'");
  return out;
}

std::uint64_t fingerprint_files(const std::vector<std::string>& paths) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : paths) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p);
    char buf[1 << 14];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
      for (std::streamsize i = 0; i < in.gcount(); ++i) {
        h ^= static_cast<unsigned char>(buf[i]);
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

namespace {

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

json config_json(const TrainConfig& c) {
  json seeds = json::array();
  for (auto s : c.seeds) seeds.push_back(s);
  return {{"epochs", c.epochs},
          {"lr", c.lr},
          {"lambda_kl", c.kl_weight},
          {"window", c.window},
          {"seeds", seeds},
          {"model", to_string(c.model)},
          {"z_dim", c.encoder.d_z},
          {"d_hidden", c.encoder.d_hidden},
          {"d_p", c.encoder.d_p},
          {"heads", c.encoder.heads},
          {"layers", c.encoder.layers},
          {"p_drop", c.encoder.p_drop},
          {"gamma_init", c.tama.gamma_init},
          {"beta_init", c.tama.beta_init},
          {"eval_seed", c.eval_seed},
          {"pos_weight", c.pos_weight},
          {"persist_memory", c.persist_memory}};
}

void write_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& args,
                    json config, const std::vector<std::string>& inputs) {
  json m;
  m["command"] = command;
  m["argv"] = args;
  m["config"] = std::move(config);
  m["inputs"] = inputs;
  if (!inputs.empty()) m["dataset_fingerprint"] = hex(fingerprint_files(inputs));
  m["version"] = kVersion;
  auto f = open_out(dir / "manifest.json");
  f << m.dump(2) << '\n';
}

// Flags shared by train, tune and sweep.
struct ModelFlags {
  std::string config_path;
  std::size_t window = TrainConfig{}.window;
  std::size_t epochs = TrainConfig{}.epochs;
  std::string seeds = "1000..1009";
  std::string model = "tama";
  double pos_weight = 1.0;
  bool persist_memory = false;
  std::size_t jobs = 1;

  void add(CLI::App& app, std::size_t default_epochs) {
    epochs = default_epochs;
    app.add_option("--config", config_path, "key=value file applied before the flags below");
    app.add_option("--window", window, "history length w")->capture_default_str();
    app.add_option("--epochs", epochs, "training epochs")->capture_default_str();
    app.add_option("--seeds", seeds, "seed range a..b or list a,b,c")->capture_default_str();
    app.add_option("--model", model, "tama | gru | static")->capture_default_str();
    app.add_option("--pos-weight", pos_weight, "BCE weight of positive pairs")->capture_default_str();
    app.add_flag("--persist-memory", persist_memory, "carry momentum memory into the held-out window");
    app.add_option("--jobs", jobs, "worker threads for per-seed runs")->capture_default_str();
  }

  // Defaults, then the config file, then flags given explicitly.
  TrainConfig resolve(const CLI::App& app) const {
    TrainConfig c;
    c.epochs = epochs;
    if (!config_path.empty()) read_config_file(config_path, c);
    if (app.count("--window") || config_path.empty()) c.window = window;
    if (app.count("--epochs") || config_path.empty()) c.epochs = epochs;
    if (app.count("--pos-weight")) c.pos_weight = pos_weight;
    c.seeds = parse_range(seeds);
    c.model = parse_model_kind(model);
    c.persist_memory = persist_memory;
    if (jobs < 1) throw ConfigError("--jobs must be >= 1");
    c.validate();
    return c;
  }
};

struct DataFlags {
  std::string edges;
  std::string features;
  std::string name;

  void add(CLI::App& app) {
    app.add_option("--edges", edges, "edges CSV (year,exporter_iso3,importer_iso3,tonnes)")->required();
    app.add_option("--features", features, "features CSV (year,iso3,gdp,...)")->required();
    app.add_option("--name", name, "dataset label in metrics.csv (default: edges file's directory)");
  }
  std::string label() const {
    if (!name.empty()) return name;
    const auto parent = fs::path(edges).parent_path().filename().string();
    return parent.empty() ? "dataset" : parent;
  }
};

std::size_t metric_window(const TrainConfig& c) { return c.model == ModelKind::static_ivgae ? 1 : c.window; }

void write_metrics(const fs::path& path, const TrainConfig& c, const std::string& dataset,
                   const std::vector<RunResult>& runs) {
  auto f = open_out(path);
  f << "model,dataset,w,seed,auc,ap,final_loss\n";
  for (const auto& r : runs) {
    f << to_string(c.model) << ',' << dataset << ',' << metric_window(c) << ',' << r.seed << ',' << fmt6(r.auc)
      << ',' << fmt6(r.ap) << ',' << fmt6(r.final_loss) << '\n';
  }
}

void write_curves(const fs::path& dir, const std::vector<RunResult>& runs) {
  for (const auto& r : runs) {
    auto f = open_out(dir / ("curves_" + std::to_string(r.seed) + ".csv"));
    f << "epoch,loss,auc,ap\n";
    for (std::size_t e = 0; e < r.loss_curve.size(); ++e) {
      f << e + 1 << ',' << fmt6(r.loss_curve[e]) << ',' << fmt6(r.auc_curve[e]) << ',' << fmt6(r.ap_curve[e]) << '\n';
    }
  }
}

void write_trial_log(const fs::path& path, const StudyResult& study) {
  auto f = open_out(path);
  f << "trial_id,status,lr,z_dim,gamma_init,beta_init,lambda_kl,objective,pruned_at_epoch\n";
  for (const auto& t : study.trials) {
    f << t.id << ',' << to_string(t.status) << ',' << fmt6(t.config.lr) << ',' << t.config.z_dim << ','
      << fmt6(t.config.gamma_init) << ',' << fmt6(t.config.beta_init) << ',' << fmt6(t.config.lambda_kl) << ','
      << (t.objective ? fmt6(*t.objective) : "") << ',' << (t.pruned_at ? std::to_string(*t.pruned_at) : "")
      << '\n';
  }
}

fs::path prepare_out(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal link prediction with a variational graph encoder and momentum aggregator", "ivgae"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // synth
  SynthOptions synth;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic temporal trade network");
  synth_cmd->add_option("--nodes", synth.nodes, "number of countries")->capture_default_str();
  synth_cmd->add_option("--years", synth.years, "number of yearly snapshots")->capture_default_str();
  synth_cmd->add_option("--backbone", synth.p_backbone, "density of the persistent backbone")->capture_default_str();
  synth_cmd->add_option("--churn", synth.p_churn, "yearly edge churn probability")->capture_default_str();
  synth_cmd->add_option("--noise", synth.feature_noise, "feature random-walk step")->capture_default_str();
  synth_cmd->add_option("--first-year", synth.first_year, "year of the first snapshot")->capture_default_str();
  synth_cmd->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "output directory")->required();

  // train
  DataFlags train_data;
  ModelFlags train_flags;
  std::string train_out;
  auto* train_cmd = app.add_subcommand("train", "Train and evaluate one model over a seed range");
  train_data.add(*train_cmd);
  train_flags.add(*train_cmd, TrainConfig{}.epochs);
  train_cmd->add_option("--out", train_out, "output directory")->required();

  // tune
  DataFlags tune_data;
  ModelFlags tune_flags;
  StudyOptions study;
  std::string trial_seeds = "1000..1002";
  std::string control = "none";
  std::uint64_t tune_seed = 0;
  bool no_retrain = false;
  std::string tune_out;
  auto* tune_cmd = app.add_subcommand("tune", "Bayesian hyperparameter search with median pruning");
  tune_data.add(*tune_cmd);
  tune_flags.add(*tune_cmd, study.epochs);
  tune_cmd->add_option("--trials", study.trials, "number of trials")->capture_default_str();
  tune_cmd->add_option("--trial-seeds", trial_seeds, "seeds averaged inside each trial")->capture_default_str();
  tune_cmd->add_option("--checkpoint-every", study.checkpoint_every, "epochs between pruning checkpoints")
      ->capture_default_str();
  tune_cmd->add_option("--control", control, "none | random (also run a random-search control)")
      ->capture_default_str();
  tune_cmd->add_option("--seed", tune_seed, "search seed")->capture_default_str();
  tune_cmd->add_flag("--no-retrain", no_retrain, "skip retraining the best config over --seeds");
  tune_cmd->add_option("--out", tune_out, "output directory")->required();

  // sweep
  std::vector<std::string> sweep_edges, sweep_features, sweep_names;
  ModelFlags sweep_flags;
  std::string windows = "3..8";
  std::string sweep_out;
  auto* sweep_cmd = app.add_subcommand("sweep", "Window-length sweep");
  sweep_cmd->add_option("--edges", sweep_edges, "edges CSV; repeat for several datasets")->required();
  sweep_cmd->add_option("--features", sweep_features, "features CSV, one per --edges")->required();
  sweep_cmd->add_option("--name", sweep_names, "dataset labels, one per --edges");
  sweep_flags.add(*sweep_cmd, TrainConfig{}.epochs);
  sweep_cmd->add_option("--windows", windows, "window lengths a..b or list")->capture_default_str();
  sweep_cmd->add_option("--out", sweep_out, "output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth_cmd) {
      const auto dir = prepare_out(synth_out);
      const auto ds = synth_generate(synth_seed, synth);
      write_dataset(ds, dir / "edges.csv", dir / "features.csv");
      json cfg{{"nodes", synth.nodes},       {"years", synth.years},       {"backbone", synth.p_backbone},
               {"churn", synth.p_churn},     {"noise", synth.feature_noise}, {"first_year", synth.first_year},
               {"seed", synth_seed}};
      write_manifest(dir, "synth", args, cfg, {(dir / "edges.csv").string(), (dir / "features.csv").string()});
      out << "wrote " << ds.size() << " snapshots of " << ds.nodes() << " nodes to " << dir.string() << '\n';
      return 0;
    }

    if (*train_cmd) {
      const TrainConfig config = train_flags.resolve(*train_cmd);
      const auto ds = load_dataset(train_data.edges, train_data.features);
      if (config.model == ModelKind::static_ivgae) {
        err << "note: static model trains on a single snapshot; --window is ignored\n";
      }
      const auto dir = prepare_out(train_out);
      const auto runs = run_seeds(ds, config, train_flags.jobs);
      const auto report = aggregate_runs(to_string(config.model), runs);
      write_metrics(dir / "metrics.csv", config, train_data.label(), runs);
      write_curves(dir, runs);
      write_manifest(dir, "train", args, config_json(config), {train_data.edges, train_data.features});
      out << report.summary() << '\n';
      return 0;
    }

    if (*tune_cmd) {
      TrainConfig base = tune_flags.resolve(*tune_cmd);
      study.epochs = base.epochs;
      study.trial_seeds = parse_range(trial_seeds);
      study.retrain = !no_retrain;
      study.jobs = tune_flags.jobs;
      if (control != "none" && control != "random") throw ConfigError("--control must be none or random");
      if (!study.space.contains(hyper_from(base))) {
        throw ConfigError("base config lies outside the search space");
      }
      const auto ds = load_dataset(tune_data.edges, tune_data.features);
      const auto dir = prepare_out(tune_out);
      const auto result = run_study(ds, base, study, tune_seed, &err);
      write_trial_log(dir / "trial_log.csv", result);
      if (!result.best_trial) throw EvaluationError("no trial completed");
      write_hyper_file(dir / "best.cfg", result.best);
      out << "bo best objective " << fmt6(result.best_objective) << " (trial " << *result.best_trial << ")\n";
      if (control == "random") {
        StudyOptions control_options = study;
        control_options.retrain = false;
        const auto ctrl = random_search_control(ds, base, control_options, tune_seed, &err);
        write_trial_log(dir / "random_trial_log.csv", ctrl);
        if (ctrl.best_trial) out << "random best objective " << fmt6(ctrl.best_objective) << '\n';
      }
      if (result.report) {
        TrainConfig tuned = base;
        apply_hyper(result.best, tuned);
        write_metrics(dir / "metrics.csv", tuned, tune_data.label(), result.retrain_runs);
        out << result.report->summary() << '\n';
      }
      json cfg = config_json(base);
      cfg["trials"] = study.trials;
      cfg["trial_seeds"] = study.trial_seeds;
      cfg["checkpoint_every"] = study.checkpoint_every;
      cfg["pruner_min_trials"] = study.pruner_min_trials;
      cfg["control"] = control;
      cfg["search_seed"] = tune_seed;
      cfg["retrain"] = study.retrain;
      write_manifest(dir, "tune", args, cfg, {tune_data.edges, tune_data.features});
      return 0;
    }

    if (*sweep_cmd) {
      const TrainConfig config = sweep_flags.resolve(*sweep_cmd);
      if (sweep_edges.size() != sweep_features.size()) {
        throw ConfigError("--edges and --features must be given the same number of times");
      }
      if (!sweep_names.empty() && sweep_names.size() != sweep_edges.size()) {
        throw ConfigError("--name must be given once per dataset or not at all");
      }
      std::vector<std::size_t> ws;
      for (auto w : parse_range(windows)) ws.push_back(static_cast<std::size_t>(w));
      const auto dir = prepare_out(sweep_out);
      auto f = open_out(dir / "sweep.csv");
      f << "dataset,w,auc_mean,auc_std,ap_mean,ap_std\n";
      std::map<std::size_t, std::vector<EvalReport>> by_window;
      std::vector<std::string> inputs;
      for (std::size_t d = 0; d < sweep_edges.size(); ++d) {
        DataFlags df{sweep_edges[d], sweep_features[d], sweep_names.empty() ? "" : sweep_names[d]};
        const auto ds = load_dataset(df.edges, df.features);
        inputs.push_back(df.edges);
        inputs.push_back(df.features);
        const auto rows = window_sweep(ds, config, ws, err, sweep_flags.jobs);
        const SweepRow* best = nullptr;
        for (const auto& r : rows) {
          f << df.label() << ',' << r.window << ',' << fmt6(r.report.auc_mean) << ',' << fmt6(r.report.auc_std) << ','
            << fmt6(r.report.ap_mean) << ',' << fmt6(r.report.ap_std) << '\n';
          by_window[r.window].push_back(r.report);
          if (best == nullptr || r.report.auc_mean > best->report.auc_mean) best = &r;
        }
        if (best != nullptr) {
          out << df.label() << ": best window w=" << best->window << " (AUC " << fmt6(best->report.auc_mean) << ")\n";
        }
      }
      if (sweep_edges.size() > 1) {
        for (const auto& [w, reports] : by_window) {
          double am = 0, as = 0, pm = 0, ps = 0;
          for (const auto& r : reports) {
            am += r.auc_mean;
            as += r.auc_std;
            pm += r.ap_mean;
            ps += r.ap_std;
          }
          const double n = static_cast<double>(reports.size());
          f << "average," << w << ',' << fmt6(am / n) << ',' << fmt6(as / n) << ',' << fmt6(pm / n) << ','
            << fmt6(ps / n) << '\n';
        }
      }
      json cfg = config_json(config);
      cfg["windows"] = ws;
      write_manifest(dir, "sweep", args, cfg, inputs);
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace ivgae
