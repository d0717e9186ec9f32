#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "minigcn/bench.hpp"
#include "minigcn/classmap.hpp"
#include "minigcn/config.hpp"
#include "minigcn/data.hpp"
#include "minigcn/errors.hpp"
#include "minigcn/metrics.hpp"
#include "minigcn/model.hpp"
#include "minigcn/sampler.hpp"
#include "minigcn/train.hpp"

namespace minigcn::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_file;
};

RunConfig resolve(const Common& common, const std::vector<std::string>& extras) {
  std::optional<fs::path> file;
  if (!common.config_file.empty()) file = common.config_file;
  std::optional<std::string> seed_env;
  if (const char* s = std::getenv("MGK_SEED")) seed_env = s;
  for (const auto& x : extras) {
    if (x.rfind("--", 0) != 0 || x.find('=') == std::string::npos) {
      throw ConfigError("unexpected argument '" + x + "' (overrides look like --section.key=value)");
    }
  }
  return resolve_run_config(file, extras, seed_env);
}

const fs::path& require(const fs::path& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string("missing ") + key + " (set it in the config or with --" + key + "=...)");
  return p;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, mode);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  return os;
}

Dataset load_dataset(RunConfig& cfg) {
  const SpectralCube cube = load_cube(require(cfg.paths.cube, "paths.cube"));
  const LabelGrid labels = load_labels(require(cfg.paths.labels, "paths.labels"));
  const SplitSpec split = load_split(require(cfg.paths.split, "paths.split"));
  Dataset d = make_dataset(cube, labels, split);
  cfg.model.input_bands = d.cube.bands;
  cfg.model.classes = d.classes;
  return d;
}

Model load_compatible_model(const RunConfig& cfg, const Dataset& d) {
  Model m = load_model(require(cfg.paths.checkpoint, "paths.checkpoint"));
  if (m.config.classes != d.classes) {
    throw ConfigError("checkpoint has " + std::to_string(m.config.classes) + " classes but the dataset has " +
                      std::to_string(d.classes));
  }
  if (m.config.input_bands != d.cube.bands) {
    throw ConfigError("checkpoint expects " + std::to_string(m.config.input_bands) + " bands but the cube has " +
                      std::to_string(d.cube.bands));
  }
  return m;
}

int cmd_train(RunConfig cfg, Index log_every, std::ostream& out) {
  const Dataset d = load_dataset(cfg);
  const fs::path checkpoint = require(cfg.paths.checkpoint, "paths.checkpoint");
  std::ofstream log = open_out(require(cfg.paths.output, "paths.output"));
  write_training_log_header(log);
  const TrainResult r = train(cfg.model, cfg.train, d, [&](const EpochLog& e) {
    write_training_log_row(log, e);
    log.flush();
    if (log_every > 0 && ((e.epoch + 1) % log_every == 0 || e.epoch + 1 == cfg.train.epochs)) {
      out << "epoch " << e.epoch + 1 << "/" << cfg.train.epochs << "  lr " << e.lr << "  loss " << e.loss << "  objective " << e.objective
          << "  train OA " << std::fixed << std::setprecision(2) << e.train_oa << "%" << std::defaultfloat
          << std::setprecision(6) << '\n';
    }
  });
  if (checkpoint.has_parent_path()) fs::create_directories(checkpoint.parent_path());
  save_model(checkpoint, r.model);
  out << "wrote " << checkpoint.string() << " (" << to_string(cfg.model.architecture) << ", "
      << trainable_count(r.model) << " parameters)\n";
  return 0;
}

int cmd_eval(RunConfig cfg, const std::string& side, std::ostream& out) {
  const Dataset d = load_dataset(cfg);
  Model model = load_compatible_model(cfg, d);
  const auto& pixels = side == "train" ? d.split.train : d.split.test;
  const ConfusionMatrix cm = evaluate(model, d, pixels, cfg.train);
  const fs::path report = require(cfg.paths.output, "paths.output");
  {
    std::ofstream os = open_out(report);
    write_report_csv(os, cm);
  }
  fs::path text = report;
  text.replace_extension(".txt");
  {
    std::ofstream os = open_out(text);
    write_report_text(os, cm);
  }
  write_report_text(out, cm);
  return 0;
}

int cmd_predict_map(RunConfig cfg, bool ground_truth, bool all_pixels, std::ostream& out) {
  const Dataset d = load_dataset(cfg);
  ClassMap map{d.labels.height, d.labels.width, std::vector<int>(d.labels.labels.size(), 0)};
  if (ground_truth) {
    for (std::size_t i = 0; i < map.ids.size(); ++i) map.ids[i] = d.labels.labels[i];
  } else {
    Model model = load_compatible_model(cfg, d);
    std::vector<Index> pixels(map.ids.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<Index>(i);
    const std::vector<Index> pred = predict(model, d, pixels, cfg.train);
    Index labeled = 0, agree = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const int truth = d.labels.labels[i];
      map.ids[i] = (truth == 0 && !all_pixels) ? 0 : static_cast<int>(pred[i]) + 1;
      if (truth != 0) {
        ++labeled;
        agree += static_cast<int>(pred[i]) + 1 == truth;
      }
    }
    if (labeled > 0) {
      out << "agreement with ground truth on " << labeled << " labeled pixels: " << std::fixed << std::setprecision(2)
          << 100.0 * static_cast<double>(agree) / static_cast<double>(labeled) << "%\n"
          << std::defaultfloat << std::setprecision(6);
    }
  }
  const fs::path image = require(cfg.paths.output, "paths.output");
  {
    std::ofstream os = open_out(image, std::ios::binary);
    write_ppm(os, map);
  }
  fs::path legend = image;
  legend.replace_extension(".legend.txt");
  {
    std::ofstream os = open_out(legend);
    write_palette_legend(os, static_cast<int>(d.classes));
  }
  out << "wrote " << image.string() << " and " << legend.string() << '\n';
  return 0;
}

int cmd_sweep(RunConfig cfg, const std::vector<Index>& ks, const std::vector<double>& sigmas, std::ostream& out) {
  if (ks.empty() || sigmas.empty()) throw ConfigError("sweep: --k-grid and --sigma-grid must be non-empty");
  const Dataset d = load_dataset(cfg);
  std::ofstream os = open_out(require(cfg.paths.output, "paths.output"));
  os << "k,sigma,oa\n";
  os.precision(17);
  for (const Index k : ks) {
    for (const double sigma : sigmas) {
      TrainOptions t = cfg.train;
      t.graph_k = k;
      t.graph_sigma = sigma;
      TrainResult r = train(cfg.model, t, d);
      const double oa = overall_accuracy(evaluate(r.model, d, d.split.test, t));
      os << k << ',' << sigma << ',' << oa << '\n';
      os.flush();
      out << "k=" << k << " sigma=" << sigma << " OA " << std::fixed << std::setprecision(2) << oa << "%\n"
          << std::defaultfloat << std::setprecision(6);
    }
  }
  return 0;
}

Graph toy_graph(const std::string& name) {
  if (name == "k3") return graph_from_adjacency(SparseSymMatrix(3, {{0, 1, 1.0}, {0, 2, 1.0}, {1, 2, 1.0}}));
  if (name == "path3") return graph_from_adjacency(SparseSymMatrix(3, {{0, 1, 1.0}, {1, 2, 1.0}}));
  throw ConfigError("unknown toy graph '" + name + "' (expected k3 or path3)");
}

int cmd_bias(RunConfig cfg, const std::string& toy, Index trials, std::ostream& out) {
  Graph g;
  if (!toy.empty()) {
    g = toy_graph(toy);
  } else {
    const Dataset d = load_dataset(cfg);
    const LabeledPixels lp = labeled_pixels(d.split.train);
    g = build_knn_rbf_graph(pixel_features(d.cube, lp.pixels),
                            std::min<Index>(cfg.train.graph_k, static_cast<Index>(lp.pixels.size()) - 1),
                            cfg.train.graph_sigma);
  }
  const BiasDiagnostic diag = estimator_bias_diagnostic(g, cfg.train.batch, trials, cfg.train.seed);
  const fs::path dir = require(cfg.paths.output, "paths.output");
  fs::create_directories(dir);
  for (const auto& [name, report] : {std::pair{"unit", &diag.unit}, std::pair{"cooccurrence", &diag.cooccurrence}}) {
    const fs::path file = dir / (std::string("bias_") + name + ".csv");
    std::ofstream os = open_out(file);
    write_bias_csv(os, *report);
    double worst = 0.0, worst_se = 0.0;
    for (const auto& row : report->rows) {
      if (std::abs(row.bias) >= std::abs(worst)) {
        worst = row.bias;
        worst_se = row.std_error;
      }
    }
    out << name << ": largest |bias| " << std::abs(worst) << " (stderr " << worst_se << ") over " << report->rows.size()
        << " vertices -> " << file.string() << '\n';
  }
  return 0;
}

int cmd_bench(const RunConfig& cfg, const std::vector<std::string>& modes, ScalingOptions opts, std::ostream& out) {
  opts.seed = cfg.train.seed;
  std::vector<ScalingReport> reports;
  for (const auto& name : modes) reports.push_back(run_scaling(parse_bench_mode(name), opts));
  if (cfg.paths.output.empty()) {
    write_scaling_csv(out, reports);
  } else {
    std::ofstream os = open_out(cfg.paths.output);
    write_scaling_csv(os, reports);
  }
  for (const auto& r : reports) {
    out << to_string(r.mode) << " slope " << std::fixed << std::setprecision(3) << r.slope << std::defaultfloat
        << std::setprecision(6) << " medians";
    for (const auto& pt : r.points) out << ' ' << pt.n << ':' << pt.median;
    out << '\n';
  }
  if (!reports.empty()) out << "machine: " << reports.front().machine << '\n';
  return 0;
}

int cmd_synth(const SynthOptions& so, const fs::path& dir, std::ostream& out) {
  const SynthScene s = synth_scene(so);
  fs::create_directories(dir);
  save_cube(dir / "cube.hsc", s.cube);
  save_labels(dir / "labels.hsl", s.labels);
  save_split(dir / "split.json", s.split);
  RunConfig cfg = resolve_run_config(std::nullopt, {});
  cfg.paths = {dir / "cube.hsc", dir / "labels.hsl", dir / "split.json", dir / "model.mgk", dir / "train_log.csv"};
  {
    std::ofstream os = open_out(dir / "config.json");
    os << run_config_json(cfg) << '\n';
  }
  out << "wrote " << so.size << "x" << so.size << "x" << so.bands << " scene with " << so.classes << " classes to "
      << dir.string() << '\n';
  return 0;
}

std::string where(const std::exception& e) {
  if (const auto* l = dynamic_cast<const Located*>(&e)) {
    return std::string(" [") + fs::path(l->location().file_name()).filename().string() + ":" +
           std::to_string(l->location().line()) + "]";
  }
  return {};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"miniGCN / FuNet hyperspectral classification"};
  app.require_subcommand(1);
  app.allow_extras();
  Common common;
  auto add = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", common.config_file, "JSON config file");
    sub->allow_extras();
    sub->footer("Any config value can be overridden with --section.key=value, e.g. --train.epochs=50.");
    return sub;
  };

  Index log_every = 10;
  CLI::App* train_cmd = add("train", "train a model and write a checkpoint plus training log");
  train_cmd->add_option("--log-every", log_every, "print progress every N epochs (0 = silent)");

  std::string side = "test";
  CLI::App* eval_cmd = add("eval", "score a checkpoint on the test (or train) split");
  eval_cmd->add_option("--side", side, "split side to score")->check(CLI::IsMember({"test", "train"}));

  bool ground_truth = false, all_pixels = false;
  CLI::App* map_cmd = add("predict-map", "classify every pixel and write a P6 class map");
  map_cmd->add_flag("--ground-truth", ground_truth, "render the label grid instead of predictions");
  map_cmd->add_flag("--all-pixels", all_pixels, "also color pixels that are unlabeled in the ground truth");

  std::vector<Index> k_grid;
  std::vector<double> sigma_grid;
  CLI::App* sweep_cmd = add("sweep", "train and evaluate over a (k, sigma) grid");
  sweep_cmd->add_option("--k-grid", k_grid, "comma-separated k values")->delimiter(',')->required();
  sweep_cmd->add_option("--sigma-grid", sigma_grid, "comma-separated sigma values")->delimiter(',')->required();

  std::string toy;
  Index trials = 10000;
  CLI::App* bias_cmd = add("bias", "Monte-Carlo bias of the sampled aggregation (budget = train.batch)");
  bias_cmd->add_option("--toy", toy, "use a built-in graph instead of the dataset")->check(CLI::IsMember({"k3", "path3"}));
  bias_cmd->add_option("--trials", trials, "number of sampled partitions")->check(CLI::PositiveNumber);

  std::vector<std::string> modes{"full-gcn", "minigcn", "full-gcn-sparse"};
  ScalingOptions scaling;
  CLI::App* bench_cmd = add("bench", "time one graph-conv layer pass across N");
  bench_cmd->add_option("--modes", modes, "full-gcn, full-gcn-sparse, minigcn")->delimiter(',');
  bench_cmd->add_option("--n-grid", scaling.n_grid, "comma-separated N values")->delimiter(',');
  bench_cmd->add_option("--d", scaling.d, "input width");
  bench_cmd->add_option("--p", scaling.p, "output width");
  bench_cmd->add_option("--m", scaling.m, "miniGCN batch budget");
  bench_cmd->add_option("--repeats", scaling.repeats, "timed samples per N (median reported)");
  bench_cmd->add_option("--passes", scaling.passes, "consecutive passes per timed sample");

  SynthOptions synth;
  std::string synth_dir;
  CLI::App* synth_cmd = app.add_subcommand("synth", "write a synthetic striped scene with split and config");
  synth_cmd->add_option("--out", synth_dir, "output directory")->required();
  synth_cmd->add_option("--classes", synth.classes);
  synth_cmd->add_option("--size", synth.size);
  synth_cmd->add_option("--bands", synth.bands);
  synth_cmd->add_option("--noise", synth.noise_sigma);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--train-per-class", synth.train_per_class);

  std::vector<std::string> argv_store{"minigcn"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    CLI::App* sub = app.get_subcommands().front();
    std::vector<std::string> extras = app.remaining();
    const auto sub_extras = sub->remaining();
    extras.insert(extras.end(), sub_extras.begin(), sub_extras.end());
    if (sub == synth_cmd) {
      if (!extras.empty()) throw ConfigError("synth: unexpected argument '" + extras.front() + "'");
      return cmd_synth(synth, synth_dir, out);
    }
    RunConfig cfg = resolve(common, extras);
    if (sub == train_cmd) return cmd_train(cfg, log_every, out);
    if (sub == eval_cmd) return cmd_eval(cfg, side, out);
    if (sub == map_cmd) return cmd_predict_map(cfg, ground_truth, all_pixels, out);
    if (sub == sweep_cmd) return cmd_sweep(cfg, k_grid, sigma_grid, out);
    if (sub == bias_cmd) return cmd_bias(cfg, toy, trials, out);
    if (sub == bench_cmd) return cmd_bench(cfg, modes, scaling, out);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << where(e) << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << where(e) << '\n';
    return 1;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << where(e) << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace minigcn::cli
