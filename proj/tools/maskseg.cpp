// Command-line entry point: corpus generation, splitting, training,
// evaluation, gradient checks, mask statistics and ablation sweeps.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "maskseg/oracles.hpp"
#include "maskseg/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace maskseg;

namespace {

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

TrainConfig resolve_config(const std::string& file, const std::vector<std::string>& sets,
                           const std::optional<std::uint64_t>& seed) {
  TrainConfig c;
  if (!file.empty()) c = config_from_json(read_json(file));
  for (const auto& s : sets) apply_override(c, s);
  if (seed) c.seed_model = c.seed_data = c.seed_mask = *seed;
  validate(c);
  return c;
}

void print_eval(const EvalMetrics& m) {
  std::cout << "miou," << format_real(m.miou) << "\n";
  for (std::size_t k = 0; k < m.iou.size(); ++k) {
    std::cout << "iou_" << k << "," << format_real(m.iou[k] ? *m.iou[k] : std::nan("")) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-wise masked image modeling for semi-supervised segmentation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic shape corpus");
  SynthConfig sc;
  int hw = 64;
  std::string synth_out;
  bool overwrite = false;
  synth->add_option("--n", sc.count, "Number of images")->required();
  synth->add_option("--hw", hw, "Image height and width");
  synth->add_option("--classes", sc.num_classes, "Classes including background");
  synth->add_option("--seed", sc.seed, "Generator seed");
  synth->add_option("--out", synth_out, "Corpus directory")->required();
  synth->add_flag("--overwrite", overwrite, "Replace an existing corpus");

  // split
  auto* split = app.add_subcommand("split", "Split a corpus into labeled and unlabeled ids");
  std::string split_corpus, split_out;
  int n_labeled = 0;
  std::uint64_t split_seed = 0;
  split->add_option("--corpus", split_corpus, "Corpus directory")->required();
  split->add_option("--n-labeled", n_labeled, "Number of labeled images")->required();
  split->add_option("--seed", split_seed, "Split seed");
  split->add_option("--out", split_out, "Directory for split.json (default: the corpus)");

  // train
  auto* train = app.add_subcommand("train", "Train and write metrics plus checkpoints");
  std::string train_config, train_out, resume;
  std::vector<std::string> train_sets;
  std::optional<std::uint64_t> train_seed;
  train->add_option("--config", train_config, "Flat JSON config");
  train->add_option("--set", train_sets, "Override key=value (repeatable)");
  train->add_option("--seed", train_seed, "Sets model, data and mask seeds");
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--resume", resume, "Checkpoint directory to continue from");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_corpus;
  std::optional<std::uint64_t> eval_seed;
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint directory")->required();
  eval->add_option("--corpus", eval_corpus, "Corpus directory (default: the config's evaluation corpus)");
  eval->add_option("--seed", eval_seed, "Accepted for uniformity; evaluation draws nothing");

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient oracles");
  std::string grad_module;
  std::uint64_t grad_seed = 7;
  grad->add_option("--module", grad_module, "Restrict to one module");
  grad->add_option("--seed", grad_seed, "Seed of the random inputs");

  // maskstats
  auto* masks = app.add_subcommand("maskstats", "Masked-fraction statistics of sampled masks");
  MaskSpec spec;
  int trials = 1000, mask_hw = 36;
  std::uint64_t mask_seed = 0;
  std::string mask_out;
  masks->add_option("--ratio", spec.ratio, "Masking ratio");
  masks->add_option("--patch", spec.patch, "Patch size");
  masks->add_option("--trials", trials, "Number of masks");
  masks->add_option("--hw", mask_hw, "Image height and width");
  masks->add_option("--seed", mask_seed, "Base seed");
  masks->add_option("--out", mask_out, "Directory for maskstats.csv (default: stdout)");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid");
  std::string grid_path, preset, ablate_config, ablate_out;
  std::vector<std::string> ablate_sets;
  std::optional<std::uint64_t> ablate_seed;
  ablate->add_option("--grid", grid_path, "Grid JSON");
  ablate->add_option("--preset", preset, "Built-in grid instead of --grid");
  ablate->add_option("--config", ablate_config, "Base config JSON");
  ablate->add_option("--set", ablate_sets, "Override key=value on the base config (repeatable)");
  ablate->add_option("--seed", ablate_seed, "Single seed for every cell unless the grid lists seeds");
  ablate->add_option("--out", ablate_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth->parsed()) {
      sc.height = sc.width = hw;
      validate(sc);
      json cfg{{"command", "synth"}, {"n", sc.count}, {"hw", hw}, {"classes", sc.num_classes},
               {"seed", sc.seed},    {"out", synth_out}, {"overwrite", overwrite}};
      std::cout << cfg.dump() << std::endl;
      save_corpus(synth_generate(sc), synth_out, overwrite, &sc);
      std::cout << "wrote " << sc.count << " samples to " << synth_out << "\n";
    } else if (split->parsed()) {
      const fs::path out = split_out.empty() ? fs::path(split_corpus) : fs::path(split_out);
      std::cout << json{{"command", "split"}, {"corpus", split_corpus}, {"n_labeled", n_labeled},
                        {"seed", split_seed}, {"out", out.string()}}.dump()
                << std::endl;
      const SplitManifest s = make_split(load_corpus(split_corpus), n_labeled, split_seed);
      fs::create_directories(out);
      save_split(s, out / "split.json");
      std::cout << s.labeled.size() << " labeled, " << s.unlabeled.size() << " unlabeled\n";
    } else if (train->parsed()) {
      const TrainConfig cfg = resolve_config(train_config, train_sets, train_seed);
      std::cout << config_dump(cfg) << std::endl;
      RunOptions opts;
      opts.out = train_out;
      opts.log = &std::cout;
      if (!resume.empty()) {
        LoadedCheckpoint ck = load_checkpoint(resume, &cfg);
        for (const auto& w : ck.warnings) std::cerr << "warning: " << w << "\n";
        opts.resume = std::move(ck.state);
      }
      fs::create_directories(train_out);
      {
        std::ofstream out(fs::path(train_out) / "config.json");
        out << to_json(cfg).dump(2) << "\n";
      }
      const Datasets d = load_datasets(cfg);
      const TrainData td = make_train_data(d.train, d.split);
      const RunResult r = run_training(cfg, td, &d.eval, opts);
      if (r.final_eval) print_eval(*r.final_eval);
    } else if (eval->parsed()) {
      LoadedCheckpoint ck = load_checkpoint(eval_ckpt);
      std::cout << config_dump(ck.config) << std::endl;
      const Corpus corpus = eval_corpus.empty() ? load_datasets(ck.config).eval : load_corpus(eval_corpus);
      print_eval(evaluate(ck.state.params, corpus));
    } else if (grad->parsed()) {
      std::cout << json{{"command", "gradcheck"}, {"module", grad_module}, {"seed", grad_seed},
                        {"tolerance", kGradTolerance}}.dump()
                << std::endl;
      const auto results = run_oracles(grad_module, grad_seed);
      int failures = 0;
      for (const auto& r : results) {
        const bool ok = r.check.max_rel_error < kGradTolerance;
        failures += ok ? 0 : 1;
        std::printf("%-10s %-28s max_rel_error %.3e over %zu coordinates %s\n", r.module.c_str(), r.name.c_str(),
                    r.check.max_rel_error, r.check.coordinates, ok ? "ok" : "FAIL");
      }
      if (failures > 0) {
        std::cerr << "error: " << failures << " gradient check(s) above " << kGradTolerance << "\n";
        return 1;
      }
    } else if (masks->parsed()) {
      validate(spec);
      if (trials < 1) throw std::invalid_argument("--trials must be >= 1");
      std::cout << json{{"command", "maskstats"}, {"ratio", spec.ratio}, {"patch", spec.patch},
                        {"trials", trials}, {"hw", mask_hw}, {"seed", mask_seed}, {"out", mask_out}}.dump()
                << std::endl;
      std::ostringstream csv;
      csv << "trial,masked_cells,cells,masked_fraction\n";
      double sum = 0.0;
      int cells = 0;
      for (int t = 0; t < trials; ++t) {
        Rng rng = make_rng(mask_seed, {static_cast<std::uint64_t>(t)});
        const Mask m = sample_mask(mask_hw, mask_hw, spec, rng);
        cells = m.cells();
        const double f = static_cast<double>(m.masked_cells()) / cells;
        sum += f;
        csv << t << ',' << m.masked_cells() << ',' << cells << ',' << format_real(f) << '\n';
      }
      csv << "mean,," << cells << ',' << format_real(sum / trials) << '\n';
      if (mask_out.empty()) {
        std::cout << csv.str();
      } else {
        fs::create_directories(mask_out);
        std::ofstream out(fs::path(mask_out) / "maskstats.csv");
        out << csv.str();
        std::cout << "mean masked fraction " << format_real(sum / trials) << "\n";
      }
    } else if (ablate->parsed()) {
      if (grid_path.empty() == preset.empty()) throw std::invalid_argument("give exactly one of --grid and --preset");
      TrainConfig base = resolve_config(ablate_config, {}, std::nullopt);
      AblationGrid grid = grid_path.empty() ? preset_grid(preset) : grid_from_json(read_json(grid_path), &base);
      for (const auto& s : ablate_sets) apply_override(base, s);
      if (ablate_seed && grid.seeds.empty()) grid.seeds = {*ablate_seed};
      validate(base);
      json cfg = to_json(base);
      std::cout << json{{"command", "ablate"}, {"grid", grid.name}, {"cells", grid.cells.size()},
                        {"seeds", grid.seeds}, {"base", cfg}}.dump()
                << std::endl;
      const Datasets d = load_datasets(base);
      const TrainData td = make_train_data(d.train, d.split);
      const auto rows = run_ablation(base, grid, td, &d.eval, ablate_out, &std::cout);
      int failed = 0;
      for (const auto& r : rows) failed += r.ok ? 0 : 1;
      std::cout << "wrote " << (fs::path(ablate_out) / "results.csv").string() << "\n";
      if (failed > 0) {
        std::cerr << "error: " << failed << " of " << rows.size() << " cells failed\n";
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
