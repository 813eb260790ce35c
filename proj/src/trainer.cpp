#include "maskseg/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>

namespace maskseg {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are written in host byte order");

double poly_lr(double base, int iter, int total, double power) {
  if (total <= 0) return base;
  if (iter < 0 || iter > total) throw std::invalid_argument("poly_lr: iteration outside [0, total]");
  return base * std::pow(1.0 - static_cast<double>(iter) / total, power);
}

template <typename T>
void sgd_update(std::span<T> w, std::span<const T> grad, std::span<T> buf, double lr, double momentum,
                double weight_decay) {
  if (grad.size() != w.size() || buf.size() != w.size()) throw std::invalid_argument("sgd_update: size mismatch");
  const T l = static_cast<T>(lr), m = static_cast<T>(momentum), d = static_cast<T>(weight_decay);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const T g = grad[i] + d * w[i];
    buf[i] = m * buf[i] + g;
    w[i] -= l * buf[i];
  }
}

template void sgd_update(std::span<float>, std::span<const float>, std::span<float>, double, double, double);
template void sgd_update(std::span<double>, std::span<const double>, std::span<double>, double, double, double);

TrainState init_state(const TrainConfig& config) {
  validate(config);
  TrainState s;
  s.params = init_params<float>(config.net, config.seed_model);
  for (auto& e : s.params.entries()) s.momenta.emplace_back(e.tensor->shape());
  s.memory = PrototypeMemory<float>(config.net.num_classes, config.net.feat_dim, config.alpha);
  return s;
}

namespace {

std::string describe(const LossReport& r) {
  return "L_s=" + format_real(r.supervised) + " L_u=" + format_real(r.unlabeled) + " L_mimpi=" +
         format_real(r.pixel) + " L_mimfea=" + format_real(r.feature) + " L_mimse=" + format_real(r.semantic) +
         " total=" + format_real(r.total);
}

}  // namespace

StepResult train_step(TrainState& state, const TrainConfig& config, const TrainData& data) {
  const int it = state.iteration;
  const PreparedIteration prepared = prepare_iteration(config, data, it);
  auto entries = state.params.entries();
  for (auto& e : entries) e.tensor->zero_grad();

  Objective<float> obj = compute_objective(state.params, prepared, config, state.memory);
  if (!std::isfinite(obj.report.total)) {
    throw TrainingDiverged("non-finite loss at iteration " + std::to_string(it) + ": " + describe(obj.report));
  }
  backward(obj.total);

  StepResult r;
  r.iteration = it;
  r.lr_main = poly_lr(config.lr, it, config.iterations, config.poly_power);
  r.lr_pixel = config.lr_pixel;
  r.report = obj.report;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor<float>& t = *entries[i].tensor;
    // Parameters the objective never reached (the pixel branch when only
    // phase one is active) are left alone, decay and momentum included.
    if (!t.has_grad()) continue;
    const double lr = entries[i].group == ParamGroup::kMain ? r.lr_main : r.lr_pixel;
    sgd_update<float>(t.mutable_value().data, t.grad().data, state.momenta[i].data, lr, config.momentum,
                      entries[i].is_weight ? config.weight_decay : 0.0);
  }
  state.iteration = it + 1;
  return r;
}

// ---------------------------------------------------------------------------
// evaluation

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : classes_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {}

std::uint64_t& ConfusionMatrix::at(int t, int p) {
  return counts_.at(static_cast<std::size_t>(t) * classes_ + p);
}

std::uint64_t ConfusionMatrix::at(int t, int p) const {
  return counts_.at(static_cast<std::size_t>(t) * classes_ + p);
}

void ConfusionMatrix::add(const LabelMap& truth, const LabelMap& prediction) {
  if (truth.size() != prediction.size()) throw std::invalid_argument("ConfusionMatrix::add: extents differ");
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth.labels[i];
    if (t == kIgnoreLabel) continue;
    const int p = prediction.labels[i];
    if (t >= classes_ || p >= classes_) throw std::out_of_range("ConfusionMatrix::add: class out of range");
    ++counts_[static_cast<std::size_t>(t) * classes_ + p];
  }
}

std::optional<double> ConfusionMatrix::iou(int c) const {
  std::uint64_t tp = at(c, c), fp = 0, fn = 0;
  for (int k = 0; k < classes_; ++k) {
    if (k == c) continue;
    fp += at(k, c);
    fn += at(c, k);
  }
  const std::uint64_t denom = tp + fp + fn;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(denom);
}

double ConfusionMatrix::miou() const {
  return metrics_from_confusion(*this).miou;
}

EvalMetrics metrics_from_confusion(const ConfusionMatrix& cm) {
  EvalMetrics m;
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < cm.num_classes(); ++c) {
    m.iou.push_back(cm.iou(c));
    if (m.iou.back()) {
      sum += *m.iou.back();
      ++n;
    }
  }
  m.miou = n > 0 ? sum / n : 0.0;
  return m;
}

EvalMetrics evaluate(const SegNetParams<float>& params, const Corpus& corpus) {
  NoGradGuard ng;
  ConfusionMatrix cm(params.config.num_classes);
  for (const Sample& s : corpus.samples) {
    const auto out = forward(params, Tensor<float>::constant(s.image), nullptr, false);
    cm.add(s.label, argmax_channels(out.logits.value()));
  }
  return metrics_from_confusion(cm);
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

struct TensorSlot {
  std::string name;
  Shape shape;
  float* data;
  std::size_t count;
};

std::vector<TensorSlot> slots(TrainState& s) {
  std::vector<TensorSlot> out;
  auto entries = s.params.entries();
  for (auto& e : entries) {
    NdArray<float>& v = e.tensor->mutable_value();
    out.push_back({"param." + e.name, v.shape, v.data.data(), v.data.size()});
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    out.push_back({"momentum." + entries[i].name, s.momenta[i].shape, s.momenta[i].data.data(),
                   s.momenta[i].data.size()});
  }
  auto& mv = s.memory.values();
  out.push_back({"memory.prototypes", {s.memory.num_classes(), s.memory.dim()}, mv.data(), mv.size()});
  return out;
}

}  // namespace

void save_checkpoint(const TrainState& state, const TrainConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  TrainState copy = state;  // slots() needs mutable access
  json tensors = json::array();
  std::vector<char> blob;
  for (const TensorSlot& t : slots(copy)) {
    const std::size_t nbytes = t.count * sizeof(float);
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"dtype", "f32"}, {"offset", blob.size()}, {"nbytes", nbytes}});
    const char* p = reinterpret_cast<const char*>(t.data);
    blob.insert(blob.end(), p, p + nbytes);
  }
  json flags = json::array();
  for (auto f : state.memory.flags()) flags.push_back(static_cast<int>(f));
  json manifest{{"format", 1},
                {"iteration", state.iteration},
                {"config", to_json(config)},
                {"config_hash", config_hash(config)},
                {"memory", {{"num_classes", state.memory.num_classes()},
                            {"dim", state.memory.dim()},
                            {"alpha", state.memory.alpha()},
                            {"initialized", flags}}},
                {"blob", "checkpoint.bin"},
                {"blob_bytes", blob.size()},
                {"tensors", tensors}};
  {
    std::ofstream out(dir / "checkpoint.bin", std::ios::binary | std::ios::trunc);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw std::runtime_error("cannot write " + (dir / "checkpoint.bin").string());
  }
  std::ofstream out(dir / "checkpoint.json", std::ios::trunc);
  out << manifest.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + (dir / "checkpoint.json").string());
}

LoadedCheckpoint load_checkpoint(const fs::path& dir, const TrainConfig* expected) {
  const fs::path mpath = dir / "checkpoint.json";
  std::ifstream min(mpath);
  if (!min) throw std::runtime_error("cannot open " + mpath.string());
  json m;
  try {
    m = json::parse(min);
  } catch (const json::exception& e) {
    throw std::runtime_error(mpath.string() + ": " + e.what());
  }
  LoadedCheckpoint out;
  try {
    out.config = config_from_json(m.at("config"));
    out.config_hash = m.at("config_hash").get<std::string>();
    out.state = init_state(out.config);
    out.state.iteration = m.at("iteration").get<int>();
  } catch (const json::exception& e) {
    throw std::runtime_error(mpath.string() + ": " + e.what());
  }
  if (expected && config_hash(*expected) != out.config_hash) {
    out.warnings.push_back("checkpoint config hash " + out.config_hash + " differs from the current config " +
                           config_hash(*expected));
  }

  const std::vector<char> blob = [&] {
    std::ifstream in(dir / "checkpoint.bin", std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + (dir / "checkpoint.bin").string());
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }();
  const std::size_t declared = m.value("blob_bytes", std::size_t{0});
  if (blob.size() != declared) {
    throw std::runtime_error("checkpoint blob has " + std::to_string(blob.size()) + " bytes, manifest declares " +
                             std::to_string(declared));
  }

  auto expected_slots = slots(out.state);
  std::vector<std::string> problems;
  std::vector<std::uint8_t> seen(expected_slots.size(), 0);
  for (const auto& t : m.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    std::size_t k = 0;
    while (k < expected_slots.size() && expected_slots[k].name != name) ++k;
    if (k == expected_slots.size()) {
      problems.push_back(name + ": not part of this model");
      continue;
    }
    seen[k] = 1;
    TensorSlot& slot = expected_slots[k];
    const Shape shape = t.at("shape").get<Shape>();
    const std::size_t offset = t.at("offset").get<std::size_t>();
    const std::size_t nbytes = t.at("nbytes").get<std::size_t>();
    if (t.at("dtype").get<std::string>() != "f32") {
      problems.push_back(name + ": dtype must be f32");
    } else if (shape != slot.shape) {
      problems.push_back(name + ": shape " + shape_str(shape) + " but the model expects " + shape_str(slot.shape));
    } else if (nbytes != slot.count * sizeof(float)) {
      problems.push_back(name + ": " + std::to_string(nbytes) + " bytes for " + std::to_string(slot.count) +
                         " floats");
    } else if (offset > blob.size() || nbytes > blob.size() - offset) {
      problems.push_back(name + ": bytes [" + std::to_string(offset) + ", " + std::to_string(offset + nbytes) +
                         ") outside the " + std::to_string(blob.size()) + "-byte blob");
    } else {
      std::memcpy(slot.data, blob.data() + offset, nbytes);
    }
  }
  for (std::size_t k = 0; k < expected_slots.size(); ++k) {
    if (!seen[k]) problems.push_back(expected_slots[k].name + ": missing from the manifest");
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint " + dir.string() + " does not match its blob or model:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw std::runtime_error(msg);
  }
  const auto flags = m.at("memory").at("initialized").get<std::vector<int>>();
  if (flags.size() != out.state.memory.flags().size()) {
    throw std::runtime_error("checkpoint memory flags: expected " + std::to_string(out.state.memory.flags().size()) +
                             " entries, found " + std::to_string(flags.size()));
  }
  for (std::size_t i = 0; i < flags.size(); ++i) out.state.memory.flags()[i] = flags[i] ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// metrics log

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void MetricsWriter::header(const TrainConfig& config) {
  out_ << "# config " << config_dump(config) << "\n";
  out_ << "iter,lr_main,lr_pid,L_s,L_u,L_mimpi,L_mimfea,L_mimse,total\n";
}

void MetricsWriter::step(const StepResult& s) {
  const LossReport& r = s.report;
  out_ << s.iteration << ',' << format_real(s.lr_main) << ',' << format_real(s.lr_pixel) << ','
       << format_real(r.supervised) << ',' << format_real(r.unlabeled) << ',' << format_real(r.pixel) << ','
       << format_real(r.feature) << ',' << format_real(r.semantic) << ',' << format_real(r.total) << '\n';
}

void MetricsWriter::eval(int iteration, const EvalMetrics& m) {
  out_ << "eval," << iteration << ',' << format_real(m.miou);
  for (const auto& v : m.iou) out_ << ',' << format_real(v ? *v : std::nan(""));
  out_ << '\n';
}

// ---------------------------------------------------------------------------
// run loop

fs::path checkpoint_dir(const fs::path& out, int iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter_%08d", iteration);
  return out / "checkpoints" / buf;
}

RunResult run_training(const TrainConfig& config, const TrainData& data, const Corpus* eval_corpus,
                       const RunOptions& options) {
  validate(config);
  if (data.corpus && data.corpus->num_classes != config.net.num_classes) {
    throw std::invalid_argument("corpus has " + std::to_string(data.corpus->num_classes) +
                                " classes, net.num_classes is " + std::to_string(config.net.num_classes));
  }
  RunResult result;
  result.state = options.resume ? *options.resume : init_state(config);
  TrainState& state = result.state;

  fs::create_directories(options.out);
  const fs::path metrics_path = options.out / "metrics.csv";
  const bool append = options.resume.has_value() && fs::exists(metrics_path);
  std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + metrics_path.string());
  MetricsWriter writer(metrics);
  if (!append) writer.header(config);

  const int end = options.stop_at >= 0 ? std::min(options.stop_at, config.iterations) : config.iterations;
  while (state.iteration < end) {
    StepResult s = train_step(state, config, data);
    writer.step(s);
    result.steps.push_back(s);
    const int done = state.iteration;
    if (options.log && (done % 100 == 0 || done == config.iterations)) {
      *options.log << "iter " << done << "/" << config.iterations << " " << describe(s.report) << "\n";
    }
    const bool last = done == config.iterations;
    if (eval_corpus && (last || (config.eval_interval > 0 && done % config.eval_interval == 0))) {
      EvalMetrics m = evaluate(state.params, *eval_corpus);
      writer.eval(done, m);
      if (last) result.final_eval = m;
      if (options.log) *options.log << "eval " << done << " miou " << format_real(m.miou) << "\n";
    }
    if (config.checkpoint_interval > 0 && done % config.checkpoint_interval == 0 && done != end) {
      save_checkpoint(state, config, checkpoint_dir(options.out, done));
    }
  }
  metrics.flush();
  save_checkpoint(state, config, checkpoint_dir(options.out, state.iteration));
  return result;
}

Datasets load_datasets(const TrainConfig& c) {
  Datasets d;
  SynthConfig synth;
  synth.height = synth.width = c.synth_hw;
  synth.num_classes = c.net.num_classes;
  if (c.corpus.empty()) {
    synth.count = c.synth_count;
    synth.seed = c.synth_seed;
    d.train = synth_generate(synth);
  } else {
    d.train = load_corpus(c.corpus);
  }
  d.split = c.split.empty() ? make_split(d.train, c.n_labeled, c.synth_seed) : load_split(c.split);
  if (c.eval_corpus.empty()) {
    synth.height = d.train.height;
    synth.width = d.train.width;
    synth.num_classes = d.train.num_classes;
    synth.count = c.synth_eval_count;
    synth.seed = c.synth_eval_seed;
    d.eval = synth_generate(synth);
  } else {
    d.eval = load_corpus(c.eval_corpus);
  }
  return d;
}

// ---------------------------------------------------------------------------
// ablations

namespace {

AblationCell cell(std::string name, json overrides) {
  return {std::move(name), std::move(overrides)};
}

json phase_two(bool pixel, bool feature, bool semantic) {
  return {{"loss.mimpi", pixel}, {"loss.mimfea", feature}, {"loss.mimse", semantic}};
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"components", "ratio_patch", "semantic_loss", "mim_variant", "feature_aggregation"};
}

AblationGrid preset_grid(const std::string& name) {
  AblationGrid g;
  g.name = name;
  if (name == "components") {
    g.cells = {cell("baseline", phase_two(false, false, false)), cell("mimpi", phase_two(true, false, false)),
               cell("mimpi_mimfea", phase_two(true, true, false)), cell("mimse", phase_two(false, false, true)),
               cell("mimpi_mimse", phase_two(true, false, true)), cell("full", phase_two(true, true, true))};
  } else if (name == "ratio_patch") {
    for (double r : {0.3, 0.4, 0.5}) {
      for (int p : {4, 6, 8}) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "ratio%.1f_patch%d", r, p);
        json o = phase_two(true, true, true);
        o["mask.ratio"] = r;
        o["mask.patch"] = p;
        g.cells.push_back(cell(buf, o));
      }
    }
  } else if (name == "semantic_loss") {
    json mse = phase_two(false, false, true), ce = phase_two(false, false, true);
    mse["loss.semantic"] = "mse";
    ce["loss.semantic"] = "ce";
    g.cells = {cell("baseline", phase_two(false, false, false)), cell("mse", mse), cell("ce", ce)};
  } else if (name == "mim_variant") {
    json basic = phase_two(true, false, false), cw = phase_two(true, false, false);
    basic["loss.classwise"] = false;
    cw["loss.classwise"] = true;
    g.cells = {cell("baseline", phase_two(false, false, false)), cell("basic_mim", basic),
               cell("classwise_mim", cw)};
  } else if (name == "feature_aggregation") {
    for (auto [label, memory, confidence] : {std::tuple{"no_memory_no_conf", false, false},
                                             std::tuple{"no_memory", false, true},
                                             std::tuple{"no_conf", true, false},
                                             std::tuple{"memory_conf", true, true}}) {
      json o = phase_two(true, true, true);
      o["loss.use_memory"] = memory;
      o["loss.use_confidence"] = confidence;
      g.cells.push_back(cell(label, o));
    }
  } else {
    throw std::invalid_argument("unknown ablation preset '" + name + "'");
  }
  return g;
}

AblationGrid grid_from_json(const json& j, TrainConfig* base) {
  AblationGrid g;
  try {
    if (j.contains("preset")) {
      g = preset_grid(j.at("preset").get<std::string>());
    } else {
      g.name = j.value("name", std::string("custom"));
      for (const auto& c : j.at("cells")) {
        g.cells.push_back(cell(c.at("name").get<std::string>(), c.value("overrides", json::object())));
      }
    }
    if (j.contains("seeds")) g.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (base && j.contains("base")) *base = config_from_json(j.at("base"), *base);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("ablation grid: ") + e.what());
  }
  if (g.cells.empty()) throw std::invalid_argument("ablation grid has no cells");
  return g;
}

TrainConfig cell_config(const TrainConfig& base, const AblationCell& c, std::optional<std::uint64_t> seed) {
  TrainConfig cfg = config_from_json(c.overrides, base);
  if (seed) cfg.seed_model = cfg.seed_data = cfg.seed_mask = *seed;
  return cfg;
}

std::vector<AblationRow> run_ablation(const TrainConfig& base, const AblationGrid& grid, const TrainData& data,
                                      const Corpus* eval_corpus, const fs::path& out, std::ostream* log) {
  fs::create_directories(out);
  std::vector<std::optional<std::uint64_t>> seeds;
  for (auto s : grid.seeds) seeds.emplace_back(s);
  if (seeds.empty()) seeds.emplace_back(std::nullopt);

  std::vector<AblationRow> rows;
  for (const AblationCell& c : grid.cells) {
    for (const auto& seed : seeds) {
      AblationRow row;
      row.cell = c.name;
      try {
        const TrainConfig cfg = cell_config(base, c, seed);
        row.seed = cfg.seed_model;
        RunOptions opts;
        opts.out = out / c.name / ("seed_" + std::to_string(row.seed));
        if (log) *log << "cell " << c.name << " seed " << row.seed << "\n";
        RunResult r = run_training(cfg, data, eval_corpus, opts);
        if (r.final_eval) row.metrics = *r.final_eval;
        row.ok = true;
      } catch (const std::exception& e) {
        row.error = e.what();
        if (seed) row.seed = *seed;
        if (log) *log << "cell " << c.name << " failed: " << row.error << "\n";
      }
      rows.push_back(std::move(row));
    }
  }

  const int num_classes = base.net.num_classes;
  std::ofstream csv(out / "results.csv", std::ios::trunc);
  csv << "grid,cell,seed,status,miou";
  for (int k = 0; k < num_classes; ++k) csv << ",iou_" << k;
  csv << "\n";
  for (const auto& r : rows) {
    std::string status = r.ok ? "ok" : "error: " + r.error;
    for (char& ch : status) {
      if (ch == ',' || ch == '\n' || ch == '\r') ch = ' ';
    }
    csv << grid.name << ',' << r.cell << ',' << r.seed << ',' << status << ',' << (r.ok ? format_real(r.metrics.miou) : "nan");
    for (int k = 0; k < num_classes; ++k) {
      const bool have = r.ok && static_cast<std::size_t>(k) < r.metrics.iou.size() && r.metrics.iou[k];
      csv << ',' << (have ? format_real(*r.metrics.iou[k]) : "nan");
    }
    csv << "\n";
  }
  if (!csv) throw std::runtime_error("cannot write " + (out / "results.csv").string());
  return rows;
}

}  // namespace maskseg
