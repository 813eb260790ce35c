#include "maskseg/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "maskseg/rng.hpp"

namespace maskseg {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::size_t Corpus::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].id == id) return i;
  }
  throw std::out_of_range("corpus has no sample '" + id + "'");
}

void validate(const SynthConfig& c) {
  if (c.count < 0) throw std::invalid_argument("synth: count must be >= 0");
  if (c.height < 4 || c.width < 4) throw std::invalid_argument("synth: image extents must be >= 4");
  if (c.num_classes < 2 || c.num_classes > 254) throw std::invalid_argument("synth: classes must lie in [2, 254]");
  if (c.min_shapes < 1 || c.max_shapes < c.min_shapes) throw std::invalid_argument("synth: bad shape count range");
  if (!(c.min_size > 0.0 && c.max_size >= c.min_size)) throw std::invalid_argument("synth: bad shape size range");
}

namespace {

struct Rgb {
  double r, g, b;
  double operator[](int i) const { return i == 0 ? r : (i == 1 ? g : b); }
};

Rgb hsv(double h, double s, double v) {
  const double k[3] = {5.0, 3.0, 1.0};
  double out[3];
  for (int i = 0; i < 3; ++i) {
    const double m = std::fmod(k[i] + h * 6.0, 6.0);
    out[i] = v - v * s * std::max(0.0, std::min({m, 4.0 - m, 1.0}));
  }
  return {out[0], out[1], out[2]};
}

// Fixed per class index so that corpora drawn with different seeds share
// their class appearance.
Rgb class_color(int cls, int num_classes) {
  if (cls == 0) return {0.46, 0.43, 0.40};
  const double h = 0.02 + 0.85 * (cls - 1) / std::max(1, num_classes - 1);
  return hsv(h, 0.55, 0.78);
}

struct Figure {
  int cls = 0;
  int kind = 0;  // 0 disk, 1 rectangle, 2 triangle
  double cy = 0, cx = 0, r = 0, ax = 0, ay = 0;
  double vx[3] = {}, vy[3] = {};
  Rgb color{};

  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    if (kind == 0) return dx * dx + dy * dy <= r * r;
    if (kind == 1) return std::abs(dx) <= ax && std::abs(dy) <= ay;
    double sign[3];
    for (int i = 0; i < 3; ++i) {
      const int j = (i + 1) % 3;
      sign[i] = (vx[j] - vx[i]) * (y - vy[i]) - (vy[j] - vy[i]) * (x - vx[i]);
    }
    return (sign[0] >= 0 && sign[1] >= 0 && sign[2] >= 0) || (sign[0] <= 0 && sign[1] <= 0 && sign[2] <= 0);
  }
};

double quantize(double v) {
  return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

Sample synth_one(const SynthConfig& c, int index) {
  Rng rng = make_rng(c.seed, {static_cast<std::uint64_t>(index)});
  std::normal_distribution<double> normal(0.0, 1.0);
  const int h = c.height, w = c.width;

  const double gain = uniform(rng, 1.0 - c.illumination, 1.0 + c.illumination);
  double cast[3];
  for (double& v : cast) v = uniform(rng, -c.color_cast, c.color_cast);

  // Background texture: two oriented sinusoids.
  double freq[2], angle[2], phase[2];
  for (int i = 0; i < 2; ++i) {
    freq[i] = uniform(rng, 1.5, 5.0) * 2.0 * std::numbers::pi / std::min(h, w);
    angle[i] = uniform(rng, 0.0, std::numbers::pi);
    phase[i] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  }

  std::uniform_int_distribution<int> n_shapes(c.min_shapes, c.max_shapes);
  std::uniform_int_distribution<int> pick_class(1, c.num_classes - 1);
  std::uniform_int_distribution<int> pick_kind(0, 2);
  std::vector<Figure> shapes(static_cast<std::size_t>(n_shapes(rng)));
  const double extent = std::min(h, w);
  for (Figure& s : shapes) {
    s.cls = pick_class(rng);
    s.kind = pick_kind(rng);
    s.cy = uniform(rng, 0.0, h);
    s.cx = uniform(rng, 0.0, w);
    s.r = uniform(rng, c.min_size, c.max_size) * extent;
    s.ax = s.r * uniform(rng, 0.6, 1.0);
    s.ay = s.r * uniform(rng, 0.6, 1.0);
    const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    for (int k = 0; k < 3; ++k) {
      const double a = theta + k * 2.0 * std::numbers::pi / 3.0;
      const double rad = s.r * uniform(rng, 0.8, 1.2);
      s.vx[k] = s.cx + rad * std::cos(a);
      s.vy[k] = s.cy + rad * std::sin(a);
    }
    const Rgb base = class_color(s.cls, c.num_classes);
    s.color = {base.r + c.class_color_spread * normal(rng), base.g + c.class_color_spread * normal(rng),
               base.b + c.class_color_spread * normal(rng)};
  }

  std::vector<int> owner(static_cast<std::size_t>(h) * w, -1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int i = static_cast<int>(shapes.size()) - 1; i >= 0; --i) {
        if (shapes[i].contains(y + 0.5, x + 0.5)) {
          owner[static_cast<std::size_t>(y) * w + x] = i;
          break;
        }
      }
    }
  }

  Sample s;
  s.id = "";
  s.image = NdArray<float>({h, w, 3});
  s.label = LabelMap(h, w, 0);
  for (std::size_t p = 0; p < owner.size(); ++p) {
    s.label.labels[p] = owner[p] < 0 ? 0 : static_cast<std::uint8_t>(shapes[owner[p]].cls);
  }
  const Rgb bg = class_color(0, c.num_classes);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      Rgb base = bg;
      if (owner[p] >= 0) {
        base = shapes[owner[p]].color;
      } else {
        double t = 0.0;
        for (int i = 0; i < 2; ++i) {
          t += std::sin(freq[i] * (x * std::cos(angle[i]) + y * std::sin(angle[i])) + phase[i]);
        }
        const double a = 0.5 * c.texture * t;
        base = {bg.r + a, bg.g + a, bg.b + a};
      }
      for (int ch = 0; ch < 3; ++ch) {
        const double v = base[ch] * gain + cast[ch] + c.noise_std * normal(rng);
        s.image.at(y, x, ch) = static_cast<float>(quantize(v));
      }
    }
  }

  // A pixel is boundary when a 4-neighbour has another label and lies under
  // it in draw order (background is below every shape).
  std::vector<std::uint8_t> boundary(owner.size(), 0);
  const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      for (int k = 0; k < 4; ++k) {
        const int ny = y + dy[k], nx = x + dx[k];
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
        if (s.label.labels[q] != s.label.labels[p] && owner[q] < owner[p]) boundary[p] = 1;
      }
    }
  }
  for (std::size_t p = 0; p < owner.size(); ++p) {
    if (boundary[p]) s.label.labels[p] = kIgnoreLabel;
  }
  return s;
}

std::string sample_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

json synth_config_json(const SynthConfig& c) {
  return json{{"count", c.count},
              {"height", c.height},
              {"width", c.width},
              {"num_classes", c.num_classes},
              {"seed", c.seed},
              {"min_shapes", c.min_shapes},
              {"max_shapes", c.max_shapes},
              {"min_size", c.min_size},
              {"max_size", c.max_size},
              {"class_color_spread", c.class_color_spread},
              {"illumination", c.illumination},
              {"color_cast", c.color_cast},
              {"texture", c.texture},
              {"noise_std", c.noise_std}};
}

}  // namespace

Corpus synth_generate(const SynthConfig& config) {
  validate(config);
  Corpus corpus;
  corpus.height = config.height;
  corpus.width = config.width;
  corpus.num_classes = config.num_classes;
  corpus.samples.reserve(static_cast<std::size_t>(config.count));
  for (int i = 0; i < config.count; ++i) {
    corpus.samples.push_back(synth_one(config, i));
    corpus.samples.back().id = sample_id(i);
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// netpbm

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : b_(bytes) {}

  std::size_t pos() const { return pos_; }

  void magic(char second) {
    if (b_.size() < 2) throw FormatError("file too short for a netpbm magic number", b_.size());
    if (b_[0] != 'P' || b_[1] != static_cast<std::uint8_t>(second)) {
      throw FormatError(std::string("expected magic 'P") + second + "'", 0);
    }
    pos_ = 2;
  }

  int number(const char* what, long max_value) {
    skip_space_and_comments();
    if (pos_ >= b_.size()) throw FormatError(std::string("header ends before ") + what, pos_);
    if (!std::isdigit(b_[pos_])) {
      throw FormatError(std::string("expected decimal ") + what + ", found byte " + std::to_string(b_[pos_]), pos_);
    }
    const std::size_t start = pos_;
    long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > max_value) throw FormatError(std::string(what) + " exceeds " + std::to_string(max_value), start);
      ++pos_;
    }
    return static_cast<int>(v);
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void raster_separator() {
    if (pos_ >= b_.size()) throw FormatError("header ends before the raster separator", pos_);
    if (!std::isspace(b_[pos_])) throw FormatError("expected whitespace after maxval", pos_);
    ++pos_;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n' && b_[pos_] != '\r') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

constexpr long kMaxExtent = 1 << 14;

struct Raster {
  int width = 0, height = 0;
  std::span<const std::uint8_t> payload;
};

Raster parse_netpbm(std::span<const std::uint8_t> bytes, char kind, int channels) {
  HeaderReader r(bytes);
  r.magic(kind);
  const std::size_t width_at = r.pos();
  Raster out;
  out.width = r.number("width", kMaxExtent);
  if (out.width == 0) throw FormatError("width must be positive", width_at);
  const std::size_t height_at = r.pos();
  out.height = r.number("height", kMaxExtent);
  if (out.height == 0) throw FormatError("height must be positive", height_at);
  const std::size_t maxval_at = r.pos();
  const int maxval = r.number("maxval", 65535);
  if (maxval != 255) throw FormatError("maxval must be 255, got " + std::to_string(maxval), maxval_at);
  r.raster_separator();
  const std::size_t need = static_cast<std::size_t>(out.width) * out.height * channels;
  const std::size_t have = bytes.size() - r.pos();
  if (have < need) {
    throw FormatError("truncated payload: expected " + std::to_string(need) + " bytes, found " +
                          std::to_string(have) + ", missing " + std::to_string(need - have),
                      bytes.size());
  }
  if (have > need) {
    throw FormatError(std::to_string(have - need) + " unexpected bytes after the payload", r.pos() + need);
  }
  out.payload = bytes.subspan(r.pos(), need);
  return out;
}

std::vector<std::uint8_t> header(const char* magic, int width, int height) {
  const std::string s = std::string(magic) + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  return {s.begin(), s.end()};
}

}  // namespace

std::vector<std::uint8_t> encode_ppm(const NdArray<float>& image) {
  if (image.rank() != 3 || image.dim(2) != 3) throw ShapeError("encode_ppm: expected H x W x 3, got " + shape_str(image.shape));
  std::vector<std::uint8_t> out = header("P6", image.dim(1), image.dim(0));
  out.reserve(out.size() + image.size());
  for (float v : image.data) {
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0)));
  }
  return out;
}

std::vector<std::uint8_t> encode_pgm(const LabelMap& label) {
  std::vector<std::uint8_t> out = header("P5", label.width, label.height);
  out.insert(out.end(), label.labels.begin(), label.labels.end());
  return out;
}

NdArray<float> decode_ppm(std::span<const std::uint8_t> bytes) {
  const Raster r = parse_netpbm(bytes, '6', 3);
  NdArray<float> image({r.height, r.width, 3});
  for (std::size_t i = 0; i < r.payload.size(); ++i) image.data[i] = static_cast<float>(r.payload[i] / 255.0);
  return image;
}

LabelMap decode_pgm(std::span<const std::uint8_t> bytes, int num_classes) {
  const Raster r = parse_netpbm(bytes, '5', 1);
  LabelMap label(r.height, r.width);
  const std::size_t payload_at = bytes.size() - r.payload.size();
  for (std::size_t i = 0; i < r.payload.size(); ++i) {
    const std::uint8_t v = r.payload[i];
    if (v != kIgnoreLabel && v >= num_classes) {
      throw FormatError("label value " + std::to_string(v) + " outside [0, " + std::to_string(num_classes) +
                            ") and not the ignore marker",
                        payload_at + i);
    }
    label.labels[i] = v;
  }
  return label;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

}  // namespace

void save_corpus(const Corpus& corpus, const fs::path& dir, bool overwrite, const SynthConfig* provenance) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!overwrite) throw std::runtime_error("output directory " + dir.string() + " exists and is not empty");
    fs::remove_all(dir / "img");
    fs::remove_all(dir / "lab");
    fs::remove(dir / "manifest.json");
  }
  fs::create_directories(dir / "img");
  fs::create_directories(dir / "lab");
  json ids = json::array();
  for (const Sample& s : corpus.samples) {
    write_file(dir / "img" / (s.id + ".ppm"), encode_ppm(s.image));
    write_file(dir / "lab" / (s.id + ".pgm"), encode_pgm(s.label));
    ids.push_back(s.id);
  }
  json manifest{{"height", corpus.height}, {"width", corpus.width}, {"num_classes", corpus.num_classes}, {"ids", ids}};
  if (provenance) manifest["generator"] = synth_config_json(*provenance);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Corpus load_corpus(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  json manifest;
  try {
    manifest = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    throw std::runtime_error(manifest_path.string() + ": " + e.what());
  }
  Corpus corpus;
  try {
    corpus.height = manifest.at("height").get<int>();
    corpus.width = manifest.at("width").get<int>();
    corpus.num_classes = manifest.at("num_classes").get<int>();
    for (const auto& id : manifest.at("ids")) {
      Sample s;
      s.id = id.get<std::string>();
      corpus.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(manifest_path.string() + ": " + e.what());
  }
  for (Sample& s : corpus.samples) {
    const fs::path img = dir / "img" / (s.id + ".ppm");
    const fs::path lab = dir / "lab" / (s.id + ".pgm");
    try {
      s.image = decode_ppm(read_file(img));
    } catch (const FormatError& e) {
      throw std::runtime_error(img.string() + ": " + e.what());
    }
    try {
      s.label = decode_pgm(read_file(lab), corpus.num_classes);
    } catch (const FormatError& e) {
      throw std::runtime_error(lab.string() + ": " + e.what());
    }
    if (s.image.dim(0) != corpus.height || s.image.dim(1) != corpus.width) {
      throw std::runtime_error(img.string() + ": extents differ from the manifest");
    }
    if (s.label.height != corpus.height || s.label.width != corpus.width) {
      throw std::runtime_error(lab.string() + ": extents differ from the manifest");
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// splits and batches

SplitManifest make_split(const Corpus& corpus, int n_labeled, std::uint64_t seed) {
  const int n = static_cast<int>(corpus.samples.size());
  if (n_labeled < 0 || n_labeled > n) {
    throw std::invalid_argument("split: n_labeled " + std::to_string(n_labeled) + " outside [0, " +
                                std::to_string(n) + "]");
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, {0x5b117});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::uint8_t> is_labeled(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n_labeled; ++i) is_labeled[order[i]] = 1;
  SplitManifest split;
  split.seed = seed;
  for (int i = 0; i < n; ++i) (is_labeled[i] ? split.labeled : split.unlabeled).push_back(corpus.samples[i].id);
  return split;
}

std::string split_to_json(const SplitManifest& split) {
  return json{{"seed", split.seed}, {"labeled", split.labeled}, {"unlabeled", split.unlabeled}}.dump(2) + "\n";
}

SplitManifest split_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    SplitManifest s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.labeled = j.at("labeled").get<std::vector<std::string>>();
    s.unlabeled = j.at("unlabeled").get<std::vector<std::string>>();
    return s;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("split manifest: ") + e.what());
  }
}

void save_split(const SplitManifest& split, const fs::path& path) {
  write_text(path, split_to_json(split));
}

SplitManifest load_split(const fs::path& path) {
  return split_from_json(read_text(path));
}

std::vector<int> epoch_permutation(int n, std::uint64_t seed, std::uint64_t pool, std::uint64_t epoch) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, {0xba7c4, pool, epoch});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

Batch next_batch(const SplitManifest& split, int batch_size, std::uint64_t seed, std::uint64_t draw) {
  if (split.labeled.empty()) throw std::invalid_argument("next_batch: labeled pool is empty");
  if (split.unlabeled.empty()) throw std::invalid_argument("next_batch: unlabeled pool is empty");
  if (batch_size < 1) throw std::invalid_argument("next_batch: batch size must be >= 1");
  auto take = [&](int n, std::uint64_t pool) {
    std::vector<int> out;
    std::uint64_t cached_epoch = ~std::uint64_t{0};
    std::vector<int> perm;
    for (int j = 0; j < batch_size; ++j) {
      const std::uint64_t k = draw * static_cast<std::uint64_t>(batch_size) + static_cast<std::uint64_t>(j);
      const std::uint64_t epoch = k / static_cast<std::uint64_t>(n);
      if (epoch != cached_epoch) {
        perm = epoch_permutation(n, seed, pool, epoch);
        cached_epoch = epoch;
      }
      out.push_back(perm[k % static_cast<std::uint64_t>(n)]);
    }
    return out;
  };
  Batch b;
  b.labeled = take(static_cast<int>(split.labeled.size()), 0);
  b.unlabeled = take(static_cast<int>(split.unlabeled.size()), 1);
  return b;
}

}  // namespace maskseg
