#pragma once

// Synthetic shape corpus, its PPM / PGM on-disk form, labeled / unlabeled
// splits and batch assembly.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskseg/label_map.hpp"
#include "maskseg/tensor.hpp"

namespace maskseg {

struct Sample {
  std::string id;
  NdArray<float> image;  // H x W x 3 in [0, 1]
  LabelMap label;
};

struct Corpus {
  int height = 0;
  int width = 0;
  int num_classes = 0;
  std::vector<Sample> samples;

  // Position of `id` in `samples`; throws std::out_of_range when missing.
  std::size_t index_of(const std::string& id) const;
};

struct SynthConfig {
  int count = 4;
  int height = 64;
  int width = 64;
  int num_classes = 4;
  std::uint64_t seed = 0;

  int min_shapes = 2;
  int max_shapes = 4;
  double min_size = 0.12;  // shape radius range as a fraction of min(H, W)
  double max_size = 0.28;
  double class_color_spread = 0.12;  // per-shape jitter around the class color
  double illumination = 0.40;        // per-image gain range, 1 +- a
  double color_cast = 0.15;          // per-image additive tint, per channel
  double texture = 0.12;             // background sinusoid amplitude
  double noise_std = 0.08;           // per-pixel Gaussian
};

void validate(const SynthConfig& config);

// Deterministic in (config); class 0 is background.
Corpus synth_generate(const SynthConfig& config);

// Writes manifest.json, img/<id>.ppm, lab/<id>.pgm. An existing non-empty
// directory is rejected unless `overwrite`.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir, bool overwrite = false,
                 const SynthConfig* provenance = nullptr);
Corpus load_corpus(const std::filesystem::path& dir);

// Malformed netpbm input; `offset` is the byte at which parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

std::vector<std::uint8_t> encode_ppm(const NdArray<float>& image);
std::vector<std::uint8_t> encode_pgm(const LabelMap& label);
// Maxval must be 255. Values are scaled by 1/255.
NdArray<float> decode_ppm(std::span<const std::uint8_t> bytes);
// Values in [num_classes, 255) are rejected.
LabelMap decode_pgm(std::span<const std::uint8_t> bytes, int num_classes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

struct SplitManifest {
  std::vector<std::string> labeled;
  std::vector<std::string> unlabeled;
  std::uint64_t seed = 0;

  bool operator==(const SplitManifest&) const = default;
};

// Uniform random subset of `n_labeled` ids; both lists keep corpus order.
SplitManifest make_split(const Corpus& corpus, int n_labeled, std::uint64_t seed);
std::string split_to_json(const SplitManifest& split);
SplitManifest split_from_json(const std::string& text);
void save_split(const SplitManifest& split, const std::filesystem::path& path);
SplitManifest load_split(const std::filesystem::path& path);

// Indices into split.labeled / split.unlabeled.
struct Batch {
  std::vector<int> labeled;
  std::vector<int> unlabeled;
};

// Draw number `draw` of a stream that walks each pool in epochs, every
// epoch a fresh permutation. Position k of the stream is element k % N of
// the permutation for epoch k / N, so any draw is computable on its own.
// The smaller pool simply runs through more epochs.
Batch next_batch(const SplitManifest& split, int batch_size, std::uint64_t seed, std::uint64_t draw);

// Permutation of [0, n) used for one epoch of one pool.
std::vector<int> epoch_permutation(int n, std::uint64_t seed, std::uint64_t pool, std::uint64_t epoch);

}  // namespace maskseg
