#pragma once

// Corruption fuzzing of the netpbm decoders, shared by the unit tests and the
// acceptance harness.

#include <string>
#include <vector>

#include "maskseg/data.hpp"
#include "maskseg/rng.hpp"

namespace fuzz {

struct Outcome {
  int cases = 0;
  int rejected = 0;   // FormatError with a byte offset in its message
  int accepted = 0;   // decoded to a well-formed array
  std::vector<std::string> failures;  // anything else
};

inline std::vector<std::uint8_t> corrupt(std::vector<std::uint8_t> bytes, maskseg::Rng& rng, int num_classes,
                                         bool label) {
  std::uniform_int_distribution<int> kind(0, 7);
  std::uniform_int_distribution<int> byte(0, 255);
  auto pos = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  // Header ends after the fourth whitespace-separated token.
  std::size_t header = 0;
  for (int tokens = 0; header < bytes.size() && tokens < 4; ++header) {
    if (bytes[header] == ' ' || bytes[header] == '\n') ++tokens;
  }
  const std::string text(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(header));
  auto replace_header = [&](const std::string& h) {
    std::vector<std::uint8_t> out(h.begin(), h.end());
    out.insert(out.end(), bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return out;
  };
  switch (kind(rng)) {
    case 0:  // truncate anywhere
      bytes.resize(pos(bytes.size()));
      break;
    case 1:  // flip random bytes inside the header
      for (int i = 0; i < 1 + byte(rng) % 3; ++i) bytes[pos(header)] = static_cast<std::uint8_t>(byte(rng));
      break;
    case 2:  // flip random bytes anywhere
      for (int i = 0; i < 1 + byte(rng) % 8; ++i) bytes[pos(bytes.size())] = static_cast<std::uint8_t>(byte(rng));
      break;
    case 3:  // trailing garbage
      for (int i = 0; i < 1 + byte(rng) % 16; ++i) bytes.push_back(static_cast<std::uint8_t>(byte(rng)));
      break;
    case 4: {  // hostile header values
      const char* magic = label ? "P5" : "P6";
      const std::vector<std::string> headers = {
          std::string(magic) + " 0 4 255\n",       std::string(magic) + " 4 -4 255\n",
          std::string(magic) + " 99999 99999 255\n", std::string(magic) + " 4 4 65535\n",
          std::string(magic) + " 4 4 0\n",         std::string(magic) + " 4 4\n",
          std::string(magic) + " 18446744073709551617 4 255\n", std::string(label ? "P6" : "P5") + " 4 4 255\n",
          "P3 4 4 255\n",                           std::string(magic) + "4 4 255\n",
          std::string(magic) + " # open comment",   std::string(magic) + " 4 4 255",
          "",                                       std::string(magic) + " 4x 4 255\n"};
      bytes = replace_header(headers[pos(headers.size())]);
      break;
    }
    case 5:  // out-of-range label values (a no-op flip for images)
      if (label && bytes.size() > header) {
        std::uniform_int_distribution<int> bad(num_classes, 254);
        bytes[header + pos(bytes.size() - header)] = static_cast<std::uint8_t>(bad(rng));
      } else if (bytes.size() > header) {
        bytes[header + pos(bytes.size() - header)] ^= 0x5a;
      }
      break;
    case 6:  // comments and whitespace games in the header
      bytes = replace_header(text.substr(0, 2) + " # note\n" + text.substr(2));
      if (byte(rng) % 2) bytes.insert(bytes.begin() + 2, '\t');
      break;
    default:  // delete a random span
      if (bytes.size() > 2) {
        const std::size_t a = pos(bytes.size() - 1);
        const std::size_t b = a + 1 + pos(std::min<std::size_t>(bytes.size() - a - 1, 16));
        bytes.erase(bytes.begin() + static_cast<std::ptrdiff_t>(a), bytes.begin() + static_cast<std::ptrdiff_t>(b));
      }
  }
  return bytes;
}

// Runs `cases` corruptions of a valid image and label of the given extents.
inline Outcome run(int cases, std::uint64_t seed, int height = 6, int width = 5, int num_classes = 4) {
  maskseg::NdArray<float> image({height, width, 3});
  maskseg::LabelMap labels(height, width);
  maskseg::Rng fill(seed);
  for (float& v : image.data) v = static_cast<float>(fill() % 256) / 255.0f;
  for (auto& v : labels.labels) v = static_cast<std::uint8_t>(fill() % num_classes);
  labels.labels[0] = maskseg::kIgnoreLabel;
  const auto ppm = maskseg::encode_ppm(image);
  const auto pgm = maskseg::encode_pgm(labels);

  Outcome out;
  for (int i = 0; i < cases; ++i) {
    maskseg::Rng rng = maskseg::make_rng(seed, {static_cast<std::uint64_t>(i)});
    const bool label = i % 2 == 1;
    const auto bytes = corrupt(label ? pgm : ppm, rng, num_classes, label);
    ++out.cases;
    try {
      if (label) {
        const auto y = maskseg::decode_pgm(bytes, num_classes);
        bool ok = y.height > 0 && y.width > 0 && y.size() == static_cast<std::size_t>(y.height) * y.width;
        for (auto v : y.labels) ok = ok && (v < num_classes || v == maskseg::kIgnoreLabel);
        if (!ok) out.failures.push_back("case " + std::to_string(i) + ": malformed label accepted");
        else ++out.accepted;
      } else {
        const auto x = maskseg::decode_ppm(bytes);
        bool ok = x.rank() == 3 && x.dim(2) == 3 && x.size() == static_cast<std::size_t>(x.dim(0)) * x.dim(1) * 3;
        for (float v : x.data) ok = ok && v >= 0.0f && v <= 1.0f;
        if (!ok) out.failures.push_back("case " + std::to_string(i) + ": malformed image accepted");
        else ++out.accepted;
      }
    } catch (const maskseg::FormatError& e) {
      const std::string what = e.what();
      if (what.find("byte offset") == std::string::npos || what.size() < 24) {
        out.failures.push_back("case " + std::to_string(i) + ": terse error '" + what + "'");
      } else {
        ++out.rejected;
      }
    } catch (const std::exception& e) {
      out.failures.push_back("case " + std::to_string(i) + ": unexpected " + e.what());
    }
  }
  return out;
}

}  // namespace fuzz
