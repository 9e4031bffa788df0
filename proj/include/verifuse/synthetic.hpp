#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "verifuse/common.hpp"
#include "verifuse/image.hpp"

namespace verifuse {

/// separable: the label decides both the text vocabulary and the image
/// brightness. xor: an independent text bit and image bit, label = text XOR
/// image, so neither modality alone predicts it.
enum class SyntheticKind { separable, xor_ };

inline SyntheticKind parse_synthetic_kind(std::string_view s) {
  if (s == "separable") return SyntheticKind::separable;
  if (s == "xor") return SyntheticKind::xor_;
  throw InvalidArgument("unknown synthetic corpus kind '" + std::string(s) + "' (expected separable|xor)");
}

struct SyntheticItem {
  std::string id;
  std::string title;
  std::string body;
  std::string image_file;  // relative to the corpus directory
  Label label = Label::real;
  int text_bit = 0;
  int image_bit = 0;
};

namespace detail {

inline const std::vector<std::string>& synthetic_words(int group) {
  static const std::vector<std::string> a{"amber", "anchor", "apple", "arrow", "atlas", "autumn", "azure", "acorn"};
  static const std::vector<std::string> b{"basalt", "beacon", "birch", "blizzard", "bronze", "buckle", "bison", "bramble"};
  static const std::vector<std::string> neutral{"the", "report", "said", "today", "city", "people", "new", "on",
                                                "after", "local", "officials", "week"};
  return group == 0 ? a : group == 1 ? b : neutral;
}

inline std::string synthetic_sentence(int group, int words, Rng& rng) {
  std::string s;
  for (int i = 0; i < words; ++i) {
    const int g = rng.bernoulli(0.6) ? group : 2;
    const auto& pool = synthetic_words(g);
    if (!s.empty()) s.push_back(' ');
    s += pool[rng.below(pool.size())];
  }
  return s;
}

/// 48x48 RGB: dark (bit 0) or bright (bit 1) base with a random hue tilt
/// and per-pixel noise.
inline std::vector<unsigned char> synthetic_pixels(int bit, Rng& rng, int side = 48) {
  const double base = bit ? 185.0 : 70.0;
  double tilt[3];
  for (double& t : tilt) t = rng.uniform(-20.0, 20.0);
  std::vector<unsigned char> px(static_cast<std::size_t>(side) * side * 3);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = base + tilt[c] + 10.0 * std::sin(0.3 * (x + y)) + rng.normal(0.0, 12.0);
        px[(static_cast<std::size_t>(y) * side + x) * 3 + c] = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  return px;
}

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

}  // namespace detail

/// Writes `<dir>/manifest.csv` (id,title,text,image_url,label) and
/// `<dir>/images/*.png`. Class cells are balanced (round-robin, then shuffled).
inline std::vector<SyntheticItem> write_synthetic_corpus(const std::filesystem::path& dir, SyntheticKind kind,
                                                         std::size_t n, std::uint64_t seed) {
  std::filesystem::create_directories(dir / "images");
  Rng rng(seed);
  std::vector<std::pair<int, int>> cells;
  for (std::size_t i = 0; i < n; ++i) {
    if (kind == SyntheticKind::separable) {
      const int b = static_cast<int>(i % 2);
      cells.emplace_back(b, b);
    } else {
      cells.emplace_back(static_cast<int>(i % 2), static_cast<int>((i / 2) % 2));
    }
  }
  rng.shuffle(cells);

  std::vector<SyntheticItem> items;
  std::ofstream csv(dir / "manifest.csv", std::ios::binary | std::ios::trunc);
  csv << "id,title,text,image_url,label\n";
  for (std::size_t i = 0; i < n; ++i) {
    SyntheticItem it;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "syn%05zu", i);
    it.id = idbuf;
    it.text_bit = cells[i].first;
    it.image_bit = cells[i].second;
    const int fake = kind == SyntheticKind::separable ? it.text_bit : (it.text_bit ^ it.image_bit);
    it.label = fake ? Label::fake : Label::real;
    it.title = detail::synthetic_sentence(it.text_bit, 4, rng);
    it.body = detail::synthetic_sentence(it.text_bit, 12 + static_cast<int>(rng.below(12)), rng);
    it.image_file = "images/" + it.id + ".png";
    const auto png = encode_png(48, 48, detail::synthetic_pixels(it.image_bit, rng));
    std::ofstream img(dir / it.image_file, std::ios::binary | std::ios::trunc);
    img.write(png.data(), static_cast<std::streamsize>(png.size()));
    csv << it.id << ',' << detail::csv_quote(it.title) << ',' << detail::csv_quote(it.body) << ',' << it.image_file
        << ',' << to_string(it.label) << '\n';
    items.push_back(std::move(it));
  }
  return items;
}

}  // namespace verifuse
