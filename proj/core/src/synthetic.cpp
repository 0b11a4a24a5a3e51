#include "dualcap/synthetic.hpp"

#include "dualcap/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

namespace dualcap {
namespace {

constexpr std::array<std::array<std::uint8_t, 3>, 8> kPalette{{
    {220, 40, 40},    // red
    {40, 170, 60},    // green
    {50, 80, 220},    // blue
    {220, 200, 40},   // yellow
    {150, 60, 190},   // purple
    {230, 130, 30},   // orange
    {40, 190, 190},   // cyan
    {140, 90, 50},    // brown
}};

// 3x3 mark stencils, row-major.
constexpr std::array<std::array<bool, 9>, 4> kStencils{{
    {false, true, false, true, true, true, false, true, false},  // cross
    {true, true, true, true, false, true, true, true, true},     // ring
    {false, false, true, false, true, false, true, false, false},  // slash
    {true, false, false, false, true, false, false, false, true},  // backslash
}};

bool inside_shape(const ShapeSpec& s, int x, int y) {
  const int dx = x - s.cx;
  const int dy = y - s.cy;
  switch (s.kind % 3) {
    case 0:
      return dx * dx + dy * dy <= s.radius * s.radius;
    case 1:
      return std::abs(dx) <= s.radius && std::abs(dy) <= s.radius;
    default: {
      // apex up: half-width grows linearly from 0 at the top to radius at the bottom
      if (dy < -s.radius || dy > s.radius) return false;
      const double half = s.radius * (static_cast<double>(dy + s.radius) / (2.0 * s.radius));
      return std::abs(dx) <= half;
    }
  }
}

int draw_int(Rng& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1)));
}

ShapeSpec draw_shape(const SyntheticCorpusConfig& cfg, Rng& rng, int min_r, int max_r) {
  ShapeSpec s;
  s.kind = static_cast<int>(uniform_index(rng, cfg.shapes.size()));
  s.color = static_cast<int>(uniform_index(rng, cfg.colors.size()));
  s.radius = draw_int(rng, min_r, max_r);
  s.cx = draw_int(rng, s.radius, cfg.image_size - 1 - s.radius);
  s.cy = draw_int(rng, s.radius, cfg.image_size - 1 - s.radius);
  return s;
}

std::string article_phrase(const std::string& color, const std::string& noun) {
  return "a " + color + " " + noun;
}

}  // namespace

void validate(const SyntheticCorpusConfig& cfg) {
  if (cfg.image_size < 32 || cfg.image_size % cfg.mark_grid != 0)
    throw ConfigError("corpus.image_size must be >= 32 and a multiple of corpus.mark_grid");
  if (cfg.general_train < 0 || cfg.general_test < 0 || cfg.medical_train < 0 || cfg.medical_test < 0)
    throw ConfigError("corpus sample counts must be non-negative");
  if (cfg.max_shapes < 1 || cfg.max_medical_shapes < 1) throw ConfigError("corpus shape counts must be >= 1");
  if (cfg.max_marks < 1 || cfg.max_marks > static_cast<int>(cfg.regions.size()))
    throw ConfigError("corpus.max_marks must be in [1, number of regions]");
  if (cfg.mark_size != 3) throw ConfigError("corpus.mark_size must be 3");
  if (cfg.blur_kernel < 1 || cfg.blur_kernel % 2 == 0) throw ConfigError("corpus.blur_kernel must be odd");
  if (cfg.shapes.empty() || cfg.shapes.size() > 3) throw ConfigError("corpus.shapes must name 1..3 shapes");
  if (cfg.colors.empty() || cfg.colors.size() > kPalette.size()) throw ConfigError("corpus.colors: 1..8 names");
  if (cfg.marks.empty() || cfg.marks.size() > kStencils.size()) throw ConfigError("corpus.marks: 1..4 names");
  if (cfg.regions.size() != 4) throw ConfigError("corpus.regions must name the four quadrants");
}

RgbImage render_scene(const SyntheticCorpusConfig& cfg, const SyntheticScene& scene) {
  RgbImage img(cfg.image_size, cfg.image_size);
  for (const auto& s : scene.shapes) {
    const auto& rgb = kPalette[static_cast<std::size_t>(s.color)];
    for (int y = std::max(0, s.cy - s.radius); y <= std::min(cfg.image_size - 1, s.cy + s.radius); ++y)
      for (int x = std::max(0, s.cx - s.radius); x <= std::min(cfg.image_size - 1, s.cx + s.radius); ++x)
        if (inside_shape(s, x, y))
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = rgb[static_cast<std::size_t>(c)];
  }
  for (const auto& m : scene.marks) {
    const auto& stencil = kStencils[static_cast<std::size_t>(m.kind)];
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if (stencil[static_cast<std::size_t>((dy + 1) * 3 + dx + 1)])
          for (int c = 0; c < 3; ++c) img.at(m.cx + dx, m.cy + dy, c) = 255;
  }
  return img;
}

std::string caption_scene(const SyntheticCorpusConfig& cfg, const SyntheticScene& scene, Domain domain) {
  std::vector<std::string> parts;
  if (domain == Domain::kGeneral) {
    for (const auto& s : scene.shapes)
      parts.push_back(article_phrase(cfg.colors[static_cast<std::size_t>(s.color)],
                                     cfg.shapes[static_cast<std::size_t>(s.kind)]));
  } else {
    for (const auto& m : scene.marks)
      parts.push_back("a tiny " + cfg.marks[static_cast<std::size_t>(m.kind)] + " mark in the " +
                      cfg.regions[static_cast<std::size_t>(m.region)] + " region");
  }
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += (i + 1 == parts.size()) ? " and " : ", ";
    out += parts[i];
  }
  return out;
}

SyntheticScene sample_general_scene(const SyntheticCorpusConfig& cfg, Rng& rng) {
  SyntheticScene scene;
  const int count = draw_int(rng, 1, cfg.max_shapes);
  const int max_r = cfg.image_size * 7 / 32;  // 14 px at 64x64
  for (int i = 0; i < count; ++i) scene.shapes.push_back(draw_shape(cfg, rng, cfg.image_size / 8, max_r));
  std::stable_sort(scene.shapes.begin(), scene.shapes.end(),
                   [](const ShapeSpec& a, const ShapeSpec& b) { return a.cx < b.cx; });
  return scene;
}

std::vector<MarkSpec> mark_candidates(const SyntheticCorpusConfig& cfg, const std::vector<ShapeSpec>& shapes,
                                      int region) {
  const int half_mark = cfg.mark_size / 2;
  const int r = cfg.blur_kernel / 2;
  // Every output pixel whose window touches the mark lies within half_mark + r of the
  // centre; those windows reach half_mark + 2r. Keeping that box free of shapes and
  // inside the image means the smoothing sees only background around the mark.
  const int clearance = half_mark + 2 * r;
  const int half = cfg.image_size / 2;
  const int x0 = (region % 2 == 0) ? 0 : half;
  const int y0 = (region / 2 == 0) ? 0 : half;
  std::vector<MarkSpec> out;
  for (int cy = y0 + cfg.mark_grid / 2; cy < y0 + half; cy += cfg.mark_grid) {
    for (int cx = x0 + cfg.mark_grid / 2; cx < x0 + half; cx += cfg.mark_grid) {
      if (cx - clearance < 0 || cy - clearance < 0 || cx + clearance >= cfg.image_size ||
          cy + clearance >= cfg.image_size)
        continue;
      bool clear = true;
      for (int y = cy - clearance; y <= cy + clearance && clear; ++y)
        for (int x = cx - clearance; x <= cx + clearance && clear; ++x)
          for (const auto& s : shapes)
            if (inside_shape(s, x, y)) {
              clear = false;
              break;
            }
      if (clear) out.push_back(MarkSpec{0, region, cx, cy});
    }
  }
  return out;
}

SyntheticScene sample_medical_scene(const SyntheticCorpusConfig& cfg, Rng& rng, int mark_count) {
  const int count = mark_count > 0 ? mark_count : draw_int(rng, 1, cfg.max_marks);
  std::vector<int> regions(cfg.regions.size());
  for (std::size_t i = 0; i < regions.size(); ++i) regions[i] = static_cast<int>(i);
  // partial Fisher-Yates, then canonical order for the caption
  for (int i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(i) + uniform_index(rng, regions.size() - static_cast<std::size_t>(i));
    std::swap(regions[static_cast<std::size_t>(i)], regions[j]);
  }
  std::vector<int> chosen(regions.begin(), regions.begin() + count);
  std::sort(chosen.begin(), chosen.end());

  std::vector<int> kinds;
  for (int i = 0; i < count; ++i) kinds.push_back(static_cast<int>(uniform_index(rng, cfg.marks.size())));

  const int min_r = cfg.image_size / 10;
  const int max_r = cfg.image_size * 5 / 32;
  for (int attempt = 0;; ++attempt) {
    SyntheticScene scene;
    // shrink the shape budget if placements keep failing
    const int shape_cap = attempt < 50 ? cfg.max_medical_shapes : 1;
    const int shapes = attempt < 200 ? draw_int(rng, 1, shape_cap) : 0;
    for (int i = 0; i < shapes; ++i) scene.shapes.push_back(draw_shape(cfg, rng, min_r, max_r));
    bool ok = true;
    for (int i = 0; i < count && ok; ++i) {
      auto cands = mark_candidates(cfg, scene.shapes, chosen[static_cast<std::size_t>(i)]);
      if (cands.empty()) {
        ok = false;
        break;
      }
      MarkSpec m = cands[uniform_index(rng, cands.size())];
      m.kind = kinds[static_cast<std::size_t>(i)];
      scene.marks.push_back(m);
    }
    if (ok) return scene;
    if (attempt > 200) throw DataError("cannot place marks; image too small for the configured blur kernel");
  }
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusConfig& cfg, std::uint64_t seed,
                                          const std::filesystem::path& out_dir) {
  validate(cfg);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw DataError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  SyntheticCorpus corpus;
  corpus.general.source_name = "general";
  corpus.general.base_dir = out_dir;
  corpus.medical.source_name = "medical";
  corpus.medical.base_dir = out_dir;

  // Independent streams per domain so changing one count leaves the other domain intact.
  Rng general_rng(seed * 2 + 1);
  Rng medical_rng(seed * 2 + 2);

  auto emit = [&](Manifest& manifest, Domain domain, Split split, int count, Rng& rng) {
    for (int i = 0; i < count; ++i) {
      const SyntheticScene scene =
          domain == Domain::kGeneral ? sample_general_scene(cfg, rng) : sample_medical_scene(cfg, rng);
      char name[64];
      std::snprintf(name, sizeof name, "images/%s_%s_%04d.ppm", std::string(to_string(domain)).c_str(),
                    std::string(to_string(split)).c_str(), i);
      write_ppm(out_dir / name, render_scene(cfg, scene));
      manifest.samples.push_back(CaptionSample{name, caption_scene(cfg, scene, domain), domain, split});
    }
  };
  emit(corpus.general, Domain::kGeneral, Split::kTrain, cfg.general_train, general_rng);
  emit(corpus.general, Domain::kGeneral, Split::kTest, cfg.general_test, general_rng);
  emit(corpus.medical, Domain::kMedical, Split::kTrain, cfg.medical_train, medical_rng);
  emit(corpus.medical, Domain::kMedical, Split::kTest, cfg.medical_test, medical_rng);

  save_manifest(out_dir / "general.jsonl", corpus.general);
  save_manifest(out_dir / "medical.jsonl", corpus.medical);
  return corpus;
}

}  // namespace dualcap
