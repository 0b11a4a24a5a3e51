#pragma once

// Synthetic coarse-vs-fine caption corpus.
//
// General samples show 1-3 large coloured shapes and name them. Medical samples
// show large shapes plus 1-2 tiny 3x3 white marks and name only the marks and
// the quadrant each sits in. Marks are centred on detail-patch centres and kept
// clear of every shape by the general branch's smoothing footprint, so the
// coarse encoder provably cannot see them while the detail encoder can.

#include "dualcap/image.hpp"
#include "dualcap/manifest.hpp"
#include "dualcap/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dualcap {

struct SyntheticCorpusConfig {
  int image_size = 64;
  int general_train = 200;
  int general_test = 0;
  int medical_train = 200;
  int medical_test = 50;
  int max_shapes = 3;
  int max_medical_shapes = 2;
  int max_marks = 2;
  int mark_size = 3;
  int mark_grid = 8;     // marks sit on centres of this pixel grid
  int blur_kernel = 9;   // general-branch smoothing window the marks must survive under
  std::vector<std::string> shapes{"circle", "square", "triangle"};
  std::vector<std::string> colors{"red", "green", "blue", "yellow", "purple"};
  std::vector<std::string> marks{"cross", "ring", "slash", "backslash"};
  std::vector<std::string> regions{"upper left", "upper right", "lower left", "lower right"};
};

struct ShapeSpec {
  int kind = 0;   // index into shapes
  int color = 0;  // index into colors
  int cx = 0;
  int cy = 0;
  int radius = 0;
};

struct MarkSpec {
  int kind = 0;    // index into marks
  int region = 0;  // index into regions
  int cx = 0;
  int cy = 0;
};

struct SyntheticScene {
  std::vector<ShapeSpec> shapes;
  std::vector<MarkSpec> marks;
};

struct SyntheticCorpus {
  Manifest general;
  Manifest medical;
};

void validate(const SyntheticCorpusConfig& cfg);

RgbImage render_scene(const SyntheticCorpusConfig& cfg, const SyntheticScene& scene);
std::string caption_scene(const SyntheticCorpusConfig& cfg, const SyntheticScene& scene, Domain domain);

SyntheticScene sample_general_scene(const SyntheticCorpusConfig& cfg, Rng& rng);
/// mark_count <= 0 draws 1..max_marks.
SyntheticScene sample_medical_scene(const SyntheticCorpusConfig& cfg, Rng& rng, int mark_count = 0);

/// Mark centres inside a region that keep the smoothing footprint clear of every shape.
std::vector<MarkSpec> mark_candidates(const SyntheticCorpusConfig& cfg, const std::vector<ShapeSpec>& shapes,
                                      int region);

/// Writes PPM images under out_dir/images and manifests out_dir/general.jsonl, out_dir/medical.jsonl.
SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusConfig& cfg, std::uint64_t seed,
                                          const std::filesystem::path& out_dir);

}  // namespace dualcap
