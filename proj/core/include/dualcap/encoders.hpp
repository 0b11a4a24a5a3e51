#pragma once

// Frozen image encoders. Both are seeded random linear patch embeddings plus a
// fixed sinusoidal position table; the general (coarse) branch first smooths
// the image with a rank filter that wipes out sub-window detail.

#include "dualcap/image.hpp"
#include "dualcap/tensor.hpp"

#include <cstdint>
#include <string>

namespace dualcap {

enum class EncoderKind { kGeneral, kDetail };

struct EncoderSpec {
  EncoderKind kind = EncoderKind::kGeneral;
  int image_size = 64;
  int patch_size = 16;
  int rows = 16;        // (image_size / patch_size)^2
  int dims = 32;
  int blur_kernel = 9;  // general only; 0 for detail
  double weight_scale = 3.0;  // projection entries ~ N(0, (weight_scale / sqrt(patch pixels * 3))^2)
  std::uint64_t seed = 11;
};

EncoderSpec default_general_spec();
EncoderSpec default_detail_spec();
void validate(const EncoderSpec& spec);

/// rows x dims image features.
struct FeatureSeq {
  Matrix values;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index dims() const { return values.cols(); }
};

/// Per-channel median over a k x k window with clamped borders.
RgbImage median_smooth(const RgbImage& image, int kernel);

class ImageEncoder {
 public:
  explicit ImageEncoder(EncoderSpec spec);

  FeatureSeq encode(const RgbImage& image) const;

  const EncoderSpec& spec() const { return spec_; }
  const Matrix& projection() const { return projection_; }
  const Matrix& positions() const { return positions_; }
  /// Stable digest of the spec and frozen weights.
  std::string fingerprint() const;

 private:
  EncoderSpec spec_;
  Matrix projection_;
  Matrix positions_;
};

/// Coarse branch (v_clip analogue).
FeatureSeq encode_general(const ImageEncoder& encoder, const RgbImage& image);
/// Fine branch (v_sam analogue).
FeatureSeq encode_detail(const ImageEncoder& encoder, const RgbImage& image);

std::string encoder_fingerprint(const EncoderSpec& spec);

}  // namespace dualcap
