#include "dualcap/encoders.hpp"

#include "dualcap/digest.hpp"
#include "dualcap/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace dualcap {

EncoderSpec default_general_spec() { return EncoderSpec{EncoderKind::kGeneral, 64, 16, 16, 32, 9, 3.0, 11}; }

EncoderSpec default_detail_spec() { return EncoderSpec{EncoderKind::kDetail, 64, 8, 64, 48, 0, 3.0, 13}; }

void validate(const EncoderSpec& spec) {
  if (spec.patch_size < 1 || spec.image_size % spec.patch_size != 0)
    throw ConfigError("encoder image_size must be divisible by patch_size");
  const int side = spec.image_size / spec.patch_size;
  if (spec.rows != side * side) throw ConfigError("encoder rows must equal (image_size/patch_size)^2");
  if (spec.dims < 1) throw ConfigError("encoder dims must be positive");
  if (!(spec.weight_scale > 0.0) || !std::isfinite(spec.weight_scale))
    throw ConfigError("encoder weight_scale must be positive");
  if (spec.kind == EncoderKind::kGeneral && (spec.blur_kernel < 1 || spec.blur_kernel % 2 == 0))
    throw ConfigError("general encoder blur_kernel must be a positive odd integer");
  if (spec.kind == EncoderKind::kDetail && spec.blur_kernel != 0)
    throw ConfigError("detail encoder takes no blur_kernel");
}

RgbImage median_smooth(const RgbImage& image, int kernel) {
  const int r = kernel / 2;
  RgbImage out(image.width, image.height);
  std::vector<std::uint8_t> window(static_cast<std::size_t>(kernel) * kernel);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        std::size_t n = 0;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = std::clamp(y + dy, 0, image.height - 1);
          for (int dx = -r; dx <= r; ++dx) {
            const int xx = std::clamp(x + dx, 0, image.width - 1);
            window[n++] = image.at(xx, yy, c);
          }
        }
        auto mid = window.begin() + static_cast<std::ptrdiff_t>(n / 2);
        std::nth_element(window.begin(), mid, window.begin() + static_cast<std::ptrdiff_t>(n));
        out.at(x, y, c) = *mid;
      }
    }
  }
  return out;
}

ImageEncoder::ImageEncoder(EncoderSpec spec) : spec_(spec) {
  validate(spec_);
  const int patch_dim = spec_.patch_size * spec_.patch_size * 3;
  Rng rng(spec_.seed);
  projection_ = random_normal(rng, patch_dim, spec_.dims, spec_.weight_scale / std::sqrt(static_cast<double>(patch_dim)));
  quantize_f32(projection_);
  positions_ = sinusoidal_positions(spec_.rows, spec_.dims);
}

FeatureSeq ImageEncoder::encode(const RgbImage& image) const {
  if (image.width != spec_.image_size || image.height != spec_.image_size)
    throw DataError("encoder expects " + std::to_string(spec_.image_size) + "x" +
                    std::to_string(spec_.image_size) + " images, got " + std::to_string(image.width) + "x" +
                    std::to_string(image.height));
  const RgbImage& src = spec_.kind == EncoderKind::kGeneral ? median_smooth(image, spec_.blur_kernel) : image;
  const int p = spec_.patch_size;
  const int side = spec_.image_size / p;
  Matrix patches(spec_.rows, p * p * 3);
  for (int py = 0; py < side; ++py) {
    for (int px = 0; px < side; ++px) {
      const int row = py * side + px;
      int col = 0;
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x)
          for (int c = 0; c < 3; ++c) patches(row, col++) = src.at(px * p + x, py * p + y, c) / 255.0;
    }
  }
  FeatureSeq out{patches * projection_ + positions_};
  if (!out.values.allFinite()) throw NumericError("non-finite encoder output");
  return out;
}

std::string ImageEncoder::fingerprint() const {
  Sha256 sha;
  sha.update(spec_.kind == EncoderKind::kGeneral ? "general" : "detail");
  for (const long long v : {spec_.image_size, spec_.patch_size, spec_.rows, spec_.dims, spec_.blur_kernel})
    sha.update_i64(v);
  sha.update_f32(std::span(&spec_.weight_scale, 1));
  sha.update_f32(std::span(projection_.data(), static_cast<std::size_t>(projection_.size())));
  sha.update_f32(std::span(positions_.data(), static_cast<std::size_t>(positions_.size())));
  return sha.hex_digest();
}

FeatureSeq encode_general(const ImageEncoder& encoder, const RgbImage& image) {
  if (encoder.spec().kind != EncoderKind::kGeneral) throw ConfigError("encode_general needs a general encoder");
  return encoder.encode(image);
}

FeatureSeq encode_detail(const ImageEncoder& encoder, const RgbImage& image) {
  if (encoder.spec().kind != EncoderKind::kDetail) throw ConfigError("encode_detail needs a detail encoder");
  return encoder.encode(image);
}

std::string encoder_fingerprint(const EncoderSpec& spec) { return ImageEncoder(spec).fingerprint(); }

}  // namespace dualcap
