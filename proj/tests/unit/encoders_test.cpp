#include "dualcap/encoders.hpp"
#include "dualcap/errors.hpp"
#include "dualcap/synthetic.hpp"

#include <gtest/gtest.h>

#include <set>

namespace dualcap {
namespace {

RgbImage noise_image(std::uint64_t seed, int size = 64) {
  Rng rng(seed);
  RgbImage img(size, size);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(uniform_index(rng, 256));
  return img;
}

TEST(Encoders, DefaultShapes) {
  const ImageEncoder general(default_general_spec());
  const ImageEncoder detail(default_detail_spec());
  const RgbImage img = noise_image(1);
  const FeatureSeq g = encode_general(general, img);
  const FeatureSeq d = encode_detail(detail, img);
  EXPECT_EQ(g.rows(), 16);
  EXPECT_EQ(g.dims(), 32);
  EXPECT_EQ(d.rows(), 64);
  EXPECT_EQ(d.dims(), 48);
}

TEST(Encoders, Deterministic) {
  const RgbImage img = noise_image(2);
  const ImageEncoder a(default_detail_spec());
  const ImageEncoder b(default_detail_spec());
  EXPECT_TRUE(a.encode(img).values == a.encode(img).values);
  EXPECT_TRUE(a.encode(img).values == b.encode(img).values);
}

TEST(Encoders, BlankImageGivesPositions) {
  const RgbImage blank(64, 64);
  for (const auto& spec : {default_general_spec(), default_detail_spec()}) {
    const ImageEncoder enc(spec);
    EXPECT_TRUE(enc.encode(blank).values == enc.positions());
  }
}

TEST(Encoders, WrongSizeRejected) {
  const ImageEncoder enc(default_general_spec());
  EXPECT_THROW(enc.encode(noise_image(3, 32)), DataError);
  EXPECT_THROW(enc.encode(RgbImage(64, 48)), DataError);
}

TEST(Encoders, InvalidSpecsRejected) {
  EncoderSpec s = default_detail_spec();
  s.patch_size = 7;
  EXPECT_THROW(validate(s), ConfigError);
  s = default_detail_spec();
  s.rows = 16;
  EXPECT_THROW(validate(s), ConfigError);
  s = default_detail_spec();
  s.weight_scale = 0.0;
  EXPECT_THROW(validate(s), ConfigError);
}

class MarkPairs : public ::testing::Test {
 protected:
  // medical scenes rendered with and without their marks
  void SetUp() override {
    Rng rng(7);
    for (int i = 0; i < 40; ++i) {
      SyntheticScene scene = sample_medical_scene(cfg, rng);
      with_marks.push_back(render_scene(cfg, scene));
      scene.marks.clear();
      without_marks.push_back(render_scene(cfg, scene));
    }
  }
  SyntheticCorpusConfig cfg;
  std::vector<RgbImage> with_marks;
  std::vector<RgbImage> without_marks;
};

TEST_F(MarkPairs, ImagesActuallyDiffer) {
  for (std::size_t i = 0; i < with_marks.size(); ++i) EXPECT_FALSE(with_marks[i] == without_marks[i]);
}

TEST_F(MarkPairs, SmoothingErasesMarks) {
  for (std::size_t i = 0; i < with_marks.size(); ++i)
    EXPECT_TRUE(median_smooth(with_marks[i], 9) == median_smooth(without_marks[i], 9)) << i;
}

TEST_F(MarkPairs, GeneralOutputsIdentical) {
  const ImageEncoder general(default_general_spec());
  for (std::size_t i = 0; i < with_marks.size(); ++i)
    EXPECT_TRUE(general.encode(with_marks[i]).values == general.encode(without_marks[i]).values) << i;
}

TEST_F(MarkPairs, DetailOutputsDiffer) {
  const ImageEncoder detail(default_detail_spec());
  for (std::size_t i = 0; i < with_marks.size(); ++i) {
    const Matrix diff = detail.encode(with_marks[i]).values - detail.encode(without_marks[i]).values;
    EXPECT_GT(diff.rowwise().norm().maxCoeff(), 1e-3) << i;
  }
}

TEST(MedianSmooth, ConstantImageUnchanged) {
  RgbImage img(16, 16);
  for (auto& p : img.pixels) p = 77;
  EXPECT_TRUE(median_smooth(img, 5) == img);
}

TEST(MedianSmooth, KernelOneIsIdentity) {
  const RgbImage img = noise_image(4, 12);
  EXPECT_TRUE(median_smooth(img, 1) == img);
}

TEST(MedianSmooth, MatchesBruteForce) {
  const RgbImage img = noise_image(5, 10);
  const RgbImage out = median_smooth(img, 3);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x)
      for (int c = 0; c < 3; ++c) {
        std::vector<int> window;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            window.push_back(img.at(std::clamp(x + dx, 0, 9), std::clamp(y + dy, 0, 9), c));
        std::sort(window.begin(), window.end());
        ASSERT_EQ(out.at(x, y, c), window[4]);
      }
}

TEST(EncoderFingerprint, StableForSameSpec) {
  EXPECT_EQ(encoder_fingerprint(default_general_spec()), encoder_fingerprint(default_general_spec()));
  EXPECT_EQ(ImageEncoder(default_detail_spec()).fingerprint(), encoder_fingerprint(default_detail_spec()));
  EXPECT_NE(encoder_fingerprint(default_general_spec()), encoder_fingerprint(default_detail_spec()));
}

TEST(EncoderFingerprint, DistinctAcrossSeeds) {
  std::set<std::string> digests;
  EncoderSpec spec = default_general_spec();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    spec.seed = seed;
    digests.insert(encoder_fingerprint(spec));
  }
  EXPECT_EQ(digests.size(), 100u);
}

TEST(EncoderFingerprint, CoversScale) {
  EncoderSpec spec = default_detail_spec();
  const std::string base = encoder_fingerprint(spec);
  spec.weight_scale = 1.0;
  EXPECT_NE(encoder_fingerprint(spec), base);
}

}  // namespace
}  // namespace dualcap
