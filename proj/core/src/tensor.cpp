#include "dualcap/tensor.hpp"

#include "dualcap/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace dualcap {

double uniform01(Rng& rng) {
  // 53 random mantissa bits in [0, 1).
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) return 0;
  const auto draw = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  return draw < n ? draw : n - 1;
}

Matrix random_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * standard_normal(rng);
  return m;
}

void quantize_f32(Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
}

Matrix sinusoidal_positions(Eigen::Index rows, Eigen::Index dims) {
  Matrix pe(rows, dims);
  for (Eigen::Index pos = 0; pos < rows; ++pos) {
    for (Eigen::Index i = 0; i < dims; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dims));
      const double angle = static_cast<double>(pos) * rate;
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  quantize_f32(pe);
  return pe;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  std::uint64_t h = 1469598103934665603ull;
  for (const char c : purpose) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
  // splitmix64 finaliser
  std::uint64_t z = seed + h + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void set_rng_state(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (is.fail()) throw ArtifactError("malformed RNG state");
}

}  // namespace dualcap
