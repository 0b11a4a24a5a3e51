#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace dualcap {

/// Row-major dense matrix used for all activations and parameters.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

using Rng = std::mt19937_64;

// Portable draws built from raw engine output; std distributions differ between
// standard libraries and would break cross-build determinism.
double uniform01(Rng& rng);
double standard_normal(Rng& rng);
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Matrix of N(0, stddev^2) entries.
Matrix random_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev);

/// Rounds every entry to the nearest float32 value in place.
void quantize_f32(Matrix& m);

/// Fixed sinusoidal position table (rows x dims).
Matrix sinusoidal_positions(Eigen::Index rows, Eigen::Index dims);

/// Independent stream seed for a named purpose, stable across platforms.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

std::string rng_state(const Rng& rng);
void set_rng_state(Rng& rng, const std::string& state);

}  // namespace dualcap
