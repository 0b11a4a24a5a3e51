#pragma once

#include "dualcap/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dualcap {

/// Per-dataset sampling weights; normalised internally.
struct MixSpec {
  std::map<std::string, double> weights;
  std::uint64_t seed = 0;
};

struct SampleRef {
  std::string dataset;
  std::size_t index = 0;  // index into that dataset's manifest samples

  bool operator==(const SampleRef&) const = default;
};

using Batch = std::vector<SampleRef>;

/// Deterministic single-consumer stream of batches. Each draw picks a dataset
/// by weight, then a sample uniformly from that dataset's pool.
class BatchSampler {
 public:
  BatchSampler(MixSpec mix, std::map<std::string, std::vector<std::size_t>> pools, std::size_t batch_size);

  Batch next();

  /// Batches per epoch: the positively weighted pools' total size over the batch size.
  std::size_t epoch_batches() const;
  std::size_t batch_size() const { return batch_size_; }
  const MixSpec& mix() const { return mix_; }

  std::string state() const { return rng_state(rng_); }
  void restore(const std::string& state) { set_rng_state(rng_, state); }

 private:
  MixSpec mix_;
  std::map<std::string, std::vector<std::size_t>> pools_;
  std::vector<std::pair<std::string, double>> cumulative_;
  std::size_t batch_size_;
  Rng rng_;
};

}  // namespace dualcap
