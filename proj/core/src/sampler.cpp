#include "dualcap/sampler.hpp"

#include "dualcap/errors.hpp"

namespace dualcap {

BatchSampler::BatchSampler(MixSpec mix, std::map<std::string, std::vector<std::size_t>> pools,
                           std::size_t batch_size)
    : mix_(std::move(mix)), pools_(std::move(pools)), batch_size_(batch_size), rng_(mix_.seed) {
  if (batch_size_ < 2) throw ConfigError("batch_size must be >= 2 (contrastive and matching losses need negatives)");
  double total = 0.0;
  for (const auto& [name, w] : mix_.weights) {
    if (w < 0.0) throw ConfigError("negative mix weight for " + name);
    if (w == 0.0) continue;
    const auto it = pools_.find(name);
    if (it == pools_.end() || it->second.empty()) throw DataError("mix names dataset '" + name + "' with no samples");
    total += w;
    cumulative_.emplace_back(name, total);
  }
  if (total <= 0.0) throw ConfigError("mix weights are all zero");
  for (auto& entry : cumulative_) entry.second /= total;
}

Batch BatchSampler::next() {
  Batch batch;
  batch.reserve(batch_size_);
  for (std::size_t i = 0; i < batch_size_; ++i) {
    const double u = uniform01(rng_);
    const auto* chosen = &cumulative_.back();
    for (const auto& entry : cumulative_) {
      if (u < entry.second) {
        chosen = &entry;
        break;
      }
    }
    const auto& pool = pools_.at(chosen->first);
    batch.push_back(SampleRef{chosen->first, pool[uniform_index(rng_, pool.size())]});
  }
  return batch;
}

std::size_t BatchSampler::epoch_batches() const {
  std::size_t total = 0;
  for (const auto& entry : cumulative_) total += pools_.at(entry.first).size();
  return std::max<std::size_t>(1, total / batch_size_);
}

}  // namespace dualcap
