#pragma once

#include <cstdint>
#include <vector>

#include "gnnmp/env.hpp"
#include "gnnmp/graph.hpp"
#include "gnnmp/rng.hpp"

namespace gnnmp {

/// Deterministic stream of (free, collided) sample batches for one problem and run seed. Planners that are
/// compared pairwise draw from identical streams.
class SampleStream {
 public:
  SampleStream(const Environment& env, std::uint64_t problem_seed, std::uint64_t run_seed)
      : env_(env), rng_(derive_seed(problem_seed, derive_seed(run_seed, 0x5A3))) {}

  struct Batch {
    std::vector<Config> free;
    std::vector<Config> collided;
  };

  Batch next(std::size_t batch_size) {
    Batch b;
    b.free = sample_free(env_, rng_, batch_size);
    b.collided = sample_colliding(env_, rng_, batch_size);
    return b;
  }

 private:
  const Environment& env_;
  Rng rng_;
};

/// Growing vertex set for batch planners: start, goal, then each batch's free and collided samples appended.
class BatchGraph {
 public:
  BatchGraph(const Config& start, const Config& goal, std::size_t k0) : k0_(k0) {
    vertices_ = {start, goal};
    labels_ = {VertexLabel::Free, VertexLabel::Goal};
  }

  /// Appends a batch and rebuilds the k-NN graph. Statuses learned on any earlier graph are carried over,
  /// including edges that left the k-NN set for a while, so no edge is ever checked twice.
  Rgg add_batch(const SampleStream::Batch& batch, const Rgg* previous) {
    for (const auto& q : batch.free) {
      vertices_.push_back(q);
      labels_.push_back(VertexLabel::Free);
    }
    for (const auto& q : batch.collided) {
      vertices_.push_back(q);
      labels_.push_back(VertexLabel::Collided);
    }
    num_free_ += batch.free.size();
    collided_.insert(collided_.end(), batch.collided.begin(), batch.collided.end());
    free_.insert(free_.end(), batch.free.begin(), batch.free.end());
    if (previous)
      for (const auto& [key, status] : known_statuses(*previous)) known_[key] = status;
    return build_rgg_over(vertices_, labels_, 0, 1, num_free_, k0_, &known_);
  }

  std::size_t num_free_samples() const { return num_free_; }
  const std::vector<Config>& free_samples() const { return free_; }
  const std::vector<Config>& collided_samples() const { return collided_; }
  const std::vector<Config>& vertices() const { return vertices_; }
  const std::vector<VertexLabel>& labels() const { return labels_; }
  const std::map<std::pair<std::size_t, std::size_t>, EdgeStatus>& known() const { return known_; }

 private:
  std::size_t k0_;
  std::vector<Config> vertices_;
  std::vector<VertexLabel> labels_;
  std::size_t num_free_ = 0;
  std::vector<Config> free_;
  std::vector<Config> collided_;
  std::map<std::pair<std::size_t, std::size_t>, EdgeStatus> known_;
};

}  // namespace gnnmp
