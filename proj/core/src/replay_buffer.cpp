#include "fishswim/replay_buffer.hpp"

#include "fishswim/errors.hpp"

namespace fishswim::sac {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
  data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(const Transition& t) {
  if (data_.size() < capacity_) {
    data_.push_back(t);
  } else {
    data_[next_] = t;
  }
  next_ = (next_ + 1) % capacity_;
  ++pushes_;
}

ReplayBuffer::Batch ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  if (data_.empty()) throw ConfigError("cannot sample from an empty replay buffer");
  const auto cols = static_cast<Eigen::Index>(n);
  Batch b;
  b.state.resize(env::kObsDim, cols);
  b.action.resize(env::kActDim, cols);
  b.reward.resize(1, cols);
  b.next_state.resize(env::kObsDim, cols);
  b.done.resize(1, cols);
  b.index.resize(n);
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  for (Eigen::Index c = 0; c < cols; ++c) {
    const std::size_t i = pick(rng);
    const Transition& t = data_[i];
    b.index[c] = i;
    for (int k = 0; k < env::kObsDim; ++k) {
      b.state(k, c) = static_cast<float>(t.state[k]);
      b.next_state(k, c) = static_cast<float>(t.next_state[k]);
    }
    for (int k = 0; k < env::kActDim; ++k) b.action(k, c) = static_cast<float>(t.action[k]);
    b.reward(0, c) = static_cast<float>(t.reward);
    b.done(0, c) = t.done ? 1.0f : 0.0f;
  }
  return b;
}

}  // namespace fishswim::sac
