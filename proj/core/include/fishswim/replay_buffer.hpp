#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fishswim/env.hpp"
#include "fishswim/mlp.hpp"

namespace fishswim::sac {

struct Transition {
  env::Observation state{};
  env::Action action{};  // normalised to (-1, 1)
  double reward = 0.0;
  env::Observation next_state{};
  bool done = false;  // success or failure only; truncation bootstraps
};

// Fixed-capacity ring buffer with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  struct Batch {
    nn::Matrix<float> state;       // obs x n
    nn::Matrix<float> action;      // act x n
    nn::Matrix<float> reward;      // 1 x n
    nn::Matrix<float> next_state;  // obs x n
    nn::Matrix<float> done;        // 1 x n, 0 or 1
    std::vector<std::size_t> index;
  };

  explicit ReplayBuffer(std::size_t capacity);

  void push(const Transition& t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t pushes() const { return pushes_; }
  const Transition& at(std::size_t i) const { return data_.at(i); }
  Batch sample(std::size_t n, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::uint64_t pushes_ = 0;
  std::vector<Transition> data_;
};

}  // namespace fishswim::sac
