#pragma once

#include <cstdint>
#include <random>

namespace gmdyn {

/// Independent random streams carved out of one master seed. Keeping data,
/// initialization and masks on separate streams means that changing the
/// mask scheme never perturbs the dataset or w(0).
enum class Stream : std::uint64_t {
  Data = 1,
  Init = 2,
  Mask = 3,
  Test = 4,
  Path = 5,
  PathMask = 6,
  Seed = 7,
};

/// splitmix64 finalizer applied to (seed, stream, index).
std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0);

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}
  RandomStream(std::uint64_t master, Stream stream, std::uint64_t index = 0)
      : engine_(derive_seed(master, stream, index)) {}

  double normal() { return normal_(engine_); }
  /// Uniform on [0, 1).
  double uniform() { return uniform_(engine_); }
  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace gmdyn
