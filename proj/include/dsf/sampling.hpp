#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dsf {

// support-frame selection for training and inference
struct SamplingStrategy {
  enum class Kind { FixedInterval, Stochastic };
  Kind kind = Kind::Stochastic;
  int num_frames = 21;  // n, evaluated frame included
  int stride = 1;       // fixed interval only
  uint64_t seed = 0;    // stochastic only

  static SamplingStrategy fixed_interval(int n, int stride);
  static SamplingStrategy stochastic(int n, uint64_t seed);
  // "fixed:s=K" | "stochastic"
  static SamplingStrategy parse(const std::string& text, int n, uint64_t seed);
  std::string describe() const;
};

// n-1 support indices for evaluated frame t of a sequence of length T.
// fixed_interval reflects out-of-range picks back into [0, T);
// stochastic shuffles the sequence once (per-sequence key) and takes the
// first n-1 shuffled indices distinct from t.
std::vector<int> sample_support(const SamplingStrategy& strategy, int sequence_length, int frame,
                                uint64_t sequence_key = 0);

// (t, two support indices) for a training sample; supports are uniform over
// the whole sequence, and a length-1 sequence yields three identical indices
struct TrainingSample {
  int test_frame;
  int support_a;
  int support_b;
};
TrainingSample training_sample(int sequence_length, int frame, uint64_t seed);

}  // namespace dsf
