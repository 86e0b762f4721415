#include "dsf/sampling.hpp"

#include <algorithm>
#include <stdexcept>

#include "dsf/rng.hpp"

namespace dsf {

SamplingStrategy SamplingStrategy::fixed_interval(int n, int stride) {
  if (n < 1 || stride < 1) throw std::invalid_argument("fixed_interval: need n >= 1 and stride >= 1");
  SamplingStrategy s;
  s.kind = Kind::FixedInterval;
  s.num_frames = n;
  s.stride = stride;
  return s;
}

SamplingStrategy SamplingStrategy::stochastic(int n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("stochastic: need n >= 1");
  SamplingStrategy s;
  s.kind = Kind::Stochastic;
  s.num_frames = n;
  s.seed = seed;
  return s;
}

SamplingStrategy SamplingStrategy::parse(const std::string& text, int n, uint64_t seed) {
  if (text == "stochastic") return stochastic(n, seed);
  if (text.rfind("fixed", 0) == 0) {
    int stride = 1;
    auto pos = text.find("s=");
    if (pos != std::string::npos) stride = std::stoi(text.substr(pos + 2));
    return fixed_interval(n, stride);
  }
  throw std::invalid_argument("unknown sampling strategy '" + text + "' (want fixed:s=K or stochastic)");
}

std::string SamplingStrategy::describe() const {
  if (kind == Kind::FixedInterval)
    return "fixed:s=" + std::to_string(stride) + ",n=" + std::to_string(num_frames);
  return "stochastic,n=" + std::to_string(num_frames);
}

namespace {

int reflect_index(int idx, int length) {
  if (length == 1) return 0;
  while (idx < 0 || idx >= length) {
    if (idx < 0) idx = -idx;
    if (idx >= length) idx = 2 * (length - 1) - idx;
  }
  return idx;
}

}  // namespace

std::vector<int> sample_support(const SamplingStrategy& strategy, int sequence_length, int frame,
                                uint64_t sequence_key) {
  if (frame < 0 || frame >= sequence_length) {
    throw std::invalid_argument("sample_support: frame " + std::to_string(frame) + " outside sequence of " +
                                std::to_string(sequence_length));
  }
  int want = strategy.num_frames - 1;
  if (want <= 0) return {};

  if (strategy.kind == SamplingStrategy::Kind::FixedInterval) {
    // offsets +s, -s, +2s, -2s, ... reflected into range
    std::vector<int> out;
    out.reserve(want);
    for (int j = 1; static_cast<int>(out.size()) < want; ++j) {
      out.push_back(reflect_index(frame + j * strategy.stride, sequence_length));
      if (static_cast<int>(out.size()) < want)
        out.push_back(reflect_index(frame - j * strategy.stride, sequence_length));
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  // stochastic: one shuffle per sequence, then the first n-1 entries != frame
  Rng rng(Rng::derive(strategy.seed, sequence_key));
  std::vector<int> order(sequence_length);
  for (int i = 0; i < sequence_length; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<int> out;
  for (int idx : order) {
    if (idx == frame) continue;
    out.push_back(idx);
    if (static_cast<int>(out.size()) == want) break;
  }
  return out;
}

TrainingSample training_sample(int sequence_length, int frame, uint64_t seed) {
  if (sequence_length < 1) throw std::invalid_argument("training_sample: empty sequence");
  Rng rng(seed);
  if (sequence_length == 1) return TrainingSample{0, 0, 0};  // still image: identical frames
  TrainingSample s;
  s.test_frame = frame;
  s.support_a = rng.uniform_int(sequence_length);
  s.support_b = rng.uniform_int(sequence_length);
  return s;
}

}  // namespace dsf
