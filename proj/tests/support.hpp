#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "hpt/data.hpp"
#include "hpt/model.hpp"

namespace hpt::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

inline DualEncoderModel small_model(std::uint64_t seed, std::size_t classes = 4, std::size_t input = 12,
                                    std::vector<std::size_t> image_hidden = {8}, std::size_t embed = 6) {
  return init_model({input, std::move(image_hidden), embed, Activation::tanh}, {classes, {5}, embed, Activation::tanh},
                    classes, seed);
}

inline Tensor random_images(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  return random_tensor({n, d}, rng, 0.0, 1.0);
}

inline Labels random_labels(std::size_t n, std::size_t classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<Label> pick(0, static_cast<Label>(classes - 1));
  Labels y(n);
  for (auto& v : y) v = pick(rng);
  return y;
}

/// Small synthetic world for fast trainer and evaluation tests.
inline SyntheticSpec tiny_spec() {
  SyntheticSpec s;
  s.num_classes = 4;
  s.side = 4;
  s.train_per_class = 16;
  s.test_per_class = 8;
  s.prototype_contrast = 0.4;
  return s;
}

/// Fresh scratch directory, emptied on construction and removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("hpt_test_" + name + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace hpt::testing
