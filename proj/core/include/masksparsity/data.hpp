#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "masksparsity/tensor.hpp"

namespace masksparsity {

/// Images are stored normalized; `mean`/`stddev` record the per-channel
/// transform applied to the raw [0,1] pixel values.
struct Dataset {
  Tensor images;  // N x C x H x W
  std::vector<int> labels;
  int num_classes{0};
  std::vector<float> mean;
  std::vector<float> stddev;

  int64_t size() const { return images.empty() ? 0 : images.dim(0); }
};

/// Reads the six binary batch files (data_batch_1..5.bin, test_batch.bin).
/// Pixels are scaled to [0,1] and normalized with the standard CIFAR-10
/// per-channel statistics.
std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir);

/// Re-encodes datasets to the binary batch format (denormalizing back to
/// bytes); writing then reloading reproduces the original files bit for bit.
void write_cifar10(const Dataset& train, const Dataset& test, const std::filesystem::path& dir);

struct SyntheticOptions {
  int channels{3};
  int height{16};
  int width{16};
  double noise{0.5};
  double amplitude_jitter{0.25};
};

/// Class-conditional smooth random prototypes plus Gaussian pixel noise;
/// deterministic for a seed, linearly separable at moderate noise levels.
Dataset synthetic_dataset(int n, int num_classes, uint64_t seed,
                          const SyntheticOptions& opts = {});

struct Batch {
  Tensor images;
  std::vector<int> labels;
};

/// One epoch of minibatches. Shuffling and augmentation draws depend only on
/// (seed, epoch); augmentation is 4-pixel zero padding, a random crop back to
/// the original size, and a horizontal flip with probability 1/2.
class BatchStream {
 public:
  BatchStream(const Dataset& data, int batch_size, uint64_t seed, int epoch, bool shuffle,
              bool augment);

  std::optional<Batch> next();
  int64_t batch_count() const;

  static constexpr int kAugmentPad = 4;

 private:
  const Dataset* data_;
  int batch_size_;
  bool augment_;
  std::vector<int64_t> order_;
  size_t cursor_{0};
  std::mt19937_64 rng_;
};

// Single-image helpers used by the augmentation path (contiguous C x H x W).
void flip_image_horizontal(float* img, int channels, int height, int width);
void pad_crop_image(const float* src, int channels, int height, int width, int pad, int dy,
                    int dx, float* dst);

}  // namespace masksparsity
