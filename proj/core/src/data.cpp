#include "masksparsity/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "masksparsity/rng.hpp"

namespace masksparsity {

namespace {

constexpr int kCifarDim = 32;
constexpr int kCifarChannels = 3;
constexpr size_t kCifarRecord = 1 + kCifarChannels * kCifarDim * kCifarDim;  // 3073

const std::vector<float> kCifarMean{0.4914f, 0.4822f, 0.4465f};
const std::vector<float> kCifarStd{0.2470f, 0.2435f, 0.2616f};

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cifar10: cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto len = static_cast<size_t>(in.tellg());
  in.seekg(0);
  std::vector<unsigned char> bytes(len);
  if (len > 0) in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(len));
  if (!in) throw IoError("cifar10: failed reading " + path.string());
  return bytes;
}

void append_batch_file(const std::filesystem::path& path, std::vector<int>& labels,
                       std::vector<float>& pixels) {
  const auto bytes = read_file(path);
  if (bytes.size() % kCifarRecord != 0) {
    const size_t whole = bytes.size() / kCifarRecord;
    throw IoError("cifar10: " + path.string() + " has " + std::to_string(bytes.size()) +
                  " bytes, not a multiple of " + std::to_string(kCifarRecord) +
                  "; record " + std::to_string(whole) + " is truncated at byte offset " +
                  std::to_string(whole * kCifarRecord));
  }
  const size_t records = bytes.size() / kCifarRecord;
  labels.reserve(labels.size() + records);
  pixels.reserve(pixels.size() + records * (kCifarRecord - 1));
  for (size_t r = 0; r < records; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecord;
    labels.push_back(static_cast<int>(rec[0]));
    for (size_t i = 1; i < kCifarRecord; ++i) {
      const size_t c = (i - 1) / (kCifarDim * kCifarDim);
      pixels.push_back((static_cast<float>(rec[i]) / 255.0f - kCifarMean[c]) / kCifarStd[c]);
    }
  }
}

Dataset make_cifar_split(std::vector<int> labels, std::vector<float> pixels) {
  Dataset d;
  const int64_t n = static_cast<int64_t>(labels.size());
  d.images = Tensor({n, kCifarChannels, kCifarDim, kCifarDim}, std::move(pixels));
  d.labels = std::move(labels);
  d.num_classes = 10;
  d.mean = kCifarMean;
  d.stddev = kCifarStd;
  return d;
}

void write_batch_file(const Dataset& d, int64_t begin, int64_t end,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cifar10: cannot write " + path.string());
  const int64_t chw = kCifarChannels * kCifarDim * kCifarDim;
  std::vector<unsigned char> rec(kCifarRecord);
  for (int64_t i = begin; i < end; ++i) {
    rec[0] = static_cast<unsigned char>(d.labels[static_cast<size_t>(i)]);
    const float* img = d.images.data() + i * chw;
    for (int64_t j = 0; j < chw; ++j) {
      const size_t c = static_cast<size_t>(j / (kCifarDim * kCifarDim));
      const float v = (img[j] * d.stddev[c] + d.mean[c]) * 255.0f;
      rec[1 + static_cast<size_t>(j)] =
          static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
    }
    out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  }
  if (!out) throw IoError("cifar10: failed writing " + path.string());
}

}  // namespace

std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir) {
  std::vector<int> train_labels;
  std::vector<float> train_pixels;
  for (int b = 1; b <= 5; ++b) {
    append_batch_file(dir / ("data_batch_" + std::to_string(b) + ".bin"), train_labels,
                      train_pixels);
  }
  std::vector<int> test_labels;
  std::vector<float> test_pixels;
  append_batch_file(dir / "test_batch.bin", test_labels, test_pixels);
  return {make_cifar_split(std::move(train_labels), std::move(train_pixels)),
          make_cifar_split(std::move(test_labels), std::move(test_pixels))};
}

void write_cifar10(const Dataset& train, const Dataset& test, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const int64_t per_batch = (train.size() + 4) / 5;
  for (int b = 0; b < 5; ++b) {
    const int64_t begin = std::min<int64_t>(train.size(), b * per_batch);
    const int64_t end = std::min<int64_t>(train.size(), (b + 1) * per_batch);
    write_batch_file(train, begin, end, dir / ("data_batch_" + std::to_string(b + 1) + ".bin"));
  }
  write_batch_file(test, 0, test.size(), dir / "test_batch.bin");
}

Dataset synthetic_dataset(int n, int num_classes, uint64_t seed, const SyntheticOptions& opts) {
  if (num_classes < 2) throw InvariantError("synthetic_dataset: need at least 2 classes");
  if (n < num_classes) {
    throw InvariantError("synthetic_dataset: n=" + std::to_string(n) + " is below num_classes=" +
                         std::to_string(num_classes));
  }
  const int C = opts.channels, H = opts.height, W = opts.width;
  std::mt19937_64 rng(mix_seed(seed, 0x5D5));

  // Smooth per-class prototypes: coarse 4x4 Gaussian fields, bilinearly
  // upsampled and scaled to unit RMS.
  const int G = 4;
  std::vector<std::vector<float>> prototypes(static_cast<size_t>(num_classes));
  std::normal_distribution<double> unit(0.0, 1.0);
  for (auto& proto : prototypes) {
    std::vector<double> coarse(static_cast<size_t>(C * G * G));
    for (auto& v : coarse) v = unit(rng);
    proto.resize(static_cast<size_t>(C * H * W));
    double sq = 0;
    for (int c = 0; c < C; ++c) {
      for (int y = 0; y < H; ++y) {
        const double gy = std::clamp((y + 0.5) / H * G - 0.5, 0.0, static_cast<double>(G - 1));
        const int y0 = static_cast<int>(gy), y1 = std::min(G - 1, y0 + 1);
        const double fy = gy - y0;
        for (int x = 0; x < W; ++x) {
          const double gx = std::clamp((x + 0.5) / W * G - 0.5, 0.0, static_cast<double>(G - 1));
          const int x0 = static_cast<int>(gx), x1 = std::min(G - 1, x0 + 1);
          const double fx = gx - x0;
          const auto at = [&](int yy, int xx) {
            return coarse[static_cast<size_t>((c * G + yy) * G + xx)];
          };
          const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                           fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
          proto[static_cast<size_t>((c * H + y) * W + x)] = static_cast<float>(v);
          sq += v * v;
        }
      }
    }
    const double rms = std::sqrt(sq / static_cast<double>(C * H * W));
    for (auto& v : proto) v = static_cast<float>(v / rms);
  }

  Dataset d;
  d.images = Tensor({n, C, H, W});
  d.labels.resize(static_cast<size_t>(n));
  d.num_classes = num_classes;
  d.mean.assign(static_cast<size_t>(C), 0.0f);
  d.stddev.assign(static_cast<size_t>(C), 1.0f);

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::normal_distribution<double> pixel_noise(0.0, opts.noise);
  std::uniform_real_distribution<double> amp(1.0 - opts.amplitude_jitter,
                                             1.0 + opts.amplitude_jitter);
  const int64_t chw = static_cast<int64_t>(C) * H * W;
  for (int i = 0; i < n; ++i) {
    const int cls = i % num_classes;  // balanced before shuffling
    const int64_t slot = order[static_cast<size_t>(i)];
    d.labels[static_cast<size_t>(slot)] = cls;
    float* img = d.images.data() + slot * chw;
    const float a = static_cast<float>(amp(rng));
    const auto& proto = prototypes[static_cast<size_t>(cls)];
    for (int64_t j = 0; j < chw; ++j) {
      img[j] = a * proto[static_cast<size_t>(j)] + static_cast<float>(pixel_noise(rng));
    }
  }
  return d;
}

void flip_image_horizontal(float* img, int channels, int height, int width) {
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < height; ++y) {
      float* row = img + (static_cast<int64_t>(c) * height + y) * width;
      std::reverse(row, row + width);
    }
  }
}

void pad_crop_image(const float* src, int channels, int height, int width, int pad, int dy,
                    int dx, float* dst) {
  // Crop window of the zero-padded image at offset (dy, dx), dy/dx in [0, 2*pad].
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < height; ++y) {
      const int sy = y + dy - pad;
      float* out = dst + (static_cast<int64_t>(c) * height + y) * width;
      if (sy < 0 || sy >= height) {
        std::fill(out, out + width, 0.0f);
        continue;
      }
      const float* in = src + (static_cast<int64_t>(c) * height + sy) * width;
      for (int x = 0; x < width; ++x) {
        const int sx = x + dx - pad;
        out[x] = (sx >= 0 && sx < width) ? in[sx] : 0.0f;
      }
    }
  }
}

BatchStream::BatchStream(const Dataset& data, int batch_size, uint64_t seed, int epoch,
                         bool shuffle, bool augment)
    : data_(&data),
      batch_size_(batch_size),
      augment_(augment),
      rng_(mix_seed(seed, 0xBA7C000 + static_cast<uint64_t>(epoch))) {
  if (batch_size < 1) throw InvariantError("batches: batch_size must be >= 1");
  order_.resize(static_cast<size_t>(data.size()));
  std::iota(order_.begin(), order_.end(), 0);
  if (shuffle) std::shuffle(order_.begin(), order_.end(), rng_);
}

int64_t BatchStream::batch_count() const {
  return (data_->size() + batch_size_ - 1) / batch_size_;
}

std::optional<Batch> BatchStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const int64_t n = std::min<int64_t>(batch_size_, static_cast<int64_t>(order_.size() - cursor_));
  const int C = static_cast<int>(data_->images.dim(1));
  const int H = static_cast<int>(data_->images.dim(2));
  const int W = static_cast<int>(data_->images.dim(3));
  const int64_t chw = static_cast<int64_t>(C) * H * W;

  Batch batch;
  batch.images = Tensor({n, C, H, W});
  batch.labels.resize(static_cast<size_t>(n));
  std::uniform_int_distribution<int> offset(0, 2 * kAugmentPad);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int64_t i = 0; i < n; ++i) {
    const int64_t src = order_[cursor_ + static_cast<size_t>(i)];
    batch.labels[static_cast<size_t>(i)] = data_->labels[static_cast<size_t>(src)];
    const float* in = data_->images.data() + src * chw;
    float* out = batch.images.data() + i * chw;
    if (augment_) {
      const int dy = offset(rng_);
      const int dx = offset(rng_);
      pad_crop_image(in, C, H, W, kAugmentPad, dy, dx, out);
      if (coin(rng_)) flip_image_horizontal(out, C, H, W);
    } else {
      std::copy(in, in + chw, out);
    }
  }
  cursor_ += static_cast<size_t>(n);
  return batch;
}

}  // namespace masksparsity
