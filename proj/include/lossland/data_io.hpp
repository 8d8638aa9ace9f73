#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lossland/tensor.hpp"

namespace lossland {

// Immutable labeled example set. images is (count, C, H, W) for image data
// or (count, features) for synthetic points, values in [0,1] for pixels.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::string split;   // "train" | "test"
  std::string source;  // descriptor, e.g. file path or "synth(...)"

  std::size_t size() const { return labels.size(); }
  std::vector<std::size_t> example_shape() const {
    return {images.shape.begin() + 1, images.shape.end()};
  }
  // Gathers the given examples into a batch tensor.
  Tensor gather(const std::vector<std::size_t>& idx) const;
  std::vector<int> gather_labels(const std::vector<std::size_t>& idx) const;
  // First n examples, in order.
  Dataset head(std::size_t n) const;
};

// Parses big-endian IDX files: magic 2051 for images (count x rows x cols
// of bytes), 2049 for labels. Pixels are scaled by 1/255 into one channel.
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path);

// Parses CIFAR-10 binary batches: 3073-byte records, 1 label byte followed
// by 3072 pixel bytes in channel-major R,G,B planes of 32x32.
Dataset load_cifar10(const std::vector<std::string>& batch_paths);

// Seeded Gaussian clusters at random centers with pairwise center distance
// >= separation. Exact per-class counts, 80/20 train/test split.
std::pair<Dataset, Dataset> synth_blobs(std::size_t classes,
                                        std::size_t per_class,
                                        std::size_t dims, double separation,
                                        std::uint64_t seed);

}  // namespace lossland
