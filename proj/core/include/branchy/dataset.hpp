#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "branchy/tensor.hpp"

namespace branchy {

// One labeled image, pixels scaled to [0, 1].
struct LabeledExample {
  Tensor image;  // [1, 1, H, W]
  std::int64_t label = 0;
};

struct DatasetSplit {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> validation;
  std::vector<LabeledExample> test;
  std::uint64_t seed = 0;
};

// Reads an IDX image/label file pair (big-endian headers, image magic 2051,
// label magic 2049). Counts must agree between the two files; pixel bytes are
// scaled by 1/255. Parse failures name the offending byte offset.
std::vector<LabeledExample> load_mnist_idx(const std::string& images_path,
                                           const std::string& labels_path);

// Convenience loader for a directory holding the four standard MNIST files.
struct MnistData {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
};
MnistData load_mnist_dir(const std::string& dir);

// Carves a validation set off the end of a seeded shuffle of the training
// examples. validation_count may be zero.
DatasetSplit split_dataset(std::vector<LabeledExample> train_all,
                           std::vector<LabeledExample> test, std::int64_t validation_count,
                           std::uint64_t seed);

}  // namespace branchy
