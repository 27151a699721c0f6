#include "branchy/dataset.hpp"

#include <cstdio>
#include <fstream>

#include "branchy/rng.hpp"

namespace branchy {

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), size)) {
    throw IoError("failed reading " + path);
  }
  return bytes;
}

std::uint32_t read_u32be(const std::vector<unsigned char>& b, std::size_t offset,
                         const std::string& path, const char* what) {
  if (offset + 4 > b.size()) {
    throw ParseError(path + ": truncated " + what + " at byte offset " + std::to_string(offset));
  }
  return (std::uint32_t(b[offset]) << 24) | (std::uint32_t(b[offset + 1]) << 16) |
         (std::uint32_t(b[offset + 2]) << 8) | std::uint32_t(b[offset + 3]);
}

}  // namespace

std::vector<LabeledExample> load_mnist_idx(const std::string& images_path,
                                           const std::string& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);

  const std::uint32_t img_magic = read_u32be(img, 0, images_path, "magic");
  if (img_magic != kImageMagic) {
    throw ParseError(images_path + ": expected image magic " + std::to_string(kImageMagic) +
                     ", got " + std::to_string(img_magic) + " at byte offset 0");
  }
  const std::uint32_t lab_magic = read_u32be(lab, 0, labels_path, "magic");
  if (lab_magic != kLabelMagic) {
    throw ParseError(labels_path + ": expected label magic " + std::to_string(kLabelMagic) +
                     ", got " + std::to_string(lab_magic) + " at byte offset 0");
  }

  const std::uint32_t n_images = read_u32be(img, 4, images_path, "count");
  const std::uint32_t rows = read_u32be(img, 8, images_path, "rows");
  const std::uint32_t cols = read_u32be(img, 12, images_path, "cols");
  const std::uint32_t n_labels = read_u32be(lab, 4, labels_path, "count");
  if (n_images != n_labels) {
    throw ParseError(images_path + ": image count " + std::to_string(n_images) +
                     " does not match label count " + std::to_string(n_labels));
  }
  if (rows == 0 || cols == 0) {
    throw ParseError(images_path + ": zero image extent in header");
  }

  const std::size_t pixel_bytes = std::size_t(n_images) * rows * cols;
  if (img.size() != 16 + pixel_bytes) {
    throw ParseError(images_path + ": expected " + std::to_string(16 + pixel_bytes) +
                     " bytes, got " + std::to_string(img.size()) +
                     " (pixel section truncated at byte offset " + std::to_string(img.size()) +
                     ")");
  }
  if (lab.size() != 8 + n_labels) {
    throw ParseError(labels_path + ": expected " + std::to_string(8 + n_labels) +
                     " bytes, got " + std::to_string(lab.size()) +
                     " (label section truncated at byte offset " + std::to_string(lab.size()) +
                     ")");
  }

  std::vector<LabeledExample> examples;
  examples.reserve(n_images);
  const Shape shape{1, 1, static_cast<std::int64_t>(rows), static_cast<std::int64_t>(cols)};
  const std::size_t stride = std::size_t(rows) * cols;
  for (std::uint32_t i = 0; i < n_images; ++i) {
    LabeledExample ex;
    ex.image = Tensor(shape);
    const unsigned char* src = img.data() + 16 + std::size_t(i) * stride;
    for (std::size_t p = 0; p < stride; ++p) {
      ex.image[static_cast<std::int64_t>(p)] = static_cast<float>(src[p]) * (1.0f / 255.0f);
    }
    const unsigned char raw_label = lab[8 + i];
    if (raw_label > 9) {
      throw ParseError(labels_path + ": label " + std::to_string(int(raw_label)) +
                       " out of range at byte offset " + std::to_string(8 + i));
    }
    ex.label = raw_label;
    examples.push_back(std::move(ex));
  }
  return examples;
}

MnistData load_mnist_dir(const std::string& dir) {
  MnistData data;
  data.train = load_mnist_idx(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
  data.test = load_mnist_idx(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte");
  return data;
}

DatasetSplit split_dataset(std::vector<LabeledExample> train_all,
                           std::vector<LabeledExample> test, std::int64_t validation_count,
                           std::uint64_t seed) {
  if (validation_count < 0 ||
      validation_count > static_cast<std::int64_t>(train_all.size())) {
    throw ValidationError("split: validation_count " + std::to_string(validation_count) +
                          " out of range for " + std::to_string(train_all.size()) + " examples");
  }
  DatasetSplit split;
  split.seed = seed;
  Rng rng(derive_seed(seed, 0xda7a));
  rng.shuffle(train_all);
  const std::size_t train_count = train_all.size() - static_cast<std::size_t>(validation_count);
  split.train.assign(std::make_move_iterator(train_all.begin()),
                     std::make_move_iterator(train_all.begin() + static_cast<std::ptrdiff_t>(train_count)));
  split.validation.assign(std::make_move_iterator(train_all.begin() + static_cast<std::ptrdiff_t>(train_count)),
                          std::make_move_iterator(train_all.end()));
  split.test = std::move(test);
  return split;
}

}  // namespace branchy
