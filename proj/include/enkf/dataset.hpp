#ifndef ENKF_DATASET_HPP
#define ENKF_DATASET_HPP

#include "enkf/common.hpp"

#include <string>

namespace enkf {

enum class Split { Train, Test };

/// Image layout of one example; dense-only data uses {1, 1, d}.
struct InputShape {
  int channels = 1;
  int height = 1;
  int width = 1;

  Index size() const { return static_cast<Index>(channels) * height * width; }
  friend bool operator==(const InputShape&, const InputShape&) = default;
};

/// Classification data. Examples are stored as columns of `inputs`.
struct LabeledDataset {
  MatrixXd inputs;
  std::vector<int> labels;
  std::vector<Split> splits;
  int classes = 0;
  InputShape shape;

  Index size() const { return inputs.cols(); }
  IndexSet indices(Split which) const;
  /// Examples of one split, re-tagged and re-indexed from zero.
  LabeledDataset subset(Split which) const;
  void validate() const;
};

struct IdxImages {
  int rows = 0;
  int cols = 0;
  /// One column per image, pixels scaled to [0, 1], row-major within an image.
  MatrixXd pixels;
};

/// Readers for the IDX format of the MNIST distribution (big-endian magic
/// 0x00000803 for images, 0x00000801 for labels). Gzipped files are read
/// transparently. At most `limit` records are read when limit > 0.
IdxImages read_idx_images(const std::string& path, Index limit = 0);
std::vector<int> read_idx_labels(const std::string& path, Index limit = 0);

struct IdxSources {
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  Index train_count = 1000;
  Index test_count = 1000;
};

LabeledDataset load_idx_dataset(const IdxSources& sources);

struct BlobsSpec {
  int classes = 4;
  int features = 20;
  Index train_examples = 2000;
  Index test_examples = 500;
  /// Standard deviation of the class centers; noise around a center is N(0, I).
  double separation = 1.5;
  std::uint64_t seed = 1;

  friend bool operator==(const BlobsSpec&, const BlobsSpec&) = default;
};

/// Gaussian blobs: class centers ~ N(0, separation^2 I), examples ~ N(center, I),
/// labels assigned round-robin.
LabeledDataset make_blobs(const BlobsSpec& spec);

}  // namespace enkf

#endif  // ENKF_DATASET_HPP
