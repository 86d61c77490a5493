#include "enkf/dataset.hpp"

#include <zlib.h>

#include <array>
#include <memory>
#include <random>

namespace enkf {

IndexSet LabeledDataset::indices(Split which) const {
  IndexSet out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == which) out.push_back(static_cast<Index>(i));
  return out;
}

LabeledDataset LabeledDataset::subset(Split which) const {
  const IndexSet idx = indices(which);
  LabeledDataset out;
  out.classes = classes;
  out.shape = shape;
  out.inputs.resize(inputs.rows(), static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.inputs.col(static_cast<Index>(i)) = inputs.col(idx[i]);
    out.labels.push_back(labels[static_cast<std::size_t>(idx[i])]);
    out.splits.push_back(which);
  }
  return out;
}

void LabeledDataset::validate() const {
  if (classes < 2) throw ConfigError("dataset needs at least two classes");
  if (inputs.rows() != shape.size()) throw ShapeError("dataset inputs do not match the declared input shape");
  if (static_cast<Index>(labels.size()) != size() || static_cast<Index>(splits.size()) != size())
    throw ShapeError("dataset labels/splits do not match the example count");
  for (int y : labels)
    if (y < 0 || y >= classes) throw ConfigError("dataset label outside class range");
}

namespace {

struct GzCloser {
  void operator()(gzFile_s* f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

GzHandle open_idx(const std::string& path) {
  GzHandle f(gzopen(path.c_str(), "rb"));
  if (!f) throw ConfigError("cannot open IDX file '" + path + "'");
  return f;
}

void read_exact(gzFile_s* f, void* dst, unsigned bytes, const std::string& path) {
  if (gzread(f, dst, bytes) != static_cast<int>(bytes)) throw ConfigError("truncated IDX file '" + path + "'");
}

std::uint32_t read_be32(gzFile_s* f, const std::string& path) {
  std::array<unsigned char, 4> b{};
  read_exact(f, b.data(), 4, path);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

}  // namespace

IdxImages read_idx_images(const std::string& path, Index limit) {
  auto f = open_idx(path);
  if (read_be32(f.get(), path) != 0x00000803u) throw ConfigError("'" + path + "' is not an IDX image file");
  Index count = read_be32(f.get(), path);
  IdxImages out;
  out.rows = static_cast<int>(read_be32(f.get(), path));
  out.cols = static_cast<int>(read_be32(f.get(), path));
  if (limit > 0 && limit < count) count = limit;
  const Index pixels = static_cast<Index>(out.rows) * out.cols;
  std::vector<unsigned char> buf(static_cast<std::size_t>(pixels));
  out.pixels.resize(pixels, count);
  for (Index i = 0; i < count; ++i) {
    read_exact(f.get(), buf.data(), static_cast<unsigned>(pixels), path);
    for (Index p = 0; p < pixels; ++p) out.pixels(p, i) = buf[static_cast<std::size_t>(p)] / 255.0;
  }
  return out;
}

std::vector<int> read_idx_labels(const std::string& path, Index limit) {
  auto f = open_idx(path);
  if (read_be32(f.get(), path) != 0x00000801u) throw ConfigError("'" + path + "' is not an IDX label file");
  Index count = read_be32(f.get(), path);
  if (limit > 0 && limit < count) count = limit;
  std::vector<unsigned char> buf(static_cast<std::size_t>(count));
  if (count > 0) read_exact(f.get(), buf.data(), static_cast<unsigned>(count), path);
  return {buf.begin(), buf.end()};
}

LabeledDataset load_idx_dataset(const IdxSources& src) {
  const IdxImages train = read_idx_images(src.train_images, src.train_count);
  const IdxImages test = read_idx_images(src.test_images, src.test_count);
  const auto train_labels = read_idx_labels(src.train_labels, src.train_count);
  const auto test_labels = read_idx_labels(src.test_labels, src.test_count);
  if (train.rows != test.rows || train.cols != test.cols) throw ShapeError("train/test image sizes differ");
  if (static_cast<Index>(train_labels.size()) != train.pixels.cols() ||
      static_cast<Index>(test_labels.size()) != test.pixels.cols())
    throw ShapeError("IDX image and label counts differ");

  LabeledDataset d;
  d.shape = {1, train.rows, train.cols};
  d.inputs.resize(d.shape.size(), train.pixels.cols() + test.pixels.cols());
  d.inputs << train.pixels, test.pixels;
  d.labels = train_labels;
  d.labels.insert(d.labels.end(), test_labels.begin(), test_labels.end());
  d.splits.assign(train_labels.size(), Split::Train);
  d.splits.insert(d.splits.end(), test_labels.size(), Split::Test);
  int max_label = 0;
  for (int y : d.labels) max_label = std::max(max_label, y);
  d.classes = std::max(10, max_label + 1);
  d.validate();
  return d;
}

LabeledDataset make_blobs(const BlobsSpec& spec) {
  if (spec.classes < 2 || spec.features < 1 || spec.train_examples < 1 || spec.test_examples < 0)
    throw ConfigError("invalid blobs parameters");
  std::mt19937_64 engine(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd centers(spec.features, spec.classes);
  for (Index c = 0; c < centers.cols(); ++c)
    for (Index r = 0; r < centers.rows(); ++r) centers(r, c) = spec.separation * normal(engine);

  const Index total = spec.train_examples + spec.test_examples;
  LabeledDataset d;
  d.classes = spec.classes;
  d.shape = {1, 1, spec.features};
  d.inputs.resize(spec.features, total);
  for (Index i = 0; i < total; ++i) {
    const int y = static_cast<int>(i % spec.classes);
    for (Index r = 0; r < spec.features; ++r) d.inputs(r, i) = centers(r, y) + normal(engine);
    d.labels.push_back(y);
    d.splits.push_back(i < spec.train_examples ? Split::Train : Split::Test);
  }
  return d;
}

}  // namespace enkf
