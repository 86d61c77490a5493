#include "enkf/network.hpp"

#include <cmath>
#include <random>

namespace enkf {

std::string to_string(LayerSpec::Kind k) {
  switch (k) {
    case LayerSpec::Kind::Dense: return "dense";
    case LayerSpec::Kind::Conv: return "conv";
    case LayerSpec::Kind::AvgPool: return "avgpool";
  }
  return "?";
}

LayerSpec::Kind layer_kind_from_string(std::string_view name) {
  if (name == "dense") return LayerSpec::Kind::Dense;
  if (name == "conv") return LayerSpec::Kind::Conv;
  if (name == "avgpool") return LayerSpec::Kind::AvgPool;
  throw ConfigError("unknown layer type '" + std::string(name) + "'");
}

namespace {

using ConstMap = Eigen::Map<const MatrixXd>;
using MutMap = Eigen::Map<MatrixXd>;

Index dense_params(Index in, int out) { return in * out + out; }

Index conv_params(const InputShape& in, const LayerSpec& l) {
  return static_cast<Index>(l.width) * in.channels * l.kernel * l.kernel + l.width;
}

/// Patch matrix of one image: (C K K) x (H W), zero padded.
MatrixXd im2col(const double* image, const InputShape& s, int k) {
  const int pad = k / 2;
  MatrixXd cols = MatrixXd::Zero(static_cast<Index>(s.channels) * k * k, static_cast<Index>(s.height) * s.width);
  for (int c = 0; c < s.channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Index row = (static_cast<Index>(c) * k + ky) * k + kx;
        for (int y = 0; y < s.height; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= s.height) continue;
          for (int x = 0; x < s.width; ++x) {
            const int sx = x + kx - pad;
            if (sx < 0 || sx >= s.width) continue;
            cols(row, static_cast<Index>(y) * s.width + x) = image[(static_cast<Index>(c) * s.height + sy) * s.width + sx];
          }
        }
      }
  return cols;
}

void col2im_add(const MatrixXd& cols, const InputShape& s, int k, double* image) {
  const int pad = k / 2;
  for (int c = 0; c < s.channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Index row = (static_cast<Index>(c) * k + ky) * k + kx;
        for (int y = 0; y < s.height; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= s.height) continue;
          for (int x = 0; x < s.width; ++x) {
            const int sx = x + kx - pad;
            if (sx < 0 || sx >= s.width) continue;
            image[(static_cast<Index>(c) * s.height + sy) * s.width + sx] += cols(row, static_cast<Index>(y) * s.width + x);
          }
        }
      }
}

}  // namespace

Network::Network(InputShape input, std::vector<LayerSpec> layers) : input_(input), layers_(std::move(layers)) {
  if (input_.size() < 1) throw ConfigError("network input must be non-empty");
  if (layers_.empty()) throw ConfigError("network needs at least one layer");
  InputShape cur = input_;
  for (const LayerSpec& l : layers_) {
    shapes_.push_back(cur);
    offsets_.push_back(parameter_count_);
    switch (l.kind) {
      case LayerSpec::Kind::Dense:
        if (l.width < 1) throw ConfigError("dense layer needs positive units");
        parameter_count_ += dense_params(cur.size(), l.width);
        cur = {1, 1, l.width};
        break;
      case LayerSpec::Kind::Conv:
        if (l.width < 1 || l.kernel < 1 || l.kernel % 2 == 0)
          throw ConfigError("conv layer needs positive channels and an odd kernel");
        parameter_count_ += conv_params(cur, l);
        cur = {l.width, cur.height, cur.width};
        break;
      case LayerSpec::Kind::AvgPool:
        if (cur.height < 2 || cur.width < 2) throw ConfigError("avgpool input smaller than 2x2");
        cur = {cur.channels, cur.height / 2, cur.width / 2};
        break;
    }
  }
  shapes_.push_back(cur);
}

VectorXd Network::initial_parameters(std::uint64_t seed) const {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd theta = VectorXd::Zero(parameter_count_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const InputShape& in = shapes_[i];
    Index weights = 0;
    double fan_in = 1.0;
    if (l.kind == LayerSpec::Kind::Dense) {
      weights = in.size() * l.width;
      fan_in = static_cast<double>(in.size());
    } else if (l.kind == LayerSpec::Kind::Conv) {
      weights = static_cast<Index>(l.width) * in.channels * l.kernel * l.kernel;
      fan_in = static_cast<double>(in.channels) * l.kernel * l.kernel;
    }
    const double scale = std::sqrt(2.0 / fan_in);
    for (Index w = 0; w < weights; ++w) theta(offsets_[i] + w) = scale * normal(engine);
  }
  return theta;
}

std::vector<MatrixXd> Network::forward_trace(const Eigen::Ref<const VectorXd>& theta,
                                             const Eigen::Ref<const MatrixXd>& inputs) const {
  require_shape(theta.size() == parameter_count_, "network parameter vector has wrong length");
  require_shape(inputs.rows() == input_.size(), "network input has wrong feature size");
  const Index s = inputs.cols();
  std::vector<MatrixXd> acts;
  acts.reserve(layers_.size() + 1);
  acts.emplace_back(inputs);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const InputShape& in = shapes_[i];
    const InputShape& out = shapes_[i + 1];
    const MatrixXd& x = acts.back();
    const double* p = theta.data() + offsets_[i];
    MatrixXd y(out.size(), s);
    switch (l.kind) {
      case LayerSpec::Kind::Dense: {
        ConstMap w(p, l.width, in.size());
        Eigen::Map<const VectorXd> b(p + w.size(), l.width);
        y.noalias() = w * x;
        y.colwise() += b;
        y = y.cwiseMax(0.0);
        break;
      }
      case LayerSpec::Kind::Conv: {
        const Index patch = static_cast<Index>(in.channels) * l.kernel * l.kernel;
        ConstMap w(p, l.width, patch);
        Eigen::Map<const VectorXd> b(p + w.size(), l.width);
        const Index hw = static_cast<Index>(in.height) * in.width;
        for (Index e = 0; e < s; ++e) {
          const MatrixXd cols = im2col(x.col(e).data(), in, l.kernel);
          MutMap ymap(y.col(e).data(), hw, l.width);
          ymap.noalias() = cols.transpose() * w.transpose();
          ymap.rowwise() += b.transpose();
        }
        y = y.cwiseMax(0.0);
        break;
      }
      case LayerSpec::Kind::AvgPool: {
        for (Index e = 0; e < s; ++e)
          for (int c = 0; c < out.channels; ++c)
            for (int yy = 0; yy < out.height; ++yy)
              for (int xx = 0; xx < out.width; ++xx) {
                const Index base = (static_cast<Index>(c) * in.height + 2 * yy) * in.width + 2 * xx;
                y((static_cast<Index>(c) * out.height + yy) * out.width + xx, e) =
                    0.25 * (x(base, e) + x(base + 1, e) + x(base + in.width, e) + x(base + in.width + 1, e));
              }
        break;
      }
    }
    acts.push_back(std::move(y));
  }
  return acts;
}

MatrixXd Network::forward(const Eigen::Ref<const VectorXd>& theta, const Eigen::Ref<const MatrixXd>& inputs) const {
  return std::move(forward_trace(theta, inputs).back());
}

VectorXd Network::backward(const Eigen::Ref<const VectorXd>& theta, const Eigen::Ref<const MatrixXd>& inputs,
                           const Eigen::Ref<const MatrixXd>& upstream) const {
  const std::vector<MatrixXd> acts = forward_trace(theta, inputs);
  require_shape(upstream.rows() == feature_dim() && upstream.cols() == inputs.cols(),
                "network backward: upstream gradient has wrong shape");
  const Index s = inputs.cols();
  VectorXd grad = VectorXd::Zero(parameter_count_);
  MatrixXd delta = upstream;
  for (std::size_t ii = layers_.size(); ii-- > 0;) {
    const LayerSpec& l = layers_[ii];
    const InputShape& in = shapes_[ii];
    const InputShape& out = shapes_[ii + 1];
    const MatrixXd& x = acts[ii];
    const MatrixXd& y = acts[ii + 1];
    const double* p = theta.data() + offsets_[ii];
    double* g = grad.data() + offsets_[ii];
    MatrixXd dx(in.size(), s);
    switch (l.kind) {
      case LayerSpec::Kind::Dense: {
        ConstMap w(p, l.width, in.size());
        const MatrixXd dz = (y.array() > 0.0).select(delta, 0.0);
        MutMap gw(g, l.width, in.size());
        Eigen::Map<VectorXd> gb(g + gw.size(), l.width);
        gw.noalias() = dz * x.transpose();
        gb = dz.rowwise().sum();
        if (ii > 0) dx.noalias() = w.transpose() * dz;
        break;
      }
      case LayerSpec::Kind::Conv: {
        const Index patch = static_cast<Index>(in.channels) * l.kernel * l.kernel;
        const Index hw = static_cast<Index>(in.height) * in.width;
        ConstMap w(p, l.width, patch);
        MutMap gw(g, l.width, patch);
        Eigen::Map<VectorXd> gb(g + gw.size(), l.width);
        dx.setZero();
        for (Index e = 0; e < s; ++e) {
          Eigen::Map<const MatrixXd> ymap(y.col(e).data(), hw, l.width);
          Eigen::Map<const MatrixXd> dmap(delta.col(e).data(), hw, l.width);
          const MatrixXd dz = (ymap.array() > 0.0).select(dmap, 0.0);
          const MatrixXd cols = im2col(x.col(e).data(), in, l.kernel);
          gw.noalias() += dz.transpose() * cols.transpose();
          gb += dz.colwise().sum().transpose();
          if (ii > 0) {
            const MatrixXd dcols = w.transpose() * dz.transpose();
            col2im_add(dcols, in, l.kernel, dx.col(e).data());
          }
        }
        break;
      }
      case LayerSpec::Kind::AvgPool: {
        dx.setZero();
        for (Index e = 0; e < s; ++e)
          for (int c = 0; c < out.channels; ++c)
            for (int yy = 0; yy < out.height; ++yy)
              for (int xx = 0; xx < out.width; ++xx) {
                const double d = 0.25 * delta((static_cast<Index>(c) * out.height + yy) * out.width + xx, e);
                const Index base = (static_cast<Index>(c) * in.height + 2 * yy) * in.width + 2 * xx;
                dx(base, e) += d;
                dx(base + 1, e) += d;
                dx(base + in.width, e) += d;
                dx(base + in.width + 1, e) += d;
              }
        break;
      }
    }
    if (ii > 0) delta = std::move(dx);
  }
  return grad;
}

NetworkModel::NetworkModel(std::shared_ptr<const Network> net, MatrixXd inputs)
    : net_(std::move(net)), inputs_(std::move(inputs)) {
  require_shape(inputs_.rows() == net_->input_shape().size(), "NetworkModel: inputs do not match network input");
}

MatrixXd NetworkModel::gather(IndexSpan batch) const {
  MatrixXd x(inputs_.rows(), static_cast<Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) x.col(static_cast<Index>(i)) = inputs_.col(batch[i]);
  return x;
}

MatrixXd NetworkModel::features(const Eigen::Ref<const VectorXd>& theta, IndexSpan batch) const {
  check_input(theta);
  check_batch(batch);
  if (batch.empty()) return net_->forward(theta, inputs_);
  return net_->forward(theta, gather(batch));
}

VectorXd NetworkModel::evaluate(const Eigen::Ref<const VectorXd>& theta, IndexSpan batch) const {
  MatrixXd z = features(theta, batch);
  return Eigen::Map<const VectorXd>(z.data(), z.size());
}

VectorXd NetworkModel::jacobian_transpose_product(const Eigen::Ref<const VectorXd>& theta,
                                                  const Eigen::Ref<const VectorXd>& v, IndexSpan batch) const {
  check_input(theta);
  check_batch(batch);
  require_shape(v.size() == output_dim(batch), "J^T v: v has wrong length");
  const Index s = batch.empty() ? data_count() : static_cast<Index>(batch.size());
  Eigen::Map<const MatrixXd> up(v.data(), net_->feature_dim(), s);
  if (batch.empty()) return net_->backward(theta, inputs_, up);
  return net_->backward(theta, gather(batch), up);
}

}  // namespace enkf
