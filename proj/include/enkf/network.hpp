#ifndef ENKF_NETWORK_HPP
#define ENKF_NETWORK_HPP

#include "enkf/dataset.hpp"
#include "enkf/forward_model.hpp"

#include <memory>
#include <string>
#include <string_view>

namespace enkf {

/// One entry of the fixed layer menu. Dense and conv layers are followed by
/// a ReLU; pooling is 2x2 averaging with stride 2.
struct LayerSpec {
  enum class Kind { Dense, Conv, AvgPool };
  Kind kind = Kind::Dense;
  /// Output units (dense) or output channels (conv).
  int width = 0;
  /// Square stencil size for conv layers ("same" zero padding, stride 1).
  int kernel = 5;

  static LayerSpec dense(int units) { return {Kind::Dense, units, 0}; }
  static LayerSpec conv(int channels, int kernel = 5) { return {Kind::Conv, channels, kernel}; }
  static LayerSpec avg_pool() { return {Kind::AvgPool, 0, 0}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

std::string to_string(LayerSpec::Kind k);
LayerSpec::Kind layer_kind_from_string(std::string_view name);

/// Feed-forward feature extractor theta -> features. Examples are columns.
/// Weights are one flat vector; no state besides the architecture.
class Network {
public:
  Network(InputShape input, std::vector<LayerSpec> layers);

  Index parameter_count() const { return parameter_count_; }
  Index feature_dim() const { return shapes_.back().size(); }
  const InputShape& input_shape() const { return shapes_.front(); }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  /// He-normal weights, zero biases.
  VectorXd initial_parameters(std::uint64_t seed) const;

  /// Features of every column of `inputs`: feature_dim() x inputs.cols().
  MatrixXd forward(const Eigen::Ref<const VectorXd>& theta, const Eigen::Ref<const MatrixXd>& inputs) const;

  /// Reverse-mode product: returns sum over examples of dFeatures^T dF/dtheta.
  VectorXd backward(const Eigen::Ref<const VectorXd>& theta, const Eigen::Ref<const MatrixXd>& inputs,
                    const Eigen::Ref<const MatrixXd>& upstream) const;

private:
  std::vector<MatrixXd> forward_trace(const Eigen::Ref<const VectorXd>& theta,
                                      const Eigen::Ref<const MatrixXd>& inputs) const;

  InputShape input_;
  std::vector<LayerSpec> layers_;
  std::vector<InputShape> shapes_;  // shapes_[i] is the input of layer i
  std::vector<Index> offsets_;      // parameter offset of layer i
  Index parameter_count_ = 0;
};

/// Binds a network to a fixed set of examples so it becomes the forward
/// operator of the ensemble method: F(theta) stacks feature blocks, one per
/// example.
class NetworkModel final : public ForwardModel {
public:
  NetworkModel(std::shared_ptr<const Network> net, MatrixXd inputs);

  Index input_dim() const override { return net_->parameter_count(); }
  Index data_count() const override { return inputs_.cols(); }
  Index outputs_per_example() const override { return net_->feature_dim(); }

  VectorXd evaluate(const Eigen::Ref<const VectorXd>& theta, IndexSpan batch = {}) const override;

  bool has_jacobian() const override { return true; }
  VectorXd jacobian_transpose_product(const Eigen::Ref<const VectorXd>& theta,
                                      const Eigen::Ref<const VectorXd>& v,
                                      IndexSpan batch = {}) const override;

  /// Feature matrix (feature_dim x batch size).
  MatrixXd features(const Eigen::Ref<const VectorXd>& theta, IndexSpan batch = {}) const;

  const Network& network() const { return *net_; }
  const MatrixXd& inputs() const { return inputs_; }

private:
  MatrixXd gather(IndexSpan batch) const;

  std::shared_ptr<const Network> net_;
  MatrixXd inputs_;
};

}  // namespace enkf

#endif  // ENKF_NETWORK_HPP
