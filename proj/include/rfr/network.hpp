#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rfr/linalg.hpp"
#include "rfr/rng.hpp"

namespace rfr {

enum class Activation { relu, identity };
enum class Regularizer { none, rfr, cwd };
enum class HeadInit { he_uniform, zero };

std::string to_string(Activation a);
std::string to_string(Regularizer r);
std::string to_string(HeadInit h);
Activation activation_from_string(const std::string& s);
Regularizer regularizer_from_string(const std::string& s);
HeadInit head_init_from_string(const std::string& s);

/// y = x W^T + b, W is (out x in).
struct Affine {
  Matrix weight;
  Vector bias;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

struct Layer {
  Affine affine;
  Activation activation = Activation::relu;
};

/// MLP feature extractor followed by one linear head over every class seen so far.
struct Network {
  std::vector<Layer> extractor;
  Affine head;
  std::uint64_t seed = 0;

  int input_dim() const;
  int feature_dim() const;
  int num_classes() const;
};

struct NetworkSpec {
  int input_dim = 0;
  std::vector<int> hidden;  // widths of the ReLU hidden layers
  int feature_dim = 0;
  Activation feature_activation = Activation::identity;
  HeadInit head_init = HeadInit::he_uniform;
};

/// He-uniform weights (bound sqrt(6 / fan_in)) and zero biases, drawn from `seed`.
Network make_network(const NetworkSpec& spec, int num_classes, std::uint64_t seed);

struct Batch {
  Matrix inputs;
  std::vector<int> labels;
};

struct ForwardResult {
  Matrix features;  // extractor output, before any normalization
  Matrix logits;
};

/// Per-layer activations kept for backpropagation.
struct ForwardCache {
  std::vector<Matrix> layer_inputs;
  std::vector<Matrix> pre_activations;
  Matrix features;
  Matrix logits;
};

ForwardResult forward(const Network& net, const Matrix& inputs);
ForwardCache forward_cached(const Network& net, const Matrix& inputs);
Matrix extract_features(const Network& net, const Matrix& inputs);

/// Parameter-shaped container for gradients and momentum buffers.
struct Gradients {
  std::vector<Affine> extractor;
  Affine head;

  static Gradients zeros_like(const Network& net);
  Gradients& operator+=(const Gradients& other);
  void zero_extractor();
  /// Zeroes head rows [0, rows) so only later rows update.
  void zero_head_rows(int rows);
};

/// Backpropagates dLoss/dlogits and an extra dLoss/dfeatures through the network.
Gradients backprop(const Network& net, const ForwardCache& cache, const Matrix& d_logits,
                   const Matrix& d_features);

struct LossTerm {
  double loss = 0;
  Matrix grad;
};

/// Mean softmax cross-entropy with log-sum-exp; grad is d/dlogits.
LossTerm cross_entropy(const Matrix& logits, const std::vector<int>& labels);

/// Class-wise decorrelation penalty: mean over classes with >= 2 samples of
/// ||K_c||_F^2 / d^2, K_c the covariance of the centered, normalized class-c
/// features. grad is d/dfeatures (raw).
LossTerm cwd_loss_and_grad(const Matrix& features, const std::vector<int>& labels);

/// Softened cross-entropy of student against teacher over the first
/// teacher.cols() logits at temperature tau; grad is d/dstudent_logits.
LossTerm distillation_loss(const Matrix& student_logits, const Matrix& teacher_logits, double tau);

/// Teacher logits for the batch rows plus the weight and temperature of the KD term.
struct DistillTarget {
  Matrix teacher_logits;
  double weight = 1.0;
  double temperature = 2.0;
};

struct LossResult {
  double loss_ce = 0;
  double loss_reg = 0;  // unscaled regularizer value; 0 when alpha == 0
  double loss_kd = 0;
  Gradients grads;      // of loss_ce + alpha * loss_reg + weight * loss_kd
};

LossResult loss_and_backward(const Network& net, const Batch& batch, double alpha, Regularizer reg,
                             const DistillTarget* distill = nullptr);

/// velocity <- momentum * velocity + grad; param <- param - lr * velocity.
void sgd_step(Network& net, const Gradients& grads, double lr, double momentum, Gradients& velocity);

/// Adds head rows up to `new_class_count`; existing rows are copied bit-exactly.
Network expand_head(const Network& net, int new_class_count, HeadInit init, Rng& rng);

/// Extractor weights and biases concatenated layer by layer.
std::vector<double> extractor_parameters(const Network& net);
/// Every parameter (extractor then head) concatenated.
std::vector<double> all_parameters(const Network& net);
void set_all_parameters(Network& net, const std::vector<double>& values);
std::vector<double> flatten(const Gradients& grads);

std::string network_to_json(const Network& net);
Network network_from_json(const std::string& text);

}  // namespace rfr
