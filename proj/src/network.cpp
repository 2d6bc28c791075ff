#include "rfr/network.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

#include "rfr/rank_metrics.hpp"

namespace rfr {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::none: return "none";
    case Regularizer::rfr: return "rfr";
    case Regularizer::cwd: return "cwd";
  }
  return "none";
}

std::string to_string(HeadInit h) { return h == HeadInit::zero ? "zero" : "he_uniform"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

Regularizer regularizer_from_string(const std::string& s) {
  if (s == "none") return Regularizer::none;
  if (s == "rfr") return Regularizer::rfr;
  if (s == "cwd") return Regularizer::cwd;
  throw ConfigError("unknown regularizer '" + s + "'");
}

HeadInit head_init_from_string(const std::string& s) {
  if (s == "he_uniform") return HeadInit::he_uniform;
  if (s == "zero") return HeadInit::zero;
  throw ConfigError("unknown head init '" + s + "'");
}

int Network::input_dim() const {
  return extractor.empty() ? static_cast<int>(head.in_dim())
                           : static_cast<int>(extractor.front().affine.in_dim());
}

int Network::feature_dim() const { return static_cast<int>(head.in_dim()); }

int Network::num_classes() const { return static_cast<int>(head.out_dim()); }

namespace {

void he_uniform(Matrix& w, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
}

Affine make_affine(int in, int out, Rng& rng) {
  Affine a{Matrix(out, in), Vector::Zero(out)};
  he_uniform(a.weight, rng);
  return a;
}

Matrix apply_affine(const Affine& a, const Matrix& x) {
  Matrix y = x * a.weight.transpose();
  y.rowwise() += a.bias.transpose();
  return y;
}

void check_labels(const std::vector<int>& labels, Eigen::Index rows, int num_classes) {
  if (static_cast<Eigen::Index>(labels.size()) != rows)
    throw DimensionError("label count " + std::to_string(labels.size()) + " != batch rows " +
                         std::to_string(rows));
  for (int y : labels)
    if (y < 0 || y >= num_classes)
      throw LabelOutOfRange("label " + std::to_string(y) + " outside head with " +
                           std::to_string(num_classes) + " classes");
}

Matrix softmax_rows(const Matrix& logits, double tau) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto scaled = (logits.row(i) / tau).eval();
    const double m = scaled.maxCoeff();
    const auto e = (scaled.array() - m).exp().eval();
    p.row(i) = e / e.sum();
  }
  return p;
}

}  // namespace

Network make_network(const NetworkSpec& spec, int num_classes, std::uint64_t seed) {
  if (spec.input_dim <= 0 || spec.feature_dim <= 0 || num_classes <= 0)
    throw DimensionError("network dimensions must be positive");
  Rng root(seed);
  Network net;
  net.seed = seed;
  int in = spec.input_dim;
  std::uint64_t stream = 0;
  for (int width : spec.hidden) {
    if (width <= 0) throw DimensionError("hidden width must be positive");
    Rng rng = root.fork(stream++);
    net.extractor.push_back({make_affine(in, width, rng), Activation::relu});
    in = width;
  }
  Rng rng = root.fork(stream++);
  net.extractor.push_back({make_affine(in, spec.feature_dim, rng), spec.feature_activation});
  if (spec.head_init == HeadInit::zero) {
    net.head = {Matrix::Zero(num_classes, spec.feature_dim), Vector::Zero(num_classes)};
  } else {
    Rng head_rng = root.fork(1000);
    net.head = make_affine(spec.feature_dim, num_classes, head_rng);
  }
  return net;
}

ForwardCache forward_cached(const Network& net, const Matrix& inputs) {
  if (inputs.cols() != net.input_dim())
    throw DimensionError("input has " + std::to_string(inputs.cols()) + " columns, network expects " +
                         std::to_string(net.input_dim()));
  ForwardCache cache;
  Matrix x = inputs;
  for (const Layer& layer : net.extractor) {
    cache.layer_inputs.push_back(x);
    Matrix pre = apply_affine(layer.affine, x);
    x = layer.activation == Activation::relu ? Matrix(pre.cwiseMax(0.0)) : pre;
    cache.pre_activations.push_back(std::move(pre));
  }
  cache.logits = apply_affine(net.head, x);
  cache.features = std::move(x);
  return cache;
}

ForwardResult forward(const Network& net, const Matrix& inputs) {
  ForwardCache cache = forward_cached(net, inputs);
  return {std::move(cache.features), std::move(cache.logits)};
}

Matrix extract_features(const Network& net, const Matrix& inputs) {
  return forward_cached(net, inputs).features;
}

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (const Layer& layer : net.extractor)
    g.extractor.push_back({Matrix::Zero(layer.affine.out_dim(), layer.affine.in_dim()),
                           Vector::Zero(layer.affine.out_dim())});
  g.head = {Matrix::Zero(net.head.out_dim(), net.head.in_dim()), Vector::Zero(net.head.out_dim())};
  return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.extractor.size() != extractor.size()) throw ShapeMismatch("gradient layer count differs");
  for (std::size_t l = 0; l < extractor.size(); ++l) {
    extractor[l].weight += other.extractor[l].weight;
    extractor[l].bias += other.extractor[l].bias;
  }
  head.weight += other.head.weight;
  head.bias += other.head.bias;
  return *this;
}

void Gradients::zero_extractor() {
  for (Affine& a : extractor) {
    a.weight.setZero();
    a.bias.setZero();
  }
}

void Gradients::zero_head_rows(int rows) {
  const Eigen::Index n = std::min<Eigen::Index>(rows, head.weight.rows());
  head.weight.topRows(n).setZero();
  head.bias.head(n).setZero();
}

Gradients backprop(const Network& net, const ForwardCache& cache, const Matrix& d_logits,
                   const Matrix& d_features) {
  Gradients g = Gradients::zeros_like(net);
  g.head.weight = d_logits.transpose() * cache.features;
  g.head.bias = d_logits.colwise().sum().transpose();

  Matrix delta = d_logits * net.head.weight;
  if (d_features.size() > 0) delta += d_features;

  for (std::size_t l = net.extractor.size(); l-- > 0;) {
    const Layer& layer = net.extractor[l];
    if (layer.activation == Activation::relu)
      delta = (cache.pre_activations[l].array() > 0.0).select(delta, 0.0);
    g.extractor[l].weight = delta.transpose() * cache.layer_inputs[l];
    g.extractor[l].bias = delta.colwise().sum().transpose();
    if (l > 0) delta = delta * layer.affine.weight;
  }
  return g;
}

LossTerm cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  check_labels(labels, logits.rows(), static_cast<int>(logits.cols()));
  const auto n = static_cast<double>(logits.rows());
  LossTerm out;
  out.grad = softmax_rows(logits, 1.0);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.loss += lse - logits(i, y);
    out.grad(i, y) -= 1.0;
  }
  out.loss /= n;
  out.grad /= n;
  return out;
}

LossTerm cwd_loss_and_grad(const Matrix& features, const std::vector<int>& labels) {
  check_labels(labels, features.rows(), std::numeric_limits<int>::max());
  const Eigen::Index d = features.cols();
  const Matrix h_norm = row_normalize(features);

  int max_label = -1;
  for (int y : labels) max_label = std::max(max_label, y);
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(max_label + 1));
  for (std::size_t i = 0; i < labels.size(); ++i)
    members[static_cast<std::size_t>(labels[i])].push_back(static_cast<Eigen::Index>(i));

  int counted = 0;
  for (const auto& rows : members) counted += rows.size() >= 2 ? 1 : 0;

  LossTerm out;
  out.grad = Matrix::Zero(features.rows(), d);
  if (counted == 0) return out;

  const double d2 = static_cast<double>(d * d);
  Matrix d_hn = Matrix::Zero(features.rows(), d);
  for (const auto& rows : members) {
    if (rows.size() < 2) continue;
    const auto nc = static_cast<double>(rows.size());
    Matrix z(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t k = 0; k < rows.size(); ++k) z.row(static_cast<Eigen::Index>(k)) = h_norm.row(rows[k]);
    const Vector mean = z.colwise().mean().transpose();
    z.rowwise() -= mean.transpose();
    const Matrix k_c = z.transpose() * z / nc;
    out.loss += k_c.squaredNorm() / d2;
    // d/dZ of ||Z^T Z / n||^2 is 4 Z K / n; centering projects out the column mean.
    Matrix g_z = (4.0 / (nc * d2 * counted)) * z * k_c;
    const Vector g_mean = g_z.colwise().mean().transpose();
    g_z.rowwise() -= g_mean.transpose();
    for (std::size_t k = 0; k < rows.size(); ++k) d_hn.row(rows[k]) += g_z.row(static_cast<Eigen::Index>(k));
  }
  out.loss /= counted;

  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double norm = features.row(i).norm();
    const double radial = d_hn.row(i).dot(h_norm.row(i));
    out.grad.row(i) = (d_hn.row(i) - radial * h_norm.row(i)) / norm;
  }
  return out;
}

LossTerm distillation_loss(const Matrix& student_logits, const Matrix& teacher_logits, double tau) {
  if (teacher_logits.rows() != student_logits.rows() || teacher_logits.cols() > student_logits.cols())
    throw DimensionError("teacher logits do not fit the student");
  if (!(tau > 0)) throw ConfigError("distillation temperature must be positive");
  const Eigen::Index k = teacher_logits.cols();
  const auto n = static_cast<double>(student_logits.rows());
  const Matrix student_old = student_logits.leftCols(k);
  const Matrix p_teacher = softmax_rows(teacher_logits, tau);
  const Matrix p_student = softmax_rows(student_old, tau);

  LossTerm out;
  for (Eigen::Index i = 0; i < student_old.rows(); ++i) {
    const auto scaled = (student_old.row(i) / tau).eval();
    const double m = scaled.maxCoeff();
    const double lse = m + std::log((scaled.array() - m).exp().sum());
    out.loss -= (p_teacher.row(i).array() * (scaled.array() - lse)).sum();
  }
  out.loss /= n;
  out.grad = Matrix::Zero(student_logits.rows(), student_logits.cols());
  out.grad.leftCols(k) = (p_student - p_teacher) / (tau * n);
  return out;
}

LossResult loss_and_backward(const Network& net, const Batch& batch, double alpha, Regularizer reg,
                             const DistillTarget* distill) {
  if (batch.inputs.rows() == 0) throw EmptyInput("empty batch");
  if (!(alpha >= 0)) throw ConfigError("alpha must be >= 0");
  const ForwardCache cache = forward_cached(net, batch.inputs);
  const LossTerm ce = cross_entropy(cache.logits, batch.labels);

  LossResult out;
  out.loss_ce = ce.loss;
  Matrix d_features;
  if (alpha > 0 && reg == Regularizer::rfr) {
    const auto rfr = rfr_loss_and_grad(cache.features);
    out.loss_reg = rfr.loss;
    d_features = alpha * rfr.grad_h;
  } else if (alpha > 0 && reg == Regularizer::cwd) {
    const LossTerm cwd = cwd_loss_and_grad(cache.features, batch.labels);
    out.loss_reg = cwd.loss;
    d_features = alpha * cwd.grad;
  }
  Matrix d_logits = ce.grad;
  if (distill != nullptr && distill->weight != 0.0) {
    const LossTerm kd = distillation_loss(cache.logits, distill->teacher_logits, distill->temperature);
    out.loss_kd = kd.loss;
    d_logits += distill->weight * kd.grad;
  }
  out.grads = backprop(net, cache, d_logits, d_features);
  return out;
}

void sgd_step(Network& net, const Gradients& grads, double lr, double momentum, Gradients& velocity) {
  if (grads.extractor.size() != net.extractor.size() || velocity.extractor.size() != net.extractor.size())
    throw ShapeMismatch("gradient / velocity shapes do not match the network");
  auto update = [&](Affine& param, const Affine& g, Affine& v) {
    v.weight = momentum * v.weight + g.weight;
    v.bias = momentum * v.bias + g.bias;
    param.weight -= lr * v.weight;
    param.bias -= lr * v.bias;
  };
  for (std::size_t l = 0; l < net.extractor.size(); ++l)
    update(net.extractor[l].affine, grads.extractor[l], velocity.extractor[l]);
  update(net.head, grads.head, velocity.head);
}

Network expand_head(const Network& net, int new_class_count, HeadInit init, Rng& rng) {
  const int current = net.num_classes();
  if (new_class_count <= current)
    throw ShrinkError("head has " + std::to_string(current) + " classes; cannot expand to " +
                      std::to_string(new_class_count));
  Network out = net;
  const Eigen::Index d = net.head.in_dim();
  out.head.weight.resize(new_class_count, d);
  out.head.bias.resize(new_class_count);
  out.head.weight.topRows(current) = net.head.weight;
  out.head.bias.head(current) = net.head.bias;
  Matrix fresh = Matrix::Zero(new_class_count - current, d);
  if (init == HeadInit::he_uniform) he_uniform(fresh, rng);
  out.head.weight.bottomRows(new_class_count - current) = fresh;
  out.head.bias.tail(new_class_count - current).setZero();
  return out;
}

namespace {

void append(std::vector<double>& out, const Affine& a) {
  out.insert(out.end(), a.weight.data(), a.weight.data() + a.weight.size());
  out.insert(out.end(), a.bias.data(), a.bias.data() + a.bias.size());
}

std::size_t assign(Affine& a, const std::vector<double>& values, std::size_t offset) {
  for (Eigen::Index i = 0; i < a.weight.size(); ++i) a.weight.data()[i] = values.at(offset++);
  for (Eigen::Index i = 0; i < a.bias.size(); ++i) a.bias.data()[i] = values.at(offset++);
  return offset;
}

}  // namespace

std::vector<double> extractor_parameters(const Network& net) {
  std::vector<double> out;
  for (const Layer& layer : net.extractor) append(out, layer.affine);
  return out;
}

std::vector<double> all_parameters(const Network& net) {
  std::vector<double> out = extractor_parameters(net);
  append(out, net.head);
  return out;
}

void set_all_parameters(Network& net, const std::vector<double>& values) {
  std::size_t offset = 0;
  for (Layer& layer : net.extractor) offset = assign(layer.affine, values, offset);
  offset = assign(net.head, values, offset);
  if (offset != values.size()) throw ShapeMismatch("parameter vector length mismatch");
}

std::vector<double> flatten(const Gradients& grads) {
  std::vector<double> out;
  for (const Affine& a : grads.extractor) append(out, a);
  append(out, grads.head);
  return out;
}

namespace {

nlohmann::ordered_json affine_json(const Affine& a) {
  nlohmann::ordered_json j;
  j["in"] = a.in_dim();
  j["out"] = a.out_dim();
  j["weight"] = std::vector<double>(a.weight.data(), a.weight.data() + a.weight.size());
  j["bias"] = std::vector<double>(a.bias.data(), a.bias.data() + a.bias.size());
  return j;
}

Affine affine_from_json(const nlohmann::json& j) {
  const auto in = j.at("in").get<Eigen::Index>();
  const auto out = j.at("out").get<Eigen::Index>();
  const auto w = j.at("weight").get<std::vector<double>>();
  const auto b = j.at("bias").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(b.size()) != out) throw ParseError(0, "bias length mismatch");
  return {make_dense<double>(out, in, w), Eigen::Map<const Vector>(b.data(), out)};
}

}  // namespace

std::string network_to_json(const Network& net) {
  nlohmann::ordered_json j;
  j["format"] = "rfr-network-v1";
  j["seed"] = net.seed;
  j["input_dim"] = net.input_dim();
  j["feature_dim"] = net.feature_dim();
  j["num_classes"] = net.num_classes();
  auto layers = nlohmann::ordered_json::array();
  for (const Layer& layer : net.extractor) {
    auto lj = affine_json(layer.affine);
    lj["activation"] = to_string(layer.activation);
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  j["head"] = affine_json(net.head);
  return j.dump();
}

Network network_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("network checkpoint: ") + e.what());
  }
  try {
    Network net;
    net.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& lj : j.at("layers"))
      net.extractor.push_back({affine_from_json(lj), activation_from_string(lj.at("activation"))});
    net.head = affine_from_json(j.at("head"));
    Eigen::Index in = j.at("input_dim").get<Eigen::Index>();
    for (const Layer& layer : net.extractor) {
      if (layer.affine.in_dim() != in) throw ParseError(0, "layer dimensions do not chain");
      in = layer.affine.out_dim();
    }
    if (net.head.in_dim() != in || net.num_classes() != j.at("num_classes").get<int>())
      throw ParseError(0, "head dimensions inconsistent");
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("network checkpoint: ") + e.what());
  }
}

}  // namespace rfr
