#include "scenekit/mlp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "scenekit/error.hpp"

namespace scenekit {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

namespace {


// Vectorized forms of softplus and its derivative; log1p(exp(-|x|)) never overflows.
Eigen::MatrixXd softplus_of(const Eigen::MatrixXd& z) {
  const auto a = z.array();
  return (a.max(0.0) - (1.0 + (-a.abs()).exp()).inverse().log()).matrix();
}

// Softplus and its derivative (the logistic function) sharing one exp.
void softplus_with_slope(const Eigen::MatrixXd& z, Eigen::MatrixXd& value, Eigen::MatrixXd& slope) {
  const auto a = z.array();
  const Eigen::ArrayXXd e = (-a.abs()).exp();
  const Eigen::ArrayXXd inv = (1.0 + e).inverse();
  value = (a.max(0.0) - inv.log()).matrix();
  slope = (a >= 0.0).select(inv, e * inv).matrix();
}

Eigen::MatrixXd logistic_of(const Eigen::MatrixXd& z) {
  return (1.0 + (-z.array()).exp()).inverse().matrix();
}

}  // namespace

MlpField MlpField::create(int output_dim, OutputActivation activation, Rng& rng,
                          int hidden_layers, int width) {
  MlpField field;
  field.output_activation = activation;
  int fan_in = 3;
  for (int l = 0; l <= hidden_layers; ++l) {
    const int fan_out = l == hidden_layers ? output_dim : width;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    DenseLayer layer;
    layer.weight.resize(fan_out, fan_in);
    layer.bias.resize(fan_out);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
    }
    for (int r = 0; r < fan_out; ++r) layer.bias(r) = rng.uniform(-bound, bound);
    field.layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  return field;
}

std::size_t MlpField::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool MlpField::all_finite() const {
  for (const DenseLayer& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return input_center.allFinite() && std::isfinite(input_scale);
}

Eigen::MatrixXd mlp_forward(const MlpField& field, const Eigen::MatrixXd& positions,
                            ForwardCache& cache) {
  const std::size_t n_layers = field.layers.size();
  cache.input = (positions.colwise() - field.input_center) * field.input_scale;
  cache.pre.resize(n_layers);
  cache.activations.resize(n_layers);
  cache.slopes.resize(n_layers);
  const Eigen::MatrixXd* prev = &cache.input;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const DenseLayer& layer = field.layers[l];
    cache.pre[l].noalias() = layer.weight * *prev;
    cache.pre[l].colwise() += layer.bias;
    if (l + 1 < n_layers) {
      softplus_with_slope(cache.pre[l], cache.activations[l], cache.slopes[l]);
    } else if (field.output_activation == OutputActivation::kSigmoid) {
      cache.activations[l] = logistic_of(cache.pre[l]);
    } else {
      cache.activations[l] = cache.pre[l];
    }
    prev = &cache.activations[l];
  }
  return cache.activations.back();
}

Eigen::MatrixXd mlp_forward(const MlpField& field, const Eigen::MatrixXd& positions) {
  Eigen::MatrixXd x = (positions.colwise() - field.input_center) * field.input_scale;
  const std::size_t n_layers = field.layers.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const DenseLayer& layer = field.layers[l];
    Eigen::MatrixXd z = layer.weight * x;
    z.colwise() += layer.bias;
    if (l + 1 < n_layers) {
      x = softplus_of(z);
    } else if (field.output_activation == OutputActivation::kSigmoid) {
      x = logistic_of(z);
    } else {
      x = std::move(z);
    }
  }
  return x;
}

std::vector<DenseLayer> mlp_backward(const MlpField& field, const ForwardCache& cache,
                                     const Eigen::MatrixXd& loss_grad) {
  const std::size_t n_layers = field.layers.size();
  std::vector<DenseLayer> grads(n_layers);
  Eigen::MatrixXd delta = loss_grad;
  if (field.output_activation == OutputActivation::kSigmoid) {
    const Eigen::MatrixXd& y = cache.activations.back();
    delta = delta.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
  }
  for (std::size_t l = n_layers; l-- > 0;) {
    const Eigen::MatrixXd& input = l == 0 ? cache.input : cache.activations[l - 1];
    grads[l].weight.noalias() = delta * input.transpose();
    grads[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd upstream = field.layers[l].weight.transpose() * delta;
    delta = upstream.cwiseProduct(cache.slopes[l - 1]);
  }
  return grads;
}

std::vector<DenseLayer> mlp_backward(const MlpField& field, const Eigen::MatrixXd& positions,
                                     const Eigen::MatrixXd& loss_grad) {
  ForwardCache cache;
  mlp_forward(field, positions, cache);
  return mlp_backward(field, cache, loss_grad);
}

Eigen::MatrixXd to_matrix(const std::vector<Vec3>& points) {
  Eigen::MatrixXd m(3, static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = points[i];
  return m;
}

Adam::Adam(const MlpField& field, AdamParams params) : params_(params) {
  for (const DenseLayer& l : field.layers) {
    DenseLayer zero;
    zero.weight = Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols());
    zero.bias = Eigen::VectorXd::Zero(l.bias.size());
    m_.push_back(zero);
    v_.push_back(zero);
  }
}

void Adam::step(MlpField& field, const std::vector<DenseLayer>& grads) {
  ++t_;
  const double b1 = params_.beta1, b2 = params_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double step = params_.learning_rate;
  const double eps = params_.epsilon;
  const auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= step * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < field.layers.size(); ++l) {
    update(field.layers[l].weight, m_[l].weight, v_[l].weight, grads[l].weight);
    update(field.layers[l].bias, m_[l].bias, v_[l].bias, grads[l].bias);
  }
}

namespace {

constexpr char kMagic[8] = {'S', 'K', 'F', 'I', 'E', 'L', 'D', '1'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error(ErrorCode::kIo, path.string() + ": truncated field blob");
  return value;
}

}  // namespace

void write_fields(const std::filesystem::path& path, const std::vector<MlpField>& fields) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(fields.size()));
  for (const MlpField& f : fields) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(f.output_activation));
    for (int d = 0; d < 3; ++d) put<float>(out, static_cast<float>(f.input_center[d]));
    put<float>(out, static_cast<float>(f.input_scale));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(f.layers.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(f.layers.front().weight.cols()));
    for (const DenseLayer& l : f.layers) put<std::uint32_t>(out, static_cast<std::uint32_t>(l.weight.rows()));
    for (const DenseLayer& l : f.layers) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put<float>(out, static_cast<float>(l.weight(r, c)));
      }
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) put<float>(out, static_cast<float>(l.bias(r)));
    }
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

std::vector<MlpField> read_fields(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kIo, path.string() + ": not a scenekit field blob");
  }
  const auto count = get<std::uint32_t>(in, path);
  std::vector<MlpField> fields;
  for (std::uint32_t i = 0; i < count; ++i) {
    MlpField f;
    const auto act = get<std::uint32_t>(in, path);
    if (act > 1) throw Error(ErrorCode::kIo, path.string() + ": unknown output activation");
    f.output_activation = static_cast<OutputActivation>(act);
    for (int d = 0; d < 3; ++d) f.input_center[d] = get<float>(in, path);
    f.input_scale = get<float>(in, path);
    const auto n_layers = get<std::uint32_t>(in, path);
    if (n_layers == 0 || n_layers > 64) throw Error(ErrorCode::kIo, path.string() + ": bad layer count");
    std::vector<std::uint32_t> dims(n_layers + 1);
    for (auto& d : dims) d = get<std::uint32_t>(in, path);
    for (std::uint32_t l = 0; l < n_layers; ++l) {
      DenseLayer layer;
      layer.weight.resize(dims[l + 1], dims[l]);
      layer.bias.resize(dims[l + 1]);
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = get<float>(in, path);
      }
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = get<float>(in, path);
      f.layers.push_back(std::move(layer));
    }
    fields.push_back(std::move(f));
  }
  return fields;
}

}  // namespace scenekit
