#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "scenekit/geometry.hpp"
#include "scenekit/random.hpp"

namespace scenekit {

enum class OutputActivation : std::uint32_t { kIdentity = 0, kSigmoid = 1 };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

inline constexpr int kHiddenLayers = 4;
inline constexpr int kHiddenWidth = 128;

double softplus(double x);

// 3 -> kHiddenLayers x kHiddenWidth (Softplus) -> output_dim. Inputs are first
// mapped by (x - input_center) * input_scale.
struct MlpField {
  std::vector<DenseLayer> layers;
  OutputActivation output_activation = OutputActivation::kIdentity;
  Vec3 input_center = Vec3::Zero();
  double input_scale = 1.0;

  // Fresh weights and biases uniform in +-1/sqrt(fan_in).
  static MlpField create(int output_dim, OutputActivation activation, Rng& rng,
                         int hidden_layers = kHiddenLayers, int width = kHiddenWidth);

  int output_dim() const { return static_cast<int>(layers.back().weight.rows()); }
  std::size_t parameter_count() const;
  bool all_finite() const;
};

// Per-layer pre-activations and activations of one forward pass.
struct ForwardCache {
  Eigen::MatrixXd input;                     // 3 x N, already normalized
  std::vector<Eigen::MatrixXd> pre;          // per layer, out x N
  std::vector<Eigen::MatrixXd> activations;  // per layer, out x N (last = network output)
  std::vector<Eigen::MatrixXd> slopes;       // hidden layers: d activation / d pre
};

// positions: 3 x N. Returns output_dim x N.
Eigen::MatrixXd mlp_forward(const MlpField& field, const Eigen::MatrixXd& positions);
Eigen::MatrixXd mlp_forward(const MlpField& field, const Eigen::MatrixXd& positions,
                            ForwardCache& cache);

// Exact reverse-mode gradients given dLoss/dOutput (output_dim x N).
std::vector<DenseLayer> mlp_backward(const MlpField& field, const ForwardCache& cache,
                                     const Eigen::MatrixXd& loss_grad);
// Convenience overload that runs the forward pass itself.
std::vector<DenseLayer> mlp_backward(const MlpField& field, const Eigen::MatrixXd& positions,
                                     const Eigen::MatrixXd& loss_grad);

Eigen::MatrixXd to_matrix(const std::vector<Vec3>& points);

struct AdamParams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(const MlpField& field, AdamParams params);
  void step(MlpField& field, const std::vector<DenseLayer>& grads);
  void set_learning_rate(double lr) { params_.learning_rate = lr; }

 private:
  AdamParams params_;
  std::vector<DenseLayer> m_, v_;
  long t_ = 0;
};

// Little-endian blob: "SKFIELD1", u32 field count, then per field: u32 output
// activation, f32 input_center[3], f32 input_scale, u32 layer count L,
// u32 dims[L + 1], and per layer f32 weights (row-major, out x in) followed by
// f32 biases.
void write_fields(const std::filesystem::path& path, const std::vector<MlpField>& fields);
std::vector<MlpField> read_fields(const std::filesystem::path& path);

}  // namespace scenekit
