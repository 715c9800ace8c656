#include <doctest.h>

#include <cmath>
#include <fstream>

#include "gradcheck.hpp"
#include "scenekit/error.hpp"
#include "scenekit/mlp.hpp"
#include "support.hpp"

using namespace scenekit;

namespace {

// Straightforward per-sample evaluator written independently of mlp_forward.
std::vector<double> naive_forward(const MlpField& f, const Vec3& x) {
  std::vector<double> a = {(x[0] - f.input_center[0]) * f.input_scale,
                           (x[1] - f.input_center[1]) * f.input_scale,
                           (x[2] - f.input_center[2]) * f.input_scale};
  for (std::size_t l = 0; l < f.layers.size(); ++l) {
    const auto& L = f.layers[l];
    std::vector<double> z(static_cast<std::size_t>(L.weight.rows()));
    for (Eigen::Index r = 0; r < L.weight.rows(); ++r) {
      double s = L.bias(r);
      for (Eigen::Index c = 0; c < L.weight.cols(); ++c) s += L.weight(r, c) * a[static_cast<std::size_t>(c)];
      if (l + 1 < f.layers.size()) {
        s = std::log(1.0 + std::exp(s));
      } else if (f.output_activation == OutputActivation::kSigmoid) {
        s = 1.0 / (1.0 + std::exp(-s));
      }
      z[static_cast<std::size_t>(r)] = s;
    }
    a = std::move(z);
  }
  return a;
}

Eigen::MatrixXd random_matrix(int rows, int cols, scenekit::Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("softplus") {
  CHECK(softplus(0.0) == doctest::Approx(0.6931471805599453).epsilon(1e-15));
  CHECK(softplus(100.0) == 100.0);
  CHECK(softplus(800.0) == 800.0);
  CHECK(std::isfinite(softplus(-800.0)));
  CHECK(softplus(-800.0) >= 0.0);
}

TEST_CASE("architecture and initialization") {
  scenekit::Rng rng(1);
  const MlpField f = MlpField::create(1, OutputActivation::kIdentity, rng);
  REQUIRE(f.layers.size() == 5);
  CHECK(f.layers[0].weight.rows() == 128);
  CHECK(f.layers[0].weight.cols() == 3);
  CHECK(f.layers[4].weight.rows() == 1);
  CHECK(f.parameter_count() == 3 * 128 + 128 + 3 * (128 * 128 + 128) + 128 + 1);
  CHECK(f.layers[0].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(3.0));
  CHECK(f.layers[2].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(128.0));
  CHECK(f.all_finite());
}

TEST_CASE("forward matches a naive evaluator") {
  scenekit::Rng rng(2);
  for (auto act : {OutputActivation::kIdentity, OutputActivation::kSigmoid}) {
    MlpField f = MlpField::create(act == OutputActivation::kIdentity ? 1 : 3, act, rng);
    f.input_center = Vec3(0.1, -0.3, 2.0);
    f.input_scale = 1.7;
    const auto pts = testing::random_points(20, 8);
    const Eigen::MatrixXd out = mlp_forward(f, to_matrix(pts));
    ForwardCache cache;
    const Eigen::MatrixXd cached = mlp_forward(f, to_matrix(pts), cache);
    CHECK((out - cached).cwiseAbs().maxCoeff() == 0.0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto ref = naive_forward(f, pts[i]);
      for (std::size_t r = 0; r < ref.size(); ++r) CHECK(std::abs(out(r, i) - ref[r]) <= 1e-12);
    }
  }
}

TEST_CASE("zeroed final layer outputs the final bias") {
  scenekit::Rng rng(3);
  MlpField f = MlpField::create(1, OutputActivation::kIdentity, rng);
  f.layers.back().weight.setZero();
  f.layers.back().bias(0) = 0.375;
  const Eigen::MatrixXd out = mlp_forward(f, to_matrix(testing::random_points(10, 3)));
  CHECK((out.array() == 0.375).all());
}

TEST_CASE("backward: zero loss gradient gives zero parameter gradients") {
  scenekit::Rng rng(4);
  const MlpField f = MlpField::create(3, OutputActivation::kSigmoid, rng);
  const Eigen::MatrixXd x = to_matrix(testing::random_points(5, 4));
  const auto g = mlp_backward(f, x, Eigen::MatrixXd::Zero(3, 5));
  for (const auto& l : g) {
    CHECK(l.weight.cwiseAbs().maxCoeff() == 0.0);
    CHECK(l.bias.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("backward: one-unit chain rule by hand") {
  MlpField f;
  f.layers.resize(2);
  f.layers[0].weight = Eigen::MatrixXd::Zero(1, 3);
  f.layers[0].weight << 0.5, -0.25, 2.0;
  f.layers[0].bias = Eigen::VectorXd::Constant(1, 0.1);
  f.layers[1].weight = Eigen::MatrixXd::Constant(1, 1, -1.5);
  f.layers[1].bias = Eigen::VectorXd::Constant(1, 0.2);
  const Vec3 x(0.3, 0.8, -0.1);
  const double z = 0.5 * 0.3 - 0.25 * 0.8 + 2.0 * -0.1 + 0.1;
  const double h = std::log1p(std::exp(z));
  const double sig = 1.0 / (1.0 + std::exp(-z));
  const auto g = mlp_backward(f, to_matrix({x}), Eigen::MatrixXd::Ones(1, 1));
  CHECK(g[1].weight(0, 0) == doctest::Approx(h).epsilon(1e-14));
  CHECK(g[1].bias(0) == doctest::Approx(1.0));
  CHECK(g[0].bias(0) == doctest::Approx(-1.5 * sig).epsilon(1e-14));
  for (int c = 0; c < 3; ++c) CHECK(g[0].weight(0, c) == doctest::Approx(-1.5 * sig * x[c]).epsilon(1e-14));
}

TEST_CASE("backward matches central differences on a reduced-width net") {
  scenekit::Rng rng(5);
  for (auto act : {OutputActivation::kIdentity, OutputActivation::kSigmoid}) {
    const int out_dim = act == OutputActivation::kIdentity ? 1 : 3;
    MlpField f = MlpField::create(out_dim, act, rng, kHiddenLayers, 16);
    const Eigen::MatrixXd x = to_matrix(testing::random_points(4, rng.next()));
    const Eigen::MatrixXd w = random_matrix(out_dim, 4, rng);
    const auto res = testing::gradient_check(f, x, w);
    CHECK(res.checked == f.parameter_count());
    CHECK(res.failed == 0);
  }
}

TEST_CASE("Adam first step moves every parameter by the learning rate") {
  scenekit::Rng rng(6);
  MlpField f = MlpField::create(1, OutputActivation::kIdentity, rng, 2, 4);
  const MlpField before = f;
  std::vector<DenseLayer> g = f.layers;
  for (auto& l : g) {
    l.weight.setConstant(0.3);
    l.bias.setConstant(-2.0);
  }
  Adam adam(f, AdamParams{});
  adam.step(f, g);
  for (std::size_t l = 0; l < f.layers.size(); ++l) {
    const Eigen::MatrixXd dw = f.layers[l].weight - before.layers[l].weight;
    CHECK((dw.array() + 1e-3).abs().maxCoeff() < 1e-9);
    const Eigen::VectorXd db = f.layers[l].bias - before.layers[l].bias;
    CHECK((db.array() - 1e-3).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("field blob round trip") {
  testing::ScratchDir dir("blob");
  scenekit::Rng rng(7);
  MlpField a = MlpField::create(1, OutputActivation::kIdentity, rng);
  MlpField b = MlpField::create(3, OutputActivation::kSigmoid, rng);
  b.input_center = Vec3(1, 2, 3);
  b.input_scale = 0.25;
  write_fields(dir / "f.bin", {a, b});
  const auto back = read_fields(dir / "f.bin");
  REQUIRE(back.size() == 2);
  CHECK(back[1].output_activation == OutputActivation::kSigmoid);
  CHECK(back[1].input_center == Vec3(1, 2, 3));
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(back[0].layers[l].weight == a.layers[l].weight.cast<float>().cast<double>());
    CHECK(back[1].layers[l].bias == b.layers[l].bias.cast<float>().cast<double>());
  }
  std::ofstream(dir / "bad.bin") << "NOTAFIELD";
  CHECK_THROWS_AS(read_fields(dir / "bad.bin"), Error);
}
