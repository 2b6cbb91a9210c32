#include <cmath>

#include "doctest.h"
#include "sharplab/error.hpp"
#include "sharplab/models.hpp"

using namespace sharplab;

TEST_SUITE("models") {
  TEST_CASE("initialization is deterministic per seed") {
    ModelSpec spec{.input_dim = 4, .hidden_dims = {8, 5}, .num_classes = 3, .init_seed = 9};
    CHECK(init_params(spec) == init_params(spec));
    ModelSpec other = spec;
    other.init_seed = 10;
    CHECK_FALSE(init_params(spec) == init_params(other));
  }

  TEST_CASE("hidden layers get zero biases and He scaling") {
    ModelSpec spec{.input_dim = 400, .hidden_dims = {300}, .num_classes = 3, .init_seed = 1};
    const auto p = init_params(spec);
    for (double b : p.get("fc0.bias").values()) CHECK(b == 0.0);
    double ss = 0.0;
    for (double w : p.get("fc0.weight").values()) ss += w * w;
    const double var = ss / static_cast<double>(p.get("fc0.weight").size());
    CHECK(var == doctest::Approx(2.0 / 400.0).epsilon(0.05));
  }

  TEST_CASE("linear model parameter count") {
    ModelSpec spec{.input_dim = 7, .hidden_dims = {}, .num_classes = 4};
    CHECK(init_params(spec).num_scalars() == (7 + 1) * 4);
  }

  TEST_CASE("identity single layer") {
    ModelSpec spec{.input_dim = 2, .hidden_dims = {}, .num_classes = 2};
    ParameterSet p;
    p.add("head.weight", Tensor::matrix(2, 2, {1, 0, 0, 1}));
    p.add("head.bias", Tensor::vector({0, 0}));
    const Tensor out = logits(p, spec, Tensor::matrix(1, 2, {0.3, -1.2}));
    CHECK(out.shape() == Shape{1, 2});
    CHECK(out.at(0, 0) == 0.3);
    CHECK(out.at(0, 1) == -1.2);
  }

  TEST_CASE("zero weights give the bias; zero-init layer gives zeros") {
    ModelSpec spec{.input_dim = 3, .hidden_dims = {}, .num_classes = 2};
    ParameterSet p;
    p.add("head.weight", Tensor::zeros({3, 2}));
    p.add("head.bias", Tensor::vector({0.5, -2.0}));
    const Tensor out = logits(p, spec, Tensor::matrix(2, 3, {1, 2, 3, -4, 5, 6}));
    for (std::size_t r = 0; r < 2; ++r) {
      CHECK(out.at(r, 0) == 0.5);
      CHECK(out.at(r, 1) == -2.0);
    }
    p.get("head.bias") = Tensor::zeros({2});
    const Tensor zero = logits(p, spec, Tensor::matrix(1, 3, {1, 1, 1}));
    for (double v : zero.values()) CHECK(v == 0.0);
  }

  TEST_CASE("MLP output shape is (B, C)") {
    ModelSpec spec{.input_dim = 6, .hidden_dims = {10, 4}, .num_classes = 5};
    const Tensor out = logits(init_params(spec), spec, Tensor::zeros({9, 6}));
    CHECK(out.shape() == Shape{9, 5});
    CHECK(out.all_finite());
  }

  TEST_CASE("shape mismatches and empty batches are rejected") {
    ModelSpec spec{.input_dim = 6, .hidden_dims = {4}, .num_classes = 3};
    const auto p = init_params(spec);
    CHECK_THROWS_AS(logits(p, spec, Tensor::zeros({2, 5})), Error);
    CHECK_THROWS_AS(logits(p, spec, Tensor::zeros({0, 6})), Error);
    ModelSpec bad = spec;
    bad.num_classes = 1;
    CHECK_THROWS_AS(bad.validate(), Error);
  }

  TEST_CASE("cosine classifier: aligned feature scores s") {
    ModelSpec spec{.input_dim = 3, .hidden_dims = {}, .num_classes = 2, .classifier = ClassifierKind::kCosine,
                   .cosine_scale = 16.0};
    ParameterSet p;
    p.add("head.weight", Tensor::matrix(2, 3, {1, 0, 0, 0, 2, 0}));
    const Tensor out = logits(p, spec, Tensor::matrix(1, 3, {0, 1, 0}));
    CHECK(out.at(0, 1) == doctest::Approx(16.0).epsilon(1e-14));
    CHECK(out.at(0, 0) == doctest::Approx(0.0));
  }

  TEST_CASE("cosine logits are bounded and invariant to feature rescaling") {
    ModelSpec spec{.input_dim = 4, .hidden_dims = {}, .num_classes = 3, .classifier = ClassifierKind::kCosine,
                   .cosine_scale = 10.0, .init_seed = 3};
    const auto p = init_params(spec);
    const Tensor x = Tensor::matrix(2, 4, {0.3, -1, 2, 0.5, 4, 4, -1, 0});
    Tensor x5 = x;
    for (double& v : x5.values()) v *= 5.0;
    const Tensor a = logits(p, spec, x);
    const Tensor b = logits(p, spec, x5);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(std::abs(a[i]) <= 10.0 + 1e-12);
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
    CHECK(logits(p, spec, x) == a);
  }
}
