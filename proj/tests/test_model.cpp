#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "coordflow/loss.hpp"
#include "coordflow/model.hpp"
#include "coordflow/rng.hpp"
#include "oracle.hpp"

using namespace coordflow;
using namespace coordflow::testing;

TEST_CASE("positional encoding examples") {
  PeConfig cfg{2, false, 1.0f};
  auto enc = positional_encode_value(0.0f, cfg);
  CHECK(enc == std::vector<float>{0.0f, 1.0f, 0.0f, 1.0f});

  PeConfig passthrough{0, true, 1.0f};
  CHECK(positional_encode_value(0.42f, passthrough) == std::vector<float>{0.42f});

  PeConfig big{7, true, 1.0f};
  CHECK(positional_encode_value(-0.3f, big).size() == size_t(2 * 7 + 1));
}

TEST_CASE("similarity transform structure") {
  SimilarityTransform id = SimilarityTransform::identity();
  CHECK(id.m[0] == 1.0f);
  CHECK(id.m[4] == 1.0f);
  CHECK(id.m[1] == 0.0f);

  // (s=2, theta=0, dx=0.1, dy=0) -> [[2,0,0.1],[0,2,0]]
  SimilarityTransform t =
      SimilarityTransform::from_params(std::log(2.0f), 0.0f, 0.1f, 0.0f);
  CHECK(t.m[0] == doctest::Approx(2.0));
  CHECK(t.m[1] == doctest::Approx(0.0));
  CHECK(t.m[2] == doctest::Approx(0.1));
  CHECK(t.m[3] == doctest::Approx(0.0));
  CHECK(t.m[4] == doctest::Approx(2.0));

  // 90-degree rotation maps (1,0) to (0,1)
  SimilarityTransform rot =
      SimilarityTransform::from_params(0.0f, 3.14159265f / 2.0f, 0.0f, 0.0f);
  auto [x, y] = rot.apply(1.0f, 0.0f);
  CHECK(x == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(y == doctest::Approx(1.0));

  // params round-trip
  float s_raw, theta, dx, dy;
  t.to_params(s_raw, theta, dx, dy);
  CHECK(s_raw == doctest::Approx(std::log(2.0f)));
  CHECK(theta == doctest::Approx(0.0));
  CHECK(dx == doctest::Approx(0.1));
}

TEST_CASE("fresh models start at the identity transform") {
  CoordFlowModel m = make_preset("tiny", 2, 99);
  for (float t : {-1.0f, -0.33f, 0.0f, 0.5f, 1.0f}) {
    for (const auto& layer : m.layers) {
      SimilarityTransform tf = flow_transform(layer, t);
      CHECK(tf.m[0] == 1.0f);
      CHECK(tf.m[1] == 0.0f);
      CHECK(tf.m[2] == 0.0f);
      CHECK(tf.m[3] == 0.0f);
      CHECK(tf.m[4] == 1.0f);
      CHECK(tf.m[5] == 0.0f);
    }
  }
}

TEST_CASE("emitted transforms keep the similarity structure") {
  CoordFlowModel m = make_preset("tiny", 2, 5);
  // kick the flow nets away from zero so the matrices are nontrivial
  Rng rng(3);
  for (auto& layer : m.layers)
    for (auto& w : layer.flow.mlp.weights)
      for (float& v : w.mutable_data()) v += rng.uniform(-0.2f, 0.2f);
  for (float t : {-0.9f, -0.1f, 0.4f, 1.0f}) {
    SimilarityTransform tf = flow_transform(m.layers[0], t);
    CHECK(tf.m[0] == tf.m[4]);            // equal diagonal
    CHECK(tf.m[1] == doctest::Approx(-tf.m[3]));  // opposite off-diagonal
    CHECK(tf.m[0] * tf.m[4] - tf.m[1] * tf.m[3] > 0.0f);  // det = s^2 > 0
  }
}

TEST_CASE("layer forward with identity flow equals the color net on raw coords") {
  CoordFlowModel m = make_preset("tiny", 1, 7);
  const auto& layer = m.layers[0];
  const int64_t n = 5;
  Rng rng(1);
  std::vector<float> xs(n), ys(n), ts(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = rng.uniform(-1.0f, 1.0f);
    ys[i] = rng.uniform(-1.0f, 1.0f);
    ts[i] = rng.uniform(-1.0f, 1.0f);
  }
  Tensor x = Tensor::from_data({n, 1}, xs);
  Tensor y = Tensor::from_data({n, 1}, ys);
  Tensor t = Tensor::from_data({n, 1}, ts);
  LayerBatchOut out = layer_forward(layer, x, y, t);

  // direct color-net evaluation at raw coordinates
  NoGradScope ng;
  Tensor feats = concat_cols({positional_encode(x, layer.color.pe_spatial),
                              positional_encode(y, layer.color.pe_spatial),
                              positional_encode(t, layer.color.pe_temporal)});
  Tensor direct = layer.color.mlp.forward(feats);
  Tensor rgb = sigmoid(slice_cols(direct, 0, 3));
  for (int64_t i = 0; i < n * 3; ++i)
    CHECK(out.rgb.data()[i] == doctest::Approx(rgb.data()[i]).epsilon(1e-6));
  for (int64_t i = 0; i < n * 3; ++i) {
    CHECK(out.rgb.data()[i] >= 0.0f);
    CHECK(out.rgb.data()[i] <= 1.0f);
  }
}

TEST_CASE("translation equivariance of the flow path") {
  // with a pure-translation flow of dx = d and a t-independent comparison,
  // layer(x, ...) equals an identity-flow layer evaluated at (x + d, ...)
  CoordFlowModel m = make_preset("tiny", 1, 13);
  auto& layer = m.layers[0];
  const float d = 0.25f;
  // force the flow output to (0, 0, d, 0) via the final bias
  layer.flow.mlp.biases.back().mutable_data()[2] = d;

  const int64_t n = 4;
  std::vector<float> xs = {-0.5f, -0.1f, 0.2f, 0.7f};
  std::vector<float> ys = {0.1f, -0.3f, 0.4f, -0.8f};
  std::vector<float> ts = {0.0f, 0.0f, 0.0f, 0.0f};
  Tensor x = Tensor::from_data({n, 1}, xs);
  Tensor y = Tensor::from_data({n, 1}, ys);
  Tensor t = Tensor::from_data({n, 1}, ts);
  LayerBatchOut shifted = layer_forward(layer, x, y, t);

  std::vector<float> xs2(xs);
  for (auto& v : xs2) v += d;
  CoordFlowLayer identity_layer = layer;
  identity_layer.flow.mlp.biases.back().mutable_data()[2] = 0.0f;
  LayerBatchOut direct = layer_forward(
      identity_layer, Tensor::from_data({n, 1}, xs2), y, t);
  for (int64_t i = 0; i < n * 3; ++i)
    CHECK(shifted.rgb.data()[i] ==
          doctest::Approx(direct.rgb.data()[i]).epsilon(1e-5));
}

TEST_CASE("flow parameter gradients match finite differences") {
  CoordFlowModel m = make_preset("tiny", 1, 21);
  // move the flow away from the zero-init so its inner layers matter
  Rng kick(14);
  for (auto& w : m.layers[0].flow.mlp.weights.back().mutable_data())
    w = kick.uniform(-0.1f, 0.1f);

  Rng rng(2);
  const int64_t n = 6;
  DModelInputs in;
  in.x = DMat(n, 1);
  in.y = DMat(n, 1);
  in.t = DMat(n, 1);
  in.gt = DMat(n, 3);
  in.w = DMat(n, 1);
  std::vector<float> xs(n), ys(n), ts(n), gts(n * 3), ws(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = rng.uniform(-1.0f, 1.0f);
    ys[i] = rng.uniform(-1.0f, 1.0f);
    ts[i] = rng.uniform(-1.0f, 1.0f);
    ws[i] = 1.0f;
    in.x.v[i] = xs[i];
    in.y.v[i] = ys[i];
    in.t.v[i] = ts[i];
    in.w.v[i] = 1.0;
  }
  for (size_t i = 0; i < gts.size(); ++i) {
    gts[i] = rng.uniform(0.0f, 1.0f);
    in.gt.v[i] = gts[i];
  }

  Tensor x = Tensor::from_data({n, 1}, xs);
  Tensor y = Tensor::from_data({n, 1}, ys);
  Tensor t = Tensor::from_data({n, 1}, ts);
  Tensor gt = Tensor::from_data({n, 3}, gts);
  Tensor w = Tensor::from_data({n, 1}, ws);

  auto params = m.trainable_params();
  for (auto& p : params) p.zero_grad();
  backward(total_loss(composite_forward(m, x, y, t), gt, w).total);

  auto objective = [&](const std::vector<std::vector<double>>& flat) {
    return dmodel_total_loss(m, flat, in);
  };
  // h sits below the top PE band's curvature scale; the double-precision
  // oracle keeps the quotient noise-free at this step size
  auto res = fd_compare(flatten_params(params), objective,
                        collect_grads(params), 1e-6);
  CHECK_MESSAGE(res.max_rel_error < 1e-4, "rel err ", res.max_rel_error);
}

TEST_CASE("loss gradients reach every trainable parameter") {
  // zero-init leaves the early flow layers silent on the very first step,
  // so take two steps and inspect the second backward pass
  CoordFlowModel m = make_preset("tiny", 2, 33);
  Rng rng(6);
  const int64_t n = 64;
  std::vector<float> xs(n), ys(n), ts(n), gts(n * 3), ws(n, 1.0f);
  for (int i = 0; i < n; ++i) {
    xs[i] = rng.uniform(-1.0f, 1.0f);
    ys[i] = rng.uniform(-1.0f, 1.0f);
    ts[i] = rng.uniform(-1.0f, 1.0f);
  }
  for (auto& v : gts) v = rng.uniform(0.0f, 1.0f);
  Tensor x = Tensor::from_data({n, 1}, xs);
  Tensor y = Tensor::from_data({n, 1}, ys);
  Tensor t = Tensor::from_data({n, 1}, ts);
  Tensor gt = Tensor::from_data({n, 3}, gts);
  Tensor w = Tensor::from_data({n, 1}, ws);

  auto params = m.trainable_params();
  for (int step = 0; step < 2; ++step) {
    if (step > 0)
      for (auto& p : params) p.zero_grad();
    backward(total_loss(composite_forward(m, x, y, t), gt, w).total);
    if (step == 0) {
      // crude gradient-descent nudge to break the zero-init symmetry
      for (auto& p : params) {
        auto d = p.mutable_data();
        const auto g = p.grad();
        for (size_t i = 0; i < d.size(); ++i) d[i] -= 0.05f * g[i];
      }
    }
  }
  for (size_t pi = 0; pi < params.size(); ++pi) {
    CAPTURE(pi);
    REQUIRE(params[pi].has_grad());
    bool any = false;
    for (float g : params[pi].grad()) any |= (g != 0.0f);
    CHECK(any);
  }
}

TEST_CASE("composite forward basics") {
  SUBCASE("single layer passes through exactly") {
    CoordFlowModel m = make_preset("tiny", 1, 3);
    Tensor x = Tensor::from_data({2, 1}, {0.1f, -0.4f});
    Tensor y = Tensor::from_data({2, 1}, {0.2f, 0.6f});
    Tensor t = Tensor::from_data({2, 1}, {0.0f, 0.5f});
    CompositeOut out = composite_forward(m, x, y, t);
    for (int i = 0; i < 6; ++i)
      CHECK(out.rgb.data()[i] == out.layer_rgb[0].data()[i]);
    for (int i = 0; i < 2; ++i) CHECK(out.softmax_alpha.data()[i] == 1.0f);
  }

  SUBCASE("equal alpha logits blend to the elementwise mean") {
    CoordFlowModel m = make_preset("tiny", 2, 3);
    // same color nets -> same alphas; softmax gives exactly 0.5/0.5
    m.layers[1] = m.layers[0];
    Tensor x = Tensor::from_data({3, 1}, {0.0f, 0.3f, -0.7f});
    Tensor y = Tensor::from_data({3, 1}, {0.5f, -0.2f, 0.1f});
    Tensor t = Tensor::from_data({3, 1}, {-1.0f, 0.0f, 1.0f});
    CompositeOut out = composite_forward(m, x, y, t);
    for (int i = 0; i < 9; ++i) {
      const float mean_rgb =
          0.5f * (out.layer_rgb[0].data()[i] + out.layer_rgb[1].data()[i]);
      CHECK(out.rgb.data()[i] == doctest::Approx(mean_rgb).epsilon(1e-6));
    }
  }

  SUBCASE("extreme logits collapse onto one layer") {
    CoordFlowModel m = make_preset("tiny", 2, 3);
    // drive layer 0 alpha to +10 and layer 1 to -10 via final biases
    m.layers[0].color.mlp.biases.back().mutable_data()[3] = 10.0f;
    m.layers[1].color.mlp.biases.back().mutable_data()[3] = -10.0f;
    Tensor x = Tensor::from_data({1, 1}, {0.2f});
    Tensor y = Tensor::from_data({1, 1}, {0.1f});
    Tensor t = Tensor::from_data({1, 1}, {0.0f});
    CompositeOut out = composite_forward(m, x, y, t);
    for (int c = 0; c < 3; ++c)
      CHECK(std::fabs(out.rgb.data()[c] - out.layer_rgb[0].data()[c]) < 1e-8);
  }

  SUBCASE("composite stays inside the per-layer envelope") {
    CoordFlowModel m = make_preset("tiny", 3, 31);
    Rng rng(5);
    const int64_t n = 32;
    std::vector<float> xs(n), ys(n), ts(n);
    for (int i = 0; i < n; ++i) {
      xs[i] = rng.uniform(-1.0f, 1.0f);
      ys[i] = rng.uniform(-1.0f, 1.0f);
      ts[i] = rng.uniform(-1.0f, 1.0f);
    }
    CompositeOut out = composite_forward(m, Tensor::from_data({n, 1}, xs),
                                         Tensor::from_data({n, 1}, ys),
                                         Tensor::from_data({n, 1}, ts));
    for (int64_t i = 0; i < n * 3; ++i) {
      float lo = 1.0f, hi = 0.0f;
      for (int li = 0; li < 3; ++li) {
        lo = std::min(lo, out.layer_rgb[li].data()[i]);
        hi = std::max(hi, out.layer_rgb[li].data()[i]);
      }
      CHECK(out.rgb.data()[i] >= lo - 1e-6f);
      CHECK(out.rgb.data()[i] <= hi + 1e-6f);
    }
    // weights sum to one per coordinate
    for (int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int li = 0; li < 3; ++li) s += out.softmax_alpha.data()[i * 3 + li];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("presets hit their parameter budgets") {
  CHECK_THROWS_AS(make_preset("nope", 2), std::invalid_argument);
  CHECK_THROWS_AS(make_preset("tiny", 0), std::invalid_argument);

  CoordFlowModel tiny = make_preset("tiny", 2);
  CHECK(tiny.param_count() < 100000);

  CoordFlowModel s = make_preset("S", 2);
  CHECK(std::fabs(double(s.param_count()) - 3.13e6) / 3.13e6 < 0.05);
  CHECK(double(s.color_param_count()) / double(s.param_count()) >= 0.95);

  CoordFlowModel m = make_preset("M", 2);
  CHECK(std::fabs(double(m.param_count()) - 6.11e6) / 6.11e6 < 0.05);

  CoordFlowModel l = make_preset("L", 2);
  CHECK(std::fabs(double(l.param_count()) - 12.68e6) / 12.68e6 < 0.05);

  // budget-matched single-layer variant for the ablation
  CoordFlowModel ts = make_preset("tiny_single", 1);
  const double full = double(tiny.param_count());
  CHECK(std::fabs(double(ts.param_count()) - full) / full < 0.05);
}

TEST_CASE("fresh presets produce finite composites everywhere") {
  Rng rng(6);
  for (const char* name : {"tiny", "small", "S"}) {
    CoordFlowModel m = make_preset(name, 2, 8);
    const int64_t n = 1000;
    std::vector<float> xs(n), ys(n), ts(n);
    for (int i = 0; i < n; ++i) {
      xs[i] = rng.uniform(-1.0f, 1.0f);
      ys[i] = rng.uniform(-1.0f, 1.0f);
      ts[i] = rng.uniform(-1.0f, 1.0f);
    }
    NoGradScope ng;
    CompositeOut out = composite_forward(m, Tensor::from_data({n, 1}, xs),
                                         Tensor::from_data({n, 1}, ys),
                                         Tensor::from_data({n, 1}, ts));
    for (float v : out.rgb.data()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("model checkpoint round-trips bit for bit") {
  CoordFlowModel m = make_preset("tiny", 2, 42);
  m.width = 32;
  m.height = 24;
  m.frames = 7;
  const std::string path =
      (std::filesystem::temp_directory_path() / "cf_model_test.cfm").string();
  save_model(m, path);
  CoordFlowModel back = load_model(path);

  CHECK(back.preset == "tiny");
  CHECK(back.width == 32);
  CHECK(back.height == 24);
  CHECK(back.frames == 7);
  CHECK(back.n_layers() == 2);
  for (int li = 0; li < 2; ++li) {
    const auto& a = m.layers[li];
    const auto& b = back.layers[li];
    CHECK(a.color.pe_spatial == b.color.pe_spatial);
    CHECK(a.color.pe_temporal == b.color.pe_temporal);
    CHECK(a.flow.pe_t == b.flow.pe_t);
    for (size_t i = 0; i < a.color.mlp.weights.size(); ++i) {
      const auto wa = a.color.mlp.weights[i].data();
      const auto wb = b.color.mlp.weights[i].data();
      REQUIRE(wa.size() == wb.size());
      for (size_t j = 0; j < wa.size(); ++j) CHECK(wa[j] == wb[j]);
    }
  }
  std::filesystem::remove(path);

  // corrupt magic is rejected
  CHECK_THROWS_AS(
      [&] {
        ByteWriter w;
        w.raw("XXXX", 4);
        ByteReader r(w.bytes());
        read_model(r);
      }(),
      std::runtime_error);
}
