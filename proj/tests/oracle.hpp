#pragma once

// Double-precision transcription of the forward math, independent of the
// tensor engine, plus a central finite-difference driver. The engine's
// analytic gradients are checked against derivatives of THIS code, so the
// oracle never touches the tape.

#include <cmath>
#include <functional>
#include <vector>

#include "coordflow/model.hpp"

namespace coordflow::testing {

struct DMat {
  int64_t rows = 0, cols = 0;
  std::vector<double> v;

  DMat() = default;
  DMat(int64_t r, int64_t c) : rows(r), cols(c), v(size_t(r * c), 0.0) {}
  double& at(int64_t i, int64_t j) { return v[size_t(i * cols + j)]; }
  double at(int64_t i, int64_t j) const { return v[size_t(i * cols + j)]; }
};

inline DMat dmat_from(const std::vector<double>& vals, int64_t r, int64_t c) {
  DMat m(r, c);
  m.v = vals;
  return m;
}

inline DMat dmatmul(const DMat& a, const DMat& b) {
  DMat c(a.rows, b.cols);
  for (int64_t i = 0; i < a.rows; ++i)
    for (int64_t k = 0; k < a.cols; ++k) {
      const double av = a.at(i, k);
      for (int64_t j = 0; j < b.cols; ++j) c.at(i, j) += av * b.at(k, j);
    }
  return c;
}

enum class DBin { kAdd, kSub, kMul };

inline DMat dbinary(DBin op, const DMat& a, const DMat& b) {
  const int64_t m = std::max(a.rows, b.rows), n = std::max(a.cols, b.cols);
  DMat out(m, n);
  auto pick = [m, n](const DMat& t, int64_t i, int64_t j) {
    const int64_t ii = t.rows == m ? i : 0;
    const int64_t jj = t.cols == n ? j : 0;
    return t.at(ii, jj);
  };
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      const double x = pick(a, i, j), y = pick(b, i, j);
      out.at(i, j) = op == DBin::kAdd ? x + y : (op == DBin::kSub ? x - y : x * y);
    }
  return out;
}

inline DMat dadd(const DMat& a, const DMat& b) { return dbinary(DBin::kAdd, a, b); }
inline DMat dsub(const DMat& a, const DMat& b) { return dbinary(DBin::kSub, a, b); }
inline DMat dmul(const DMat& a, const DMat& b) { return dbinary(DBin::kMul, a, b); }

inline DMat dmap(const DMat& a, double (*fn)(double)) {
  DMat out = a;
  for (double& x : out.v) x = fn(x);
  return out;
}

inline DMat dscale(const DMat& a, double c) {
  DMat out = a;
  for (double& x : out.v) x *= c;
  return out;
}

inline DMat drelu(const DMat& a) {
  return dmap(a, [](double x) { return x > 0.0 ? x : 0.0; });
}
inline DMat dsigmoid(const DMat& a) {
  return dmap(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}
inline DMat dsquare(const DMat& a) {
  return dmap(a, [](double x) { return x * x; });
}
inline DMat dabs(const DMat& a) {
  return dmap(a, [](double x) { return std::fabs(x); });
}

inline DMat dsoftmax(const DMat& a) {
  DMat out(a.rows, a.cols);
  for (int64_t i = 0; i < a.rows; ++i) {
    double mx = a.at(i, 0);
    for (int64_t j = 1; j < a.cols; ++j) mx = std::max(mx, a.at(i, j));
    double total = 0.0;
    for (int64_t j = 0; j < a.cols; ++j) {
      out.at(i, j) = std::exp(a.at(i, j) - mx);
      total += out.at(i, j);
    }
    for (int64_t j = 0; j < a.cols; ++j) out.at(i, j) /= total;
  }
  return out;
}

inline double dsum(const DMat& a) {
  double s = 0.0;
  for (double x : a.v) s += x;
  return s;
}
inline double dmean(const DMat& a) { return dsum(a) / double(a.v.size()); }

inline DMat dconcat(const std::vector<DMat>& parts) {
  int64_t n = 0;
  for (const auto& p : parts) n += p.cols;
  DMat out(parts[0].rows, n);
  int64_t c0 = 0;
  for (const auto& p : parts) {
    for (int64_t i = 0; i < p.rows; ++i)
      for (int64_t j = 0; j < p.cols; ++j) out.at(i, c0 + j) = p.at(i, j);
    c0 += p.cols;
  }
  return out;
}

inline DMat dslice(const DMat& a, int64_t first, int64_t count) {
  DMat out(a.rows, count);
  for (int64_t i = 0; i < a.rows; ++i)
    for (int64_t j = 0; j < count; ++j) out.at(i, j) = a.at(i, first + j);
  return out;
}

// Matches the engine's single-precision frequency constants but keeps the
// phase itself in double so the objective stays smooth under perturbation.
inline DMat dfourier(const DMat& a, const PeConfig& cfg) {
  const int64_t inc = cfg.include_input ? 1 : 0;
  DMat out(a.rows, 2 * cfg.num_bands + inc);
  const float pi = 3.14159265358979323846f;
  for (int64_t i = 0; i < a.rows; ++i) {
    const double v = a.at(i, 0);
    if (inc) out.at(i, 0) = v;
    float f = cfg.base_frequency;
    for (int k = 0; k < cfg.num_bands; ++k, f *= 2.0f) {
      const double phase = double(float(f * pi)) * v;
      out.at(i, inc + 2 * k) = std::sin(phase);
      out.at(i, inc + 2 * k + 1) = std::cos(phase);
    }
  }
  return out;
}

// MLP with ReLU hidden layers; params alternate w0,b0,w1,b1,...
inline DMat dmlp_forward(const std::vector<DMat>& params, const DMat& x) {
  DMat h = x;
  const size_t n_linears = params.size() / 2;
  for (size_t li = 0; li < n_linears; ++li) {
    h = dadd(dmatmul(h, params[2 * li]), params[2 * li + 1]);
    if (li + 1 < n_linears) h = drelu(h);
  }
  return h;
}

// Full CoordFlow forward + three-part objective in double precision, from a
// flat parameter list in the model's trainable order. Coordinates and
// targets come in as columns.
struct DModelInputs {
  DMat x, y, t;  // [N,1]
  DMat gt;       // [N,3]
  DMat w;        // [N,1]
  double lambda = 0.25, gamma = 0.1;
};

inline double dmodel_total_loss(const CoordFlowModel& structure,
                                const std::vector<std::vector<double>>& flat,
                                const DModelInputs& in) {
  const int64_t n = in.x.rows;
  size_t pi = 0;
  auto next_mat = [&](const Tensor& like) {
    DMat m(like.shape()[0], like.shape().size() > 1 ? like.shape()[1] : 1);
    m.v = flat[pi++];
    return m;
  };

  std::vector<DMat> layer_rgb;
  DMat alpha(n, structure.n_layers());
  for (int li = 0; li < structure.n_layers(); ++li) {
    const auto& layer = structure.layers[li];
    std::vector<DMat> flow_params, color_params;
    if (!layer.flow.frozen_identity)
      for (size_t i = 0; i < layer.flow.mlp.weights.size(); ++i) {
        flow_params.push_back(next_mat(layer.flow.mlp.weights[i]));
        flow_params.push_back(next_mat(layer.flow.mlp.biases[i]));
      }
    for (size_t i = 0; i < layer.color.mlp.weights.size(); ++i) {
      color_params.push_back(next_mat(layer.color.mlp.weights[i]));
      color_params.push_back(next_mat(layer.color.mlp.biases[i]));
    }

    DMat xp = in.x, yp = in.y;
    if (!layer.flow.frozen_identity) {
      DMat fout = dmlp_forward(flow_params, dfourier(in.t, layer.flow.pe_t));
      DMat s = dmap(dslice(fout, 0, 1), [](double v) { return std::exp(v); });
      DMat th = dslice(fout, 1, 1);
      DMat dx = dslice(fout, 2, 1);
      DMat dy = dslice(fout, 3, 1);
      DMat sct = dmul(s, dmap(th, [](double v) { return std::cos(v); }));
      DMat sst = dmul(s, dmap(th, [](double v) { return std::sin(v); }));
      xp = dadd(dsub(dmul(sct, in.x), dmul(sst, in.y)), dx);
      yp = dadd(dadd(dmul(sst, in.x), dmul(sct, in.y)), dy);
    }
    DMat feats = dconcat({dfourier(xp, layer.color.pe_spatial),
                          dfourier(yp, layer.color.pe_spatial),
                          dfourier(in.t, layer.color.pe_temporal)});
    DMat out = dmlp_forward(color_params, feats);
    layer_rgb.push_back(dsigmoid(dslice(out, 0, 3)));
    for (int64_t i = 0; i < n; ++i) alpha.at(i, li) = out.at(i, 3);
  }

  DMat sm = dsoftmax(alpha);
  DMat composite(n, 3);
  for (int li = 0; li < structure.n_layers(); ++li)
    composite = dadd(composite, dmul(dslice(sm, li, 1), layer_rgb[li]));

  auto weighted = [&](const DMat& pred, const DMat& scale_col) {
    DMat delta = dsub(pred, in.gt);
    DMat per = dadd(dabs(delta), dscale(dsquare(delta), in.lambda));
    return dmean(dmul(scale_col, dmul(in.w, per)));
  };
  DMat ones(n, 1);
  for (double& v : ones.v) v = 1.0;
  double total = weighted(composite, ones);
  for (int li = 0; li < structure.n_layers(); ++li)
    total += in.gamma * weighted(layer_rgb[li], dslice(sm, li, 1));
  return total;
}

// ---- finite-difference driver -------------------------------------------

struct OracleCheck {
  double max_rel_error = 0.0;
  int64_t checked = 0;
};

// fn maps flat double params to a scalar; analytic comes from the engine.
// The relative error of each entry is measured against its own tensor's
// gradient scale: the engine is single precision, so near-cancelled entries
// carry a few ulps of accumulation noise that a per-entry quotient would
// amplify into meaningless ratios.
inline OracleCheck fd_compare(
    std::vector<std::vector<double>> flat,
    const std::function<double(const std::vector<std::vector<double>>&)>& fn,
    const std::vector<std::vector<float>>& analytic, double h = 1e-3) {
  OracleCheck res;
  for (size_t pi = 0; pi < flat.size(); ++pi) {
    double err_max = 0.0, scale = 1e-6;
    for (size_t i = 0; i < flat[pi].size(); ++i) {
      const double orig = flat[pi][i];
      flat[pi][i] = orig + h;
      const double lp = fn(flat);
      flat[pi][i] = orig - h;
      const double lm = fn(flat);
      flat[pi][i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = double(analytic[pi][i]);
      err_max = std::max(err_max, std::fabs(fd - an));
      scale = std::max({scale, std::fabs(fd), std::fabs(an)});
      ++res.checked;
    }
    res.max_rel_error = std::max(res.max_rel_error, err_max / scale);
  }
  return res;
}

inline std::vector<std::vector<double>> flatten_params(
    const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> flat;
  flat.reserve(params.size());
  for (const auto& p : params)
    flat.emplace_back(p.data().begin(), p.data().end());
  return flat;
}

inline std::vector<std::vector<float>> collect_grads(
    const std::vector<Tensor>& params) {
  std::vector<std::vector<float>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    std::vector<float> g(static_cast<size_t>(p.numel()), 0.0f);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), g.begin());
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace coordflow::testing
