#pragma once

// Differentiable building blocks on row-major token matrices (rows = tokens).
// Each op has a forward that fills a small cache and a backward that
// accumulates parameter gradients into the ParamStore and returns the input
// gradient.

#include "manga/tensor.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace manga::nn {

template <class Scalar>
struct Parameter {
    std::string name;
    Mat<Scalar> value;
    Mat<Scalar> grad;
};

template <class Scalar>
class ParamStore {
public:
    int add(std::string name, int rows, int cols) {
        params_.push_back({std::move(name), Mat<Scalar>::Zero(rows, cols), Mat<Scalar>::Zero(rows, cols)});
        return int(params_.size()) - 1;
    }

    Mat<Scalar>& value(int i) { return params_[i].value; }
    const Mat<Scalar>& value(int i) const { return params_[i].value; }
    Mat<Scalar>& grad(int i) { return params_[i].grad; }

    std::vector<Parameter<Scalar>>& all() { return params_; }
    const std::vector<Parameter<Scalar>>& all() const { return params_; }
    std::size_t size() const { return params_.size(); }

    Eigen::Index count() const {
        Eigen::Index n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    int find(const std::string& name) const {
        for (std::size_t i = 0; i < params_.size(); ++i)
            if (params_[i].name == name) return int(i);
        return -1;
    }

    void zero_grad() {
        for (auto& p : params_) p.grad.setZero();
    }

private:
    std::vector<Parameter<Scalar>> params_;
};

/// Truncated normal at +-2 std.
template <class Scalar>
void trunc_normal(Mat<Scalar>& m, double std, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        double v;
        do v = nd(rng);
        while (std::abs(v) > 2.0);
        m.data()[i] = Scalar(v * std);
    }
}

/// y = x W^T + b with W (out x in), b (1 x out).
template <class Scalar>
struct Linear {
    int weight = -1;
    int bias = -1;
    int in = 0;
    int out = 0;

    static Linear make(ParamStore<Scalar>& ps, const std::string& name, int in, int out) {
        return {ps.add(name + ".weight", out, in), ps.add(name + ".bias", 1, out), in, out};
    }

    Mat<Scalar> forward(const ParamStore<Scalar>& ps, const Mat<Scalar>& x) const {
        Mat<Scalar> y = x * ps.value(weight).transpose();
        y.rowwise() += ps.value(bias).row(0);
        return y;
    }

    Mat<Scalar> backward(ParamStore<Scalar>& ps, const Mat<Scalar>& x, const Mat<Scalar>& dy) const {
        ps.grad(weight).noalias() += dy.transpose() * x;
        ps.grad(bias).row(0) += dy.colwise().sum();
        return dy * ps.value(weight);
    }
};

/// Row-wise layer norm without affine parameters.
template <class Scalar>
struct LayerNormCache {
    Mat<Scalar> normalized;
    Vec<Scalar> rstd;
};

template <class Scalar>
Mat<Scalar> layer_norm(const Mat<Scalar>& x, LayerNormCache<Scalar>& cache, Scalar eps = Scalar(1e-6)) {
    const Eigen::Index d = x.cols();
    Vec<Scalar> mean = x.rowwise().sum() / Scalar(d);
    Mat<Scalar> xc = x.colwise() - mean;
    Vec<Scalar> var = xc.array().square().rowwise().sum() / Scalar(d);
    cache.rstd = (var.array() + eps).rsqrt();
    cache.normalized = xc.array().colwise() * cache.rstd.array();
    return cache.normalized;
}

template <class Scalar>
Mat<Scalar> layer_norm_backward(const LayerNormCache<Scalar>& cache, const Mat<Scalar>& dy) {
    const Scalar d = Scalar(dy.cols());
    const auto& xn = cache.normalized;
    Vec<Scalar> mean_dy = dy.rowwise().sum() / d;
    Vec<Scalar> mean_dy_xn = (dy.array() * xn.array()).rowwise().sum() / d;
    Mat<Scalar> dx = dy;
    dx.colwise() -= mean_dy;
    dx.array() -= xn.array().colwise() * mean_dy_xn.array();
    dx.array().colwise() *= cache.rstd.array();
    return dx;
}

template <class Scalar>
Mat<Scalar> silu(const Mat<Scalar>& x) {
    return x.array() / (Scalar(1) + (-x.array()).exp());
}

template <class Scalar>
Mat<Scalar> silu_backward(const Mat<Scalar>& x, const Mat<Scalar>& dy) {
    auto s = Scalar(1) / (Scalar(1) + (-x.array()).exp());
    return dy.array() * s * (Scalar(1) + x.array() * (Scalar(1) - s));
}

/// tanh approximation of GELU.
template <class Scalar>
Mat<Scalar> gelu(const Mat<Scalar>& x) {
    const Scalar c = Scalar(0.7978845608028654);
    auto u = c * (x.array() + Scalar(0.044715) * x.array().cube());
    return Scalar(0.5) * x.array() * (Scalar(1) + u.tanh());
}

template <class Scalar>
Mat<Scalar> gelu_backward(const Mat<Scalar>& x, const Mat<Scalar>& dy) {
    const Scalar c = Scalar(0.7978845608028654);
    auto xa = x.array();
    auto th = (c * (xa + Scalar(0.044715) * xa.cube())).tanh();
    auto dudx = c * (Scalar(1) + Scalar(3 * 0.044715) * xa.square());
    return dy.array() * (Scalar(0.5) * (Scalar(1) + th) + Scalar(0.5) * xa * (Scalar(1) - th.square()) * dudx);
}

/// Multi-head scaled dot-product attention restricted to `keys` (row
/// indices into k/v). Every query attends to at least one key.
template <class Scalar>
struct AttentionCache {
    std::vector<int> keys;
    std::vector<Mat<Scalar>> probs;  ///< per head: queries x |keys|
};

template <class Scalar>
Mat<Scalar> gather_rows(const Mat<Scalar>& m, const std::vector<int>& rows) {
    Mat<Scalar> out(Eigen::Index(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(Eigen::Index(i)) = m.row(rows[i]);
    return out;
}

template <class Scalar>
Mat<Scalar> attention_forward(const Mat<Scalar>& q, const Mat<Scalar>& k, const Mat<Scalar>& v,
                              const std::vector<int>& keys, int heads, AttentionCache<Scalar>& cache) {
    const Eigen::Index d = q.cols();
    const Eigen::Index dh = d / heads;
    const Scalar scale = Scalar(1) / std::sqrt(Scalar(dh));
    const bool all = Eigen::Index(keys.size()) == k.rows();
    const Mat<Scalar> kk = all ? k : gather_rows(k, keys);
    const Mat<Scalar> vv = all ? v : gather_rows(v, keys);
    cache.keys = keys;
    cache.probs.resize(std::size_t(heads));
    Mat<Scalar> out(q.rows(), d);
    for (int h = 0; h < heads; ++h) {
        Mat<Scalar> s = (q.middleCols(h * dh, dh) * kk.middleCols(h * dh, dh).transpose()) * scale;
        Vec<Scalar> mx = s.rowwise().maxCoeff();
        s = (s.colwise() - mx).array().exp();
        Vec<Scalar> z = s.rowwise().sum();
        s.array().colwise() /= z.array();
        out.middleCols(h * dh, dh).noalias() = s * vv.middleCols(h * dh, dh);
        cache.probs[std::size_t(h)] = std::move(s);
    }
    return out;
}

/// Accumulates into dq (queries x d) and dk, dv (all key rows x d).
template <class Scalar>
void attention_backward(const Mat<Scalar>& q, const Mat<Scalar>& k, const Mat<Scalar>& v,
                        const AttentionCache<Scalar>& cache, int heads, const Mat<Scalar>& dout, Mat<Scalar>& dq,
                        Mat<Scalar>& dk, Mat<Scalar>& dv) {
    const Eigen::Index d = q.cols();
    const Eigen::Index dh = d / heads;
    const Scalar scale = Scalar(1) / std::sqrt(Scalar(dh));
    const auto& keys = cache.keys;
    const Mat<Scalar> kk = gather_rows(k, keys);
    const Mat<Scalar> vv = gather_rows(v, keys);
    Mat<Scalar> dkk = Mat<Scalar>::Zero(kk.rows(), d);
    Mat<Scalar> dvv = Mat<Scalar>::Zero(vv.rows(), d);
    for (int h = 0; h < heads; ++h) {
        const Mat<Scalar>& p = cache.probs[std::size_t(h)];
        const auto doh = dout.middleCols(h * dh, dh);
        dvv.middleCols(h * dh, dh).noalias() += p.transpose() * doh;
        Mat<Scalar> dp = doh * vv.middleCols(h * dh, dh).transpose();
        Vec<Scalar> rowdot = (dp.array() * p.array()).rowwise().sum();
        Mat<Scalar> ds = (p.array() * (dp.colwise() - rowdot).array()) * scale;
        dq.middleCols(h * dh, dh).noalias() += ds * kk.middleCols(h * dh, dh);
        dkk.middleCols(h * dh, dh).noalias() += ds.transpose() * q.middleCols(h * dh, dh);
    }
    for (std::size_t i = 0; i < keys.size(); ++i) {
        dk.row(keys[i]) += dkk.row(Eigen::Index(i));
        dv.row(keys[i]) += dvv.row(Eigen::Index(i));
    }
}

/// Sinusoidal features of a scalar, cos half then sin half.
template <class Scalar>
RowVec<Scalar> timestep_features(double t, int dim, double max_period = 10000.0) {
    RowVec<Scalar> out(dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double f = std::exp(-std::log(max_period) * double(i) / double(half));
        out[i] = Scalar(std::cos(t * f));
        out[half + i] = Scalar(std::sin(t * f));
    }
    if (dim % 2) out[dim - 1] = Scalar(0);
    return out;
}

/// Fixed 2D sin-cos embedding for a gh x gw grid; rows in raster order.
/// First half of the channels encodes the row, second half the column.
template <class Scalar>
Mat<Scalar> sincos_2d(int gh, int gw, int dim) {
    Mat<Scalar> out(Eigen::Index(gh) * gw, dim);
    const int half = dim / 2;
    const int quarter = half / 2;
    auto fill = [&](Eigen::Index row, int offset, double pos) {
        for (int i = 0; i < quarter; ++i) {
            const double omega = 1.0 / std::pow(10000.0, double(i) / double(quarter));
            out(row, offset + i) = Scalar(std::sin(pos * omega));
            out(row, offset + quarter + i) = Scalar(std::cos(pos * omega));
        }
    };
    for (int y = 0; y < gh; ++y)
        for (int x = 0; x < gw; ++x) {
            const Eigen::Index r = Eigen::Index(y) * gw + x;
            fill(r, 0, y);
            fill(r, half, x);
        }
    return out;
}

}  // namespace manga::nn
