#include "hmvgg/nnops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hmvgg {

namespace {

std::int64_t div_floor(std::int64_t a, std::int64_t b) {
    // b > 0
    return a >= 0 ? a / b : -((-a + b - 1) / b);
}

std::int64_t div_ceil(std::int64_t a, std::int64_t b) {
    // b > 0
    return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

void check_rank4(const Tensor& x, const char* who) {
    if (x.rank() != 4) {
        throw ShapeError(std::string(who) + " expects an N x C x H x W tensor, got " +
                         x.shape().to_string());
    }
}

}  // namespace

ConvParams ConvParams::make(int out_channels, int in_channels, int kernel_size, int stride,
                            int padding, int dilation) {
    if (out_channels < 1 || in_channels < 1 || kernel_size < 1 || stride < 1 || padding < 0 ||
        dilation < 1) {
        throw ShapeError("invalid convolution hyperparameters");
    }
    ConvParams p;
    p.kernel = Tensor(Shape{out_channels, in_channels, kernel_size, kernel_size});
    p.bias = Tensor(Shape{out_channels});
    p.stride = stride;
    p.padding = padding;
    p.dilation = dilation;
    return p;
}

std::int64_t conv_out_extent(std::int64_t in, int kernel, int stride, int padding, int dilation) {
    const std::int64_t out =
        (in + 2 * static_cast<std::int64_t>(padding) -
         static_cast<std::int64_t>(dilation) * (kernel - 1) - 1) /
            stride +
        1;
    if (out < 1) {
        throw ShapeError("convolution output extent " + std::to_string(out) +
                         " degenerate for input " + std::to_string(in));
    }
    return out;
}

BatchNormState BatchNormState::make(int channels) {
    if (channels < 1) throw ShapeError("batchnorm channels must be positive");
    BatchNormState s;
    s.gamma = Tensor(Shape{channels}, 1.0);
    s.beta = Tensor(Shape{channels}, 0.0);
    s.running_mean = Tensor(Shape{channels}, 0.0);
    s.running_var = Tensor(Shape{channels}, 1.0);
    return s;
}

// ---- conv2d ----

namespace {

struct ConvGeom {
    std::int64_t n, ci, co, h, w, k, oh, ow;
    std::int64_t stride, padding, dilation;
};

ConvGeom conv_geom(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride,
                   int padding, int dilation) {
    check_rank4(x, "conv2d");
    if (kernel.rank() != 4 || kernel.extent(2) != kernel.extent(3)) {
        throw ShapeError("conv2d kernel must be C_out x C_in x k x k, got " +
                         kernel.shape().to_string());
    }
    if (x.extent(1) != kernel.extent(1)) {
        throw ShapeError("conv2d channel mismatch: input " + x.shape().to_string() +
                         " vs kernel " + kernel.shape().to_string());
    }
    if (bias.rank() != 1 || bias.extent(0) != kernel.extent(0)) {
        throw ShapeError("conv2d bias must have one value per output channel");
    }
    ConvGeom g;
    g.n = x.extent(0);
    g.ci = x.extent(1);
    g.h = x.extent(2);
    g.w = x.extent(3);
    g.co = kernel.extent(0);
    g.k = kernel.extent(2);
    g.stride = stride;
    g.padding = padding;
    g.dilation = dilation;
    g.oh = conv_out_extent(g.h, static_cast<int>(g.k), stride, padding, dilation);
    g.ow = conv_out_extent(g.w, static_cast<int>(g.k), stride, padding, dilation);
    return g;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                      const ConvGeom& g) {
    Tensor out(Shape{g.n, g.co, g.oh, g.ow});
    const double* px = x.data();
    const double* pk = kernel.data();
    const double* pb = bias.data();
    double* po = out.data();
    for (std::int64_t n = 0; n < g.n; ++n) {
        for (std::int64_t co = 0; co < g.co; ++co) {
            double* out_map = po + (n * g.co + co) * g.oh * g.ow;
            const double bv = pb[co];
            for (std::int64_t i = 0; i < g.oh * g.ow; ++i) out_map[i] = bv;
            for (std::int64_t ci = 0; ci < g.ci; ++ci) {
                const double* in_map = px + (n * g.ci + ci) * g.h * g.w;
                const double* kmap = pk + (co * g.ci + ci) * g.k * g.k;
                for (std::int64_t kh = 0; kh < g.k; ++kh) {
                    const std::int64_t dh = kh * g.dilation - g.padding;
                    const std::int64_t oh_lo = std::max<std::int64_t>(0, div_ceil(-dh, g.stride));
                    const std::int64_t oh_hi =
                        std::min(g.oh - 1, div_floor(g.h - 1 - dh, g.stride));
                    for (std::int64_t kw = 0; kw < g.k; ++kw) {
                        const double wv = kmap[kh * g.k + kw];
                        if (wv == 0.0) continue;
                        const std::int64_t dw = kw * g.dilation - g.padding;
                        const std::int64_t ow_lo =
                            std::max<std::int64_t>(0, div_ceil(-dw, g.stride));
                        const std::int64_t ow_hi =
                            std::min(g.ow - 1, div_floor(g.w - 1 - dw, g.stride));
                        for (std::int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
                            const double* in_row = in_map + (oh * g.stride + dh) * g.w + dw;
                            double* out_row = out_map + oh * g.ow;
                            if (g.stride == 1) {
                                for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow) {
                                    out_row[ow] += wv * in_row[ow];
                                }
                            } else {
                                for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow) {
                                    out_row[ow] += wv * in_row[ow * g.stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

void conv2d_backward(const Tensor& grad_out, const Tensor& x, const Tensor& kernel,
                     const ConvGeom& g, Tensor& dx, Tensor& dkernel, Tensor& dbias) {
    const double* pg = grad_out.data();
    const double* px = x.data();
    const double* pk = kernel.data();
    double* pdx = dx.data();
    double* pdk = dkernel.data();
    double* pdb = dbias.data();
    for (std::int64_t n = 0; n < g.n; ++n) {
        for (std::int64_t co = 0; co < g.co; ++co) {
            const double* gmap = pg + (n * g.co + co) * g.oh * g.ow;
            double acc = 0.0;
            for (std::int64_t i = 0; i < g.oh * g.ow; ++i) acc += gmap[i];
            pdb[co] += acc;
            for (std::int64_t ci = 0; ci < g.ci; ++ci) {
                const double* in_map = px + (n * g.ci + ci) * g.h * g.w;
                double* dx_map = pdx + (n * g.ci + ci) * g.h * g.w;
                const double* kmap = pk + (co * g.ci + ci) * g.k * g.k;
                double* dkmap = pdk + (co * g.ci + ci) * g.k * g.k;
                for (std::int64_t kh = 0; kh < g.k; ++kh) {
                    const std::int64_t dh = kh * g.dilation - g.padding;
                    const std::int64_t oh_lo = std::max<std::int64_t>(0, div_ceil(-dh, g.stride));
                    const std::int64_t oh_hi =
                        std::min(g.oh - 1, div_floor(g.h - 1 - dh, g.stride));
                    for (std::int64_t kw = 0; kw < g.k; ++kw) {
                        const double wv = kmap[kh * g.k + kw];
                        double wacc = 0.0;
                        const std::int64_t dw = kw * g.dilation - g.padding;
                        const std::int64_t ow_lo =
                            std::max<std::int64_t>(0, div_ceil(-dw, g.stride));
                        const std::int64_t ow_hi =
                            std::min(g.ow - 1, div_floor(g.w - 1 - dw, g.stride));
                        for (std::int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
                            const std::int64_t ih = oh * g.stride + dh;
                            const double* in_row = in_map + ih * g.w + dw;
                            double* dx_row = dx_map + ih * g.w + dw;
                            const double* g_row = gmap + oh * g.ow;
                            for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow) {
                                const double gv = g_row[ow];
                                wacc += gv * in_row[ow * g.stride];
                                dx_row[ow * g.stride] += gv * wv;
                            }
                        }
                        dkmap[kh * g.k + kw] += wacc;
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const ConvParams& p) {
    const ConvGeom g = conv_geom(x, p.kernel, p.bias, p.stride, p.padding, p.dilation);
    return conv2d_forward(x, p.kernel, p.bias, g);
}

Variable conv2d(const Variable& x, const Variable& kernel, const Variable& bias, int stride,
                int padding, int dilation) {
    Tape& tape = *x.tape();
    const ConvGeom g =
        conv_geom(x.value(), kernel.value(), bias.value(), stride, padding, dilation);
    Tensor out = conv2d_forward(x.value(), kernel.value(), bias.value(), g);
    Tensor xv = x.value();
    Tensor kv = kernel.value();
    return tape.record(std::move(out), {x, kernel, bias}, [xv, kv, g](const Tensor& grad) {
        Tensor dx(xv.shape(), 0.0);
        Tensor dk(kv.shape(), 0.0);
        Tensor db(Shape{g.co}, 0.0);
        conv2d_backward(grad, xv, kv, g, dx, dk, db);
        return std::vector<Tensor>{std::move(dx), std::move(dk), std::move(db)};
    });
}

Variable conv2d(const Variable& x, const ConvVars& p) {
    return conv2d(x, p.kernel, p.bias, p.stride, p.padding, p.dilation);
}

// ---- maxpool2d ----

namespace {

Tensor maxpool_forward(const Tensor& x, std::vector<std::int64_t>* argmax) {
    check_rank4(x, "maxpool2d");
    const std::int64_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("maxpool2d requires even spatial extents, got " +
                         x.shape().to_string());
    }
    const std::int64_t oh = h / 2, ow = w / 2;
    Tensor out(Shape{n, c, oh, ow});
    if (argmax) argmax->resize(static_cast<std::size_t>(out.numel()));
    const double* px = x.data();
    double* po = out.data();
    std::int64_t oflat = 0;
    for (std::int64_t img = 0; img < n * c; ++img) {
        const double* map = px + img * h * w;
        for (std::int64_t i = 0; i < oh; ++i) {
            for (std::int64_t j = 0; j < ow; ++j, ++oflat) {
                // first maximal element wins under row-major window scan
                std::int64_t best = (2 * i) * w + 2 * j;
                double bv = map[best];
                const std::int64_t cand[3] = {(2 * i) * w + 2 * j + 1, (2 * i + 1) * w + 2 * j,
                                              (2 * i + 1) * w + 2 * j + 1};
                for (auto idx : cand) {
                    if (map[idx] > bv) {
                        bv = map[idx];
                        best = idx;
                    }
                }
                po[oflat] = bv;
                if (argmax) (*argmax)[static_cast<std::size_t>(oflat)] = img * h * w + best;
            }
        }
    }
    return out;
}

}  // namespace

Tensor maxpool2d(const Tensor& x) { return maxpool_forward(x, nullptr); }

Variable maxpool2d(const Variable& x) {
    Tape& tape = *x.tape();
    std::vector<std::int64_t> argmax;
    Tensor out = maxpool_forward(x.value(), &argmax);
    const Shape in_shape = x.shape();
    return tape.record(std::move(out), {x}, [in_shape, argmax](const Tensor& g) {
        Tensor dx(in_shape, 0.0);
        const double* pg = g.data();
        double* pd = dx.data();
        const std::int64_t n = g.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            pd[argmax[static_cast<std::size_t>(i)]] += pg[i];
        }
        return std::vector<Tensor>{std::move(dx)};
    });
}

// ---- gap ----

Tensor gap(const Tensor& x) {
    check_rank4(x, "gap");
    return reduce_mean(x, {2, 3}, true);
}

Variable gap(const Variable& x) {
    check_rank4(x.value(), "gap");
    return reduce_mean(x, {2, 3}, true);
}

// ---- batchnorm ----

namespace {

struct BnBatchStats {
    std::vector<double> mean, var, inv_std;
};

void check_bn(const Tensor& x, const Tensor& gamma, const Tensor& beta,
              const BatchNormState& state) {
    check_rank4(x, "batchnorm");
    const std::int64_t c = x.extent(1);
    if (gamma.numel() != c || beta.numel() != c || state.running_mean.numel() != c ||
        state.running_var.numel() != c) {
        throw ShapeError("batchnorm channel mismatch for input " + x.shape().to_string());
    }
}

BnBatchStats bn_batch_stats(const Tensor& x, double epsilon) {
    const std::int64_t n = x.extent(0), c = x.extent(1), hw = x.extent(2) * x.extent(3);
    const std::int64_t m = n * hw;
    BnBatchStats s;
    s.mean.assign(static_cast<std::size_t>(c), 0.0);
    s.var.assign(static_cast<std::size_t>(c), 0.0);
    s.inv_std.assign(static_cast<std::size_t>(c), 0.0);
    const double* px = x.data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::int64_t img = 0; img < n; ++img) {
            const double* p = px + (img * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i) acc += p[i];
        }
        const double mu = acc / static_cast<double>(m);
        double vacc = 0.0;
        for (std::int64_t img = 0; img < n; ++img) {
            const double* p = px + (img * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
                const double d = p[i] - mu;
                vacc += d * d;
            }
        }
        const double var = vacc / static_cast<double>(m);  // biased in-batch
        s.mean[static_cast<std::size_t>(ch)] = mu;
        s.var[static_cast<std::size_t>(ch)] = var;
        s.inv_std[static_cast<std::size_t>(ch)] = 1.0 / std::sqrt(var + epsilon);
    }
    return s;
}

Tensor bn_normalize(const Tensor& x, const std::vector<double>& mean,
                    const std::vector<double>& inv_std, const Tensor& gamma, const Tensor& beta,
                    Tensor* xhat_out) {
    const std::int64_t n = x.extent(0), c = x.extent(1), hw = x.extent(2) * x.extent(3);
    Tensor out(x.shape());
    if (xhat_out) *xhat_out = Tensor(x.shape());
    const double* px = x.data();
    double* po = out.data();
    for (std::int64_t img = 0; img < n; ++img) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const double mu = mean[static_cast<std::size_t>(ch)];
            const double is = inv_std[static_cast<std::size_t>(ch)];
            const double gv = gamma[ch];
            const double bv = beta[ch];
            const std::int64_t base = (img * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
                const double xh = (px[base + i] - mu) * is;
                if (xhat_out) (*xhat_out)[base + i] = xh;
                po[base + i] = gv * xh + bv;
            }
        }
    }
    return out;
}

void bn_update_running(BatchNormState& state, const BnBatchStats& s, std::int64_t m) {
    const double mom = state.momentum;
    const std::int64_t c = state.running_mean.numel();
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const double mu = s.mean[static_cast<std::size_t>(ch)];
        // unbiased variance feeds the running estimate
        double var = s.var[static_cast<std::size_t>(ch)];
        if (m > 1) var *= static_cast<double>(m) / static_cast<double>(m - 1);
        state.running_mean[ch] = (1.0 - mom) * state.running_mean[ch] + mom * mu;
        state.running_var[ch] = (1.0 - mom) * state.running_var[ch] + mom * var;
    }
}

}  // namespace

Tensor batchnorm(const Tensor& x, BatchNormState& state, Mode mode) {
    check_bn(x, state.gamma, state.beta, state);
    const std::int64_t n = x.extent(0), hw = x.extent(2) * x.extent(3);
    if (mode == Mode::Train) {
        const BnBatchStats s = bn_batch_stats(x, state.epsilon);
        Tensor out = bn_normalize(x, s.mean, s.inv_std, state.gamma, state.beta, nullptr);
        bn_update_running(state, s, n * hw);
        return out;
    }
    const std::int64_t c = x.extent(1);
    std::vector<double> mean(static_cast<std::size_t>(c)), inv_std(static_cast<std::size_t>(c));
    for (std::int64_t ch = 0; ch < c; ++ch) {
        mean[static_cast<std::size_t>(ch)] = state.running_mean[ch];
        inv_std[static_cast<std::size_t>(ch)] =
            1.0 / std::sqrt(state.running_var[ch] + state.epsilon);
    }
    return bn_normalize(x, mean, inv_std, state.gamma, state.beta, nullptr);
}

Variable batchnorm(const Variable& x, const Variable& gamma, const Variable& beta,
                   BatchNormState& state, Mode mode) {
    Tape& tape = *x.tape();
    check_bn(x.value(), gamma.value(), beta.value(), state);
    const Tensor& xv = x.value();
    const std::int64_t n = xv.extent(0), c = xv.extent(1), hw = xv.extent(2) * xv.extent(3);
    const std::int64_t m = n * hw;

    std::vector<double> mean, inv_std;
    bool train_stats = mode == Mode::Train;
    if (train_stats) {
        BnBatchStats s = bn_batch_stats(xv, state.epsilon);
        mean = std::move(s.mean);
        inv_std = std::move(s.inv_std);
        bn_update_running(state, BnBatchStats{mean, s.var, inv_std}, m);
    } else {
        mean.resize(static_cast<std::size_t>(c));
        inv_std.resize(static_cast<std::size_t>(c));
        for (std::int64_t ch = 0; ch < c; ++ch) {
            mean[static_cast<std::size_t>(ch)] = state.running_mean[ch];
            inv_std[static_cast<std::size_t>(ch)] =
                1.0 / std::sqrt(state.running_var[ch] + state.epsilon);
        }
    }

    Tensor xhat;
    Tensor out = bn_normalize(xv, mean, inv_std, gamma.value(), beta.value(), &xhat);
    Tensor gamma_v = gamma.value();

    return tape.record(
        std::move(out), {x, gamma, beta},
        [xhat, gamma_v, inv_std, n, c, hw, m, train_stats](const Tensor& g) {
            Tensor dx(xhat.shape(), 0.0);
            Tensor dgamma(Shape{c}, 0.0);
            Tensor dbeta(Shape{c}, 0.0);
            const double* pg = g.data();
            const double* ph = xhat.data();
            double* pdx = dx.data();
            for (std::int64_t ch = 0; ch < c; ++ch) {
                double sum_g = 0.0, sum_gh = 0.0;
                for (std::int64_t img = 0; img < n; ++img) {
                    const std::int64_t base = (img * c + ch) * hw;
                    for (std::int64_t i = 0; i < hw; ++i) {
                        sum_g += pg[base + i];
                        sum_gh += pg[base + i] * ph[base + i];
                    }
                }
                dgamma[ch] = sum_gh;
                dbeta[ch] = sum_g;
                const double gv = gamma_v[ch];
                const double is = inv_std[static_cast<std::size_t>(ch)];
                if (train_stats) {
                    const double mean_g = sum_g / static_cast<double>(m);
                    const double mean_gh = sum_gh / static_cast<double>(m);
                    for (std::int64_t img = 0; img < n; ++img) {
                        const std::int64_t base = (img * c + ch) * hw;
                        for (std::int64_t i = 0; i < hw; ++i) {
                            pdx[base + i] = gv * is *
                                            (pg[base + i] - mean_g - ph[base + i] * mean_gh);
                        }
                    }
                } else {
                    for (std::int64_t img = 0; img < n; ++img) {
                        const std::int64_t base = (img * c + ch) * hw;
                        for (std::int64_t i = 0; i < hw; ++i) {
                            pdx[base + i] = pg[base + i] * gv * is;
                        }
                    }
                }
            }
            return std::vector<Tensor>{std::move(dx), std::move(dgamma), std::move(dbeta)};
        });
}

Variable batchnorm(const Variable& x, const BatchNormVars& bn, Mode mode) {
    return batchnorm(x, bn.gamma, bn.beta, *bn.state, mode);
}

// ---- fc ----

namespace {

void check_fc(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (x.rank() != 2 || weight.rank() != 2 || bias.rank() != 1) {
        throw ShapeError("fc expects x [N x D_in], weight [D_out x D_in], bias [D_out]");
    }
    if (x.extent(1) != weight.extent(1) || weight.extent(0) != bias.extent(0)) {
        throw ShapeError("fc extent mismatch: x " + x.shape().to_string() + ", weight " +
                         weight.shape().to_string() + ", bias " + bias.shape().to_string());
    }
}

Tensor fc_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    const std::int64_t n = x.extent(0), din = x.extent(1), dout = weight.extent(0);
    Tensor out(Shape{n, dout});
    const double* px = x.data();
    const double* pw = weight.data();
    const double* pb = bias.data();
    double* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t o = 0; o < dout; ++o) {
            double acc = pb[o];
            const double* xr = px + i * din;
            const double* wr = pw + o * din;
            for (std::int64_t d = 0; d < din; ++d) acc += xr[d] * wr[d];
            po[i * dout + o] = acc;
        }
    }
    return out;
}

}  // namespace

Tensor fc(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    check_fc(x, weight, bias);
    return fc_forward(x, weight, bias);
}

Variable fc(const Variable& x, const Variable& weight, const Variable& bias) {
    Tape& tape = *x.tape();
    check_fc(x.value(), weight.value(), bias.value());
    Tensor out = fc_forward(x.value(), weight.value(), bias.value());
    Tensor xv = x.value();
    Tensor wv = weight.value();
    return tape.record(std::move(out), {x, weight, bias}, [xv, wv](const Tensor& g) {
        const std::int64_t n = xv.extent(0), din = xv.extent(1), dout = wv.extent(0);
        Tensor dx(xv.shape(), 0.0);
        Tensor dw(wv.shape(), 0.0);
        Tensor db(Shape{dout}, 0.0);
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t o = 0; o < dout; ++o) {
                const double gv = g[i * dout + o];
                db[o] += gv;
                for (std::int64_t d = 0; d < din; ++d) {
                    dx[i * din + d] += gv * wv[o * din + d];
                    dw[o * din + d] += gv * xv[i * din + d];
                }
            }
        }
        return std::vector<Tensor>{std::move(dx), std::move(dw), std::move(db)};
    });
}

// ---- upsample_nearest ----

namespace {

Tensor upsample_forward(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
    check_rank4(x, "upsample_nearest");
    if (out_h < 1 || out_w < 1) throw ShapeError("upsample target extents must be positive");
    const std::int64_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    Tensor out(Shape{n, c, out_h, out_w});
    const double* px = x.data();
    double* po = out.data();
    for (std::int64_t img = 0; img < n * c; ++img) {
        const double* src = px + img * h * w;
        double* dst = po + img * out_h * out_w;
        for (std::int64_t i = 0; i < out_h; ++i) {
            const std::int64_t si = i * h / out_h;
            for (std::int64_t j = 0; j < out_w; ++j) {
                dst[i * out_w + j] = src[si * w + j * w / out_w];
            }
        }
    }
    return out;
}

}  // namespace

Tensor upsample_nearest(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
    return upsample_forward(x, out_h, out_w);
}

Variable upsample_nearest(const Variable& x, std::int64_t out_h, std::int64_t out_w) {
    Tape& tape = *x.tape();
    Tensor out = upsample_forward(x.value(), out_h, out_w);
    const Shape in_shape = x.shape();
    return tape.record(std::move(out), {x}, [in_shape, out_h, out_w](const Tensor& g) {
        const std::int64_t n = in_shape.extent(0), c = in_shape.extent(1),
                           h = in_shape.extent(2), w = in_shape.extent(3);
        Tensor dx(in_shape, 0.0);
        const double* pg = g.data();
        double* pd = dx.data();
        for (std::int64_t img = 0; img < n * c; ++img) {
            const double* gsrc = pg + img * out_h * out_w;
            double* dst = pd + img * h * w;
            for (std::int64_t i = 0; i < out_h; ++i) {
                const std::int64_t si = i * h / out_h;
                for (std::int64_t j = 0; j < out_w; ++j) {
                    dst[si * w + j * w / out_w] += gsrc[i * out_w + j];
                }
            }
        }
        return std::vector<Tensor>{std::move(dx)};
    });
}

// ---- softmax cross-entropy ----

namespace {

void check_labels(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) {
        throw ShapeError("softmax_ce expects logits [N x K], got " +
                         logits.shape().to_string());
    }
    if (static_cast<std::int64_t>(labels.size()) != logits.extent(0)) {
        throw ShapeError("softmax_ce label count " + std::to_string(labels.size()) +
                         " does not match batch " + std::to_string(logits.extent(0)));
    }
    const std::int64_t k = logits.extent(1);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= k) {
            throw ShapeError("label " + std::to_string(labels[i]) + " out of range [0, " +
                             std::to_string(k) + ") at sample " + std::to_string(i));
        }
    }
}

// probs written row-wise; returns mean negative log-likelihood
double softmax_ce_forward(const Tensor& logits, const std::vector<int>& labels, Tensor* probs) {
    const std::int64_t n = logits.extent(0), k = logits.extent(1);
    if (probs) *probs = Tensor(logits.shape());
    const double* pl = logits.data();
    double loss = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double* row = pl + i * k;
        double mx = row[0];
        for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::int64_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
        const double log_denom = std::log(denom);
        if (probs) {
            for (std::int64_t j = 0; j < k; ++j) {
                (*probs)[i * k + j] = std::exp(row[j] - mx) / denom;
            }
        }
        loss += -(row[labels[static_cast<std::size_t>(i)]] - mx - log_denom);
    }
    return loss / static_cast<double>(n);
}

}  // namespace

double softmax_ce(const Tensor& logits, const std::vector<int>& labels) {
    check_labels(logits, labels);
    return softmax_ce_forward(logits, labels, nullptr);
}

Variable softmax_ce(const Variable& logits, const std::vector<int>& labels) {
    Tape& tape = *logits.tape();
    check_labels(logits.value(), labels);
    Tensor probs;
    const double loss = softmax_ce_forward(logits.value(), labels, &probs);
    return tape.record(Tensor::scalar(loss), {logits}, [probs, labels](const Tensor& g) {
        const double gs = g.item();
        const std::int64_t n = probs.extent(0), k = probs.extent(1);
        Tensor dl(probs.shape());
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = 0; j < k; ++j) {
                const double onehot = labels[static_cast<std::size_t>(i)] == j ? 1.0 : 0.0;
                dl[i * k + j] = gs * (probs[i * k + j] - onehot) / static_cast<double>(n);
            }
        }
        return std::vector<Tensor>{std::move(dl)};
    });
}

// ---- binding ----

namespace {

Variable bind_param(Tape& tape, Tensor& t, bool requires_grad, ParamSlots* slots) {
    Variable v = tape.leaf(t, requires_grad);
    if (slots) slots->push_back(ParamSlot{&t, v});
    return v;
}

}  // namespace

ConvVars bind(Tape& tape, ConvParams& p, bool requires_grad, ParamSlots* slots) {
    ConvVars v;
    v.kernel = bind_param(tape, p.kernel, requires_grad, slots);
    v.bias = bind_param(tape, p.bias, requires_grad, slots);
    v.stride = p.stride;
    v.padding = p.padding;
    v.dilation = p.dilation;
    return v;
}

BatchNormVars bind(Tape& tape, BatchNormState& s, bool requires_grad, ParamSlots* slots) {
    BatchNormVars v;
    v.gamma = bind_param(tape, s.gamma, requires_grad, slots);
    v.beta = bind_param(tape, s.beta, requires_grad, slots);
    v.state = &s;
    return v;
}

}  // namespace hmvgg
