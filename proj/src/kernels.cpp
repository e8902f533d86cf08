#include "fgnn/kernels.hpp"

namespace fgnn::kernels {

namespace {

ExecMode g_mode = ExecMode::Parallel;

void check_conv_args(const Tensor& x, const Tensor& w, const Tensor& bias, int stride) {
    if (x.rank() != 4 || w.rank() != 4)
        throw ShapeMismatch("conv2d expects 4-d input and weights");
    if (w.shape[2] != w.shape[3] || w.shape[2] % 2 == 0)
        throw ShapeMismatch("conv2d kernel must be square with odd size, got " +
                            Tensor::shape_str(w.shape));
    if (w.shape[1] != x.channels())
        throw ShapeMismatch("conv2d input channels " + std::to_string(x.channels()) +
                            " vs weight channels " + std::to_string(w.shape[1]));
    if (bias.size() != w.shape[0]) throw ShapeMismatch("conv2d bias size");
    if (stride < 1) throw ShapeMismatch("conv2d stride must be >= 1");
}

// Per-(b,oc) output plane, accumulated in a fixed (ic, kh, kw, oh, ow) order.
// Shared by both exec modes so they stay bitwise identical.
inline void conv_plane_forward(const Tensor& x, const Tensor& w, real_t bias, int stride, int b,
                               int oc, Tensor& y) {
    const int Cin = x.channels(), H = x.height(), W = x.width();
    const int K = w.shape[2], P = (K - 1) / 2;
    const int Ho = y.height(), Wo = y.width();
    real_t* out = y.row_ptr(b, oc, 0);
    for (int i = 0; i < Ho * Wo; ++i) out[i] = bias;
    for (int ic = 0; ic < Cin; ++ic) {
        for (int kh = 0; kh < K; ++kh) {
            for (int kw = 0; kw < K; ++kw) {
                const real_t wv = w(oc, ic, kh, kw);
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * stride + kh - P;
                    if (ih < 0 || ih >= H) continue;
                    real_t* orow = out + static_cast<size_t>(oh) * Wo;
                    const real_t* irow = x.row_ptr(b, ic, ih);
                    if (stride == 1) {
                        const int lo = std::max(0, P - kw);
                        const int hi = std::min(Wo, W + P - kw);
                        const int off = kw - P;
                        for (int ow = lo; ow < hi; ++ow) orow[ow] += wv * irow[ow + off];
                    } else {
                        for (int ow = 0; ow < Wo; ++ow) {
                            const int iw = ow * stride + kw - P;
                            if (iw >= 0 && iw < W) orow[ow] += wv * irow[iw];
                        }
                    }
                }
            }
        }
    }
}

inline void conv_plane_backward_input(const Tensor& dy, const Tensor& w, int stride, int b, int ic,
                                      Tensor& dx) {
    const int Cout = dy.channels(), Ho = dy.height(), Wo = dy.width();
    const int K = w.shape[2], P = (K - 1) / 2;
    const int H = dx.height(), W = dx.width();
    for (int oc = 0; oc < Cout; ++oc) {
        for (int kh = 0; kh < K; ++kh) {
            for (int kw = 0; kw < K; ++kw) {
                const real_t wv = w(oc, ic, kh, kw);
                if (stride == 1) {
                    // ih = oh + kh - P  =>  oh = ih - kh + P
                    for (int ih = 0; ih < H; ++ih) {
                        const int oh = ih - kh + P;
                        if (oh < 0 || oh >= Ho) continue;
                        real_t* drow = dx.row_ptr(b, ic, ih);
                        const real_t* grow = dy.row_ptr(b, oc, oh);
                        const int lo = std::max(0, kw - P);
                        const int hi = std::min(W, Wo + kw - P);
                        const int off = P - kw;
                        for (int iw = lo; iw < hi; ++iw) drow[iw] += wv * grow[iw + off];
                    }
                } else {
                    for (int oh = 0; oh < Ho; ++oh) {
                        const int ih = oh * stride + kh - P;
                        if (ih < 0 || ih >= H) continue;
                        for (int ow = 0; ow < Wo; ++ow) {
                            const int iw = ow * stride + kw - P;
                            if (iw >= 0 && iw < W) dx(b, ic, ih, iw) += wv * dy(b, oc, oh, ow);
                        }
                    }
                }
            }
        }
    }
}

// Gradient of one (oc, ic) weight plane plus, when ic == 0, the oc bias.
inline void conv_plane_backward_params(const Tensor& dy, const Tensor& x, int stride, int oc,
                                       int ic, Tensor& dw, Tensor& db) {
    const int B = x.batch(), H = x.height(), W = x.width();
    const int K = dw.shape[2], P = (K - 1) / 2;
    const int Ho = dy.height(), Wo = dy.width();
    for (int kh = 0; kh < K; ++kh) {
        for (int kw = 0; kw < K; ++kw) {
            real_t acc = 0;
            for (int b = 0; b < B; ++b) {
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * stride + kh - P;
                    if (ih < 0 || ih >= H) continue;
                    const real_t* grow = dy.row_ptr(b, oc, oh);
                    const real_t* irow = x.row_ptr(b, ic, ih);
                    if (stride == 1) {
                        const int lo = std::max(0, P - kw);
                        const int hi = std::min(Wo, W + P - kw);
                        const int off = kw - P;
                        for (int ow = lo; ow < hi; ++ow) acc += grow[ow] * irow[ow + off];
                    } else {
                        for (int ow = 0; ow < Wo; ++ow) {
                            const int iw = ow * stride + kw - P;
                            if (iw >= 0 && iw < W) acc += grow[ow] * irow[iw];
                        }
                    }
                }
            }
            dw(oc, ic, kh, kw) += acc;
        }
    }
    if (ic == 0) {
        real_t acc = 0;
        for (int b = 0; b < B; ++b) {
            const real_t* grow = dy.row_ptr(b, oc, 0);
            for (int i = 0; i < Ho * Wo; ++i) acc += grow[i];
        }
        db.data[oc] += acc;
    }
}

}  // namespace

void set_exec_mode(ExecMode m) { g_mode = m; }
ExecMode exec_mode() { return g_mode; }

std::vector<int> conv2d_out_shape(const std::vector<int>& s, int out_channels, int kernel,
                                  int stride) {
    const int P = (kernel - 1) / 2;
    const int ho = (s[2] + 2 * P - kernel) / stride + 1;
    const int wo = (s[3] + 2 * P - kernel) / stride + 1;
    return {s[0], out_channels, ho, wo};
}

void conv2d_forward_serial(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
                           Tensor& y) {
    check_conv_args(x, w, bias, stride);
    y = Tensor(conv2d_out_shape(x.shape, w.shape[0], w.shape[2], stride));
    for (int b = 0; b < x.batch(); ++b)
        for (int oc = 0; oc < w.shape[0]; ++oc)
            conv_plane_forward(x, w, bias.data[oc], stride, b, oc, y);
}

void conv2d_forward_parallel(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
                             Tensor& y) {
    check_conv_args(x, w, bias, stride);
    y = Tensor(conv2d_out_shape(x.shape, w.shape[0], w.shape[2], stride));
    const int B = x.batch(), Cout = w.shape[0];
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b)
        for (int oc = 0; oc < Cout; ++oc)
            conv_plane_forward(x, w, bias.data[oc], stride, b, oc, y);
}

void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, Tensor& y) {
    if (g_mode == ExecMode::Parallel)
        conv2d_forward_parallel(x, w, bias, stride, y);
    else
        conv2d_forward_serial(x, w, bias, stride, y);
}

void conv2d_backward_input_serial(const Tensor& dy, const Tensor& w, int stride, Tensor& dx) {
    for (int b = 0; b < dx.batch(); ++b)
        for (int ic = 0; ic < dx.channels(); ++ic) conv_plane_backward_input(dy, w, stride, b, ic, dx);
}

void conv2d_backward_input_parallel(const Tensor& dy, const Tensor& w, int stride, Tensor& dx) {
    const int B = dx.batch(), Cin = dx.channels();
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b)
        for (int ic = 0; ic < Cin; ++ic) conv_plane_backward_input(dy, w, stride, b, ic, dx);
}

void conv2d_backward_input(const Tensor& dy, const Tensor& w, int stride, Tensor& dx) {
    if (g_mode == ExecMode::Parallel)
        conv2d_backward_input_parallel(dy, w, stride, dx);
    else
        conv2d_backward_input_serial(dy, w, stride, dx);
}

void conv2d_backward_params_serial(const Tensor& dy, const Tensor& x, int stride, Tensor& dw,
                                   Tensor& db) {
    for (int oc = 0; oc < dw.shape[0]; ++oc)
        for (int ic = 0; ic < dw.shape[1]; ++ic)
            conv_plane_backward_params(dy, x, stride, oc, ic, dw, db);
}

void conv2d_backward_params_parallel(const Tensor& dy, const Tensor& x, int stride, Tensor& dw,
                                     Tensor& db) {
    const int Cout = dw.shape[0], Cin = dw.shape[1];
#pragma omp parallel for collapse(2) schedule(static)
    for (int oc = 0; oc < Cout; ++oc)
        for (int ic = 0; ic < Cin; ++ic) conv_plane_backward_params(dy, x, stride, oc, ic, dw, db);
}

void conv2d_backward_params(const Tensor& dy, const Tensor& x, int stride, Tensor& dw, Tensor& db) {
    if (g_mode == ExecMode::Parallel)
        conv2d_backward_params_parallel(dy, x, stride, dw, db);
    else
        conv2d_backward_params_serial(dy, x, stride, dw, db);
}

namespace {

inline void dense_row_forward(const Tensor& x, const Tensor& w, const Tensor& bias, int b,
                              Tensor& y) {
    const int In = x.shape[1], Out = w.shape[0];
    const real_t* xi = &x.data[static_cast<size_t>(b) * In];
    real_t* yo = &y.data[static_cast<size_t>(b) * Out];
    for (int o = 0; o < Out; ++o) {
        real_t acc = bias.data[o];
        const real_t* wr = &w.data[static_cast<size_t>(o) * In];
        for (int i = 0; i < In; ++i) acc += wr[i] * xi[i];
        yo[o] = acc;
    }
}

}  // namespace

void dense_forward_serial(const Tensor& x, const Tensor& w, const Tensor& bias, Tensor& y) {
    y = Tensor({x.shape[0], w.shape[0]});
    for (int b = 0; b < x.shape[0]; ++b) dense_row_forward(x, w, bias, b, y);
}

void dense_forward_parallel(const Tensor& x, const Tensor& w, const Tensor& bias, Tensor& y) {
    y = Tensor({x.shape[0], w.shape[0]});
    const int B = x.shape[0];
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; ++b) dense_row_forward(x, w, bias, b, y);
}

void dense_forward(const Tensor& x, const Tensor& w, const Tensor& bias, Tensor& y) {
    if (x.rank() != 2 || w.rank() != 2 || x.shape[1] != w.shape[1])
        throw ShapeMismatch("dense: input " + Tensor::shape_str(x.shape) + " vs weights " +
                            Tensor::shape_str(w.shape));
    if (g_mode == ExecMode::Parallel)
        dense_forward_parallel(x, w, bias, y);
    else
        dense_forward_serial(x, w, bias, y);
}

void dense_backward_serial(const Tensor& dy, const Tensor& x, const Tensor& w, Tensor& dx,
                           Tensor& dw, Tensor& db) {
    const int B = x.shape[0], In = x.shape[1], Out = w.shape[0];
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < In; ++i) {
            real_t acc = 0;
            for (int o = 0; o < Out; ++o) acc += w(o, i) * dy(b, o);
            dx(b, i) += acc;
        }
    for (int o = 0; o < Out; ++o) {
        for (int i = 0; i < In; ++i) {
            real_t acc = 0;
            for (int b = 0; b < B; ++b) acc += dy(b, o) * x(b, i);
            dw(o, i) += acc;
        }
        real_t acc = 0;
        for (int b = 0; b < B; ++b) acc += dy(b, o);
        db.data[o] += acc;
    }
}

void dense_backward_parallel(const Tensor& dy, const Tensor& x, const Tensor& w, Tensor& dx,
                             Tensor& dw, Tensor& db) {
    const int B = x.shape[0], In = x.shape[1], Out = w.shape[0];
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < In; ++i) {
            real_t acc = 0;
            for (int o = 0; o < Out; ++o) acc += w(o, i) * dy(b, o);
            dx(b, i) += acc;
        }
#pragma omp parallel for schedule(static)
    for (int o = 0; o < Out; ++o) {
        for (int i = 0; i < In; ++i) {
            real_t acc = 0;
            for (int b = 0; b < B; ++b) acc += dy(b, o) * x(b, i);
            dw(o, i) += acc;
        }
        real_t acc = 0;
        for (int b = 0; b < B; ++b) acc += dy(b, o);
        db.data[o] += acc;
    }
}

void dense_backward(const Tensor& dy, const Tensor& x, const Tensor& w, Tensor& dx, Tensor& dw,
                    Tensor& db) {
    if (g_mode == ExecMode::Parallel)
        dense_backward_parallel(dy, x, w, dx, dw, db);
    else
        dense_backward_serial(dy, x, w, dx, dw, db);
}

}  // namespace fgnn::kernels
