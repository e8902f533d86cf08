#pragma once

#include "fgnn/tensor.hpp"

namespace fgnn::kernels {

/// Serial runs the reference loops; Parallel runs the OpenMP versions.
/// Both orders of accumulation are identical per output element, so the two
/// modes produce bitwise-equal results at any thread count.
enum class ExecMode { Serial, Parallel };

void set_exec_mode(ExecMode m);
ExecMode exec_mode();

// conv2d: zero padding (k-1)/2 (odd k), weights (Cout, Cin, K, K), bias (Cout).
// Output spatial size is (H + 2p - K) / stride + 1.
std::vector<int> conv2d_out_shape(const std::vector<int>& x_shape, int out_channels, int kernel,
                                  int stride);

void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, Tensor& y);
void conv2d_forward_serial(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
                           Tensor& y);
void conv2d_forward_parallel(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
                             Tensor& y);

// backward kernels accumulate (+=) into their outputs
void conv2d_backward_input(const Tensor& dy, const Tensor& w, int stride, Tensor& dx);
void conv2d_backward_input_serial(const Tensor& dy, const Tensor& w, int stride, Tensor& dx);
void conv2d_backward_input_parallel(const Tensor& dy, const Tensor& w, int stride, Tensor& dx);

void conv2d_backward_params(const Tensor& dy, const Tensor& x, int stride, Tensor& dw, Tensor& db);
void conv2d_backward_params_serial(const Tensor& dy, const Tensor& x, int stride, Tensor& dw,
                                   Tensor& db);
void conv2d_backward_params_parallel(const Tensor& dy, const Tensor& x, int stride, Tensor& dw,
                                     Tensor& db);

// dense: weights (out, in), y = x W^T + b over the batch
void dense_forward(const Tensor& x, const Tensor& w, const Tensor& bias, Tensor& y);
void dense_forward_serial(const Tensor& x, const Tensor& w, const Tensor& bias, Tensor& y);
void dense_forward_parallel(const Tensor& x, const Tensor& w, const Tensor& bias, Tensor& y);

void dense_backward(const Tensor& dy, const Tensor& x, const Tensor& w, Tensor& dx, Tensor& dw,
                    Tensor& db);
void dense_backward_serial(const Tensor& dy, const Tensor& x, const Tensor& w, Tensor& dx,
                           Tensor& dw, Tensor& db);
void dense_backward_parallel(const Tensor& dy, const Tensor& x, const Tensor& w, Tensor& dx,
                             Tensor& dw, Tensor& db);

}  // namespace fgnn::kernels
