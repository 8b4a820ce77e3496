#pragma once

// Internals shared between the loss and solver translation units.

#include <vector>

#include "splatfuse/optim.hpp"

namespace splatfuse::detail {

// dL_s/d(log_scales); returns the loss value.
double scale_loss_grad(const GaussianScene& scene, double cap,
                       std::vector<Eigen::Vector3d>& grad);

// SSIM on interleaved double buffers (stride = channels). When grad_b is
// non-null it receives dSSIM/db, same layout as b.
double ssim_multichannel(const std::vector<double>& a, const std::vector<double>& b, int w, int h,
                         int channels, std::vector<double>* grad_b);

}  // namespace splatfuse::detail
