#include "splatfuse/render.hpp"

#include <algorithm>
#include <cmath>

#include "splatfuse/parallel.hpp"

namespace splatfuse {

namespace {

// One on-screen gaussian footprint. P is the inverse 2D covariance.
struct Splat {
  int gauss = 0;  // index into scene.gaussians
  Eigen::Vector3d x_cam = Eigen::Vector3d::Zero();
  double u = 0.0, v = 0.0;
  double z = 0.0;
  double alpha = 0.0;
  double p00 = 0.0, p01 = 0.0, p11 = 0.0;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

struct Frame {
  Eigen::Matrix3d W;       // rotation part of world-to-camera
  Eigen::Vector3d t;
  double fx, fy, cx, cy;
  int width, height;
};

Frame make_frame(const Camera& cam) {
  Frame f;
  f.W = cam.pose.rotation();
  f.t = cam.pose.t;
  f.fx = cam.intrinsics.fx;
  f.fy = cam.intrinsics.fy;
  f.cx = cam.intrinsics.cx;
  f.cy = cam.intrinsics.cy;
  f.width = cam.intrinsics.width;
  f.height = cam.intrinsics.height;
  return f;
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Frame& f, const Eigen::Vector3d& xc) {
  const double iz = 1.0 / xc.z();
  const double iz2 = iz * iz;
  Eigen::Matrix<double, 2, 3> J;
  J << f.fx * iz, 0.0, -f.fx * xc.x() * iz2, 0.0, f.fy * iz, -f.fy * xc.y() * iz2;
  return J;
}

// Projects every gaussian, culls, and returns splats sorted by (depth, id).
std::vector<Splat> prepare_splats(const GaussianScene& scene, const RenderOptions& opts,
                                  const Frame& f) {
  std::vector<Splat> splats;
  splats.reserve(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Gaussian& g = scene.gaussians[i];
    Splat s;
    s.gauss = static_cast<int>(i);
    s.x_cam = f.W * g.center + f.t;
    if (s.x_cam.z() <= opts.z_near) continue;
    s.z = s.x_cam.z();
    s.u = f.fx * s.x_cam.x() / s.z + f.cx;
    s.v = f.fy * s.x_cam.y() / s.z + f.cy;

    const Eigen::Matrix<double, 2, 3> M = projection_jacobian(f, s.x_cam) * f.W;
    const Eigen::Matrix2d cov2 =
        M * g.covariance() * M.transpose() + opts.dilation * Eigen::Matrix2d::Identity();
    const double det = cov2(0, 0) * cov2(1, 1) - cov2(0, 1) * cov2(0, 1);
    if (!(det > 1e-300)) continue;
    s.p00 = cov2(1, 1) / det;
    s.p01 = -cov2(0, 1) / det;
    s.p11 = cov2(0, 0) / det;

    const double rx = opts.sigma_cut * std::sqrt(cov2(0, 0));
    const double ry = opts.sigma_cut * std::sqrt(cov2(1, 1));
    s.x0 = std::max(0, static_cast<int>(std::ceil(s.u - rx)));
    s.x1 = std::min(f.width - 1, static_cast<int>(std::floor(s.u + rx)));
    s.y0 = std::max(0, static_cast<int>(std::ceil(s.v - ry)));
    s.y1 = std::min(f.height - 1, static_cast<int>(std::floor(s.v + ry)));
    if (s.x0 > s.x1 || s.y0 > s.y1) continue;

    s.alpha = sigmoid(g.opacity_logit);
    splats.push_back(s);
  }
  std::sort(splats.begin(), splats.end(), [&scene](const Splat& a, const Splat& b) {
    if (a.z != b.z) return a.z < b.z;
    return scene.ids[a.gauss] < scene.ids[b.gauss];  // id tie-break for determinism
  });
  return splats;
}

std::vector<std::vector<int32_t>> bucket_rows(const std::vector<Splat>& splats, int height) {
  std::vector<std::vector<int32_t>> rows(height);
  for (std::size_t s = 0; s < splats.size(); ++s)
    for (int y = splats[s].y0; y <= splats[s].y1; ++y)
      rows[y].push_back(static_cast<int32_t>(s));
  return rows;
}

}  // namespace

Image RenderOutput::color_image() const {
  Image img(width, height, 3);
  for (std::size_t i = 0; i < color.size(); ++i) img.data[i] = static_cast<float>(color[i]);
  return img;
}

Image RenderOutput::depth_image() const {
  Image img(width, height, 1);
  for (std::size_t i = 0; i < depth.size(); ++i) img.data[i] = static_cast<float>(depth[i]);
  return img;
}

Image RenderOutput::alpha_image() const {
  Image img(width, height, 1);
  for (std::size_t i = 0; i < alpha.size(); ++i) img.data[i] = static_cast<float>(alpha[i]);
  return img;
}

RenderOutput render(const GaussianScene& scene, const Camera& camera, const RenderOptions& opts) {
  camera.intrinsics.validate();
  const Frame f = make_frame(camera);
  RenderOutput out;
  out.width = f.width;
  out.height = f.height;
  out.color.assign(static_cast<std::size_t>(f.width) * f.height * 3, 0.0);
  out.depth.assign(static_cast<std::size_t>(f.width) * f.height, 0.0);
  out.alpha.assign(static_cast<std::size_t>(f.width) * f.height, 0.0);
  if (scene.empty()) return out;

  const std::vector<Splat> splats = prepare_splats(scene, opts, f);
  const auto rows = bucket_rows(splats, f.height);

  parallel_for(static_cast<std::size_t>(f.height), [&](std::size_t yi) {
    const int y = static_cast<int>(yi);
    for (int x = 0; x < f.width; ++x) {
      double T = 1.0;
      double c0 = 0.0, c1 = 0.0, c2 = 0.0, A = 0.0, Sz = 0.0;
      for (int32_t si : rows[y]) {
        const Splat& s = splats[si];
        if (x < s.x0 || x > s.x1) continue;
        const double dx = x - s.u;
        const double dy = y - s.v;
        const double q2 = s.p00 * dx * dx + 2.0 * s.p01 * dx * dy + s.p11 * dy * dy;
        const double a = s.alpha * std::exp(-0.5 * q2);
        const double w = a * T;
        const Eigen::Vector3d& col = scene.gaussians[s.gauss].color;
        c0 += w * col.x();
        c1 += w * col.y();
        c2 += w * col.z();
        A += w;
        Sz += w * s.z;
        T *= (1.0 - a);
      }
      const std::size_t pix = static_cast<std::size_t>(y) * f.width + x;
      out.color[pix * 3 + 0] = c0;
      out.color[pix * 3 + 1] = c1;
      out.color[pix * 3 + 2] = c2;
      out.alpha[pix] = A;
      out.depth[pix] = (A >= opts.alpha_floor) ? Sz / A : 0.0;
    }
  });
  return out;
}

void SceneGrads::resize(std::size_t n) {
  centers.assign(n, Eigen::Vector3d::Zero());
  log_scales.assign(n, Eigen::Vector3d::Zero());
  rotations.assign(n, Eigen::Vector4d::Zero());
  opacity_logits.assign(n, 0.0);
  colors.assign(n, Eigen::Vector3d::Zero());
}

void SceneGrads::setZero() {
  std::fill(centers.begin(), centers.end(), Eigen::Vector3d::Zero());
  std::fill(log_scales.begin(), log_scales.end(), Eigen::Vector3d::Zero());
  std::fill(rotations.begin(), rotations.end(), Eigen::Vector4d::Zero());
  std::fill(opacity_logits.begin(), opacity_logits.end(), 0.0);
  std::fill(colors.begin(), colors.end(), Eigen::Vector3d::Zero());
}

void SceneGrads::add(const SceneGrads& other) {
  for (std::size_t i = 0; i < centers.size(); ++i) {
    centers[i] += other.centers[i];
    log_scales[i] += other.log_scales[i];
    rotations[i] += other.rotations[i];
    opacity_logits[i] += other.opacity_logits[i];
    colors[i] += other.colors[i];
  }
}

namespace {

// Per-splat accumulators gathered over pixels before the per-splat chain rule.
struct SplatAccum {
  double gu = 0.0, gv = 0.0;             // d/d(projected center)
  double gp00 = 0.0, gp01 = 0.0, gp11 = 0.0;  // d/d(inverse 2D covariance), symmetric
  double galpha = 0.0;
  double gz = 0.0;
  double gc0 = 0.0, gc1 = 0.0, gc2 = 0.0;
};

// d(rotation matrix)/d(unit quaternion component), Hamilton (w,x,y,z).
void rotation_matrix_jacobian(const Eigen::Quaterniond& q, Eigen::Matrix3d dR[4]) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  dR[0] << 0, -z, y, z, 0, -x, -y, x, 0;
  dR[0] *= 2.0;
  dR[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  dR[1] *= 2.0;
  dR[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  dR[2] *= 2.0;
  dR[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  dR[3] *= 2.0;
}

}  // namespace

RenderGrads render_with_gradients(const GaussianScene& scene, const Camera& camera,
                                  const std::vector<double>& color_grad,
                                  const std::vector<double>& depth_grad, double exposure_gain,
                                  double exposure_bias, const RenderOptions& opts,
                                  RenderOutput* forward_out) {
  (void)exposure_bias;  // the bias value itself does not enter any gradient
  camera.intrinsics.validate();
  const Frame f = make_frame(camera);
  const std::size_t pixels = static_cast<std::size_t>(f.width) * f.height;
  if (color_grad.size() != pixels * 3)
    throw DataError("render_with_gradients: color_grad must have H*W*3 entries");
  if (!depth_grad.empty() && depth_grad.size() != pixels)
    throw DataError("render_with_gradients: depth_grad must have H*W entries");

  RenderGrads grads;
  grads.scene.resize(scene.size());

  const RenderOutput out = render(scene, camera, opts);
  if (forward_out) *forward_out = out;

  // Exposure chain: exposed = a*C + b.
  {
    double ga = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < color_grad.size(); ++i) {
      ga += color_grad[i] * out.color[i];
      gb += color_grad[i];
    }
    grads.exposure_gain = ga;
    grads.exposure_bias = gb;
  }
  if (scene.empty()) return grads;

  const std::vector<Splat> splats = prepare_splats(scene, opts, f);
  const auto rows = bucket_rows(splats, f.height);

  const std::size_t n_chunks = chunk_count(static_cast<std::size_t>(f.height));
  std::vector<std::vector<SplatAccum>> chunk_acc(n_chunks);

  struct PixSplat {
    int32_t si;
    double a, T, w;
  };

  parallel_chunks(static_cast<std::size_t>(f.height), [&](std::size_t chunk, std::size_t ybegin,
                                                          std::size_t yend) {
    auto& acc = chunk_acc[chunk];
    acc.assign(splats.size(), SplatAccum{});
    std::vector<PixSplat> stack;
    for (std::size_t yi = ybegin; yi < yend; ++yi) {
      const int y = static_cast<int>(yi);
      for (int x = 0; x < f.width; ++x) {
        const std::size_t pix = yi * f.width + x;
        const double gd_pix = depth_grad.empty() ? 0.0 : depth_grad[pix];
        const double gc_pix[3] = {exposure_gain * color_grad[pix * 3 + 0],
                                  exposure_gain * color_grad[pix * 3 + 1],
                                  exposure_gain * color_grad[pix * 3 + 2]};
        if (gc_pix[0] == 0.0 && gc_pix[1] == 0.0 && gc_pix[2] == 0.0 && gd_pix == 0.0) continue;

        // Replay the forward compositing for this pixel.
        stack.clear();
        double T = 1.0;
        for (int32_t si : rows[y]) {
          const Splat& s = splats[si];
          if (x < s.x0 || x > s.x1) continue;
          const double dx = x - s.u;
          const double dy = y - s.v;
          const double q2 = s.p00 * dx * dx + 2.0 * s.p01 * dx * dy + s.p11 * dy * dy;
          const double a = s.alpha * std::exp(-0.5 * q2);
          stack.push_back({si, a, T, a * T});
          T *= (1.0 - a);
        }
        if (stack.empty()) continue;

        const double A = out.alpha[pix];
        const double D = out.depth[pix];
        const bool depth_defined = (A >= opts.alpha_floor);

        // dL/dw_k, then suffix-corrected dL/da_k (front-to-back compositing).
        double suffix = 0.0;
        for (std::size_t k = stack.size(); k-- > 0;) {
          const PixSplat& ps = stack[k];
          const Splat& s = splats[ps.si];
          const Eigen::Vector3d& col = scene.gaussians[s.gauss].color;
          double uk = gc_pix[0] * col.x() + gc_pix[1] * col.y() + gc_pix[2] * col.z();
          if (depth_defined && gd_pix != 0.0) uk += gd_pix * (s.z - D) / A;
          const double da = ps.T * uk - suffix / (1.0 - ps.a);
          suffix += ps.w * uk;

          SplatAccum& sa = acc[ps.si];
          sa.gc0 += gc_pix[0] * ps.w;
          sa.gc1 += gc_pix[1] * ps.w;
          sa.gc2 += gc_pix[2] * ps.w;
          if (depth_defined && gd_pix != 0.0) sa.gz += gd_pix * ps.w / A;

          // a = alpha * exp(-q2/2)
          const double g = ps.a / s.alpha;
          sa.galpha += g * da;
          const double gq2 = -0.5 * ps.a * da;
          const double dx = x - s.u;
          const double dy = y - s.v;
          // q2 = d' P d with d = (pixel - center)
          sa.gu -= gq2 * 2.0 * (s.p00 * dx + s.p01 * dy);
          sa.gv -= gq2 * 2.0 * (s.p01 * dx + s.p11 * dy);
          sa.gp00 += gq2 * dx * dx;
          sa.gp01 += gq2 * 2.0 * dx * dy;
          sa.gp11 += gq2 * dy * dy;
        }
      }
    }
  });

  // Merge chunk accumulators in chunk order (worker-count independent).
  std::vector<SplatAccum> acc(splats.size());
  for (const auto& ca : chunk_acc) {
    if (ca.empty()) continue;
    for (std::size_t s = 0; s < acc.size(); ++s) {
      acc[s].gu += ca[s].gu;
      acc[s].gv += ca[s].gv;
      acc[s].gp00 += ca[s].gp00;
      acc[s].gp01 += ca[s].gp01;
      acc[s].gp11 += ca[s].gp11;
      acc[s].galpha += ca[s].galpha;
      acc[s].gz += ca[s].gz;
      acc[s].gc0 += ca[s].gc0;
      acc[s].gc1 += ca[s].gc1;
      acc[s].gc2 += ca[s].gc2;
    }
  }

  // Per-splat chain rule back to gaussian parameters and the camera.
  std::vector<Eigen::Vector3d> pose_rot_per(splats.size(), Eigen::Vector3d::Zero());
  std::vector<Eigen::Vector3d> pose_trans_per(splats.size(), Eigen::Vector3d::Zero());

  parallel_for(splats.size(), [&](std::size_t si) {
    const Splat& s = splats[si];
    const SplatAccum& sa = acc[si];
    const Gaussian& g = scene.gaussians[s.gauss];

    grads.scene.colors[s.gauss] += Eigen::Vector3d(sa.gc0, sa.gc1, sa.gc2);
    grads.scene.opacity_logits[s.gauss] += s.alpha * (1.0 - s.alpha) * sa.galpha;

    Eigen::Matrix2d GP;
    GP << sa.gp00, 0.5 * sa.gp01, 0.5 * sa.gp01, sa.gp11;
    Eigen::Matrix2d P;
    P << s.p00, s.p01, s.p01, s.p11;
    const Eigen::Matrix2d GSigma2 = -P * GP * P;

    const Eigen::Matrix<double, 2, 3> J = projection_jacobian(f, s.x_cam);
    const Eigen::Matrix<double, 2, 3> M = J * f.W;
    const Eigen::Quaterniond qn = g.rotation.normalized();
    const Eigen::Matrix3d R3 = qn.toRotationMatrix();
    const Eigen::Vector3d e2s = (2.0 * g.log_scales).array().exp();
    const Eigen::Matrix3d Sigma3 = R3 * e2s.asDiagonal() * R3.transpose();

    const Eigen::Matrix<double, 2, 3> GM = 2.0 * GSigma2 * M * Sigma3;
    const Eigen::Matrix3d GSigma3 = M.transpose() * GSigma2 * M;
    const Eigen::Matrix<double, 2, 3> GJ = GM * f.W.transpose();
    const Eigen::Matrix3d GW = J.transpose() * GM;

    // log-scales: dSigma3/ds_j = R (2 e^{2 s_j} E_jj) R^T
    const Eigen::Matrix3d RtGR = R3.transpose() * GSigma3 * R3;
    for (int j = 0; j < 3; ++j)
      grads.scene.log_scales[s.gauss][j] += 2.0 * e2s[j] * RtGR(j, j);

    // rotation: through R, then through quaternion normalization
    const Eigen::Matrix3d GR3 = 2.0 * GSigma3 * R3 * e2s.asDiagonal();
    Eigen::Matrix3d dR[4];
    rotation_matrix_jacobian(qn, dR);
    Eigen::Vector4d gq_unit;
    for (int c = 0; c < 4; ++c) gq_unit[c] = (GR3.array() * dR[c].array()).sum();
    const Eigen::Vector4d qv(g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z());
    const double qnorm = qv.norm();
    const Eigen::Vector4d qhat = qv / qnorm;
    grads.scene.rotations[s.gauss] += (gq_unit - qhat * qhat.dot(gq_unit)) / qnorm;

    // camera-frame point: projected center, depth, and the Jacobian J(x_cam)
    Eigen::Vector3d gx = J.transpose() * Eigen::Vector2d(sa.gu, sa.gv);
    gx.z() += sa.gz;
    const double iz2 = 1.0 / (s.z * s.z);
    const double iz3 = iz2 / s.z;
    gx.x() += GJ(0, 2) * (-f.fx * iz2);
    gx.y() += GJ(1, 2) * (-f.fy * iz2);
    gx.z() += GJ(0, 0) * (-f.fx * iz2) + GJ(0, 2) * (2.0 * f.fx * s.x_cam.x() * iz3) +
              GJ(1, 1) * (-f.fy * iz2) + GJ(1, 2) * (2.0 * f.fy * s.x_cam.y() * iz3);

    grads.scene.centers[s.gauss] += f.W.transpose() * gx;

    // left-multiplicative pose delta: x_cam' = Exp(w) x_cam + v, W' = Exp(w) W
    pose_trans_per[si] = gx;
    Eigen::Vector3d grot = s.x_cam.cross(gx);
    for (int j = 0; j < 3; ++j)
      grot += f.W.col(j).cross(GW.col(j));
    pose_rot_per[si] = grot;
  });

  for (std::size_t si = 0; si < splats.size(); ++si) {
    grads.pose_rot += pose_rot_per[si];
    grads.pose_trans += pose_trans_per[si];
  }
  return grads;
}

}  // namespace splatfuse
