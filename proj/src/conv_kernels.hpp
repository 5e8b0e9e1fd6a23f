#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

// 3x3 same-padding convolution kernels shared by the segmentation network
// and the discriminator trunk. Tensors are flat channel-major arrays:
// t[(ch*h + r)*w + c]. Zero padding at the border.
//
// The hot loops process all nine taps in a single pass per channel pair so
// the compiler can keep the weights in registers and fuse the adds. Border
// columns are peeled; missing border rows read from a shared zero row.

namespace cseg::detail {

inline const double* zero_row(int w) {
  thread_local std::vector<double> z;
  if (int(z.size()) < w) z.assign(std::size_t(w), 0.0);
  return z.data();
}

// Adds the 3x3 correlation of `ip` with taps w00..w22 into `op` (h x w,
// zero-padded). Shared by the forward pass and the rotated input-gradient
// pass of the backward.
inline void conv3x3_plane_accum(const double* __restrict ip, int h, int w,
                                const double w00, const double w01, const double w02,
                                const double w10, const double w11, const double w12,
                                const double w20, const double w21, const double w22,
                                double* __restrict op) {
  const double* zr = zero_row(w);
  for (int r = 0; r < h; ++r) {
    double* __restrict orow = op + std::size_t(r) * w;
    const double* __restrict r0 = r > 0 ? ip + std::size_t(r - 1) * w : zr;
    const double* __restrict r1 = ip + std::size_t(r) * w;
    const double* __restrict r2 = r + 1 < h ? ip + std::size_t(r + 1) * w : zr;
    if (w == 1) {
      orow[0] += w01 * r0[0] + w11 * r1[0] + w21 * r2[0];
      continue;
    }
    orow[0] += (w01 * r0[0] + w02 * r0[1]) + (w11 * r1[0] + w12 * r1[1]) +
               (w21 * r2[0] + w22 * r2[1]);
    // Three independent per-row sums keep the FMA chains short.
    for (int c = 1; c + 1 < w; ++c) {
      const double t0 = w00 * r0[c - 1] + w01 * r0[c] + w02 * r0[c + 1];
      const double t1 = w10 * r1[c - 1] + w11 * r1[c] + w12 * r1[c + 1];
      const double t2 = w20 * r2[c - 1] + w21 * r2[c] + w22 * r2[c + 1];
      orow[c] += t0 + t1 + t2;
    }
    orow[w - 1] += (w00 * r0[w - 2] + w01 * r0[w - 1]) +
                   (w10 * r1[w - 2] + w11 * r1[w - 1]) +
                   (w20 * r2[w - 2] + w21 * r2[w - 1]);
  }
}

inline void conv3x3_forward(const double* __restrict in, int cin, int h, int w,
                            const double* __restrict wt, const double* __restrict bias,
                            int cout, double* __restrict out) {
  const std::size_t plane = std::size_t(h) * w;
  for (int o = 0; o < cout; ++o) {
    double* op = out + o * plane;
    std::fill(op, op + plane, bias[o]);
    for (int i = 0; i < cin; ++i) {
      const double* wp = wt + (std::size_t(o) * cin + i) * 9;
      conv3x3_plane_accum(in + i * plane, h, w, wp[0], wp[1], wp[2], wp[3], wp[4], wp[5],
                          wp[6], wp[7], wp[8], op);
    }
  }
}

// dw/db/din are accumulated with +=; caller zeroes them. din may be null.
inline void conv3x3_backward(const double* __restrict in, int cin, int h, int w,
                             const double* __restrict wt, int cout,
                             const double* __restrict dout, double* __restrict dw,
                             double* __restrict db, double* __restrict din) {
  const std::size_t plane = std::size_t(h) * w;
  const double* zr = zero_row(w);
  for (int o = 0; o < cout; ++o) {
    const double* dop = dout + o * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += dop[i];
    db[o] += s;
  }
  // Weight gradients: nine shifted dot products per channel pair, one pass.
  for (int o = 0; o < cout; ++o) {
    const double* dop = dout + o * plane;
    for (int i = 0; i < cin; ++i) {
      const double* ip = in + i * plane;
      double* dwp = dw + (std::size_t(o) * cin + i) * 9;
      double a00 = 0, a01 = 0, a02 = 0, a10 = 0, a11 = 0, a12 = 0, a20 = 0, a21 = 0,
             a22 = 0;
      for (int r = 0; r < h; ++r) {
        const double* __restrict dorow = dop + std::size_t(r) * w;
        const double* __restrict r0 = r > 0 ? ip + std::size_t(r - 1) * w : zr;
        const double* __restrict r1 = ip + std::size_t(r) * w;
        const double* __restrict r2 = r + 1 < h ? ip + std::size_t(r + 1) * w : zr;
        if (w == 1) {
          a01 += dorow[0] * r0[0];
          a11 += dorow[0] * r1[0];
          a21 += dorow[0] * r2[0];
          continue;
        }
        {
          const double d = dorow[0];
          a01 += d * r0[0];
          a02 += d * r0[1];
          a11 += d * r1[0];
          a12 += d * r1[1];
          a21 += d * r2[0];
          a22 += d * r2[1];
        }
        for (int c = 1; c + 1 < w; ++c) {
          const double d = dorow[c];
          a00 += d * r0[c - 1];
          a01 += d * r0[c];
          a02 += d * r0[c + 1];
          a10 += d * r1[c - 1];
          a11 += d * r1[c];
          a12 += d * r1[c + 1];
          a20 += d * r2[c - 1];
          a21 += d * r2[c];
          a22 += d * r2[c + 1];
        }
        {
          const double d = dorow[w - 1];
          a00 += d * r0[w - 2];
          a01 += d * r0[w - 1];
          a10 += d * r1[w - 2];
          a11 += d * r1[w - 1];
          a20 += d * r2[w - 2];
          a21 += d * r2[w - 1];
        }
      }
      dwp[0] += a00;
      dwp[1] += a01;
      dwp[2] += a02;
      dwp[3] += a10;
      dwp[4] += a11;
      dwp[5] += a12;
      dwp[6] += a20;
      dwp[7] += a21;
      dwp[8] += a22;
    }
  }
  // Input gradients: correlation of dout with the 180-degree rotated taps.
  if (din) {
    for (int i = 0; i < cin; ++i) {
      double* dip = din + i * plane;
      for (int o = 0; o < cout; ++o) {
        const double* wp = wt + (std::size_t(o) * cin + i) * 9;
        conv3x3_plane_accum(dout + o * plane, h, w, wp[8], wp[7], wp[6], wp[5], wp[4],
                            wp[3], wp[2], wp[1], wp[0], dip);
      }
    }
  }
}

inline double stable_sigmoid(double z) {
  // Clamp keeps outputs strictly inside (0,1) in double precision; beyond
  // +-30 the true gradient is below 1e-13 anyway.
  z = std::clamp(z, -30.0, 30.0);
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// 2x2 average pool, h and w even.
inline void avgpool2_forward(const double* in, int ch, int h, int w, double* out) {
  const int h2 = h / 2, w2 = w / 2;
  const std::size_t plane = std::size_t(h) * w, plane2 = std::size_t(h2) * w2;
  for (int k = 0; k < ch; ++k) {
    const double* a = in + k * plane;
    double* p = out + k * plane2;
    for (int r = 0; r < h2; ++r)
      for (int c = 0; c < w2; ++c) {
        const double* t = a + std::size_t(2 * r) * w + 2 * c;
        p[std::size_t(r) * w2 + c] = 0.25 * (t[0] + t[1] + t[w] + t[w + 1]);
      }
  }
}

// Gradient of avgpool2: spreads each pooled gradient over its 2x2 block.
inline void avgpool2_backward(const double* dout, int ch, int h, int w, double* din) {
  const int h2 = h / 2, w2 = w / 2;
  const std::size_t plane = std::size_t(h) * w, plane2 = std::size_t(h2) * w2;
  for (int k = 0; k < ch; ++k) {
    const double* dp = dout + k * plane2;
    double* d = din + k * plane;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        d[std::size_t(r) * w + c] += 0.25 * dp[std::size_t(r / 2) * w2 + c / 2];
  }
}

}  // namespace cseg::detail
