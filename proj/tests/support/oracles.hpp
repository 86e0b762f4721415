#pragma once

// Naive reference implementations used as test oracles. Everything here works
// on plain std::vector<double> loops, independent of the Tensor/tape path it
// checks.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "dsf/evaluation.hpp"
#include "dsf/instance_fusion.hpp"
#include "dsf/params.hpp"

namespace dsf::test {

using Mat = std::vector<std::vector<double>>;

inline Mat naive_matmul(const Mat& a, const Mat& b) {
  size_t p = a.size(), q = b.size(), r = b[0].size();
  Mat c(p, std::vector<double>(r, 0.0));
  for (size_t i = 0; i < p; ++i)
    for (size_t j = 0; j < r; ++j)
      for (size_t k = 0; k < q; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat naive_softmax_rows(const Mat& x) {
  Mat y(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    double mx = x[i][0];
    for (double v : x[i]) mx = std::max(mx, v);
    double denom = 0.0;
    y[i].resize(x[i].size());
    for (size_t j = 0; j < x[i].size(); ++j) {
      y[i][j] = std::exp(x[i][j] - mx);
      denom += y[i][j];
    }
    for (double& v : y[i]) v /= denom;
  }
  return y;
}

// 6-loop cross-correlation, 3x3 kernel, padding 1
inline std::vector<double> naive_conv2d(const std::vector<double>& x, int ci, int h, int w,
                                        const std::vector<double>& k, int co, int stride) {
  int ho = (h - 1) / stride + 1, wo = (w - 1) / stride + 1;
  std::vector<double> out(static_cast<size_t>(co) * ho * wo, 0.0);
  for (int oc = 0; oc < co; ++oc)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox)
        for (int ic = 0; ic < ci; ++ic)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              int iy = oy * stride + ky - 1, ix = ox * stride + kx - 1;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              out[(static_cast<size_t>(oc) * ho + oy) * wo + ox] +=
                  x[(static_cast<size_t>(ic) * h + iy) * w + ix] *
                  k[((static_cast<size_t>(oc) * ci + ic) * 3 + ky) * 3 + kx];
            }
  return out;
}

// weights pulled out of a LinearLayer for loop-based evaluation
struct NaiveLinear {
  Mat w;  // [in][out]
  std::vector<double> b;
};

inline NaiveLinear naive_linear_of(const LinearLayer& l) {
  NaiveLinear n;
  int in = l.w.dim(0), out = l.w.dim(1);
  n.w.assign(in, std::vector<double>(out));
  for (int i = 0; i < in; ++i)
    for (int j = 0; j < out; ++j) n.w[i][j] = l.w.data()[static_cast<size_t>(i) * out + j];
  n.b.assign(l.b.data().begin(), l.b.data().end());
  return n;
}

inline std::vector<double> apply_naive(const NaiveLinear& l, const std::vector<double>& x) {
  std::vector<double> y(l.b);
  for (size_t i = 0; i < x.size(); ++i)
    for (size_t j = 0; j < y.size(); ++j) y[j] += x[i] * l.w[i][j];
  return y;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// per-pair evaluation of the frame-level fusion equations on raw rows
struct NaiveFrameFusion {
  Mat affinity, similarity, enhanced;
};

inline NaiveFrameFusion naive_frame_fusion(const Mat& rows, const NaiveLinear& phi,
                                           const NaiveLinear& varphi, const NaiveLinear& theta) {
  size_t nd = rows.size();
  NaiveFrameFusion out;
  out.affinity.assign(nd, std::vector<double>(nd, 0.0));
  for (size_t i = 0; i < nd; ++i) {
    std::vector<double> pi = apply_naive(phi, rows[i]);
    for (size_t j = 0; j < nd; ++j) {
      out.affinity[i][j] = dot(pi, apply_naive(varphi, rows[j]));
    }
  }
  out.similarity = naive_softmax_rows(out.affinity);
  out.enhanced.assign(nd, std::vector<double>());
  for (size_t i = 0; i < nd; ++i) {
    std::vector<double> acc = rows[i];
    for (size_t j = 0; j < nd; ++j) {
      std::vector<double> tj = apply_naive(theta, rows[j]);
      for (size_t t = 0; t < acc.size(); ++t) acc[t] += out.similarity[i][j] * tj[t];
    }
    out.enhanced[i] = acc;
  }
  return out;
}

// independent re-derivation of the geometric embedding formula
inline std::vector<double> naive_geometric_embed(double wk, double hk, double wl, double hl, int d_g) {
  double g[3] = {std::log(wk / wl), std::log(hk / hl),
                 std::log(std::fabs(wk / hk - wl / hl) + 1e-3)};
  int per = d_g / 3, pairs = per / 2;
  std::vector<double> out(static_cast<size_t>(d_g));
  for (int c = 0; c < 3; ++c) {
    for (int j = 0; j < pairs; ++j) {
      double wave = std::pow(1000.0, 2.0 * j / per);
      out[c * per + 2 * j] = std::sin(g[c] / wave);
      out[c * per + 2 * j + 1] = std::cos(g[c] / wave);
    }
  }
  return out;
}

struct NaiveInstanceFusion {
  Mat z, r, s, fused;
};

inline NaiveInstanceFusion naive_instance_fusion(const Mat& q, const std::vector<BoxF>& boxes,
                                                 const NaiveLinear& xi, const NaiveLinear& zeta,
                                                 const NaiveLinear& gamma, const NaiveLinear& geo_psi,
                                                 int d_g) {
  size_t m = q.size();
  NaiveInstanceFusion out;
  out.z.assign(m, std::vector<double>(m, 0.0));
  out.r.assign(m, std::vector<double>(m, 0.0));
  for (size_t k = 0; k < m; ++k) {
    std::vector<double> xk = apply_naive(xi, q[k]);
    for (size_t l = 0; l < m; ++l) {
      out.z[k][l] = dot(xk, apply_naive(zeta, q[l]));
      std::vector<double> emb = naive_geometric_embed(boxes[k].width(), boxes[k].height(),
                                                      boxes[l].width(), boxes[l].height(), d_g);
      out.r[k][l] = apply_naive(geo_psi, emb)[0];
    }
  }
  Mat zr(m, std::vector<double>(m));
  for (size_t k = 0; k < m; ++k)
    for (size_t l = 0; l < m; ++l) zr[k][l] = out.z[k][l] + out.r[k][l];
  out.s = naive_softmax_rows(zr);
  out.fused.assign(m, std::vector<double>());
  for (size_t k = 0; k < m; ++k) {
    std::vector<double> acc = q[k];
    for (size_t l = 0; l < m; ++l) {
      std::vector<double> gl = apply_naive(gamma, q[l]);
      for (size_t t = 0; t < acc.size(); ++t) acc[t] += out.s[k][l] * gl[t];
    }
    out.fused[k] = acc;
  }
  return out;
}

// O(k^2) reference NMS, highest score first, lower index on ties
inline std::vector<int> reference_nms(const std::vector<BoxF>& boxes, const std::vector<double>& scores,
                                      double thresh) {
  std::vector<int> order(boxes.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> keep;
  std::vector<bool> dead(boxes.size(), false);
  for (int i : order) {
    if (dead[i]) continue;
    keep.push_back(i);
    for (int j : order) {
      if (j == i || dead[j]) continue;
      if (iou(boxes[i], boxes[j]) > thresh) dead[j] = true;
    }
  }
  return keep;
}

// Independently written evaluator: recall points enumerated per threshold
// rather than cumulatively, interpolated AP integrated right-to-left.
inline double reference_class_ap(std::vector<DetRecord> dets, std::vector<GtEntry> gts,
                                 double iou_thresh) {
  int npos = 0;
  for (const GtEntry& g : gts)
    if (!g.ignore) ++npos;
  if (npos == 0) return -1.0;
  std::stable_sort(dets.begin(), dets.end(),
                   [](const DetRecord& a, const DetRecord& b) { return a.score > b.score; });
  std::vector<bool> used(gts.size(), false);
  std::vector<int> marks;  // 1 tp, 0 fp
  for (const DetRecord& d : dets) {
    int pick = -1;
    double best = iou_thresh;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].sequence_id != d.sequence_id || gts[g].frame != d.frame) continue;
      double v = iou(d.box, gts[g].box);
      if (v >= best) {
        best = v;
        pick = static_cast<int>(g);
      }
    }
    if (pick < 0) {
      marks.push_back(0);
    } else if (gts[pick].ignore) {
      continue;
    } else if (!used[pick]) {
      used[pick] = true;
      marks.push_back(1);
    } else {
      marks.push_back(0);
    }
  }
  // integrate precision over recall from the right
  double ap = 0.0;
  int total = static_cast<int>(marks.size());
  std::vector<double> prec(total), rec(total);
  int tp = 0;
  for (int i = 0; i < total; ++i) {
    tp += marks[i];
    prec[i] = double(tp) / (i + 1);
    rec[i] = double(tp) / npos;
  }
  double best_prec = 0.0, last_rec = rec.empty() ? 0.0 : rec.back();
  double carry = 0.0;
  for (int i = total - 1; i >= 0; --i) {
    best_prec = std::max(best_prec, prec[i]);
    double r_lo = i > 0 ? rec[i - 1] : 0.0;
    carry += (rec[i] - r_lo) * best_prec;
  }
  (void)last_rec;
  ap = carry;
  return ap;
}

// reference mAP: unweighted mean over classes that have ground truth
inline double reference_map(const std::vector<DetRecord>& dets, const std::vector<GtEntry>& gts,
                            int num_classes, double iou_thresh = 0.5) {
  double sum = 0.0;
  int classes = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<DetRecord> dc;
    for (const DetRecord& d : dets)
      if (d.class_id == c) dc.push_back(d);
    std::vector<GtEntry> gc;
    for (const GtEntry& g : gts)
      if (g.class_id == c) gc.push_back(g);
    double ap = reference_class_ap(std::move(dc), std::move(gc), iou_thresh);
    if (ap < 0) continue;
    sum += ap;
    ++classes;
  }
  return classes ? sum / classes : 0.0;
}

}  // namespace dsf::test
