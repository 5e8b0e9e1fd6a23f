#include "cseg/morphology.hpp"

#include <algorithm>
#include <stdexcept>

namespace cseg {

StructuringElement elliptical_element(int k) {
  if (k < 1) throw std::invalid_argument("elliptical_element: k must be >= 1");
  StructuringElement se;
  se.size = k;
  se.footprint = BinaryMask(k, k);
  const double half = k / 2.0;
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      double dr = (r + 0.5 - half) / half;
      double dc = (c + 0.5 - half) / half;
      if (dr * dr + dc * dc <= 1.0) se.footprint.set(r, c, 1);
    }
  }
  return se;
}

namespace {

// Column interval of footprint row r, relative to the anchor. Elliptical
// footprints are row-convex, so intervals describe them exactly; the general
// fallback below covers anything else.
struct RowSpan {
  int dr;   // row offset from anchor
  int lo;   // first column offset
  int hi;   // last column offset (inclusive)
};

bool row_spans(const StructuringElement& se, std::vector<RowSpan>& spans) {
  const int k = se.size, a = se.anchor();
  spans.clear();
  for (int r = 0; r < k; ++r) {
    int lo = -1, hi = -1;
    for (int c = 0; c < k; ++c) {
      if (!se.footprint.at(r, c)) continue;
      if (lo < 0) lo = c;
      hi = c;
    }
    if (lo < 0) continue;
    for (int c = lo; c <= hi; ++c)
      if (!se.footprint.at(r, c)) return false;  // not row-convex
    spans.push_back({r - a, lo - a, hi - a});
  }
  return true;
}

// prefix[r][c] = number of 1s in row r, columns [0, c)
std::vector<std::vector<int>> row_prefix_sums(const BinaryMask& m) {
  std::vector<std::vector<int>> pre(m.height, std::vector<int>(m.width + 1, 0));
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c)
      pre[r][c + 1] = pre[r][c] + m.at(r, c);
  return pre;
}

BinaryMask dilate_generic(const BinaryMask& m, const StructuringElement& se) {
  BinaryMask out(m.height, m.width);
  const int k = se.size, a = se.anchor();
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c) {
      if (!m.at(r, c)) continue;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          if (!se.footprint.at(i, j)) continue;
          int pr = r - (i - a), pc = c - (j - a);
          if (out.in_bounds(pr, pc)) out.set(pr, pc, 1);
        }
    }
  return out;
}

BinaryMask erode_generic(const BinaryMask& m, const StructuringElement& se) {
  BinaryMask out(m.height, m.width);
  const int k = se.size, a = se.anchor();
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c) {
      bool all = true;
      for (int i = 0; i < k && all; ++i)
        for (int j = 0; j < k; ++j) {
          if (!se.footprint.at(i, j)) continue;
          int pr = r + (i - a), pc = c + (j - a);
          if (!m.in_bounds(pr, pc) || !m.at(pr, pc)) {
            all = false;
            break;
          }
        }
      if (all) out.set(r, c, 1);
    }
  return out;
}

}  // namespace

BinaryMask dilate(const BinaryMask& m, const StructuringElement& se) {
  std::vector<RowSpan> spans;
  if (!row_spans(se, spans)) return dilate_generic(m, se);
  auto pre = row_prefix_sums(m);
  BinaryMask out(m.height, m.width);
  for (int r = 0; r < m.height; ++r) {
    for (const RowSpan& s : spans) {
      int sr = r + s.dr;
      if (sr < 0 || sr >= m.height) continue;
      const auto& p = pre[sr];
      for (int c = 0; c < m.width; ++c) {
        if (out.at(r, c)) continue;
        int lo = std::max(0, c + s.lo);
        int hi = std::min(m.width - 1, c + s.hi);
        if (lo <= hi && p[hi + 1] - p[lo] > 0) out.set(r, c, 1);
      }
    }
  }
  return out;
}

BinaryMask erode(const BinaryMask& m, const StructuringElement& se) {
  std::vector<RowSpan> spans;
  if (!row_spans(se, spans)) return erode_generic(m, se);
  auto pre = row_prefix_sums(m);
  BinaryMask out(m.height, m.width, 1);
  for (int r = 0; r < m.height; ++r) {
    for (const RowSpan& s : spans) {
      int sr = r + s.dr;
      if (sr < 0 || sr >= m.height) {
        for (int c = 0; c < m.width; ++c) out.set(r, c, 0);
        break;
      }
      const auto& p = pre[sr];
      for (int c = 0; c < m.width; ++c) {
        if (!out.at(r, c)) continue;
        int lo = c + s.lo, hi = c + s.hi;
        if (lo < 0 || hi >= m.width || p[hi + 1] - p[lo] != hi - lo + 1)
          out.set(r, c, 0);
      }
    }
  }
  return out;
}

BinaryMask close(const BinaryMask& m, const StructuringElement& se) {
  return erode(dilate(m, se), se);
}

namespace {

struct Component {
  long long area = 0;
  int first_index = 0;
  std::vector<int> pixels;
};

std::vector<Component> find_components(const BinaryMask& m) {
  std::vector<Component> comps;
  std::vector<uint8_t> seen(m.size(), 0);
  std::vector<int> stack;
  for (int idx = 0; idx < int(m.size()); ++idx) {
    if (!m.data[idx] || seen[idx]) continue;
    Component comp;
    comp.first_index = idx;
    stack.assign(1, idx);
    seen[idx] = 1;
    while (!stack.empty()) {
      int cur = stack.back();
      stack.pop_back();
      comp.pixels.push_back(cur);
      int r = cur / m.width, c = cur % m.width;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          int nr = r + dr, nc = c + dc;
          if (!m.in_bounds(nr, nc)) continue;
          int nidx = nr * m.width + nc;
          if (m.data[nidx] && !seen[nidx]) {
            seen[nidx] = 1;
            stack.push_back(nidx);
          }
        }
    }
    comp.area = (long long)comp.pixels.size();
    comps.push_back(std::move(comp));
  }
  return comps;
}

}  // namespace

BinaryMask top_k_components(const BinaryMask& m, int k) {
  if (k < 1) throw std::invalid_argument("top_k_components: k must be >= 1");
  auto comps = find_components(m);
  if (int(comps.size()) <= k) return m;
  std::sort(comps.begin(), comps.end(), [](const Component& a, const Component& b) {
    if (a.area != b.area) return a.area > b.area;
    return a.first_index < b.first_index;
  });
  BinaryMask out(m.height, m.width);
  for (int i = 0; i < k; ++i)
    for (int idx : comps[i].pixels) out.data[idx] = 1;
  return out;
}

int count_components(const BinaryMask& m) {
  return int(find_components(m).size());
}

}  // namespace cseg
