#pragma once

#include <vector>

#include "cseg/mask.hpp"

namespace cseg {

// Small binary footprint for dilation/erosion. The anchor sits at index
// floor((k-1)/2) on both axes; for odd k that is the geometric center.
struct StructuringElement {
  int size = 1;
  BinaryMask footprint;

  int anchor() const { return (size - 1) / 2; }
};

// Footprint pixel (r,c) is included iff
//   ((r+0.5-k/2)/(k/2))^2 + ((c+0.5-k/2)/(k/2))^2 <= 1
// i.e. the pixel center lies inside the ellipse inscribed in the k×k box.
// Works for even k too (half-pixel centers).
StructuringElement elliptical_element(int k);

// out(p) = 1 iff the footprint anchored at p overlaps a 1-pixel of m.
// Out-of-bounds pixels count as 0.
BinaryMask dilate(const BinaryMask& m, const StructuringElement& se);

// out(p) = 1 iff every footprint pixel anchored at p lands on a 1-pixel of m.
// Out-of-bounds pixels count as 0, so the border erodes.
BinaryMask erode(const BinaryMask& m, const StructuringElement& se);

// erode(dilate(m, se), se): fills holes smaller than the element
BinaryMask close(const BinaryMask& m, const StructuringElement& se);

// Connected components under 8-connectivity. Returns the union of the k
// largest by pixel count; ties broken by the smallest row-major index of a
// component's first pixel. Fewer than k components: m is returned unchanged.
BinaryMask top_k_components(const BinaryMask& m, int k);

int count_components(const BinaryMask& m);

}  // namespace cseg
