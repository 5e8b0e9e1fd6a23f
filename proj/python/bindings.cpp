#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>
#include <vector>

#include "cseg/constraint.hpp"
#include "cseg/discriminator.hpp"
#include "cseg/losses.hpp"
#include "cseg/mask.hpp"
#include "cseg/metrics.hpp"
#include "cseg/morphology.hpp"
#include "cseg/synth.hpp"

namespace py = pybind11;

namespace {

using MaskArray = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;
using GridArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

cseg::BinaryMask to_mask(const MaskArray& a) {
  if (a.ndim() != 2) throw std::invalid_argument("mask must be a 2D uint8 array");
  cseg::BinaryMask m(int(a.shape(0)), int(a.shape(1)));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (py::ssize_t j = 0; j < a.shape(1); ++j)
      m.data[size_t(i) * size_t(a.shape(1)) + size_t(j)] = r(i, j) ? 1 : 0;
  return m;
}

py::array_t<uint8_t> from_mask(const cseg::BinaryMask& m) {
  py::array_t<uint8_t> a({m.height, m.width});
  auto w = a.mutable_unchecked<2>();
  for (int i = 0; i < m.height; ++i)
    for (int j = 0; j < m.width; ++j) w(i, j) = m.at(i, j);
  return a;
}

cseg::RealGrid to_grid(const GridArray& a) {
  if (a.ndim() != 2) throw std::invalid_argument("grid must be a 2D float array");
  cseg::RealGrid g(int(a.shape(0)), int(a.shape(1)));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (py::ssize_t j = 0; j < a.shape(1); ++j)
      g.data[size_t(i) * size_t(a.shape(1)) + size_t(j)] = r(i, j);
  return g;
}

py::array_t<double> from_grid(const cseg::RealGrid& g) {
  py::array_t<double> a({g.height, g.width});
  auto w = a.mutable_unchecked<2>();
  for (int i = 0; i < g.height; ++i)
    for (int j = 0; j < g.width; ++j) w(i, j) = g.at(i, j);
  return a;
}

py::tuple loss_tuple(const cseg::LossResult& r) {
  return py::make_tuple(r.value, from_grid(r.grad));
}

py::list phantom_list(const cseg::Dataset& ds) {
  py::list out;
  for (const cseg::Sample& s : ds.samples)
    out.append(py::make_tuple(from_grid(s.image), from_mask(s.mask)));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "constrained lesion segmentation core operations";

  // morphology
  m.def("dilate", [](const MaskArray& a, int k) {
    return from_mask(cseg::dilate(to_mask(a), cseg::elliptical_element(k)));
  }, py::arg("mask"), py::arg("k"), "binary dilation with an elliptical element");
  m.def("erode", [](const MaskArray& a, int k) {
    return from_mask(cseg::erode(to_mask(a), cseg::elliptical_element(k)));
  }, py::arg("mask"), py::arg("k"), "binary erosion (zero padding) with an elliptical element");
  m.def("close", [](const MaskArray& a, int k) {
    return from_mask(cseg::close(to_mask(a), cseg::elliptical_element(k)));
  }, py::arg("mask"), py::arg("k"), "morphological closing with an elliptical element");
  m.def("top_k_components", [](const MaskArray& a, int k) {
    return from_mask(cseg::top_k_components(to_mask(a), k));
  }, py::arg("mask"), py::arg("k"), "keep the k largest 8-connected components");

  // constraint construction
  m.def("lung_plus_space",
        [](const GridArray& prob, double bin_t, int k_components, int close_k, int dilate_k) {
          cseg::LungPlusConfig cfg{bin_t, k_components, close_k, dilate_k};
          return from_mask(cseg::lung_plus_space(to_grid(prob), cfg));
        },
        py::arg("prob"), py::arg("bin_t") = 0.5, py::arg("k_components") = 2,
        py::arg("close_k") = 19, py::arg("dilate_k") = 15,
        "threshold -> top components -> close -> dilate");
  m.def("threshold", [](const GridArray& y, double t) {
    return from_mask(cseg::threshold(to_grid(y), t));
  }, py::arg("prob"), py::arg("t"));
  m.def("all_ones", [](int h, int w) { return from_mask(cseg::all_ones(h, w)); },
        py::arg("height"), py::arg("width"));
  m.def("coverage_rate", [](const MaskArray& c, const MaskArray& s) {
    return cseg::coverage_rate(to_mask(c), to_mask(s));
  }, py::arg("candidate"), py::arg("annotation"), "|c n s| / |s|");
  m.def("make_label", &cseg::make_label, py::arg("coverage"), py::arg("tau"),
        "1 iff coverage strictly exceeds tau");
  m.def("fuse", [](const GridArray& img, const MaskArray& c) {
    cseg::FusedInput f = cseg::fuse(to_grid(img), to_mask(c));
    return py::make_tuple(from_grid(f.image), from_grid(f.constraint), from_grid(f.masked));
  }, py::arg("image"), py::arg("constraint"), "(image, constraint, image*constraint) planes");

  // losses
  m.def("dice_loss", [](const GridArray& y, const MaskArray& s) {
    return loss_tuple(cseg::dice_loss(to_grid(y), to_mask(s)));
  }, py::arg("pred"), py::arg("target"), "(value, grad) of the soft dice loss");
  m.def("constraint_penalty", [](const GridArray& y, const MaskArray& c) {
    return loss_tuple(cseg::constraint_penalty(to_grid(y), to_mask(c)));
  }, py::arg("pred"), py::arg("constraint"), "(value, grad) of the outside-mass penalty");
  m.def("constrained_loss", [](const GridArray& y, const MaskArray& s, const MaskArray& c,
                               double lam) {
    return loss_tuple(cseg::constrained_loss(to_grid(y), to_mask(s), to_mask(c), lam));
  }, py::arg("pred"), py::arg("target"), py::arg("constraint"), py::arg("lam"),
     "(value, grad) of dice + lam * penalty");

  // metrics
  m.def("iou", [](const MaskArray& a, const MaskArray& b) {
    return cseg::iou(to_mask(a), to_mask(b));
  }, py::arg("pred"), py::arg("gt"));
  m.def("dsc", [](const MaskArray& a, const MaskArray& b) {
    return cseg::dsc(to_mask(a), to_mask(b));
  }, py::arg("pred"), py::arg("gt"));
  m.def("hausdorff", [](const MaskArray& a, const MaskArray& b) {
    return cseg::hausdorff(to_mask(a), to_mask(b));
  }, py::arg("pred"), py::arg("gt"));
  m.def("auroc", [](const std::vector<double>& scores, const std::vector<int>& labels) {
    std::vector<uint8_t> l(labels.begin(), labels.end());
    return cseg::auroc(scores, l);
  }, py::arg("scores"), py::arg("labels"), "midrank Mann-Whitney AUROC");

  // phantom generation
  m.def("lung_phantoms", [](int n, std::uint64_t seed) {
    cseg::PhantomConfig cfg;
    cfg.n_lung = n;
    cfg.seed = seed;
    return phantom_list(cseg::gen_lung_dataset(cfg));
  }, py::arg("n"), py::arg("seed") = 0, "list of (image, lung_mask) pairs");
  m.def("lesion_phantoms", [](int n, std::uint64_t seed) {
    cseg::PhantomConfig cfg;
    cfg.n_lesion = n;
    cfg.seed = seed;
    return phantom_list(cseg::gen_lesion_dataset(cfg));
  }, py::arg("n"), py::arg("seed") = 0, "list of (image, lesion_mask) pairs");
  m.def("true_lung_plus", [](const MaskArray& lung) {
    return from_mask(cseg::true_lung_plus(to_mask(lung)));
  }, py::arg("lung_mask"), "lung+ space computed from a ground-truth lung mask");
}
