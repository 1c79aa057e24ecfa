#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "laysyn/catalog.hpp"
#include "laysyn/cost_model.hpp"
#include "laysyn/error.hpp"
#include "laysyn/layout.hpp"
#include "laysyn/pipeline.hpp"
#include "laysyn/program.hpp"
#include "laysyn/swizzle.hpp"

namespace py = pybind11;
using namespace laysyn;

namespace {

IntTuple to_tuple(const py::handle& h) {
  if (py::isinstance<py::int_>(h)) return IntTuple(h.cast<int64_t>());
  std::vector<IntTuple> elems;
  for (const auto& x : h) elems.push_back(to_tuple(x));
  return IntTuple(std::move(elems));
}

py::object from_tuple(const IntTuple& t) {
  if (t.is_leaf()) return py::int_(t.value());
  py::tuple out(t.rank());
  for (std::size_t i = 0; i < t.rank(); ++i) out[i] = from_tuple(t[i]);
  return std::move(out);
}

// Options are keyword-only in Python; zero keeps the library default.
PipelineOptions options(std::size_t max_candidates, bool all_candidates) {
  PipelineOptions o;
  if (max_candidates > 0) o.max_candidates = max_candidates;
  o.all_candidates = all_candidates;
  return o;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Layout algebra and layout synthesis for tile programs";

  // Held for the life of the interpreter.
  static PyObject* error = py::exception<Error>(m, "LaysynError").inc_ref().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error)(e.detail());
      exc.attr("code") = std::string(errc_name(e.code()));
      PyErr_SetObject(error, exc.ptr());
    }
  });

  py::class_<Layout>(m, "Layout")
      .def(py::init([](const py::object& shape, const py::object& stride) { return Layout(to_tuple(shape), to_tuple(stride)); }),
           py::arg("shape"), py::arg("stride"))
      .def_static("parse", &parse_layout, py::arg("text"))
      .def_static("colex", [](const py::object& shape) { return Layout::colex(to_tuple(shape)); })
      .def_property_readonly("shape", [](const Layout& l) { return from_tuple(l.shape()); })
      .def_property_readonly("stride", [](const Layout& l) { return from_tuple(l.stride()); })
      .def_property_readonly("size", &Layout::size)
      .def_property_readonly("cosize", &Layout::cosize)
      .def("mode", &Layout::mode)
      .def("__call__", [](const Layout& l, const py::object& c) { return l(to_tuple(c)); })
      .def("__len__", [](const Layout& l) { return l.size(); })
      .def("__eq__", [](const Layout& a, const Layout& b) { return a == b; })
      .def("__str__", [](const Layout& l) { return to_string(l); })
      .def("__repr__", [](const Layout& l) { return "Layout('" + to_string(l) + "')"; });

  m.def("compose", &compose, py::arg("a"), py::arg("b"));
  m.def("inverse", &inverse, py::arg("a"));
  m.def("complement", &complement, py::arg("a"), py::arg("m"));
  m.def("coalesce", &coalesce, py::arg("a"));
  m.def("concat", &concat, py::arg("a"), py::arg("b"));
  m.def("restrict_first_mode", &restrict_first_mode, py::arg("a"), py::arg("n"));
  m.def("pointwise_equal", &pointwise_equal);
  m.def("decode_colex", [](int64_t i, const std::vector<int64_t>& ext) { return decode_colex(i, ext); });

  py::class_<Swizzle>(m, "Swizzle")
      .def(py::init(&make_swizzle), py::arg("bits"), py::arg("base"), py::arg("shift"))
      .def_static("parse", &parse_swizzle)
      .def_readonly("bits", &Swizzle::bits)
      .def_readonly("base", &Swizzle::base)
      .def_readonly("shift", &Swizzle::shift)
      .def("__call__", &Swizzle::operator())
      .def("__str__", [](const Swizzle& s) { return to_string(s); });
  m.def(
      "bank_conflicts",
      [](const std::vector<int64_t>& addresses, int width) { return bank_conflicts(AccessPattern{addresses, width}); },
      py::arg("addresses"), py::arg("width") = 4);

  py::class_<ProgramGraph>(m, "Program")
      .def_static("parse", [](const std::string& text) { return parse_program(text); })
      .def_readonly("threads", &ProgramGraph::threads)
      .def("__str__", &print_program);
  py::class_<Catalog>(m, "Catalog")
      .def_static("load", &load_catalog, py::arg("path"))
      .def_static("parse", [](const std::string& text) { return parse_catalog(text); })
      .def_readonly("arch", &Catalog::arch);

  m.def(
      "synthesize",
      [](const ProgramGraph& g, const Catalog& cat, std::size_t max_candidates, bool all_candidates) {
        const auto o = options(max_candidates, all_candidates);
        return report_json(run_pipeline(g, cat, o), o);
      },
      py::arg("program"), py::arg("catalog"), py::kw_only(), py::arg("max_candidates") = 0,
      py::arg("all_candidates") = false, "Runs the whole pipeline and returns the JSON report text.");
  m.def("explain", &explain, py::arg("program"), py::arg("catalog"), py::arg("op"));

  m.def(
      "schedule",
      [](const std::vector<std::tuple<int64_t, int64_t, std::vector<int>>>& ops) {
        std::vector<SeqOp> seq;
        for (const auto& [issue, completion, deps] : ops)
          seq.push_back({static_cast<int>(seq.size()), 1, issue, completion, deps});
        return schedule(seq).total_cycles;
      },
      py::arg("ops"), "Total cycles for (issue, completion, deps) tuples issued in order.");
}
