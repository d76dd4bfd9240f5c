#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "urbanmosaic/service.hpp"
#include "urbanmosaic/synthetic.hpp"

namespace py = pybind11;
using namespace urbanmosaic;

namespace {

// JSON crosses the boundary as text; the Python side decodes it.
std::string generate(const std::filesystem::path& out, std::size_t images, std::size_t clusters, std::uint64_t seed,
                     double sigma) {
    SyntheticParams p;
    p.images = images;
    p.clusters = clusters;
    p.seed = seed;
    p.sigma = sigma;
    SyntheticCorpus corpus(p);
    corpus.write(out);
    return Json{{"out", out.string()}, {"images", corpus.size()}, {"clusters", clusters}}.dump();
}

std::string index_features(const std::filesystem::path& features, const std::filesystem::path& index_dir,
                           std::size_t bits, std::uint64_t seed, unsigned threads) {
    const auto idx = build_index_dir(features, index_dir, bits, seed, threads);
    return Json{{"index_dir", index_dir.string()}, {"images", idx.image_count()}, {"bits", bits}}.dump();
}

class PyService {
public:
    PyService(const std::filesystem::path& store, const std::filesystem::path& index_dir,
              const std::filesystem::path& workspace)
        : service_(load_snapshot(store, index_dir), workspace) {}

    py::tuple handle(const std::string& method, const std::string& path, const std::string& body,
                     const std::map<std::string, std::string>& params) {
        Response r;
        {
            py::gil_scoped_release release;
            r = service_.handle(method, path, body, params);
        }
        return py::make_tuple(r.status, py::bytes(r.body), r.content_type);
    }

private:
    Service service_;
};

}  // namespace

PYBIND11_MODULE(_urbanmosaic, m) {
    m.doc() = "Street-level image search over hashed region descriptors";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<NotFoundError>(m, "NotFoundError", PyExc_FileNotFoundError);
    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

    m.attr("REGION_DIM") = kRegionDim;
    m.attr("COARSE_DIM") = kCoarseDim;
    m.attr("RAW_BYTES_PER_IMAGE") = kRawBytesPerImage;
    m.attr("VECTORS_PER_IMAGE") = kVectorsPerImage;
    m.attr("DEFAULT_BITS") = kDefaultBits;
    m.attr("DEFAULT_TAU") = kDefaultTau;

    m.def("generate", &generate, py::arg("out"), py::arg("images") = 1000, py::arg("clusters") = 10,
          py::arg("seed") = 7, py::arg("sigma") = 0.15, py::call_guard<py::gil_scoped_release>());
    m.def("build_index", &index_features, py::arg("features"), py::arg("index_dir"), py::arg("bits") = kDefaultBits,
          py::arg("seed") = 7, py::arg("threads") = 0, py::call_guard<py::gil_scoped_release>());
    m.def("max_hamming_within", &max_hamming_within, py::arg("tau"), py::arg("bits") = kDefaultBits);

    py::class_<PyService>(m, "_Service")
        .def(py::init<const std::filesystem::path&, const std::filesystem::path&, const std::filesystem::path&>(),
             py::arg("store"), py::arg("index_dir"), py::arg("workspace") = std::filesystem::path{})
        .def("handle", &PyService::handle, py::arg("method"), py::arg("path"), py::arg("body") = "",
             py::arg("params") = std::map<std::string, std::string>{});
}
