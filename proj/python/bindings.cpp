#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "firescar/dataset.hpp"
#include "firescar/hpo.hpp"
#include "firescar/pipeline.hpp"
#include "firescar/raster.hpp"
#include "firescar/train.hpp"
#include "firescar/unet.hpp"

namespace py = pybind11;
using namespace firescar;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Grid<double> to_grid(const Array& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
    const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    return Grid<double>(h, w, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Grid<double>& g) {
    Array out({g.height(), g.width()});
    std::copy(g.values().begin(), g.values().end(), out.mutable_data());
    return out;
}

Mask to_mask(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D mask");
    Mask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
    raster::check_binary(m);
    return m;
}

py::array_t<std::uint8_t> from_mask(const Mask& m) {
    py::array_t<std::uint8_t> out({m.height(), m.width()});
    std::copy(m.values().begin(), m.values().end(), out.mutable_data());
    return out;
}

py::dict counts_dict(const train::Confusion& c) {
    py::dict d;
    d["tp"] = c.tp, d["fp"] = c.fp, d["fn"] = c.fn, d["tn"] = c.tn;
    return d;
}

pipeline::RunConfig run_config(const std::map<std::string, std::string>& kv) {
    return pipeline::RunConfig::from_key_values(KeyValues(kv.begin(), kv.end()));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Burned-area mapping core";

    py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<pipeline::MissingArtifact>(m, "MissingArtifact", PyExc_FileNotFoundError);

    m.def("ndvi", [](const Array& nir, const Array& red) { return to_array(raster::compute_ndvi(to_grid(nir), to_grid(red))); });
    m.def("nbr", [](const Array& nir, const Array& swir2) { return to_array(raster::compute_nbr(to_grid(nir), to_grid(swir2))); });
    m.def(
        "rdnbr",
        [](const Array& pre, const Array& post, bool unit) {
            return to_array(raster::compute_rdnbr(to_grid(pre), to_grid(post),
                                                  unit ? raster::NbrEncoding::Unit : raster::NbrEncoding::Thousandths));
        },
        py::arg("nbr_pre"), py::arg("nbr_post"), py::arg("unit") = false);

    m.def("confusion", [](const py::array_t<std::uint8_t>& pred, const py::array_t<std::uint8_t>& label) {
        return counts_dict(train::confusion(to_mask(pred), to_mask(label)));
    });
    m.def("dice", &train::dice, py::arg("tp"), py::arg("fp"), py::arg("fn"));
    m.def("omission", &train::omission, py::arg("tp"), py::arg("fn"));
    m.def("commission", &train::commission, py::arg("fp"), py::arg("tp"), py::arg("fn"));
    m.def("conventional_commission", &train::conventional_commission, py::arg("fp"), py::arg("tp"));
    m.def("bce_loss", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& p,
                         const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& y) {
        if (p.size() != y.size()) throw py::value_error("probabilities and labels differ in size");
        return train::bce_loss<double>({p.data(), static_cast<std::size_t>(p.size())},
                                       {y.data(), static_cast<std::size_t>(y.size())});
    });

    m.def(
        "make_crop",
        [](std::tuple<int, int, int, int> bbox, const std::string& variant, std::tuple<int, int> extent) -> py::object {
            raster::FireRecord r;
            r.scar_bbox = {std::get<0>(bbox), std::get<1>(bbox), std::get<2>(bbox), std::get<3>(bbox)};
            const auto out = dataset::make_crop(r, dataset::parse_variant(variant), {0, 0, std::get<0>(extent), std::get<1>(extent)});
            py::dict d;
            if (!out.accepted()) {
                d["rejection"] = out.rejection;
                return std::move(d);
            }
            const auto& c = *out.crop;
            d["rect"] = py::make_tuple(c.crop_rect.row, c.crop_rect.col, c.crop_rect.height, c.crop_rect.width);
            d["pad"] = py::make_tuple(c.pad_needed.top, c.pad_needed.bottom, c.pad_needed.left, c.pad_needed.right);
            return std::move(d);
        },
        py::arg("bbox"), py::arg("variant"), py::arg("extent") = std::make_tuple(1024, 1024));
    m.def(
        "filter_distant_components",
        [](const py::array_t<std::uint8_t>& mask, double pixel_size_m, double max_distance_m) {
            const auto r = dataset::filter_distant_components(raster::ScarLabel{to_mask(mask)}, pixel_size_m, max_distance_m);
            return py::make_tuple(from_mask(r.label.mask), r.components, r.removed);
        },
        py::arg("mask"), py::arg("pixel_size_m") = 30.0, py::arg("max_distance_m") = dataset::kSecondaryScarDistanceM);

    m.def(
        "parameter_count",
        [](int filters, int depth) {
            unet::UNetConfig c;
            c.initial_filters = filters, c.depth = depth;
            return unet::parameter_count(c);
        },
        py::arg("initial_filters"), py::arg("depth") = 4);
    m.def(
        "deepest_width",
        [](int filters, int depth) {
            unet::UNetConfig c;
            c.initial_filters = filters, c.depth = depth;
            c.validate();
            return c.deepest_width();
        },
        py::arg("initial_filters"), py::arg("depth") = 4);
    m.def(
        "unet_forward",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& x, int filters, std::uint64_t seed) {
            if (x.ndim() != 4) throw py::value_error("expected N x C x H x W");
            unet::UNetConfig c;
            c.in_channels = static_cast<int>(x.shape(1));
            c.input_size = static_cast<int>(x.shape(2));
            c.initial_filters = filters;
            if (x.shape(3) != x.shape(2)) throw py::value_error("input must be square");
            unet::UNet<float> model(c, seed);
            unet::Tensor<float> in(static_cast<int>(x.shape(0)), c.in_channels, c.input_size, c.input_size);
            std::copy(x.data(), x.data() + x.size(), in.data.begin());
            const auto y = model.forward(in);
            py::array_t<float> out({y.n, y.c, y.h, y.w});
            std::copy(y.data.begin(), y.data.end(), out.mutable_data());
            return out;
        },
        py::arg("x"), py::arg("initial_filters") = 8, py::arg("seed") = 0);

    m.def("default_grid", [] {
        py::list rows;
        for (const auto& r : hpo::default_paper_grid().rows) {
            py::dict d;
            d["name"] = r.name;
            d["configuration"] = r.configuration;
            d["config"] = r.config.to_key_values();
            rows.append(d);
        }
        return rows;
    });

    using KV = std::map<std::string, std::string>;
    py::call_guard<py::gil_scoped_release> nogil;
    m.def("run_synth", [](const KV& kv) { return pipeline::run_synth(run_config(kv)).tiles; }, nogil);
    m.def("build_dataset", [](const KV& kv) {
        const auto s = pipeline::build_dataset(run_config(kv));
        return py::make_tuple(s.accepted, s.rejections.size(), s.counts);
    });
    m.def("run_preprocess", [](const KV& kv) { return pipeline::run_preprocess(run_config(kv)).samples; }, nogil);
    m.def("run_train", [](const KV& kv) { return pipeline::run_train(run_config(kv)).best_epoch; }, nogil);
    m.def("run_evaluate", [](const KV& kv) {
        const auto r = pipeline::run_evaluate(run_config(kv));
        py::dict d;
        d["tiles"] = r.aggregate.tiles;
        d["dc"] = r.aggregate.mean_dc.value;
        d["oe"] = r.aggregate.mean_oe.value;
        d["ce"] = r.aggregate.mean_ce.value;
        d["micro_dc"] = r.aggregate.micro_dc;
        return d;
    });
    m.def("run_report", [](const KV& kv) { return pipeline::run_report(run_config(kv)); }, nogil);
}
