// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/error.hpp"
#include "zoomsplat/io.hpp"
#include "zoomsplat/lod.hpp"
#include "zoomsplat/metrics.hpp"
#include "zoomsplat/pipeline.hpp"
#include "zoomsplat/render.hpp"
#include "zoomsplat/resample.hpp"
#include "zoomsplat/sr.hpp"
#include "zoomsplat/warp.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace pybind11::literals;
using namespace zoomsplat;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W) or (H, W, C) arrays map onto interleaved buffers.
ImageBuffer to_image(const Array &a) {
    if (a.ndim() != 2 && a.ndim() != 3) {
        throw InvalidParameter("images must be (H, W) or (H, W, C) arrays");
    }
    const int h = static_cast<int>(a.shape(0));
    const int w = static_cast<int>(a.shape(1));
    const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
    return ImageBuffer(w, h, c, std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_image(const ImageBuffer &img) {
    Array out({img.height(), img.width(), img.channels()});
    std::copy(img.data().begin(), img.data().end(), out.mutable_data());
    return out;
}

DepthMap to_depth(const Array &a) {
    if (a.ndim() != 2) {
        throw InvalidParameter("depth maps must be (H, W) arrays");
    }
    return DepthMap(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
                    std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_depth(const DepthMap &d) {
    Array out({d.height(), d.width()});
    std::copy(d.data().begin(), d.data().end(), out.mutable_data());
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Layered Gaussian splatting with level-of-detail zoom";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<InvalidParameter>(m, "InvalidParameter", base.ptr());
    py::register_exception<LoadError>(m, "LoadError", base.ptr());
    py::register_exception<ContractViolation>(m, "ContractViolation", base.ptr());
    py::register_exception<TransportError>(m, "TransportError", base.ptr());
    py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
    py::register_exception<RoiUndefined>(m, "RoiUndefined", base.ptr());

    py::class_<Camera>(m, "Camera")
        .def(py::init<>())
        .def_readwrite("fx", &Camera::fx)
        .def_readwrite("fy", &Camera::fy)
        .def_readwrite("cx", &Camera::cx)
        .def_readwrite("cy", &Camera::cy)
        .def_readwrite("width", &Camera::width)
        .def_readwrite("height", &Camera::height)
        .def_readwrite("rotation", &Camera::rotation_wc)
        .def_readwrite("translation", &Camera::translation_wc)
        .def_readwrite("near", &Camera::near)
        .def_readwrite("far", &Camera::far)
        .def_property_readonly("position", &Camera::position)
        .def_property_readonly("forward", &Camera::forward)
        .def("validate", &Camera::validate, "orthonormal_tol"_a = 1e-9)
        .def_static("look_at", &Camera::look_at, "eye"_a, "target"_a, "up"_a, "focal"_a, "width"_a, "height"_a,
                    "near"_a = 0.01, "far"_a = 100.0)
        .def(py::self == py::self)
        .def("__repr__", [](const Camera &c) {
            return "<Camera " + std::to_string(c.width) + "x" + std::to_string(c.height) +
                   " fx=" + std::to_string(c.fx) + ">";
        });

    py::class_<GaussianPrimitive>(m, "GaussianPrimitive")
        .def(py::init<>())
        .def_readwrite("center", &GaussianPrimitive::center)
        .def_readwrite("log_scale", &GaussianPrimitive::log_scale)
        .def_readwrite("rotation", &GaussianPrimitive::rotation)
        .def_readwrite("opacity_logit", &GaussianPrimitive::opacity_logit)
        .def_readwrite("sh_coeffs", &GaussianPrimitive::sh_coeffs)
        .def_readwrite("lod_layer", &GaussianPrimitive::lod_layer)
        .def_readwrite("psi_ref", &GaussianPrimitive::psi_ref)
        .def_property_readonly("opacity", &GaussianPrimitive::opacity);

    py::class_<LodLayer>(m, "LodLayer")
        .def_readonly("index", &LodLayer::index)
        .def_readonly("zoom_level", &LodLayer::zoom_level)
        .def_readonly("frozen", &LodLayer::frozen)
        .def_readonly("primitive_ids", &LodLayer::primitive_ids);

    py::class_<Scene>(m, "Scene")
        .def(py::init<>())
        .def_readwrite("sh_degree", &Scene::sh_degree)
        .def_readwrite("primitives", &Scene::primitives)
        .def_readonly("layers", &Scene::layers)
        .def("validate", &Scene::validate)
        .def("__len__", [](const Scene &s) { return s.primitives.size(); })
        .def(py::self == py::self);

    m.def(
        "make_base_scene",
        [](std::vector<GaussianPrimitive> prims, int sh_degree, const std::vector<Camera> &cams) {
            return make_base_scene(std::move(prims), sh_degree, cams);
        },
        "primitives"_a, "sh_degree"_a, "cameras"_a);
    m.def("read_scene", &read_scene, "path"_a);
    m.def("write_scene", &write_scene, "path"_a, "scene"_a);
    m.def("encode_scene", [](const Scene &s) {
        const auto bytes = encode_scene(s);
        return py::bytes(reinterpret_cast<const char *>(bytes.data()), bytes.size());
    });
    m.def("decode_scene", [](const py::bytes &b) {
        const std::string_view view = b;
        return decode_scene(std::span(reinterpret_cast<const std::uint8_t *>(view.data()), view.size()));
    });
    m.def("read_cameras", &read_cameras, "path"_a);
    m.def("write_cameras",
          [](const fs::path &p, const std::vector<Camera> &cams) { write_cameras(p, cams); }, "path"_a,
          "cameras"_a);
    m.def("read_png", [](const fs::path &p) { return from_image(read_png(p)); }, "path"_a);
    m.def("write_png", [](const fs::path &p, const Array &a) { write_png(p, to_image(a)); }, "path"_a,
          "image"_a);

    m.def("scale_projection_coefficient", &scale_projection_coefficient, "camera"_a, "center"_a);
    m.def("lod_weight", &lod_weight, "psi_now"_a, "psi_ref"_a, "s"_a);

    m.def(
        "render",
        [](const Scene &scene, const Camera &camera, bool lod_enabled, double zoom_factor_s) {
            RenderOptions options;
            options.lod_enabled = lod_enabled;
            options.lod.zoom_factor_s = zoom_factor_s;
            RenderOutput out;
            {
                py::gil_scoped_release release;
                out = render(scene, camera, options);
            }
            py::dict d;
            d["color"] = from_image(out.color);
            d["alpha"] = from_image(out.alpha);
            d["depth"] = from_depth(out.depth);
            return d;
        },
        "scene"_a, "camera"_a, "lod_enabled"_a = true, "zoom_factor_s"_a = 4.0,
        "Render color (H, W, 3), alpha (H, W, 1) and depth (H, W).");

    m.def("psnr", [](const Array &a, const Array &b) { return psnr(to_image(a), to_image(b)); });
    m.def("ssim", [](const Array &a, const Array &b) { return ssim(to_image(a), to_image(b)); });
    m.def("bicubic_upsample", [](const Array &a, int f) { return from_image(bicubic_upsample(to_image(a), f)); },
          "image"_a, "factor"_a);
    m.def("bicubic_downsample",
          [](const Array &a, int f) { return from_image(bicubic_downsample(to_image(a), f)); }, "image"_a,
          "factor"_a);
    m.def("builtin_reference_sr",
          [](const Array &a, int scale) { return from_image(builtin_reference_sr(to_image(a), scale)); },
          "lr_image"_a, "scale"_a = 4);

    m.def(
        "warp_image",
        [](const Array &src, const Array &depth_src, const Array &depth_dst, const Camera &cs, const Camera &cd,
           double tol) {
            const WarpResult w = warp_image(to_image(src), to_depth(depth_src), to_depth(depth_dst), cs, cd, tol);
            return py::make_tuple(from_image(w.warped), from_image(w.valid_mask));
        },
        "source"_a, "depth_src"_a, "depth_dst"_a, "camera_src"_a, "camera_dst"_a,
        "occlusion_tol"_a = kDefaultOcclusionTol);

    py::class_<Roi>(m, "Roi").def_readonly("center", &Roi::center).def_readonly("radius", &Roi::radius);
    m.def("compute_roi", [](const std::vector<Camera> &cams) { return compute_roi(cams); }, "cameras"_a);
    m.def(
        "make_zoom_cameras",
        [](const std::vector<Camera> &cams, const Roi &roi, int level, int s) {
            return make_zoom_cameras(cams, roi, level, s);
        },
        "cameras"_a, "roi"_a, "level"_a, "s"_a);
    m.def("focal_sweep", &focal_sweep, "range"_a, "frame_count"_a);

    m.def("parse_config", &parse_config, "text"_a);
    m.def("emit_config", &emit_config, "config"_a);
}
