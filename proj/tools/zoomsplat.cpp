// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
// zoomsplat command-line tool. A run directory holds one folder per zoom
// level:
//
//   run/config.txt
//   run/<level>/cameras.json
//   run/<level>/scene.ply
//   run/<level>/sr/*.png        supervision images (captured views at level 0)
//   run/<level>/renders/*.png
//   run/<level>/report.jsonl

#include "zoomsplat/error.hpp"
#include "zoomsplat/io.hpp"
#include "zoomsplat/metrics.hpp"
#include "zoomsplat/pipeline.hpp"
#include "zoomsplat/resample.hpp"
#include "zoomsplat/sr.hpp"
#include "zoomsplat/warp.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

using namespace zoomsplat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

fs::path level_dir(const fs::path &run, int level) { return run / std::to_string(level); }

std::string view_name(std::size_t i) { return fmt::format("view_{:03d}.png", i); }

std::vector<fs::path> list_pngs(const fs::path &dir) {
    if (!fs::is_directory(dir)) {
        throw LoadError(fmt::format("{} is not a directory", dir.string()));
    }
    std::vector<fs::path> out;
    for (const auto &entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            out.push_back(entry.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<ImageBuffer> read_pngs(const fs::path &dir) {
    std::vector<ImageBuffer> images;
    for (const auto &p : list_pngs(dir)) {
        images.push_back(read_png(p));
    }
    return images;
}

void write_pngs(const fs::path &dir, const std::vector<ImageBuffer> &images) {
    for (std::size_t i = 0; i < images.size(); ++i) {
        write_png(dir / view_name(i), images[i]);
    }
}

int latest_level(const fs::path &run) {
    int level = -1;
    while (fs::exists(level_dir(run, level + 1) / "scene.ply")) {
        ++level;
    }
    if (level < 0) {
        throw LoadError(fmt::format("{} holds no initialized run", run.string()));
    }
    return level;
}

PipelineConfig load_config(const fs::path &run, std::optional<std::uint64_t> seed) {
    PipelineConfig config;
    if (fs::exists(run / "config.txt")) {
        config = pipeline_config_from_map(read_config(run / "config.txt"));
    }
    if (seed) {
        config.rng_seed = *seed;
    }
    config.validate();
    return config;
}

// Rebuild the zoom state from the level folders on disk.
ZoomState load_state(const fs::path &run, int level) {
    const auto base_cams = read_cameras(level_dir(run, 0) / "cameras.json");
    ZoomState state = make_zoom_state(read_scene(level_dir(run, 0) / "scene.ply"), base_cams,
                                      read_pngs(level_dir(run, 0) / "sr"));
    for (int k = 1; k <= level; ++k) {
        state.supervision.push_back(
            {read_cameras(level_dir(run, k) / "cameras.json"), read_pngs(level_dir(run, k) / "sr")});
    }
    state.scene = read_scene(level_dir(run, level) / "scene.ply");
    state.current_level = level;
    state.validate();
    return state;
}

void write_renders(const fs::path &dir, const Scene &scene, std::span<const Camera> cams,
                   const RenderOptions &options, bool with_depth) {
    for (std::size_t i = 0; i < cams.size(); ++i) {
        const RenderOutput out = render(scene, cams[i], options);
        write_png(dir / "renders" / view_name(i), out.color);
        if (with_depth) {
            write_depth(dir / "renders" / fmt::format("view_{:03d}.pfm", i), out.depth);
        }
    }
}

RenderOptions render_options(const PipelineConfig &config) {
    RenderOptions options = config.render;
    options.lod.zoom_factor_s = config.zoom_factor_s;
    return options;
}

// ---------------------------------------------------------------------------

struct InitArgs {
    std::string cameras;
    std::string images;
    std::string points;
    std::string config;
    std::string run;
    std::optional<std::uint64_t> seed;
};

int run_init(const InitArgs &a) {
    const fs::path run = a.run;
    const auto cams = read_cameras(a.cameras);
    const auto images = read_pngs(a.images);
    if (images.size() != cams.size()) {
        throw InvalidParameter(fmt::format("{} cameras but {} images", cams.size(), images.size()));
    }
    PipelineConfig config;
    if (!a.config.empty()) {
        config = pipeline_config_from_map(read_config(a.config));
    }
    if (a.seed) {
        config.rng_seed = *a.seed;
    }
    config.validate();

    std::vector<GaussianPrimitive> prims;
    if (!a.points.empty()) {
        prims = primitives_from_points(read_points(a.points), config.sh_degree);
        spdlog::info("initialized {} primitives from sparse points", prims.size());
    } else {
        const Roi roi = compute_roi(cams);
        prims = uniform_seeds(roi, config.fallback_seed_count, config.rng_seed, config.sh_degree);
        spdlog::info("initialized {} primitives inside the ROI (radius {:.4f})", prims.size(), roi.radius);
    }
    const Scene scene = make_base_scene(std::move(prims), config.sh_degree, cams);

    const fs::path dir = level_dir(run, 0);
    atomic_write(run / "config.txt", emit_config(pipeline_config_to_map(config)));
    write_cameras(dir / "cameras.json", cams);
    write_pngs(dir / "sr", images);
    write_scene(dir / "scene.ply", scene);
    fmt::print("initialized {} ({} primitives, {} views)\n", run.string(), scene.primitives.size(), cams.size());
    return kExitOk;
}

int run_train(const fs::path &run, std::optional<std::uint64_t> seed, std::optional<std::size_t> iterations) {
    PipelineConfig config = load_config(run, seed);
    if (iterations) {
        config.base_iterations = *iterations;
    }
    ZoomState state = load_state(run, 0);
    if (latest_level(run) != 0) {
        throw InvalidParameter("base training only applies before the first zoom step");
    }
    const TrainingReport report = train_base(state, config);
    const fs::path dir = level_dir(run, 0);
    write_scene(dir / "scene.ply", state.scene);
    atomic_write(dir / "report.jsonl", report.to_jsonl());
    write_renders(dir, state.scene, state.base_cameras, render_options(config), false);
    fmt::print("trained level 0: {} iterations, PSNR {:.2f} dB\n", report.iterations.size(), report.final_psnr);
    return kExitOk;
}

int run_zoom(const fs::path &run, int steps, std::optional<std::uint64_t> seed, const std::string &provider_name,
             const std::string &endpoint) {
    PipelineConfig config = load_config(run, seed);
    if (!provider_name.empty()) {
        config.sr_provider = parse_provider_kind(provider_name);
    }
    if (!endpoint.empty()) {
        config.sr_endpoint = endpoint;
    }
    auto provider = make_sr_provider(config.sr_provider, config.sr_endpoint, config.static_prompt);
    ZoomState state = load_state(run, latest_level(run));
    for (int step = 0; step < steps; ++step) {
        StepRecord record;
        zoom_step(state, config, *provider, &record);
        const fs::path dir = level_dir(run, state.current_level);
        write_cameras(dir / "cameras.json", record.cameras);
        write_pngs(dir / "sr", record.targets);
        atomic_write(dir / "report.jsonl", record.report.to_jsonl());
        write_renders(dir, state.scene, record.cameras, render_options(config), false);
        // The scene goes last: its presence marks the level as complete.
        write_scene(dir / "scene.ply", state.scene);
        fmt::print("zoom level {}: {} primitives, PSNR {:.2f} dB, prompt \"{}\"\n", state.current_level,
                   state.scene.primitives.size(), record.report.final_psnr, record.prompt);
    }
    return kExitOk;
}

struct RenderArgs {
    std::string run;
    std::optional<int> level;
    bool traj = false;
    int frames = 60;
    double focal_min = 1.0;
    std::optional<double> focal_max;
    std::size_t camera = 0;
    std::string out;
    bool depth = false;
    bool no_lod = false;
};

int run_render(const RenderArgs &a) {
    const fs::path run = a.run;
    PipelineConfig config = load_config(run, std::nullopt);
    const int level = a.level.value_or(latest_level(run));
    const Scene scene = read_scene(level_dir(run, level) / "scene.ply");
    RenderOptions options = render_options(config);
    if (a.no_lod) {
        options.lod_enabled = false;
    }
    if (!a.traj) {
        const auto cams = read_cameras(level_dir(run, level) / "cameras.json");
        const fs::path dir = a.out.empty() ? level_dir(run, level) : fs::path(a.out);
        write_renders(dir, scene, cams, options, a.depth);
        fmt::print("rendered {} views of level {}\n", cams.size(), level);
        return kExitOk;
    }
    const auto base = read_cameras(level_dir(run, 0) / "cameras.json");
    if (a.camera >= base.size()) {
        throw InvalidParameter(fmt::format("camera {} out of range ({} cameras)", a.camera, base.size()));
    }
    const Roi roi = compute_roi(base);
    const Camera path = make_zoom_cameras(std::span<const Camera>(&base[a.camera], 1), roi, 0,
                                          config.zoom_factor_s)
                            .front();
    const double top = a.focal_max.value_or(std::pow(config.zoom_factor_s, level));
    const auto frames = render_trajectory(scene, {a.focal_min, top}, a.frames, path, options);
    const fs::path dir = a.out.empty() ? level_dir(run, level) / "renders" / "traj" : fs::path(a.out);
    for (std::size_t f = 0; f < frames.size(); ++f) {
        write_png(dir / fmt::format("frame_{:04d}.png", f), frames[f]);
    }
    fmt::print("rendered {} trajectory frames ({:g}x to {:g}x) into {}\n", frames.size(), a.focal_min, top,
               dir.string());
    return kExitOk;
}

struct WarpArgs {
    std::string image;
    std::string src_depth;
    std::string dst_depth;
    std::string cameras;
    std::size_t src = 0;
    std::size_t dst = 1;
    double tol = kDefaultOcclusionTol;
    std::string out;
    std::string mask;
};

int run_warp(const WarpArgs &a) {
    const auto cams = read_cameras(a.cameras);
    if (a.src >= cams.size() || a.dst >= cams.size()) {
        throw InvalidParameter(fmt::format("camera index out of range ({} cameras)", cams.size()));
    }
    const WarpResult w = warp_image(read_png(a.image), read_depth(a.src_depth), read_depth(a.dst_depth),
                                    cams[a.src], cams[a.dst], a.tol);
    write_png(a.out, w.warped);
    if (!a.mask.empty()) {
        write_png(a.mask, w.valid_mask);
    }
    double valid = 0.0;
    for (double m : w.valid_mask.data()) {
        valid += m;
    }
    fmt::print("warped {} -> {}: {:.1f}% valid\n", a.src, a.dst, 100.0 * valid / w.valid_mask.data().size());
    return kExitOk;
}

int run_eval(const fs::path &dir_a, const fs::path &dir_b) {
    const auto files = list_pngs(dir_a);
    if (files.empty()) {
        throw LoadError(fmt::format("no PNG images in {}", dir_a.string()));
    }
    fmt::print("{:<32} {:>9} {:>8}\n", "image", "PSNR", "SSIM");
    double sum_psnr = 0.0, sum_ssim = 0.0;
    std::size_t ssim_count = 0;
    for (const auto &fa : files) {
        const fs::path fb = dir_b / fa.filename();
        if (!fs::exists(fb)) {
            throw LoadError(fmt::format("{} has no counterpart in {}", fa.filename().string(), dir_b.string()));
        }
        const ImageBuffer a = read_png(fa);
        const ImageBuffer b = read_png(fb);
        const double p = psnr(a, b);
        sum_psnr += p;
        std::string ssim_text = "n/a";
        if (std::min(a.width(), a.height()) >= 11) {
            const double s = ssim(a, b);
            sum_ssim += s;
            ++ssim_count;
            ssim_text = fmt::format("{:.4f}", s);
        }
        fmt::print("{:<32} {:>9.3f} {:>8}\n", fa.filename().string(), p, ssim_text);
    }
    nlohmann::json summary;
    summary["count"] = files.size();
    summary["mean_psnr"] = sum_psnr / files.size();
    summary["mean_ssim"] = ssim_count ? nlohmann::json(sum_ssim / ssim_count) : nlohmann::json(nullptr);
    fmt::print("{}\n", summary.dump());
    return kExitOk;
}

int run_check_sr(const std::string &endpoint, int scale) {
    const ImageBuffer lr = [] {
        ImageBuffer img(24, 24, 3);
        for (int y = 0; y < 24; ++y) {
            for (int x = 0; x < 24; ++x) {
                img.at(x, y, 0) = 0.5 + 0.4 * std::sin(0.45 * x) * std::cos(0.3 * y);
                img.at(x, y, 1) = x / 23.0;
                img.at(x, y, 2) = 0.5 + 0.3 * std::cos(0.2 * (x + y));
            }
        }
        return img;
    }();
    SrRequest request;
    request.lr_image = lr;
    request.context_coarse = lr;
    request.context_zoom = lr;
    request.prompt = std::string(kDefaultPrompt);
    request.scale = scale;

    BuiltinSrProvider builtin;
    RemoteOptions options;
    options.endpoint = resolve_endpoint(endpoint);
    RemoteSrProvider remote(options);
    fmt::print("sidecar {}: {}\n", options.endpoint, remote.health());
    const ImageBuffer want = super_resolve(request, builtin).hr_image;
    const ImageBuffer got = super_resolve(request, remote).hr_image;
    double worst = 0.0;
    for (std::size_t i = 0; i < want.data().size(); ++i) {
        worst = std::max(worst, std::abs(want.data()[i] - got.data()[i]));
    }
    const bool ok = worst <= 1e-3;
    fmt::print("{} max abs diff {:.3e} (tolerance 1e-3)\n", ok ? "PASS" : "FAIL", worst);
    return ok ? kExitOk : kExitRuntime;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"ZoomSplat: extreme zoom for Gaussian splat scenes"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    std::optional<std::uint64_t> seed;

    InitArgs init;
    auto *init_cmd = app.add_subcommand("init", "Create a run from cameras, images and optional sparse points");
    init_cmd->add_option("--cameras", init.cameras, "Camera JSON")->required()->check(CLI::ExistingFile);
    init_cmd->add_option("--images", init.images, "Directory of PNG views, sorted to match cameras")
        ->required()
        ->check(CLI::ExistingDirectory);
    init_cmd->add_option("--points", init.points, "Sparse point PLY")->check(CLI::ExistingFile);
    init_cmd->add_option("--config", init.config, "key = value config file")->check(CLI::ExistingFile);
    init_cmd->add_option("--run", init.run, "Run directory")->required();
    init_cmd->add_option("--seed", init.seed, "Override rng_seed");

    std::string run_path;
    std::optional<std::size_t> iterations;
    auto *train_cmd = app.add_subcommand("train", "Optimize the base layer");
    train_cmd->add_option("--run", run_path, "Run directory")->required()->check(CLI::ExistingDirectory);
    train_cmd->add_option("--iterations", iterations, "Override base_iterations");
    train_cmd->add_option("--seed", seed, "Override rng_seed");

    int steps = 1;
    std::string provider, endpoint;
    auto *zoom_cmd = app.add_subcommand("zoom", "Run zoom steps from the latest level");
    zoom_cmd->add_option("--run", run_path, "Run directory")->required()->check(CLI::ExistingDirectory);
    zoom_cmd->add_option("--steps", steps, "Number of zoom steps")->check(CLI::PositiveNumber);
    zoom_cmd->add_option("--seed", seed, "Override rng_seed");
    zoom_cmd->add_option("--sr", provider, "SR provider")->check(CLI::IsMember({"builtin", "remote"}));
    zoom_cmd->add_option("--endpoint", endpoint, "SR sidecar URL");

    RenderArgs ra;
    auto *render_cmd = app.add_subcommand("render", "Render a level or a zoom trajectory");
    render_cmd->add_option("--run", ra.run, "Run directory")->required()->check(CLI::ExistingDirectory);
    render_cmd->add_option("--level", ra.level, "Level to render (default: latest)");
    render_cmd->add_flag("--traj", ra.traj, "Render a focal sweep instead of the level cameras");
    render_cmd->add_option("--frames", ra.frames, "Trajectory frame count")->check(CLI::PositiveNumber);
    render_cmd->add_option("--focal-min", ra.focal_min, "First focal multiplier");
    render_cmd->add_option("--focal-max", ra.focal_max, "Last focal multiplier (default: s^level)");
    render_cmd->add_option("--camera", ra.camera, "Base camera to zoom from");
    render_cmd->add_option("--out", ra.out, "Output directory");
    render_cmd->add_flag("--depth", ra.depth, "Also write PFM depth maps");
    render_cmd->add_flag("--no-lod", ra.no_lod, "Disable level-of-detail blending");

    WarpArgs wa;
    auto *warp_cmd = app.add_subcommand("warp", "Warp an image into another camera using depth");
    warp_cmd->add_option("--image", wa.image, "Source PNG")->required()->check(CLI::ExistingFile);
    warp_cmd->add_option("--src-depth", wa.src_depth, "Source depth PFM")->required()->check(CLI::ExistingFile);
    warp_cmd->add_option("--dst-depth", wa.dst_depth, "Destination depth PFM")->required()->check(CLI::ExistingFile);
    warp_cmd->add_option("--cameras", wa.cameras, "Camera JSON")->required()->check(CLI::ExistingFile);
    warp_cmd->add_option("--src", wa.src, "Source camera index");
    warp_cmd->add_option("--dst", wa.dst, "Destination camera index");
    warp_cmd->add_option("--tol", wa.tol, "Relative occlusion tolerance");
    warp_cmd->add_option("--out", wa.out, "Warped PNG")->required();
    warp_cmd->add_option("--mask", wa.mask, "Validity mask PNG");

    std::string dir_a, dir_b;
    auto *eval_cmd = app.add_subcommand("eval", "PSNR/SSIM between same-named images in two directories");
    eval_cmd->add_option("dir_a", dir_a)->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("dir_b", dir_b)->required()->check(CLI::ExistingDirectory);

    int scale = 4;
    auto *check_cmd = app.add_subcommand("check-sr", "Compare the SR sidecar against the builtin provider");
    check_cmd->add_option("--endpoint", endpoint, "SR sidecar URL");
    check_cmd->add_option("--scale", scale, "Upscale factor")->check(CLI::IsMember({2, 4}));

    if (argc <= 1) {
        std::fputs(app.help().c_str(), stderr);
        return kExitUsage;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return kExitUsage;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (*init_cmd) {
            return run_init(init);
        }
        if (*train_cmd) {
            return run_train(run_path, seed, iterations);
        }
        if (*zoom_cmd) {
            return run_zoom(run_path, steps, seed, provider, endpoint);
        }
        if (*render_cmd) {
            return run_render(ra);
        }
        if (*warp_cmd) {
            return run_warp(wa);
        }
        if (*eval_cmd) {
            return run_eval(dir_a, dir_b);
        }
        if (*check_cmd) {
            return run_check_sr(endpoint, scale);
        }
    } catch (const std::exception &e) {
        spdlog::error("{}", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
