// scrollfit: phantom generation, feature extraction, fitting, meshing, evaluation and
// rendering from the command line.
//
// Every subcommand writes into an --out directory and leaves a <subcommand>.config snapshot
// of the resolved options there; the snapshot is itself a valid --config file.
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scroll/error.hpp"
#include "scroll/features.hpp"
#include "scroll/fitting.hpp"
#include "scroll/io.hpp"
#include "scroll/mesh.hpp"
#include "scroll/metrics.hpp"
#include "scroll/phantom.hpp"

namespace fs = std::filesystem;
using namespace scroll;

namespace {

constexpr int exit_usage = 1;
constexpr int exit_data = 2;

class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

std::string to_text(double v) { return io::format_double(v); }
std::string to_text(const std::string &v) { return v; }
std::string to_text(bool v) { return v ? "true" : "false"; }
template <class T>
    requires std::is_integral_v<T>
std::string to_text(T v) { return std::to_string(v); }
template <class T> std::string to_text(const std::vector<T> &v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + to_text(v[i]);
    return out;
}

/// Options of one subcommand, remembered in registration order for the snapshot.
class OptionSet {
  public:
    explicit OptionSet(CLI::App *app) : app_(app) {}

    template <class T> CLI::Option *add(const std::string &name, T &var, const std::string &help) {
        CLI::Option *o = app_->add_option("--" + name, var, help)->capture_default_str();
        entries_.emplace_back(name, [&var] { return to_text(var); });
        return o;
    }

    std::string snapshot() const {
        std::string out;
        for (const auto &[name, text] : entries_) out += name + " = " + text() + "\n";
        return out;
    }

    CLI::App *app() const { return app_; }

  private:
    CLI::App *app_;
    std::vector<std::pair<std::string, std::function<std::string()>>> entries_;
};

struct ConfigLine {
    std::string key;
    std::string value;
    std::size_t line;
};

std::string trim(const std::string &s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<ConfigLine> read_config_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path);
    std::vector<ConfigLine> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(path + ":" + std::to_string(n) + ": expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::replace(key.begin(), key.end(), '_', '-');
        out.push_back({key, trim(line.substr(eq + 1)), n});
    }
    return out;
}

/// Expands `--config FILE` into `--key=value` arguments placed before the command line's own
/// arguments, so that flags given explicitly win.
std::vector<std::string> expand_config(const std::vector<std::string> &args, CLI::App &app) {
    if (args.empty()) return args;
    CLI::App *sub = nullptr;
    try {
        sub = app.get_subcommand(args[0]);
    } catch (const CLI::OptionNotFound &) {
        return args;
    }
    std::string file;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) file = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) file = args[i].substr(9);
    }
    if (file.empty()) return args;
    std::vector<std::string> out{args[0]};
    for (const ConfigLine &c : read_config_file(file)) {
        if (c.key == "config" || c.key == "help" || sub->get_option_no_throw("--" + c.key) == nullptr)
            throw UsageError(file + ":" + std::to_string(c.line) + ": unknown key '" + c.key + "' for '" +
                             args[0] + "'");
        out.push_back("--" + c.key + "=" + c.value);
    }
    out.insert(out.end(), args.begin() + 1, args.end());
    return out;
}

void prepare_out(const std::string &dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw UsageError("cannot create output directory " + dir + ": " + ec.message());
}

WindingDirection parse_direction(const std::string &s) {
    if (s == "anticlockwise") return WindingDirection::anticlockwise;
    if (s == "clockwise") return WindingDirection::clockwise;
    throw ConfigError("direction must be 'anticlockwise' or 'clockwise'");
}

std::string optional_text(const std::optional<double> &v) { return v ? io::format_double(*v) : "nan"; }

// ---------------------------------------------------------------------------

struct PhantomArgs {
    std::string out;
    std::uint64_t seed = 0;
    double windings = 8.0;
    double spacing = 20.0;
    double z_extent = 200.0;
    std::string direction = "anticlockwise";
    double deformation = 1.5;
    double bend = 0.0;
    double jitter = 0.0;
    double dropout = 0.0;
    double false_link_rate = 0.0;
    std::vector<std::size_t> dims{256, 256, 256};
    double thickness = 3.0;
    double blur = 1.0;
    bool raster = true;
};

void run_phantom(const PhantomArgs &a) {
    PhantomConfig c;
    c.seed = a.seed;
    c.windings = a.windings;
    c.spacing = a.spacing;
    c.z_extent = a.z_extent;
    c.direction = parse_direction(a.direction);
    c.deformation = a.deformation;
    c.bend = a.bend;
    c.jitter = a.jitter;
    c.dropout = a.dropout;
    c.false_link_rate = a.false_link_rate;
    if (a.dims.size() != 3) throw ConfigError("dims needs three values");
    c.dims = {a.dims[0], a.dims[1], a.dims[2]};
    c.thickness = a.thickness;
    c.blur = a.blur;
    const Phantom ph = make_phantom(c);
    io::write_features(a.out, ph.features);
    io::write_text(a.out + "/centerline.jsonl", io::encode_points(ph.centerline));
    const MeshResolution res = default_resolution(ph.truth.spiral);
    io::write_mesh(a.out + "/gt.obj", gt_mesh(ph, res.dtheta, res.dz));
    FittedModel truth;
    truth.transform = ph.truth;
    io::write_model(a.out + "/truth.spfm", truth);
    if (a.raster) io::write_volume(a.out + "/volume.volp", rasterize(ph, c.thickness, c.blur));
    std::printf("paths %zu normals %zu links %zu voxel_spacing %s\n", ph.features.paths.size(),
                ph.features.normals.size(), ph.features.links.size(), io::format_double(ph.voxel_spacing).c_str());
}

struct FeatureArgs {
    std::string volume;
    std::string out;
    std::uint64_t seed = 0;
    double tau = 0.5;
    std::size_t min_path_len = 10;
    std::size_t max_path_len = 48;
    std::size_t window = 5;
    double magnitude_threshold = 0.05;
    double cell = 4.0;
    double hit_tol = 1.5;
    double min_ray = 3.0;
    double max_ray = 64.0;
    std::vector<double> centre;
};

void run_features(const FeatureArgs &a) {
    FeatureParams p;
    p.tau = static_cast<float>(a.tau);
    p.min_path_len = a.min_path_len;
    p.max_path_len = a.max_path_len;
    p.normals.window = a.window;
    p.normals.magnitude_threshold = a.magnitude_threshold;
    p.normals.cell = a.cell;
    p.normals.seed = a.seed;
    p.adjacency.hit_tol = a.hit_tol;
    p.adjacency.min_ray = a.min_ray;
    p.adjacency.max_ray = a.max_ray;
    p.adjacency.magnitude_threshold = a.magnitude_threshold;
    if (!a.centre.empty()) {
        if (a.centre.size() != 2) throw ConfigError("centre needs two values (x, y)");
        p.centre_given = true;
        p.normals.centre = {a.centre[0], a.centre[1], 0.0};
    }
    const ProbabilityVolume v = io::read_volume(a.volume);
    const FeatureReport rep = extract_features(v, p);
    for (const std::string &w : rep.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    io::write_features(a.out, rep.features);
    std::printf("paths %zu normals %zu links %zu spacing %s\n", rep.features.paths.size(),
                rep.features.normals.size(), rep.features.links.size(), io::format_double(rep.spacing).c_str());
}

struct FitArgs {
    std::string features;
    std::string out;
    std::string centerline;
    std::string resume;
    std::uint64_t seed = 0;
    std::int64_t steps = 20000;
    double learning_rate = 5e-4;
    std::int64_t distance_start = -1;
    double rho = 0.0;
    std::string direction = "anticlockwise";
    std::string disable;
    std::size_t points_per_path = 100;
    std::size_t winding_points = 2000;
    std::size_t normal_points = 2000;
    std::size_t regularization_points = 1500;
    std::size_t paths_per_batch = 64;
    std::int64_t checkpoint_every = 0;
    std::int64_t history_every = 100;
    double max_velocity = 1.0;
};

FitConfig fit_config(const FitArgs &a) {
    FitConfig c;
    c.seed = a.seed;
    c.total_steps = a.steps;
    c.learning_rate = a.learning_rate;
    c.distance_start_step = a.distance_start;
    if (a.rho != 0.0) c.rho = a.rho;
    c.direction = parse_direction(a.direction);
    c.points_per_path = a.points_per_path;
    c.winding_points = a.winding_points;
    c.normal_points = a.normal_points;
    c.regularization_points = a.regularization_points;
    c.paths_per_batch = a.paths_per_batch;
    c.checkpoint_every = a.checkpoint_every;
    c.history_every = a.history_every;
    c.max_velocity = a.max_velocity;
    std::stringstream ss(a.disable);
    for (std::string term; std::getline(ss, term, ',');) {
        term = trim(term);
        if (term.empty()) continue;
        bool found = false;
        for (std::size_t k = 0; k < loss_term_count; ++k)
            if (term == loss_term_name(static_cast<LossTerm>(k))) {
                c.enabled[k] = false;
                found = true;
            }
        if (!found) throw ConfigError("unknown loss term '" + term + "'");
    }
    if (!a.centerline.empty()) c.centerline = io::decode_points(io::read_text(a.centerline), a.centerline);
    c.validate();
    return c;
}

void run_fit_cmd(const FitArgs &a) {
    const FitConfig c = fit_config(a);
    const FeatureSet f = io::read_features(a.features);
    FitState st = a.resume.empty() ? init_fit(f, c) : io::read_checkpoint(a.resume);
    const std::string ckpt = a.out + "/checkpoint.spck";
    run_fit(st, f, c, c.total_steps, [&](const FitState &s) {
        if (c.checkpoint_every > 0 && s.step % c.checkpoint_every == 0) io::write_checkpoint(ckpt, s);
    });
    const FittedModel m = finish_fit(st, f, c);
    io::write_model(a.out + "/model.spfm", m);
    io::write_text(a.out + "/history.csv", io::encode_history(m.meta.history));
    std::printf("steps %lld final_loss %s\n", static_cast<long long>(m.meta.steps),
                io::format_double(m.meta.final_loss).c_str());
}

struct MeshArgs {
    std::string model;
    std::string out;
    double dtheta = 0.0;
    double dz = 0.0;
};

QuadMesh model_mesh(const ComposedTransform &t, double dtheta, double dz) {
    const MeshResolution res = default_resolution(t.spiral);
    return extract_mesh(t, dtheta > 0.0 ? dtheta : res.dtheta, dz > 0.0 ? dz : res.dz);
}

void run_mesh(const MeshArgs &a) {
    const FittedModel m = io::read_model(a.model);
    const QuadMesh q = model_mesh(m.transform, a.dtheta, a.dz);
    const TriMesh t = triangulate(q);
    io::write_mesh(a.out + "/mesh.obj", t);
    std::printf("vertices %zu faces %zu\n", t.vertices.size(), t.faces.size());
}

struct MetricsArgs {
    std::string gt;
    std::string model;
    std::string mesh;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t samples = 20000;
    std::size_t slices = 100;
    std::size_t angles = 100;
    double dtheta = 0.0;
    double dz = 0.0;
};

void run_metrics(const MetricsArgs &a) {
    if (a.model.empty() && a.mesh.empty()) throw ConfigError("metrics needs --model or --mesh");
    const TriMesh gt = io::read_mesh(a.gt);
    std::optional<FittedModel> model;
    if (!a.model.empty()) model = io::read_model(a.model);
    std::optional<QuadMesh> quad;
    TriMesh pred;
    if (!a.mesh.empty()) {
        pred = io::read_mesh(a.mesh);
    } else {
        quad = model_mesh(model->transform, a.dtheta, a.dz);
        pred = triangulate(*quad);
    }
    MetricsReport r;
    if (model) {
        r.wjf = metric_wjf(gt, model->transform, a.slices);
        if (!gt.labels.empty() && !pred.labels.empty())
            r.mrwd = metric_mrwd(gt, pred, model->transform, a.angles, a.slices);
    }
    r.chamfer = metric_chamfer(gt, pred, a.samples, a.seed);
    r.angular_defect = metric_angular_defect(pred);
    r.stretch = quad ? metric_stretch(*quad).value : metric_stretch(pred).value;
    r.self_intersections = count_self_intersections(pred);
    const std::vector<std::pair<std::string, std::string>> rows{
        {"wjf", optional_text(r.wjf)},
        {"mrwd", optional_text(r.mrwd)},
        {"chamfer", optional_text(r.chamfer)},
        {"angular_defect", optional_text(r.angular_defect)},
        {"stretch", optional_text(r.stretch)},
        {"self_intersections", std::to_string(r.self_intersections)},
        {"uv_monotone", quad ? to_text(uv_monotone(*quad)) : "nan"},
    };
    std::string text, csv = "metric,value\n";
    for (const auto &[k, v] : rows) {
        text += k + " = " + v + "\n";
        csv += k + "," + v + "\n";
    }
    io::write_text(a.out + "/metrics.txt", text);
    io::write_text(a.out + "/metrics.csv", csv);
    std::fputs(text.c_str(), stdout);
}

struct RenderArgs {
    std::string model;
    std::string volume;
    std::string out;
    double thickness = 0.0;
    std::size_t layers = 9;
    std::size_t channel = 0;
    double dtheta = 0.0;
    double dz = 0.0;
};

void run_render(const RenderArgs &a) {
    const FittedModel m = io::read_model(a.model);
    const ProbabilityVolume v = io::read_volume(a.volume);
    if (a.channel >= v.channels.size()) throw ConfigError("volume has no channel " + std::to_string(a.channel));
    const QuadMesh q = model_mesh(m.transform, a.dtheta, a.dz);
    const double thickness = a.thickness > 0.0 ? a.thickness : 0.5 * m.transform.spiral.spacing();
    const UnrolledStack s =
        sample_unrolled_volume(q, v, a.channel, thickness, a.layers, m.transform.spiral.direction);
    const std::size_t plane = s.ni * s.nj;
    for (std::size_t l = 0; l < s.layers; ++l) {
        const std::vector<float> img(s.data.begin() + static_cast<long>(l * plane),
                                     s.data.begin() + static_cast<long>((l + 1) * plane));
        char name[32];
        std::snprintf(name, sizeof name, "/layer_%03zu.pgm", l);
        io::write_text(a.out + name, io::encode_pgm(img, s.ni, s.nj));
    }
    std::printf("layers %zu size %zux%zu degenerate_normals %zu\n", s.layers, s.ni, s.nj, s.degenerate_normals);
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Fit a deformed-spiral model of a rolled scroll to segmentation features"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    std::map<CLI::App *, OptionSet> sets;
    auto subcommand = [&](const std::string &name, const std::string &help) -> OptionSet & {
        CLI::App *sub = app.add_subcommand(name, help);
        sub->add_option("--config", "flat 'key = value' file; explicit flags override it");
        return sets.emplace(sub, OptionSet(sub)).first->second;
    };

    PhantomArgs pa;
    {
        OptionSet &o = subcommand("phantom", "synthesize a deformed scroll with known ground truth");
        o.add("out", pa.out, "output directory")->required();
        o.add("seed", pa.seed, "random seed");
        o.add("windings", pa.windings, "number of windings");
        o.add("spacing", pa.spacing, "distance between windings");
        o.add("z-extent", pa.z_extent, "scroll height");
        o.add("direction", pa.direction, "anticlockwise or clockwise");
        o.add("deformation", pa.deformation, "max velocity magnitude in fine cells");
        o.add("bend", pa.bend, "out-of-family bend amplitude");
        o.add("jitter", pa.jitter, "Gaussian sigma on observed positions");
        o.add("dropout", pa.dropout, "fraction of paths removed");
        o.add("false-link-rate", pa.false_link_rate, "fraction of links with a wrong offset");
        o.add("dims", pa.dims, "volume dimensions x,y,z")->delimiter(',')->expected(3);
        o.add("thickness", pa.thickness, "surface thickness in voxels");
        o.add("blur", pa.blur, "Gaussian blur sigma in voxels");
        o.add("raster", pa.raster, "write the probability volume");
    }
    FeatureArgs fa;
    {
        OptionSet &o = subcommand("features", "extract paths, normals and winding links from a volume");
        o.add("volume", fa.volume, "probability volume (.volp)")->required();
        o.add("out", fa.out, "output directory")->required();
        o.add("seed", fa.seed, "seed for stratified normal sampling");
        o.add("tau", fa.tau, "probability threshold");
        o.add("min-path-len", fa.min_path_len, "shortest kept chain (voxels)");
        o.add("max-path-len", fa.max_path_len, "surface chains are split above this length (0: never)");
        o.add("window", fa.window, "normal window edge (voxels)");
        o.add("magnitude-threshold", fa.magnitude_threshold, "minimum gradient magnitude");
        o.add("cell", fa.cell, "stratification cell (voxels)");
        o.add("hit-tol", fa.hit_tol, "ray hit tolerance (voxels)");
        o.add("min-ray", fa.min_ray, "ignore hits closer than this (voxels)");
        o.add("max-ray", fa.max_ray, "ray length (voxels)");
        o.add("centre", fa.centre, "scroll centre x,y in scan units")->delimiter(',')->expected(2);
    }
    FitArgs ta;
    {
        OptionSet &o = subcommand("fit", "fit the deformed spiral to extracted features");
        o.add("features", ta.features, "directory with paths/normals/links .jsonl")->required();
        o.add("out", ta.out, "output directory")->required();
        o.add("centerline", ta.centerline, "optional centerline .jsonl for initialisation");
        o.add("resume", ta.resume, "continue from a checkpoint");
        o.add("seed", ta.seed, "minibatch seed");
        o.add("steps", ta.steps, "total optimisation steps");
        o.add("learning-rate", ta.learning_rate, "Adam learning rate");
        o.add("distance-start", ta.distance_start, "step enabling the distance loss (-1: half way)");
        o.add("rho", ta.rho, "fixed initial rho (0: estimate from links)");
        o.add("direction", ta.direction, "anticlockwise or clockwise");
        o.add("disable", ta.disable, "comma-separated loss terms to switch off");
        o.add("points-per-path", ta.points_per_path, "points sampled per path");
        o.add("winding-points", ta.winding_points, "winding-link pairs per step");
        o.add("normal-points", ta.normal_points, "normal samples per step");
        o.add("regularization-points", ta.regularization_points, "stretch samples per step");
        o.add("paths-per-batch", ta.paths_per_batch, "paths per step");
        o.add("checkpoint-every", ta.checkpoint_every, "steps between checkpoints (0: never)");
        o.add("history-every", ta.history_every, "steps between loss history rows");
        o.add("max-velocity", ta.max_velocity, "flow node bound in grid spacings");
    }
    MeshArgs ma;
    {
        OptionSet &o = subcommand("mesh", "extract a UV-mapped triangle mesh from a fitted model");
        o.add("model", ma.model, "fitted model (.spfm)")->required();
        o.add("out", ma.out, "output directory")->required();
        o.add("dtheta", ma.dtheta, "angular step (0: default)");
        o.add("dz", ma.dz, "z step (0: default)");
    }
    MetricsArgs xa;
    {
        OptionSet &o = subcommand("metrics", "compare a fitted model or mesh with a ground-truth mesh");
        o.add("gt", xa.gt, "ground-truth mesh (.obj with .labels)")->required();
        o.add("model", xa.model, "fitted model (.spfm)");
        o.add("mesh", xa.mesh, "predicted mesh (.obj); default: extracted from --model");
        o.add("out", xa.out, "output directory")->required();
        o.add("seed", xa.seed, "chamfer sampling seed");
        o.add("samples", xa.samples, "chamfer sample count");
        o.add("slices", xa.slices, "z slices for WJF and MRWD");
        o.add("angles", xa.angles, "rays per slice for MRWD");
        o.add("dtheta", xa.dtheta, "mesh angular step when extracting (0: default)");
        o.add("dz", xa.dz, "mesh z step when extracting (0: default)");
    }
    RenderArgs ra;
    {
        OptionSet &o = subcommand("render", "sample the volume along the fitted surface into flat layers");
        o.add("model", ra.model, "fitted model (.spfm)")->required();
        o.add("volume", ra.volume, "probability volume (.volp)")->required();
        o.add("out", ra.out, "output directory")->required();
        o.add("thickness", ra.thickness, "total layer span (0: half a winding spacing)");
        o.add("layers", ra.layers, "number of layers");
        o.add("channel", ra.channel, "volume channel");
        o.add("dtheta", ra.dtheta, "angular step (0: default)");
        o.add("dz", ra.dz, "z step (0: default)");
    }

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = expand_config(args, app);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_usage;
    } catch (const UsageError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_usage;
    }

    CLI::App *sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    try {
        const std::string out = name == "phantom"    ? pa.out
                                : name == "features" ? fa.out
                                : name == "fit"      ? ta.out
                                : name == "mesh"     ? ma.out
                                : name == "metrics"  ? xa.out
                                                     : ra.out;
        prepare_out(out);
        io::write_text(out + "/" + name + ".config", sets.at(sub).snapshot());
        if (name == "phantom") run_phantom(pa);
        else if (name == "features") run_features(fa);
        else if (name == "fit") run_fit_cmd(ta);
        else if (name == "mesh") run_mesh(ma);
        else if (name == "metrics") run_metrics(xa);
        else run_render(ra);
    } catch (const UsageError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_usage;
    } catch (const ConfigError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_usage;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_data;
    }
    return 0;
}
