// vigxray: graph-classifier explainability pipeline.
//
//   init-weights   deterministic seeded weight container
//   analyze        forward pass -> trace + per-layer metrics (CSV/JSON)
//   aggregate      fold per-image metrics into a layer-pair table
//   heatmap        render a patch's incoming connections, optional curves
//
// Exit codes: 0 ok, 2 invalid arguments/data, 3 I/O or file format, 4
// partial failure (some manifest entries failed, some succeeded).

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "vigxray/error.hpp"
#include "vigxray/heatmap.hpp"
#include "vigxray/image.hpp"
#include "vigxray/metrics.hpp"
#include "vigxray/model.hpp"
#include "vigxray/trace.hpp"

namespace fs = std::filesystem;
using namespace vigxray;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitPartial = 4;

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Io:
        case ErrorKind::UnsupportedFormat:
        case ErrorKind::CorruptStream:
        case ErrorKind::VersionMismatch:
            return kExitIo;
        case ErrorKind::ShapeMismatch:
        case ErrorKind::InvariantViolation:
        case ErrorKind::InvalidArgument:
            return kExitValidation;
    }
    return kExitValidation;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

int parse_int(const std::string& s, const char* what) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw Error(ErrorKind::InvalidArgument, std::string("bad ") + what + ": '" + s + "'");
    return v;
}

// "--patch r,c" or "--patch index" on the 14x14 grid.
int parse_patch(const std::string& s) {
    std::size_t comma = s.find(',');
    if (comma == std::string::npos) {
        int i = parse_int(s, "--patch");
        if (i < 0 || i >= kNumPatches)
            throw Error(ErrorKind::InvalidArgument,
                        "--patch index must be in [0, " + std::to_string(kNumPatches) + ")");
        return i;
    }
    int r = parse_int(s.substr(0, comma), "--patch row");
    int c = parse_int(s.substr(comma + 1), "--patch col");
    if (r < 0 || r >= kGridSide || c < 0 || c >= kGridSide)
        throw Error(ErrorKind::InvalidArgument, "--patch row,col must be in [0, 14)");
    return PatchGrid::index_of(r, c);
}

ModularityVariant parse_variant(const std::string& s) {
    if (s == "as-printed") return ModularityVariant::AsPrinted;
    if (s == "leicht-newman") return ModularityVariant::LeichtNewman;
    throw Error(ErrorKind::InvalidArgument, "unknown --modularity-variant: " + s);
}

HeatmapSpec::Normalization parse_normalization(const std::string& s) {
    if (s == "minmax") return HeatmapSpec::Normalization::PerLayerMinMax;
    if (s == "absolute") return HeatmapSpec::Normalization::Absolute;
    throw Error(ErrorKind::InvalidArgument, "unknown --normalization: " + s);
}

ImageRGB load_model_image(const std::string& path) {
    ImageRGB img = load_image(path);
    if (img.width != kModelImageSize || img.height != kModelImageSize)
        img = resize_bilinear(img, kModelImageSize, kModelImageSize);
    return img;
}

std::vector<std::string> load_class_names(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        names.push_back(line);
    }
    return names;
}

std::string class_display(int cls, const std::vector<std::string>& names) {
    std::string s = std::to_string(cls);
    if (cls >= 0 && cls < static_cast<int>(names.size()) && !names[cls].empty())
        s += " (" + names[cls] + ")";
    return s;
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create " + dir + ": " + ec.message());
}

// ---------------------------------------------------------------- init-weights

struct InitOpts {
    ModelConfig cfg;
    std::string out;
};

int run_init(const InitOpts& o) {
    o.cfg.validate();
    ModelWeights w = init_weights(o.cfg);
    save_weights(w, o.out);
    const ModelConfig& c = o.cfg;
    std::string krange = std::to_string(c.k);
    if (c.k_schedule) krange += ".." + std::to_string(c.k_at_layer(c.num_layers));
    std::printf("wrote %s: layers=%d dim=%d k=%s classes=%d heads=%d ffn_ratio=%d seed=%llu\n",
                o.out.c_str(), c.num_layers, c.hidden_dim, krange.c_str(), c.num_classes,
                c.num_heads, c.ffn_ratio, static_cast<unsigned long long>(c.seed));
    return 0;
}

// --------------------------------------------------------------------- analyze

struct AnalyzeOpts {
    std::string image, manifest, weights_path, mask_path, out_dir = ".", class_names_path;
    std::optional<int> label;
    bool no_trace = false;
    bool no_features = false;
    double mask_threshold = 0.5;
    std::string variant = "as-printed";
    int jobs = 0;  // 0 = $VIGXRAY_THREADS or 1
};

struct WorkItem {
    ManifestEntry entry;
    std::string out_stem;
};

struct WorkResult {
    bool ok = false;
    int code = kExitIo;
    std::string line;   // summary on success
    std::string error;  // message on failure
};

void analyze_one(const WorkItem& it, const AnalyzeOpts& o, const ModelWeights& w,
                 ModularityVariant variant, const std::vector<std::string>& names,
                 WorkResult& r) {
    try {
        ImageRGB img = load_model_image(it.entry.image_path);
        PatchGrid grid = partition(img);
        Trace t = forward(grid, w);
        t.label = it.entry.label;

        AnalyzeOptions ao;
        ao.label = it.entry.label;
        ao.variant = variant;
        if (!it.entry.mask_path.empty())
            ao.mask = downsample_mask(load_mask(it.entry.mask_path), o.mask_threshold);

        std::vector<LayerMetrics> report = analyze_trace(t, grid, ao, &w);

        std::string base = (fs::path(o.out_dir) / it.out_stem).string();
        if (!o.no_trace) write_trace(t, base + ".trace", !o.no_features);
        write_metrics_csv(it.out_stem, report, base + ".metrics.csv");
        write_metrics_json(it.out_stem, report, base + ".metrics.json");

        r.line = it.out_stem + ": prediction " + class_display(t.prediction, names);
        if (it.entry.label) {
            r.line += " label " + class_display(*it.entry.label, names);
            const LayerMetrics& last = report.back();
            if (last.p) {
                char buf[32];
                std::snprintf(buf, sizeof buf, " p=%.6g", *last.p);
                r.line += buf;
            }
            if (last.top1_hit) r.line += *last.top1_hit ? " top1=hit" : " top1=miss";
        }
        r.ok = true;
    } catch (const Error& e) {
        r.error = it.entry.image_path + ": " + e.what();
        r.code = exit_code_for(e);
    } catch (const std::exception& e) {
        r.error = it.entry.image_path + ": " + e.what();
        r.code = kExitIo;
    }
}

int run_analyze(const AnalyzeOpts& o) {
    if (o.image.empty() && o.manifest.empty())
        throw Error(ErrorKind::InvalidArgument, "analyze needs --image or --manifest");
    ModelWeights w = load_weights(o.weights_path);
    ModularityVariant variant = parse_variant(o.variant);
    std::vector<std::string> names;
    if (!o.class_names_path.empty()) names = load_class_names(o.class_names_path);

    std::vector<WorkItem> items;
    if (!o.image.empty()) {
        items.push_back({{o.image, o.label, o.mask_path}, stem_of(o.image)});
    } else {
        std::vector<ManifestEntry> entries = read_manifest(o.manifest);
        if (entries.empty())
            throw Error(ErrorKind::InvalidArgument, "manifest has no entries: " + o.manifest);
        // Output names come from image stems; disambiguate repeats by file
        // order so parallel runs stay collision-free and reproducible.
        std::map<std::string, int> used;
        for (const ManifestEntry& e : entries) {
            std::string s = stem_of(e.image_path);
            int n = ++used[s];
            if (n > 1) s += "_" + std::to_string(n);
            items.push_back({e, s});
        }
    }
    ensure_out_dir(o.out_dir);

    int jobs = o.jobs;
    if (jobs <= 0) {
        const char* env = std::getenv("VIGXRAY_THREADS");
        jobs = env ? std::max(1, std::atoi(env)) : 1;
    }
    jobs = std::min<int>(jobs, static_cast<int>(items.size()));

    std::vector<WorkResult> results(items.size());
    if (jobs <= 1) {
        for (std::size_t i = 0; i < items.size(); ++i)
            analyze_one(items[i], o, w, variant, names, results[i]);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(jobs);
        for (int j = 0; j < jobs; ++j) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < items.size(); i = next.fetch_add(1))
                    analyze_one(items[i], o, w, variant, names, results[i]);
            });
        }
        for (std::thread& th : pool) th.join();
    }

    std::size_t failures = 0;
    int first_fail_code = kExitIo;
    for (const WorkResult& r : results) {
        if (r.ok) {
            std::printf("%s\n", r.line.c_str());
        } else {
            if (failures == 0) first_fail_code = r.code;
            ++failures;
            std::fprintf(stderr, "error: %s\n", r.error.c_str());
        }
    }
    if (failures == 0) return 0;
    if (failures == results.size()) return first_fail_code;
    std::fprintf(stderr, "%zu of %zu images failed\n", failures, results.size());
    return kExitPartial;
}

// ------------------------------------------------------------------- aggregate

struct AggOpts {
    std::string dir;
    std::string out;
    bool per_layer = false;
};

std::string cell_or_dash(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", *v);
    return buf;
}

int run_aggregate(const AggOpts& o) {
    if (!fs::is_directory(o.dir))
        throw Error(ErrorKind::Io, "not a directory: " + o.dir);
    std::vector<fs::path> files;
    for (const fs::directory_entry& de : fs::directory_iterator(o.dir)) {
        std::string name = de.path().filename().string();
        if (name.size() > 13 && name.ends_with(".metrics.json")) files.push_back(de.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw Error(ErrorKind::InvalidArgument, "no *.metrics.json files in " + o.dir);

    std::vector<std::vector<LayerMetrics>> reports;
    reports.reserve(files.size());
    for (const fs::path& f : files) reports.push_back(read_metrics_json(f.string()).second);

    std::vector<AggregateRow> rows = aggregate(reports, !o.per_layer);
    std::string out = o.out.empty() ? (fs::path(o.dir) / "aggregate.csv").string() : o.out;
    write_aggregate_csv(rows, out);

    std::printf("%-8s %12s %12s %12s %12s %12s %12s\n", "layers", "S_vis", "D", "S_emb", "Q", "p",
                "top1_acc");
    for (const AggregateRow& r : rows) {
        std::printf("%-8s %12s %12s %12s %12s %12s %12s\n", r.layers.c_str(),
                    cell_or_dash(r.s_vis).c_str(), cell_or_dash(r.spatial_d).c_str(),
                    cell_or_dash(r.s_emb).c_str(), cell_or_dash(r.q).c_str(),
                    cell_or_dash(r.p).c_str(), cell_or_dash(r.top1_acc).c_str());
    }
    std::printf("wrote %s (%zu images)\n", out.c_str(), reports.size());
    return 0;
}

// --------------------------------------------------------------------- heatmap

struct HeatOpts {
    std::string trace_path, image_path, weights_path, out_dir = ".";
    std::string patch;
    std::vector<int> layers;
    int scale = 3;
    double alpha_floor = 0.25;
    double alpha_ceiling = 0.9;
    std::string normalization = "minmax";
    bool curves = false;
};

int run_heatmap(const HeatOpts& o) {
    if (o.trace_path.empty() && (o.image_path.empty() || o.weights_path.empty()))
        throw Error(ErrorKind::InvalidArgument,
                    "heatmap needs --trace, or --image together with --weights");

    ImageRGB base;
    PatchGrid grid;
    if (!o.image_path.empty()) {
        base = load_model_image(o.image_path);
        grid = partition(base);
    } else {
        // Trace-only mode: draw over a neutral canvas.
        base = ImageRGB(kModelImageSize, kModelImageSize);
        std::fill(base.data.begin(), base.data.end(), std::uint8_t{128});
    }

    std::optional<ModelWeights> w;
    if (!o.weights_path.empty()) w = load_weights(o.weights_path);

    Trace t;
    if (!o.trace_path.empty()) {
        t = read_trace(o.trace_path);
    } else {
        t = forward(grid, *w);
    }
    if (t.config.num_nodes != kNumPatches)
        throw Error(ErrorKind::InvalidArgument, "heatmaps require the 196-patch layout");

    HeatmapSpec spec;
    spec.patch_index = parse_patch(o.patch);
    spec.layers = o.layers;
    spec.scale = o.scale;
    spec.alpha_floor = o.alpha_floor;
    spec.alpha_ceiling = o.alpha_ceiling;
    spec.normalization = parse_normalization(o.normalization);
    for (int l : spec.layers) {
        if (l < 1 || l > t.config.num_layers)
            throw Error(ErrorKind::InvalidArgument,
                        "--layers entry " + std::to_string(l) + " outside [1, " +
                            std::to_string(t.config.num_layers) + "]");
    }

    ensure_out_dir(o.out_dir);
    std::string img_id = !o.image_path.empty() ? stem_of(o.image_path) : stem_of(o.trace_path);
    GridCoord rc = PatchGrid::coord_of(spec.patch_index);
    for (int l : spec.layers) {
        std::vector<NeighborIntensity> entries = neighbor_intensities(t, l, spec.patch_index, spec);
        ImageRGB out = render_heatmap(base, spec.patch_index, entries, spec);
        std::string name = img_id + "_" + std::to_string(l) + "_" + std::to_string(rc.row) + "_" +
                           std::to_string(rc.col) + ".png";
        std::string path = (fs::path(o.out_dir) / name).string();
        save_png(out, path);
        std::printf("wrote %s\n", path.c_str());
    }

    if (o.curves) {
        std::vector<LayerMetrics> report =
            analyze_trace(t, grid, AnalyzeOptions{}, w ? &*w : nullptr);
        std::string base_path = (fs::path(o.out_dir) / img_id).string();
        render_metric_curves(report, base_path + ".curves.csv", base_path + ".curves.png");
        std::printf("wrote %s.curves.csv and %s.curves.png\n", base_path.c_str(),
                    base_path.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vigxray: vision graph classifier explainability pipeline"};
    app.require_subcommand(1);
    app.footer(
        "exit codes: 0 ok, 2 invalid arguments or data, 3 I/O or file format, "
        "4 partial failure");
    app.set_version_flag("--version", "vigxray 0.1.0");

    InitOpts init;
    CLI::App* sub_init = app.add_subcommand("init-weights", "write a seeded weights container");
    sub_init->add_option("--seed", init.cfg.seed, "PRNG seed")->capture_default_str();
    sub_init->add_option("--dim", init.cfg.hidden_dim, "feature width D")->capture_default_str();
    sub_init->add_option("--layers", init.cfg.num_layers, "block count L")->capture_default_str();
    sub_init->add_option("--classes", init.cfg.num_classes, "class count C")
        ->capture_default_str();
    sub_init->add_option("--k", init.cfg.k, "in-neighbors per node")->capture_default_str();
    sub_init->add_option("--heads", init.cfg.num_heads, "conv head count")->capture_default_str();
    sub_init->add_option("--ffn-ratio", init.cfg.ffn_ratio, "FFN expansion ratio")
        ->capture_default_str();
    sub_init->add_flag("--k-schedule", init.cfg.k_schedule,
                       "ramp K linearly from k to 2k across layers");
    sub_init->add_option("-o,--output", init.out, "output path")->required();

    AnalyzeOpts an;
    CLI::App* sub_an = app.add_subcommand("analyze", "forward pass, trace and per-layer metrics");
    CLI::Option* opt_image = sub_an->add_option("--image", an.image, "input image (PNG/PPM/PGM)");
    CLI::Option* opt_man =
        sub_an->add_option("--manifest", an.manifest,
                           "tab-separated list: image [label] [mask], one per line");
    opt_image->excludes(opt_man);
    opt_man->excludes(opt_image);
    sub_an->add_option("--weights", an.weights_path, "weights container")->required();
    sub_an->add_option("--mask", an.mask_path, "object mask (image or 0/1 text grid)")
        ->excludes(opt_man);
    sub_an->add_option("--label", an.label, "ground-truth class index")->excludes(opt_man);
    sub_an->add_option("--out-dir", an.out_dir, "output directory")->capture_default_str();
    sub_an->add_flag("--no-trace", an.no_trace, "skip writing the trace file");
    sub_an->add_flag("--no-features", an.no_features, "write the trace without feature payloads");
    sub_an->add_option("--mask-threshold", an.mask_threshold,
                       "object fraction for a patch to count as object")
        ->capture_default_str();
    sub_an->add_option("--modularity-variant", an.variant, "as-printed | leicht-newman")
        ->capture_default_str();
    sub_an->add_option("--jobs", an.jobs, "parallel images (0 = $VIGXRAY_THREADS or 1)")
        ->capture_default_str();
    sub_an->add_option("--class-names", an.class_names_path,
                       "optional classes.txt, one name per line (display only)");

    AggOpts ag;
    CLI::App* sub_ag = app.add_subcommand("aggregate", "average per-image metrics into a table");
    sub_ag->add_option("--dir", ag.dir, "directory of *.metrics.json files")->required();
    sub_ag->add_option("--out", ag.out, "output CSV (default <dir>/aggregate.csv)");
    sub_ag->add_flag("--per-layer", ag.per_layer, "one row per layer instead of layer pairs");

    HeatOpts hm;
    CLI::App* sub_hm = app.add_subcommand("heatmap", "render incoming connections of one patch");
    sub_hm->add_option("--trace", hm.trace_path, "trace file from analyze");
    sub_hm->add_option("--image", hm.image_path, "base image (and graph source with --weights)");
    sub_hm->add_option("--weights", hm.weights_path, "weights container (forward pass mode)");
    sub_hm->add_option("--patch", hm.patch, "patch as row,col or flat index")->required();
    sub_hm->add_option("--layers", hm.layers, "layers to render, e.g. 4,10")
        ->required()
        ->delimiter(',');
    sub_hm->add_option("--scale", hm.scale, "output pixels per image pixel")
        ->capture_default_str();
    sub_hm->add_option("--alpha-floor", hm.alpha_floor, "weakest neighbor blend")
        ->capture_default_str();
    sub_hm->add_option("--alpha-ceiling", hm.alpha_ceiling, "strongest neighbor blend")
        ->capture_default_str();
    sub_hm->add_option("--normalization", hm.normalization, "minmax | absolute")
        ->capture_default_str();
    sub_hm->add_option("--out-dir", hm.out_dir, "output directory")->capture_default_str();
    sub_hm->add_flag("--curves", hm.curves, "also write metric curves (CSV + PNG)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int cli_code = app.exit(e);
        return cli_code == 0 ? 0 : kExitValidation;
    }

    try {
        if (sub_init->parsed()) return run_init(init);
        if (sub_an->parsed()) return run_analyze(an);
        if (sub_ag->parsed()) return run_aggregate(ag);
        if (sub_hm->parsed()) return run_heatmap(hm);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    }
    return 0;
}
