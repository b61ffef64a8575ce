#include "vigxray/heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "vigxray/error.hpp"

namespace vigxray {

namespace {

void validate_spec(const HeatmapSpec& spec) {
    if (spec.scale < 1) throw Error(ErrorKind::InvalidArgument, "heatmap scale must be >= 1");
    if (spec.alpha_floor < 0.0 || spec.alpha_ceiling > 1.0 ||
        !(spec.alpha_floor < spec.alpha_ceiling)) {
        throw Error(ErrorKind::InvalidArgument, "alpha floor/ceiling must satisfy 0 <= floor < ceiling <= 1");
    }
}

std::uint8_t blend(std::uint8_t pixel, double alpha, std::uint8_t target) {
    return std::uint8_t(std::lround((1.0 - alpha) * pixel + alpha * target));
}

void blend_patch(ImageRGB& img, int patch_index, int scale, double alpha, std::uint8_t r,
                 std::uint8_t g, std::uint8_t b) {
    GridCoord rc = PatchGrid::coord_of(patch_index);
    int side = kPatchSide * scale;
    int x0 = rc.col * side;
    int y0 = rc.row * side;
    for (int y = y0; y < y0 + side; ++y) {
        for (int x = x0; x < x0 + side; ++x) {
            img.at(x, y, 0) = blend(img.at(x, y, 0), alpha, r);
            img.at(x, y, 1) = blend(img.at(x, y, 1), alpha, g);
            img.at(x, y, 2) = blend(img.at(x, y, 2), alpha, b);
        }
    }
}

}  // namespace

std::vector<NeighborIntensity> neighbor_intensities(const Trace& t, int layer, int patch_index,
                                                    const HeatmapSpec& spec) {
    validate_spec(spec);
    if (layer < 1 || layer > t.config.num_layers) {
        throw Error(ErrorKind::InvalidArgument, "layer out of range: " + std::to_string(layer));
    }
    if (patch_index < 0 || patch_index >= t.config.num_nodes) {
        throw Error(ErrorKind::InvalidArgument,
                    "patch index out of range: " + std::to_string(patch_index));
    }

    const LayerGraph& g = t.graph_at(layer);
    const std::int32_t* nbrs = g.neighbors_of(patch_index);
    const float* sims = g.sims_of(patch_index);

    std::vector<NeighborIntensity> entries(g.k);
    for (int s = 0; s < g.k; ++s) entries[s] = {int(nbrs[s]), sims[s], 0.0};

    double lo = spec.alpha_floor, hi = spec.alpha_ceiling;
    if (spec.normalization == HeatmapSpec::Normalization::Absolute) {
        for (auto& e : entries) e.alpha = lo + (hi - lo) * (double(e.sim) + 1.0) / 2.0;
        return entries;
    }
    float mn = sims[0], mx = sims[0];
    for (int s = 1; s < g.k; ++s) {
        mn = std::min(mn, sims[s]);
        mx = std::max(mx, sims[s]);
    }
    for (auto& e : entries) {
        e.alpha = mx == mn ? hi : lo + (hi - lo) * (double(e.sim) - mn) / (double(mx) - mn);
    }
    return entries;
}

ImageRGB render_heatmap(const ImageRGB& base, int patch_index,
                        const std::vector<NeighborIntensity>& entries, const HeatmapSpec& spec) {
    validate_spec(spec);
    if (base.width != kModelImageSize || base.height != kModelImageSize) {
        throw Error(ErrorKind::InvalidArgument, "heatmap base image must be 224x224");
    }
    if (patch_index < 0 || patch_index >= kNumPatches) {
        throw Error(ErrorKind::InvalidArgument,
                    "patch index out of range: " + std::to_string(patch_index));
    }

    int scale = spec.scale;
    ImageRGB out(base.width * scale, base.height * scale);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = base.at(x / scale, y / scale, c);
        }
    }

    for (const NeighborIntensity& e : entries) {
        if (e.node < 0 || e.node >= kNumPatches) {
            throw Error(ErrorKind::InvalidArgument, "neighbor index out of range");
        }
        blend_patch(out, e.node, scale, e.alpha, 255, 0, 0);
    }

    // Selected patch wins over any red: filled after the neighbors.
    blend_patch(out, patch_index, scale, 0.6, 0, 255, 0);

    // Solid green stroke, width 2*scale, drawn inward from the patch
    // boundary so pixels outside the selected patch stay untouched.
    GridCoord rc = PatchGrid::coord_of(patch_index);
    int side = kPatchSide * scale;
    int x0 = rc.col * side, y0 = rc.row * side;
    int border = 2 * scale;
    int inner_x0 = x0 + border, inner_y0 = y0 + border;
    int inner_x1 = x0 + side - border, inner_y1 = y0 + side - border;
    for (int y = y0; y < y0 + side; ++y) {
        for (int x = x0; x < x0 + side; ++x) {
            bool inside = x >= inner_x0 && x < inner_x1 && y >= inner_y0 && y < inner_y1;
            if (inside) continue;
            out.at(x, y, 0) = 0;
            out.at(x, y, 1) = 255;
            out.at(x, y, 2) = 0;
        }
    }
    return out;
}

}  // namespace vigxray
