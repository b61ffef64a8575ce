#pragma once

#include <span>
#include <string>
#include <vector>

#include "vigxray/image.hpp"
#include "vigxray/metrics.hpp"
#include "vigxray/trace.hpp"

namespace vigxray {

// Rendering parameters for connection heatmaps.
struct HeatmapSpec {
    int patch_index = 0;
    std::vector<int> layers;     // 1-based layers to render
    int scale = 3;               // output pixels per image pixel
    double alpha_floor = 0.25;   // weakest neighbor blend
    double alpha_ceiling = 0.9;  // strongest neighbor blend

    enum class Normalization {
        PerLayerMinMax,  // map [min sim, max sim] of the neighbor set onto [floor, ceiling]
        Absolute,        // map (sim+1)/2 onto [floor, ceiling]
    };
    Normalization normalization = Normalization::PerLayerMinMax;
};

struct NeighborIntensity {
    int node = 0;
    float sim = 0.0f;
    double alpha = 0.0;
};

// The selected patch's in-neighbors at one layer with their stored edge
// similarities mapped to blend strengths. When every similarity is equal the
// min-max mode degenerates to the ceiling for all neighbors.
std::vector<NeighborIntensity> neighbor_intensities(const Trace& t, int layer, int patch_index,
                                                    const HeatmapSpec& spec);

// Draws the heatmap: the base image upscaled by nearest neighbor, neighbor
// patches blended toward red by their alpha, the selected patch blended
// toward green (alpha 0.6) and outlined with a solid green stroke of width
// 2*scale drawn inward from the patch boundary. Pixels outside the selected
// and neighbor patches are identical to the upscaled base.
ImageRGB render_heatmap(const ImageRGB& base, int patch_index,
                        const std::vector<NeighborIntensity>& entries, const HeatmapSpec& spec);

// Pixel vertices of one metric polyline, min-max normalized per series
// (a constant series sits at mid-height). Exposed so the coordinate
// transform can be checked directly.
struct CurvePoint {
    int x = 0;
    int y = 0;
};
std::vector<CurvePoint> curve_points(std::span<const double> values, int plot_x, int plot_y,
                                     int plot_w, int plot_h);

// Writes the per-layer metric series as a CSV and a fixed-palette line plot
// (axes, legend, one polyline per present metric).
void render_metric_curves(const std::vector<LayerMetrics>& report, const std::string& csv_path,
                          const std::string& png_path);

}  // namespace vigxray
