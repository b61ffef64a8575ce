#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vigxray/image.hpp"
#include "vigxray/model.hpp"
#include "vigxray/trace.hpp"

namespace vigxray {

// Per-layer metric values. Fields stay empty when their inputs (label, mask,
// image) were not supplied; nothing is defaulted.
struct LayerMetrics {
    int layer = 0;
    std::optional<double> s_emb;        // mean cosine similarity of connected embeddings
    std::optional<double> spatial_d;    // mean Manhattan distance on the patch grid
    std::optional<double> s_vis;        // mean cosine similarity of connected raw patches
    std::optional<double> p;            // ground-truth class probability
    std::optional<bool> top1_hit;
    std::optional<double> q;            // object/background modularity
};

// Edge and degree bookkeeping behind the modularity score, split by the two
// communities (object vs background).
struct ModularityBreakdown {
    long long intra_object = 0;      // edges with both endpoints in the object
    long long intra_background = 0;
    long long cross = 0;
    long long total_edges = 0;
    long long k_in_object = 0;   // summed in-degrees of object nodes
    long long k_out_object = 0;
    long long k_in_background = 0;
    long long k_out_background = 0;
};

enum class ModularityVariant {
    AsPrinted,     // Q = sum_c [ L_c/|E| - (k_in_c*k_out_c / (2|E|))^2 ]
    LeichtNewman,  // Q = sum_c [ L_c/|E| - k_in_c*k_out_c / |E|^2 ]
};

// Mean cosine similarity over all edges (j -> i), evaluated on x.
// Zero-norm rows compare as 0. Empty edge sets are an error.
double embedding_similarity(const LayerGraph& g, const NodeFeatures& x);

// Mean Manhattan distance |r_i - r_j| + |c_i - c_j| over edges.
double spatial_distance(const LayerGraph& g, std::span<const GridCoord> coords);

// Grid coordinates (i / 14, i % 14) for the standard 196-node layout.
std::vector<GridCoord> default_grid_coords(int num_nodes = kNumPatches);

// Mean cosine similarity of the connected patches' flattened [0,1] RGB.
double visual_similarity(const LayerGraph& g, const PatchGrid& grid);

// Ground-truth class probability from the head applied to x, plus whether
// the argmax matches (ties resolve toward the smaller class index).
std::pair<double, bool> layer_prediction(const NodeFeatures& x, const ModelWeights& w, int label);

// Two-community modularity of the directed graph, communities given by
// object_bits (one entry per node, nonzero = object). An empty community
// contributes exactly 0.
std::pair<double, ModularityBreakdown> modularity(
    const LayerGraph& g, std::span<const std::uint8_t> object_bits,
    ModularityVariant variant = ModularityVariant::AsPrinted);

struct AnalyzeOptions {
    std::optional<PatchMask> mask;
    std::optional<int> label;  // overrides the label stored in the trace
    ModularityVariant variant = ModularityVariant::AsPrinted;
};

// All applicable metrics for every layer of a trace. p/top1 are recomputed
// from features via the head when both are available, otherwise taken from
// the head outputs stored in the trace.
std::vector<LayerMetrics> analyze_trace(const Trace& t, const PatchGrid& grid,
                                        const AnalyzeOptions& opts = {},
                                        const ModelWeights* w = nullptr);

struct AggregateRow {
    std::string layers;  // "1-2" ... or a single layer label
    std::optional<double> s_vis, spatial_d, s_emb, q, p;
    std::optional<double> top1_acc;
};

// Means over images and consecutive layer pairs (odd L leaves a trailing
// singleton row). Top-1 accuracy is the hit fraction at the later layer of
// each pair. Fields absent from every image stay absent.
std::vector<AggregateRow> aggregate(const std::vector<std::vector<LayerMetrics>>& reports,
                                    bool pair_layers = true);

// CSV/JSON serialization. Columns follow the report layout
// image_id, layer, S_vis, D, S_emb, Q, p, top1_hit; empty cell = absent.
void write_metrics_csv(const std::string& image_id, const std::vector<LayerMetrics>& rows,
                       const std::string& path);
void write_metrics_json(const std::string& image_id, const std::vector<LayerMetrics>& rows,
                        const std::string& path);
std::pair<std::string, std::vector<LayerMetrics>> read_metrics_json(const std::string& path);

// Aggregate table CSV: layers, S_vis, D, S_emb, Q, p, top1_acc.
void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::string& path);

}  // namespace vigxray
