#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vigxray/model.hpp"

namespace vigxray {

// Complete record of one forward pass, decoupled from the model so metrics
// and rendering can run on saved files. features[0] is X^0 (post-stem);
// features[l] the output of block l. graphs[l-1] is the graph block l was
// built on (constructed from features[l-1]). logits/probs hold the head
// applied to X^1..X^L.
struct Trace {
    ModelConfig config;
    bool has_features = true;
    std::vector<NodeFeatures> features;       // L+1 entries when present
    std::vector<LayerGraph> graphs;           // L entries
    std::vector<std::vector<float>> logits;   // L x C
    std::vector<std::vector<float>> probs;    // L x C
    int prediction = 0;                       // argmax of probs[L-1], ties -> smaller class
    std::optional<int> label;

    const LayerGraph& graph_at(int layer) const;          // layer in [1..L]
    const NodeFeatures& features_at(int layer) const;     // layer in [0..L]

    void validate() const;
};

// Writes the trace container: text header followed by tagged binary
// sections, feature payloads little-endian f32. Round-trips bit-exactly.
// include_features=false elides feature sections; consumers then fall back
// to stored edge similarities and head outputs.
void write_trace(const Trace& t, const std::string& path, bool include_features = true);

// Reads and validates a trace file. Version, truncation and structural
// problems are reported as distinct error kinds; invariant violations name
// the offending layer and node.
Trace read_trace(const std::string& path);

// One dataset record: image path, optional integer label, optional mask
// path, tab-separated, one per line. Blank lines and '#' comments skipped.
struct ManifestEntry {
    std::string image_path;
    std::optional<int> label;
    std::string mask_path;  // empty when absent
};

std::vector<ManifestEntry> read_manifest(const std::string& path);

}  // namespace vigxray
