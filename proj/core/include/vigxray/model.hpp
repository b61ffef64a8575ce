#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vigxray/image.hpp"

namespace vigxray {

struct Trace;

// Hyperparameters of the isotropic graph classifier. The feature width is
// constant across layers so the single classification head can be applied to
// any layer's features.
struct ModelConfig {
    int num_layers = 16;
    int hidden_dim = 64;
    int k = 9;  // in-neighbors per node
    int num_classes = 1000;
    int num_heads = 1;
    int ffn_ratio = 4;
    std::uint64_t seed = 0;
    int num_nodes = kNumPatches;  // overridable for small test instances
    bool k_schedule = false;      // linear per-layer K from k up to 2k

    void validate() const;

    // K used when building the graph of layer l (1-based). With k_schedule
    // the value ramps linearly from k at layer 1 to 2k at layer L.
    int k_at_layer(int layer) const;
};

// Dense row-major tensor; shape [in, out] for linear maps so that
// y[o] = sum_d x[d] * data[d*out + o].
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int> s) : shape(std::move(s)) {
        std::size_t n = 1;
        for (int d : shape) n *= std::size_t(d);
        data.assign(n, 0.0f);
    }
};

struct LayerWeights {
    Tensor w_in, b_in;          // D x D, D
    Tensor w_update, b_update;  // 2D x D, D
    Tensor w_out, b_out;        // D x D, D
    Tensor ffn_w1, ffn_b1;      // D x (ffn_ratio*D), ffn_ratio*D
    Tensor ffn_w2, ffn_b2;      // (ffn_ratio*D) x D, D
};

struct ModelWeights {
    ModelConfig config;
    Tensor stem_proj, stem_bias;  // 768 x D, D
    Tensor pos_enc;               // N x D
    std::vector<LayerWeights> layers;
    Tensor head_w, head_b;  // D x C, C

    void validate_shapes() const;
};

// Node embedding matrix at one layer: num_nodes x dim, row-major.
struct NodeFeatures {
    int layer = 0;
    int num_nodes = 0;
    int dim = 0;
    std::vector<float> values;

    NodeFeatures() = default;
    NodeFeatures(int n, int d, int l = 0)
        : layer(l), num_nodes(n), dim(d), values(std::size_t(n) * d, 0.0f) {}

    float* row(int i) { return values.data() + std::size_t(i) * dim; }
    const float* row(int i) const { return values.data() + std::size_t(i) * dim; }
};

// Directed graph of one layer. Edges run source -> destination; for each
// destination i the k sources are stored contiguously, ordered by descending
// cosine similarity (ties by ascending source index). edge_sims holds the
// cosine similarity of each stored edge, clamped to [-1, 1].
struct LayerGraph {
    int layer = 0;
    int num_nodes = 0;
    int k = 0;
    std::vector<std::int32_t> in_neighbors;  // num_nodes * k
    std::vector<float> edge_sims;            // num_nodes * k

    const std::int32_t* neighbors_of(int i) const {
        return in_neighbors.data() + std::size_t(i) * k;
    }
    const float* sims_of(int i) const { return edge_sims.data() + std::size_t(i) * k; }
    std::size_t edge_count() const { return in_neighbors.size(); }
};

// Deterministic weight initialization: every tensor is filled in a documented
// order from one xoshiro256++ stream seeded with config.seed, entries uniform
// in [-1,1) scaled by 1/sqrt(fan_in). Biases are zero and draw nothing.
ModelWeights init_weights(const ModelConfig& config);

// X^0: per patch, flattened [0,1] RGB projected through the stem plus the
// patch's positional encoding row.
NodeFeatures stem(const PatchGrid& grid, const ModelWeights& w);

// Stem over explicit per-node input vectors (num_nodes x 768). Used directly
// by small-instance tests; stem() delegates here.
NodeFeatures stem_from_vectors(const std::vector<float>& inputs, int num_nodes,
                               const ModelWeights& w);

// Connects every node to its k most cosine-similar other nodes. Edges point
// from the chosen sources to the destination. Zero-norm features compare as
// similarity 0 against everything; exact ties resolve to the smaller source
// index.
LayerGraph knn_graph(const NodeFeatures& x, int k);

// Max-relative graph convolution: per node, the elementwise max of
// (x_j - x_i) over in-neighbors j is concatenated to x_i and projected
// through w_update (+ bias). Nodes without in-neighbors use a zero max
// vector. With num_heads > 1 the feature width is split into contiguous
// head slices and each head applies its own row/column block of w_update.
NodeFeatures max_relative_conv(const NodeFeatures& x, const LayerGraph& g,
                               const Tensor& w_update, const Tensor& bias, int num_heads = 1);

// One block: build the graph on the input features, then
//   h = (max_relative_conv(x*W_in + b) ) * W_out + b,  o = x + h,
//   y = o + FFN(o)   with FFN(o) = gelu(o*W1 + b1)*W2 + b2.
std::pair<NodeFeatures, LayerGraph> vig_block(const NodeFeatures& x, const LayerWeights& lw,
                                              int k, int num_heads);

// Mean-pool over nodes, apply the linear head.
std::vector<float> head_logits(const NodeFeatures& x, const ModelWeights& w);

// Softmax probabilities of the head (max-subtracted for stability).
std::vector<float> classify_head(const NodeFeatures& x, const ModelWeights& w);

std::vector<float> softmax(const std::vector<float>& logits);

// Full forward pass over the patch grid; records every layer's features,
// graph and head outputs in a Trace.
Trace forward(const PatchGrid& grid, const ModelWeights& w);
Trace forward_from_vectors(const std::vector<float>& inputs, int num_nodes,
                           const ModelWeights& w);

// Versioned little-endian container: magic, version, config, named f32
// tensor table. Round-trips are bitwise.
void save_weights(const ModelWeights& w, const std::string& path);
ModelWeights load_weights(const std::string& path);

}  // namespace vigxray
