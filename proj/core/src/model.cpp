#include "vigxray/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vigxray/error.hpp"
#include "vigxray/rng.hpp"
#include "vigxray/trace.hpp"

namespace vigxray {

namespace {

// y = x * W + b over row-major matrices, double accumulators, summation over
// the input index in ascending order.
void affine(const float* x, int rows, int in_dim, int out_dim, const Tensor& w, const Tensor& b,
            float* y) {
    std::vector<double> acc(out_dim);
    for (int r = 0; r < rows; ++r) {
        const float* xr = x + std::size_t(r) * in_dim;
        for (int o = 0; o < out_dim; ++o) acc[o] = b.data.empty() ? 0.0 : double(b.data[o]);
        for (int d = 0; d < in_dim; ++d) {
            double xv = xr[d];
            const float* wrow = w.data.data() + std::size_t(d) * out_dim;
            for (int o = 0; o < out_dim; ++o) acc[o] += xv * double(wrow[o]);
        }
        float* yr = y + std::size_t(r) * out_dim;
        for (int o = 0; o < out_dim; ++o) yr[o] = float(acc[o]);
    }
}

double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

void check_shape(const Tensor& t, std::initializer_list<int> want, const std::string& name) {
    if (!std::equal(t.shape.begin(), t.shape.end(), want.begin(), want.end()) ||
        t.shape.size() != want.size()) {
        throw Error(ErrorKind::ShapeMismatch, "tensor " + name + " has unexpected shape");
    }
    std::size_t n = 1;
    for (int d : t.shape) n *= std::size_t(d);
    if (t.data.size() != n) {
        throw Error(ErrorKind::ShapeMismatch, "tensor " + name + " payload size mismatch");
    }
}

void fill_uniform(Tensor& t, Xoshiro256pp& rng, double scale) {
    for (float& v : t.data) v = float(rng.next_symmetric() * scale);
}

}  // namespace

void ModelConfig::validate() const {
    if (num_layers < 1) throw Error(ErrorKind::InvalidArgument, "num_layers must be >= 1");
    if (hidden_dim < 1) throw Error(ErrorKind::InvalidArgument, "hidden_dim must be >= 1");
    if (num_nodes < 2) throw Error(ErrorKind::InvalidArgument, "num_nodes must be >= 2");
    if (k < 1 || k >= num_nodes) {
        throw Error(ErrorKind::InvalidArgument, "k must satisfy 1 <= k < num_nodes");
    }
    if (k_schedule && 2 * k >= num_nodes) {
        throw Error(ErrorKind::InvalidArgument, "k schedule tops out at 2k, needs 2k < num_nodes");
    }
    if (num_classes < 2) throw Error(ErrorKind::InvalidArgument, "num_classes must be >= 2");
    if (num_heads < 1 || hidden_dim % num_heads != 0) {
        throw Error(ErrorKind::InvalidArgument, "hidden_dim must be divisible by num_heads");
    }
    if (ffn_ratio < 1) throw Error(ErrorKind::InvalidArgument, "ffn_ratio must be >= 1");
}

int ModelConfig::k_at_layer(int layer) const {
    if (!k_schedule || num_layers == 1) return k;
    double t = double(layer - 1) / double(num_layers - 1);
    return int(std::lround(k + t * k));
}

void ModelWeights::validate_shapes() const {
    config.validate();
    int d = config.hidden_dim;
    int f = config.ffn_ratio * d;
    check_shape(stem_proj, {kPatchVectorLen, d}, "stem_proj");
    check_shape(stem_bias, {d}, "stem_bias");
    check_shape(pos_enc, {config.num_nodes, d}, "pos_enc");
    if (int(layers.size()) != config.num_layers) {
        throw Error(ErrorKind::ShapeMismatch, "layer count does not match config");
    }
    for (const LayerWeights& lw : layers) {
        check_shape(lw.w_in, {d, d}, "w_in");
        check_shape(lw.b_in, {d}, "b_in");
        check_shape(lw.w_update, {2 * d, d}, "w_update");
        check_shape(lw.b_update, {d}, "b_update");
        check_shape(lw.w_out, {d, d}, "w_out");
        check_shape(lw.b_out, {d}, "b_out");
        check_shape(lw.ffn_w1, {d, f}, "ffn_w1");
        check_shape(lw.ffn_b1, {f}, "ffn_b1");
        check_shape(lw.ffn_w2, {f, d}, "ffn_w2");
        check_shape(lw.ffn_b2, {d}, "ffn_b2");
    }
    check_shape(head_w, {d, config.num_classes}, "head_w");
    check_shape(head_b, {config.num_classes}, "head_b");
}

ModelWeights init_weights(const ModelConfig& config) {
    config.validate();
    int d = config.hidden_dim;
    int f = config.ffn_ratio * d;

    ModelWeights w;
    w.config = config;
    Xoshiro256pp rng(config.seed);

    // Draw order is part of the format contract: stem, positional encodings,
    // then per layer w_in, w_update, w_out, ffn_w1, ffn_w2, and finally the
    // head. Biases are zero-initialized and consume no stream values.
    w.stem_proj = Tensor({kPatchVectorLen, d});
    fill_uniform(w.stem_proj, rng, 1.0 / std::sqrt(double(kPatchVectorLen)));
    w.stem_bias = Tensor({d});

    w.pos_enc = Tensor({config.num_nodes, d});
    fill_uniform(w.pos_enc, rng, 1.0 / std::sqrt(double(d)));

    w.layers.resize(config.num_layers);
    for (LayerWeights& lw : w.layers) {
        lw.w_in = Tensor({d, d});
        fill_uniform(lw.w_in, rng, 1.0 / std::sqrt(double(d)));
        lw.b_in = Tensor({d});
        lw.w_update = Tensor({2 * d, d});
        fill_uniform(lw.w_update, rng, 1.0 / std::sqrt(double(2 * d)));
        lw.b_update = Tensor({d});
        lw.w_out = Tensor({d, d});
        fill_uniform(lw.w_out, rng, 1.0 / std::sqrt(double(d)));
        lw.b_out = Tensor({d});
        lw.ffn_w1 = Tensor({d, f});
        fill_uniform(lw.ffn_w1, rng, 1.0 / std::sqrt(double(d)));
        lw.ffn_b1 = Tensor({f});
        lw.ffn_w2 = Tensor({f, d});
        fill_uniform(lw.ffn_w2, rng, 1.0 / std::sqrt(double(f)));
        lw.ffn_b2 = Tensor({d});
    }

    w.head_w = Tensor({d, config.num_classes});
    fill_uniform(w.head_w, rng, 1.0 / std::sqrt(double(d)));
    w.head_b = Tensor({config.num_classes});
    return w;
}

NodeFeatures stem_from_vectors(const std::vector<float>& inputs, int num_nodes,
                               const ModelWeights& w) {
    int d = w.config.hidden_dim;
    if (num_nodes != w.config.num_nodes) {
        throw Error(ErrorKind::ShapeMismatch, "stem input node count does not match config");
    }
    if (inputs.size() != std::size_t(num_nodes) * kPatchVectorLen) {
        throw Error(ErrorKind::ShapeMismatch, "stem input must be num_nodes x 768");
    }
    NodeFeatures x(num_nodes, d, 0);
    affine(inputs.data(), num_nodes, kPatchVectorLen, d, w.stem_proj, w.stem_bias,
           x.values.data());
    for (int i = 0; i < num_nodes; ++i) {
        const float* e = w.pos_enc.data.data() + std::size_t(i) * d;
        float* r = x.row(i);
        for (int c = 0; c < d; ++c) r[c] += e[c];
    }
    return x;
}

NodeFeatures stem(const PatchGrid& grid, const ModelWeights& w) {
    if (w.config.num_nodes != kNumPatches) {
        throw Error(ErrorKind::ShapeMismatch, "stem over a patch grid requires num_nodes == 196");
    }
    std::vector<float> inputs(std::size_t(kNumPatches) * kPatchVectorLen);
    for (int i = 0; i < kNumPatches; ++i) {
        std::vector<float> v = flatten_patch(grid, i);
        std::copy(v.begin(), v.end(), inputs.begin() + std::size_t(i) * kPatchVectorLen);
    }
    return stem_from_vectors(inputs, kNumPatches, w);
}

LayerGraph knn_graph(const NodeFeatures& x, int k) {
    int n = x.num_nodes;
    if (k < 1 || k >= n) {
        throw Error(ErrorKind::InvalidArgument, "knn_graph needs 1 <= k < num_nodes");
    }

    std::vector<double> norms(n);
    for (int i = 0; i < n; ++i) {
        const float* r = x.row(i);
        double s = 0.0;
        for (int d = 0; d < x.dim; ++d) s += double(r[d]) * double(r[d]);
        norms[i] = std::sqrt(s);
    }

    LayerGraph g;
    g.layer = x.layer;
    g.num_nodes = n;
    g.k = k;
    g.in_neighbors.resize(std::size_t(n) * k);
    g.edge_sims.resize(std::size_t(n) * k);

    std::vector<std::pair<double, int>> cand(n - 1);
    for (int i = 0; i < n; ++i) {
        const float* xi = x.row(i);
        int m = 0;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double sim = 0.0;
            if (norms[i] != 0.0 && norms[j] != 0.0) {
                const float* xj = x.row(j);
                double dot = 0.0;
                for (int d = 0; d < x.dim; ++d) dot += double(xj[d]) * double(xi[d]);
                sim = dot / (norms[j] * norms[i]);
            }
            cand[m++] = {sim, j};
        }
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end(),
                          [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return a.second < b.second;
                          });
        for (int s = 0; s < k; ++s) {
            g.in_neighbors[std::size_t(i) * k + s] = cand[s].second;
            g.edge_sims[std::size_t(i) * k + s] =
                float(std::clamp(cand[s].first, -1.0, 1.0));
        }
    }
    return g;
}

NodeFeatures max_relative_conv(const NodeFeatures& x, const LayerGraph& g, const Tensor& w_update,
                               const Tensor& bias, int num_heads) {
    int n = x.num_nodes;
    int d = x.dim;
    if (g.num_nodes != n) {
        throw Error(ErrorKind::ShapeMismatch, "graph and features disagree on node count");
    }
    if (w_update.shape != std::vector<int>{2 * d, d}) {
        throw Error(ErrorKind::ShapeMismatch, "w_update must be 2D x D");
    }
    if (num_heads < 1 || d % num_heads != 0) {
        throw Error(ErrorKind::ShapeMismatch, "feature width must divide evenly across heads");
    }
    int dh = d / num_heads;

    NodeFeatures out(n, d, x.layer);
    std::vector<float> concat(std::size_t(2) * d);
    std::vector<double> acc(d);
    for (int i = 0; i < n; ++i) {
        const float* xi = x.row(i);
        // concat = [x_i, max_j(x_j - x_i)]; empty neighbor set -> zero max.
        std::copy(xi, xi + d, concat.begin());
        std::fill(concat.begin() + d, concat.end(), 0.0f);
        const std::int32_t* nbrs = g.neighbors_of(i);
        for (int s = 0; s < g.k; ++s) {
            const float* xj = x.row(nbrs[s]);
            for (int c = 0; c < d; ++c) {
                float diff = xj[c] - xi[c];
                if (s == 0 || diff > concat[d + c]) concat[d + c] = diff;
            }
        }

        for (int o = 0; o < d; ++o) acc[o] = bias.data.empty() ? 0.0 : double(bias.data[o]);
        for (int h = 0; h < num_heads; ++h) {
            // Head h reads rows [h*dh, (h+1)*dh) of the x half and the same
            // slice of the max half, and writes columns [h*dh, (h+1)*dh).
            for (int part = 0; part < 2; ++part) {
                int row0 = part * d + h * dh;
                for (int r = 0; r < dh; ++r) {
                    double v = concat[row0 + r];
                    const float* wrow = w_update.data.data() + std::size_t(row0 + r) * d;
                    for (int o = h * dh; o < (h + 1) * dh; ++o) acc[o] += v * double(wrow[o]);
                }
            }
        }
        float* yr = out.row(i);
        for (int o = 0; o < d; ++o) yr[o] = float(acc[o]);
    }
    return out;
}

std::pair<NodeFeatures, LayerGraph> vig_block(const NodeFeatures& x, const LayerWeights& lw,
                                              int k, int num_heads) {
    int n = x.num_nodes;
    int d = x.dim;
    LayerGraph g = knn_graph(x, k);

    NodeFeatures z(n, d, x.layer);
    affine(x.values.data(), n, d, d, lw.w_in, lw.b_in, z.values.data());

    NodeFeatures conv = max_relative_conv(z, g, lw.w_update, lw.b_update, num_heads);

    NodeFeatures o(n, d, x.layer + 1);
    affine(conv.values.data(), n, d, d, lw.w_out, lw.b_out, o.values.data());
    for (std::size_t i = 0; i < o.values.size(); ++i) o.values[i] += x.values[i];

    int f = lw.ffn_w1.shape[1];
    std::vector<float> hidden(std::size_t(n) * f);
    affine(o.values.data(), n, d, f, lw.ffn_w1, lw.ffn_b1, hidden.data());
    for (float& v : hidden) v = float(gelu(double(v)));

    NodeFeatures y(n, d, x.layer + 1);
    affine(hidden.data(), n, f, d, lw.ffn_w2, lw.ffn_b2, y.values.data());
    for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] += o.values[i];

    g.layer = x.layer + 1;
    return {std::move(y), std::move(g)};
}

std::vector<float> head_logits(const NodeFeatures& x, const ModelWeights& w) {
    int d = x.dim;
    if (d != w.config.hidden_dim) {
        throw Error(ErrorKind::ShapeMismatch, "features and head disagree on width");
    }
    std::vector<double> pooled(d, 0.0);
    for (int i = 0; i < x.num_nodes; ++i) {
        const float* r = x.row(i);
        for (int c = 0; c < d; ++c) pooled[c] += double(r[c]);
    }
    for (double& v : pooled) v /= double(x.num_nodes);

    int classes = w.config.num_classes;
    std::vector<float> logits(classes);
    std::vector<double> acc(classes);
    for (int o = 0; o < classes; ++o) acc[o] = double(w.head_b.data[o]);
    for (int c = 0; c < d; ++c) {
        const float* wrow = w.head_w.data.data() + std::size_t(c) * classes;
        for (int o = 0; o < classes; ++o) acc[o] += pooled[c] * double(wrow[o]);
    }
    for (int o = 0; o < classes; ++o) logits[o] = float(acc[o]);
    return logits;
}

std::vector<float> softmax(const std::vector<float>& logits) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (float v : logits) max_logit = std::max(max_logit, double(v));
    std::vector<double> e(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(double(logits[i]) - max_logit);
        sum += e[i];
    }
    std::vector<float> p(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) p[i] = float(e[i] / sum);
    return p;
}

std::vector<float> classify_head(const NodeFeatures& x, const ModelWeights& w) {
    return softmax(head_logits(x, w));
}

Trace forward_from_vectors(const std::vector<float>& inputs, int num_nodes,
                           const ModelWeights& w) {
    w.validate_shapes();
    const ModelConfig& cfg = w.config;

    Trace t;
    t.config = cfg;
    t.features.reserve(cfg.num_layers + 1);
    t.graphs.reserve(cfg.num_layers);

    NodeFeatures x = stem_from_vectors(inputs, num_nodes, w);
    t.features.push_back(x);
    for (int l = 1; l <= cfg.num_layers; ++l) {
        auto [y, g] = vig_block(x, w.layers[l - 1], cfg.k_at_layer(l), cfg.num_heads);
        t.graphs.push_back(std::move(g));
        x = std::move(y);
        t.features.push_back(x);
        std::vector<float> logits = head_logits(x, w);
        t.probs.push_back(softmax(logits));
        t.logits.push_back(std::move(logits));
    }

    const std::vector<float>& final_p = t.probs.back();
    t.prediction = int(std::max_element(final_p.begin(), final_p.end()) - final_p.begin());
    return t;
}

Trace forward(const PatchGrid& grid, const ModelWeights& w) {
    if (w.config.num_nodes != kNumPatches) {
        throw Error(ErrorKind::ShapeMismatch, "forward over a patch grid requires num_nodes == 196");
    }
    std::vector<float> inputs(std::size_t(kNumPatches) * kPatchVectorLen);
    for (int i = 0; i < kNumPatches; ++i) {
        std::vector<float> v = flatten_patch(grid, i);
        std::copy(v.begin(), v.end(), inputs.begin() + std::size_t(i) * kPatchVectorLen);
    }
    return forward_from_vectors(inputs, kNumPatches, w);
}

}  // namespace vigxray
