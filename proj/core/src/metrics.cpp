#include "vigxray/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "vigxray/error.hpp"

namespace vigxray {

namespace {

double cosine(const float* a, const float* b, int dim) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int d = 0; d < dim; ++d) {
        dot += double(a[d]) * double(b[d]);
        na += double(a[d]) * double(a[d]);
        nb += double(b[d]) * double(b[d]);
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

void require_edges(const LayerGraph& g, const char* op) {
    if (g.edge_count() == 0) {
        throw Error(ErrorKind::InvalidArgument, std::string(op) + ": graph has no edges");
    }
}

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace

double embedding_similarity(const LayerGraph& g, const NodeFeatures& x) {
    require_edges(g, "embedding_similarity");
    if (g.num_nodes != x.num_nodes) {
        throw Error(ErrorKind::ShapeMismatch, "graph and features disagree on node count");
    }
    double sum = 0.0;
    for (int i = 0; i < g.num_nodes; ++i) {
        const std::int32_t* nbrs = g.neighbors_of(i);
        for (int s = 0; s < g.k; ++s) sum += cosine(x.row(nbrs[s]), x.row(i), x.dim);
    }
    return sum / double(g.edge_count());
}

std::vector<GridCoord> default_grid_coords(int num_nodes) {
    std::vector<GridCoord> coords(num_nodes);
    for (int i = 0; i < num_nodes; ++i) coords[i] = {i / kGridSide, i % kGridSide};
    return coords;
}

double spatial_distance(const LayerGraph& g, std::span<const GridCoord> coords) {
    require_edges(g, "spatial_distance");
    if (int(coords.size()) != g.num_nodes) {
        throw Error(ErrorKind::ShapeMismatch, "coordinate list does not cover all nodes");
    }
    long long sum = 0;
    for (int i = 0; i < g.num_nodes; ++i) {
        const std::int32_t* nbrs = g.neighbors_of(i);
        for (int s = 0; s < g.k; ++s) {
            int j = nbrs[s];
            sum += std::abs(coords[i].row - coords[j].row) +
                   std::abs(coords[i].col - coords[j].col);
        }
    }
    return double(sum) / double(g.edge_count());
}

double visual_similarity(const LayerGraph& g, const PatchGrid& grid) {
    require_edges(g, "visual_similarity");
    if (g.num_nodes != kNumPatches) {
        throw Error(ErrorKind::ShapeMismatch, "visual similarity needs the 196-patch graph");
    }
    // Flatten once; edges revisit patches many times.
    std::vector<std::vector<float>> flat(kNumPatches);
    for (int i = 0; i < kNumPatches; ++i) flat[i] = flatten_patch(grid, i);

    double sum = 0.0;
    for (int i = 0; i < g.num_nodes; ++i) {
        const std::int32_t* nbrs = g.neighbors_of(i);
        for (int s = 0; s < g.k; ++s) {
            sum += cosine(flat[i].data(), flat[nbrs[s]].data(), kPatchVectorLen);
        }
    }
    return sum / double(g.edge_count());
}

std::pair<double, bool> layer_prediction(const NodeFeatures& x, const ModelWeights& w,
                                         int label) {
    if (label < 0 || label >= w.config.num_classes) {
        throw Error(ErrorKind::InvalidArgument, "label out of range: " + std::to_string(label));
    }
    std::vector<float> probs = classify_head(x, w);
    int argmax = int(std::max_element(probs.begin(), probs.end()) - probs.begin());
    return {double(probs[label]), argmax == label};
}

std::pair<double, ModularityBreakdown> modularity(const LayerGraph& g,
                                                  std::span<const std::uint8_t> object_bits,
                                                  ModularityVariant variant) {
    require_edges(g, "modularity");
    if (int(object_bits.size()) != g.num_nodes) {
        throw Error(ErrorKind::ShapeMismatch, "mask does not cover all nodes");
    }

    ModularityBreakdown b;
    b.total_edges = (long long)(g.edge_count());
    for (int i = 0; i < g.num_nodes; ++i) {
        bool dst_obj = object_bits[i] != 0;
        const std::int32_t* nbrs = g.neighbors_of(i);
        for (int s = 0; s < g.k; ++s) {
            bool src_obj = object_bits[nbrs[s]] != 0;
            if (src_obj && dst_obj) ++b.intra_object;
            else if (!src_obj && !dst_obj) ++b.intra_background;
            else ++b.cross;
            // every edge contributes an in-degree at i and an out-degree at j
            if (dst_obj) ++b.k_in_object; else ++b.k_in_background;
            if (src_obj) ++b.k_out_object; else ++b.k_out_background;
        }
    }

    double e = double(b.total_edges);
    double q = 0.0;
    auto community_term = [&](long long intra, long long k_in, long long k_out) {
        double coverage = double(intra) / e;
        if (variant == ModularityVariant::AsPrinted) {
            double expected = (double(k_in) * double(k_out)) / (2.0 * e);
            return coverage - expected * expected;
        }
        return coverage - (double(k_in) * double(k_out)) / (e * e);
    };
    q += community_term(b.intra_object, b.k_in_object, b.k_out_object);
    q += community_term(b.intra_background, b.k_in_background, b.k_out_background);
    return {q, b};
}

std::vector<LayerMetrics> analyze_trace(const Trace& t, const PatchGrid& grid,
                                        const AnalyzeOptions& opts, const ModelWeights* w) {
    std::optional<int> label = opts.label ? opts.label : t.label;
    if (label && (*label < 0 || *label >= t.config.num_classes)) {
        throw Error(ErrorKind::InvalidArgument, "label out of range: " + std::to_string(*label));
    }
    std::vector<GridCoord> coords = default_grid_coords(t.config.num_nodes);

    std::vector<LayerMetrics> rows;
    rows.reserve(t.config.num_layers);
    for (int l = 1; l <= t.config.num_layers; ++l) {
        const LayerGraph& g = t.graph_at(l);
        LayerMetrics m;
        m.layer = l;

        if (t.has_features) {
            // The layer-l graph was built on the features entering block l.
            m.s_emb = embedding_similarity(g, t.features_at(l - 1));
        } else {
            double sum = 0.0;
            for (float s : g.edge_sims) sum += double(s);
            m.s_emb = sum / double(g.edge_count());
        }

        m.spatial_d = spatial_distance(g, coords);
        bool have_grid = grid.patches.size() == std::size_t(kNumPatches) * kPatchVectorLen;
        if (t.config.num_nodes == kNumPatches && have_grid) m.s_vis = visual_similarity(g, grid);

        if (label) {
            if (t.has_features && w != nullptr) {
                auto [p, hit] = layer_prediction(t.features_at(l), *w, *label);
                m.p = p;
                m.top1_hit = hit;
            } else {
                const std::vector<float>& probs = t.probs[l - 1];
                int argmax = int(std::max_element(probs.begin(), probs.end()) - probs.begin());
                m.p = double(probs[*label]);
                m.top1_hit = argmax == *label;
            }
        }

        if (opts.mask) {
            m.q = modularity(g, std::span<const std::uint8_t>(opts.mask->bits), opts.variant).first;
        }
        rows.push_back(m);
    }
    return rows;
}

std::vector<AggregateRow> aggregate(const std::vector<std::vector<LayerMetrics>>& reports,
                                    bool pair_layers) {
    if (reports.empty()) {
        throw Error(ErrorKind::InvalidArgument, "aggregate over zero reports");
    }
    std::size_t layers = reports.front().size();
    if (layers == 0) throw Error(ErrorKind::InvalidArgument, "aggregate over empty report");
    for (const auto& r : reports) {
        if (r.size() != layers) {
            throw Error(ErrorKind::ShapeMismatch, "reports disagree on layer count");
        }
    }

    struct Mean {
        double sum = 0.0;
        long long count = 0;
        void add(const std::optional<double>& v) {
            if (v) {
                sum += *v;
                ++count;
            }
        }
        std::optional<double> value() const {
            if (count == 0) return std::nullopt;
            return sum / double(count);
        }
    };

    std::vector<AggregateRow> rows;
    std::size_t group = pair_layers ? 2 : 1;
    for (std::size_t start = 0; start < layers; start += group) {
        std::size_t end = std::min(start + group, layers);
        AggregateRow row;
        if (end - start == 1) {
            row.layers = std::to_string(start + 1);
        } else {
            row.layers = std::to_string(start + 1) + "-" + std::to_string(end);
        }

        Mean s_vis, spatial_d, s_emb, q, p, acc;
        for (const auto& report : reports) {
            for (std::size_t l = start; l < end; ++l) {
                s_vis.add(report[l].s_vis);
                spatial_d.add(report[l].spatial_d);
                s_emb.add(report[l].s_emb);
                q.add(report[l].q);
                p.add(report[l].p);
            }
            // hit/miss is judged at the last layer of the group
            const auto& hit = report[end - 1].top1_hit;
            if (hit) acc.add(*hit ? 1.0 : 0.0);
        }
        row.s_vis = s_vis.value();
        row.spatial_d = spatial_d.value();
        row.s_emb = s_emb.value();
        row.q = q.value();
        row.p = p.value();
        row.top1_acc = acc.value();
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_metrics_csv(const std::string& image_id, const std::vector<LayerMetrics>& rows,
                       const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
    out << "image_id,layer,S_vis,D,S_emb,Q,p,top1_hit\n";
    auto cell = [](const std::optional<double>& v) { return v ? format_value(*v) : ""; };
    for (const LayerMetrics& m : rows) {
        out << image_id << ',' << m.layer << ',' << cell(m.s_vis) << ',' << cell(m.spatial_d)
            << ',' << cell(m.s_emb) << ',' << cell(m.q) << ',' << cell(m.p) << ',';
        if (m.top1_hit) out << (*m.top1_hit ? 1 : 0);
        out << '\n';
    }
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

void write_metrics_json(const std::string& image_id, const std::vector<LayerMetrics>& rows,
                        const std::string& path) {
    nlohmann::json doc;
    doc["image_id"] = image_id;
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerMetrics& m : rows) {
        nlohmann::json row;
        row["layer"] = m.layer;
        if (m.s_vis) row["S_vis"] = *m.s_vis;
        if (m.spatial_d) row["D"] = *m.spatial_d;
        if (m.s_emb) row["S_emb"] = *m.s_emb;
        if (m.q) row["Q"] = *m.q;
        if (m.p) row["p"] = *m.p;
        if (m.top1_hit) row["top1_hit"] = *m.top1_hit;
        layers.push_back(std::move(row));
    }
    doc["layers"] = std::move(layers);

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

std::pair<std::string, std::vector<LayerMetrics>> read_metrics_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::CorruptStream, "bad metrics JSON in " + path + ": " + e.what());
    }
    std::pair<std::string, std::vector<LayerMetrics>> result;
    try {
        result.first = doc.at("image_id").get<std::string>();
        for (const auto& row : doc.at("layers")) {
            LayerMetrics m;
            m.layer = row.at("layer").get<int>();
            if (row.contains("S_vis")) m.s_vis = row["S_vis"].get<double>();
            if (row.contains("D")) m.spatial_d = row["D"].get<double>();
            if (row.contains("S_emb")) m.s_emb = row["S_emb"].get<double>();
            if (row.contains("Q")) m.q = row["Q"].get<double>();
            if (row.contains("p")) m.p = row["p"].get<double>();
            if (row.contains("top1_hit")) m.top1_hit = row["top1_hit"].get<bool>();
            result.second.push_back(m);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::CorruptStream, "bad metrics JSON in " + path + ": " + e.what());
    }
    return result;
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
    out << "layers,S_vis,D,S_emb,Q,p,top1_acc\n";
    auto cell = [](const std::optional<double>& v) { return v ? format_value(*v) : ""; };
    for (const AggregateRow& r : rows) {
        out << r.layers << ',' << cell(r.s_vis) << ',' << cell(r.spatial_d) << ','
            << cell(r.s_emb) << ',' << cell(r.q) << ',' << cell(r.p) << ',' << cell(r.top1_acc)
            << '\n';
    }
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

}  // namespace vigxray
