#include "vigxray/trace.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vigxray/error.hpp"

namespace vigxray {

namespace {

constexpr int kTraceVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(char((v >> (8 * i)) & 0xFF));
}

void put_i32(std::ostream& out, std::int32_t v) { put_u32(out, std::uint32_t(v)); }

void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

struct TraceReader {
    std::ifstream in;
    std::string path;

    void raw(void* p, std::size_t n) {
        in.read(static_cast<char*>(p), std::streamsize(n));
        if (std::size_t(in.gcount()) != n) {
            throw Error(ErrorKind::CorruptStream, "truncated trace file " + path);
        }
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        raw(b, 4);
        return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
               (std::uint32_t(b[3]) << 24);
    }
    std::int32_t i32() { return std::int32_t(u32()); }
    float f32() { return std::bit_cast<float>(u32()); }
    void f32_array(float* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) p[i] = f32();
    }
    void expect_tag(const char* tag, int layer) {
        char got[4];
        raw(got, 4);
        std::uint32_t got_layer = u32();
        if (std::memcmp(got, tag, 4) != 0 || got_layer != std::uint32_t(layer)) {
            throw Error(ErrorKind::CorruptStream, "trace section out of order in " + path +
                                                      " (wanted " + std::string(tag, 4) +
                                                      " layer " + std::to_string(layer) + ")");
        }
    }
};

void write_section_header(std::ostream& out, const char* tag, int layer) {
    out.write(tag, 4);
    put_u32(out, std::uint32_t(layer));
}

}  // namespace

const LayerGraph& Trace::graph_at(int layer) const {
    if (layer < 1 || layer > int(graphs.size())) {
        throw Error(ErrorKind::InvalidArgument, "layer out of range: " + std::to_string(layer));
    }
    return graphs[layer - 1];
}

const NodeFeatures& Trace::features_at(int layer) const {
    if (!has_features) {
        throw Error(ErrorKind::InvalidArgument, "trace was written without feature payloads");
    }
    if (layer < 0 || layer >= int(features.size())) {
        throw Error(ErrorKind::InvalidArgument, "layer out of range: " + std::to_string(layer));
    }
    return features[layer];
}

void Trace::validate() const {
    config.validate();
    int L = config.num_layers;
    int n = config.num_nodes;
    if (int(graphs.size()) != L) {
        throw Error(ErrorKind::InvariantViolation, "trace holds " + std::to_string(graphs.size()) +
                                                       " graphs, config says " + std::to_string(L));
    }
    if (has_features && int(features.size()) != L + 1) {
        throw Error(ErrorKind::InvariantViolation, "trace feature snapshots inconsistent with L");
    }
    if (int(logits.size()) != L || int(probs.size()) != L) {
        throw Error(ErrorKind::InvariantViolation, "trace head outputs inconsistent with L");
    }

    for (int l = 1; l <= L; ++l) {
        const LayerGraph& g = graphs[l - 1];
        std::string where = "layer " + std::to_string(l);
        if (g.layer != l) {
            throw Error(ErrorKind::InvariantViolation, where + ": stored layer index mismatch");
        }
        int want_k = config.k_at_layer(l);
        if (g.k != want_k || g.num_nodes != n ||
            g.in_neighbors.size() != std::size_t(n) * want_k ||
            g.edge_sims.size() != g.in_neighbors.size()) {
            throw Error(ErrorKind::InvariantViolation,
                        where + ": graph size does not match K=" + std::to_string(want_k));
        }
        std::vector<std::uint8_t> seen(n);
        for (int i = 0; i < n; ++i) {
            const std::int32_t* nbrs = g.neighbors_of(i);
            for (int s = 0; s < g.k; ++s) {
                std::int32_t j = nbrs[s];
                std::string who = where + ", node " + std::to_string(i);
                if (j < 0 || j >= n) {
                    throw Error(ErrorKind::InvariantViolation, who + ": neighbor out of range");
                }
                if (j == i) {
                    throw Error(ErrorKind::InvariantViolation, who + ": self-loop");
                }
                if (seen[j]) {
                    throw Error(ErrorKind::InvariantViolation, who + ": duplicate neighbor");
                }
                seen[j] = 1;
                float sim = g.sims_of(i)[s];
                if (!(sim >= -1.0f && sim <= 1.0f)) {
                    throw Error(ErrorKind::InvariantViolation, who + ": similarity outside [-1,1]");
                }
            }
            for (int s = 0; s < g.k; ++s) seen[nbrs[s]] = 0;
        }

        if (int(logits[l - 1].size()) != config.num_classes ||
            int(probs[l - 1].size()) != config.num_classes) {
            throw Error(ErrorKind::InvariantViolation, where + ": head output width mismatch");
        }
        double sum = 0.0;
        for (float p : probs[l - 1]) sum += double(p);
        if (std::abs(sum - 1.0) > 1e-6) {
            throw Error(ErrorKind::InvariantViolation,
                        where + ": probabilities sum to " + std::to_string(sum));
        }
    }
    if (has_features) {
        for (int l = 0; l <= L; ++l) {
            const NodeFeatures& f = features[l];
            if (f.num_nodes != n || f.dim != config.hidden_dim ||
                f.values.size() != std::size_t(n) * config.hidden_dim) {
                throw Error(ErrorKind::InvariantViolation,
                            "feature snapshot " + std::to_string(l) + " has wrong shape");
            }
        }
    }
    if (label && (*label < 0 || *label >= config.num_classes)) {
        throw Error(ErrorKind::InvariantViolation, "label outside [0, num_classes)");
    }
    if (prediction < 0 || prediction >= config.num_classes) {
        throw Error(ErrorKind::InvariantViolation, "prediction outside [0, num_classes)");
    }
}

void write_trace(const Trace& t, const std::string& path, bool include_features) {
    t.validate();
    bool with_features = include_features && t.has_features;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");

    const ModelConfig& c = t.config;
    std::ostringstream header;
    header << "VIGTRACE " << kTraceVersion << "\n";
    header << "layers " << c.num_layers << "\n";
    header << "nodes " << c.num_nodes << "\n";
    header << "dim " << c.hidden_dim << "\n";
    header << "classes " << c.num_classes << "\n";
    header << "heads " << c.num_heads << "\n";
    header << "ffn_ratio " << c.ffn_ratio << "\n";
    header << "k " << c.k << "\n";
    header << "k_schedule " << (c.k_schedule ? 1 : 0) << "\n";
    header << "seed " << c.seed << "\n";
    header << "features " << (with_features ? 1 : 0) << "\n";
    if (t.label) header << "label " << *t.label << "\n";
    header << "end\n";
    std::string h = header.str();
    out.write(h.data(), std::streamsize(h.size()));

    if (with_features) {
        for (int l = 0; l <= c.num_layers; ++l) {
            write_section_header(out, "FEAT", l);
            const NodeFeatures& f = t.features[l];
            for (float v : f.values) put_f32(out, v);
        }
    }
    for (int l = 1; l <= c.num_layers; ++l) {
        const LayerGraph& g = t.graphs[l - 1];
        write_section_header(out, "GRPH", l);
        put_u32(out, std::uint32_t(g.k));
        for (int i = 0; i < g.num_nodes; ++i) {
            put_u32(out, std::uint32_t(g.k));  // per-node degree
            const std::int32_t* nbrs = g.neighbors_of(i);
            const float* sims = g.sims_of(i);
            for (int s = 0; s < g.k; ++s) put_i32(out, nbrs[s]);
            for (int s = 0; s < g.k; ++s) put_f32(out, sims[s]);
        }
        write_section_header(out, "HEAD", l);
        for (float v : t.logits[l - 1]) put_f32(out, v);
        for (float v : t.probs[l - 1]) put_f32(out, v);
    }
    write_section_header(out, "PRED", c.num_layers);
    put_u32(out, std::uint32_t(t.prediction));

    if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

Trace read_trace(const std::string& path) {
    TraceReader r;
    r.path = path;
    r.in.open(path, std::ios::binary);
    if (!r.in) throw Error(ErrorKind::Io, "cannot open " + path);

    // Header: text lines up to "end".
    Trace t;
    ModelConfig& c = t.config;
    bool saw_end = false;
    std::string line;
    {
        std::getline(r.in, line);
        std::istringstream first(line);
        std::string magic;
        int version = -1;
        first >> magic >> version;
        if (magic != "VIGTRACE") {
            throw Error(ErrorKind::UnsupportedFormat, "not a trace file: " + path);
        }
        if (version != kTraceVersion) {
            throw Error(ErrorKind::VersionMismatch, "trace version " + std::to_string(version) +
                                                        ", expected " +
                                                        std::to_string(kTraceVersion));
        }
    }
    bool with_features = false;
    while (std::getline(r.in, line)) {
        if (line == "end") {
            saw_end = true;
            break;
        }
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "layers") ls >> c.num_layers;
        else if (key == "nodes") ls >> c.num_nodes;
        else if (key == "dim") ls >> c.hidden_dim;
        else if (key == "classes") ls >> c.num_classes;
        else if (key == "heads") ls >> c.num_heads;
        else if (key == "ffn_ratio") ls >> c.ffn_ratio;
        else if (key == "k") ls >> c.k;
        else if (key == "k_schedule") { int v = 0; ls >> v; c.k_schedule = v != 0; }
        else if (key == "seed") ls >> c.seed;
        else if (key == "features") { int v = 0; ls >> v; with_features = v != 0; }
        else if (key == "label") { int v = 0; ls >> v; t.label = v; }
        else throw Error(ErrorKind::CorruptStream, "unknown trace header key '" + key + "'");
        if (!ls) throw Error(ErrorKind::CorruptStream, "bad trace header line '" + line + "'");
    }
    if (!saw_end) throw Error(ErrorKind::CorruptStream, "trace header missing 'end'");
    c.validate();
    t.has_features = with_features;

    int L = c.num_layers;
    int n = c.num_nodes;
    int d = c.hidden_dim;

    if (with_features) {
        for (int l = 0; l <= L; ++l) {
            r.expect_tag("FEAT", l);
            NodeFeatures f(n, d, l);
            r.f32_array(f.values.data(), f.values.size());
            t.features.push_back(std::move(f));
        }
    }
    for (int l = 1; l <= L; ++l) {
        r.expect_tag("GRPH", l);
        LayerGraph g;
        g.layer = l;
        g.num_nodes = n;
        g.k = int(r.u32());
        int want_k = c.k_at_layer(l);
        if (g.k != want_k) {
            throw Error(ErrorKind::InvariantViolation,
                        "layer " + std::to_string(l) + ": graph K " + std::to_string(g.k) +
                            " does not match configured " + std::to_string(want_k));
        }
        g.in_neighbors.resize(std::size_t(n) * g.k);
        g.edge_sims.resize(std::size_t(n) * g.k);
        for (int i = 0; i < n; ++i) {
            std::uint32_t degree = r.u32();
            if (degree != std::uint32_t(g.k)) {
                throw Error(ErrorKind::InvariantViolation,
                            "layer " + std::to_string(l) + ", node " + std::to_string(i) +
                                ": adjacency list has length " + std::to_string(degree) +
                                ", expected " + std::to_string(g.k));
            }
            for (int s = 0; s < g.k; ++s) g.in_neighbors[std::size_t(i) * g.k + s] = r.i32();
            r.f32_array(g.edge_sims.data() + std::size_t(i) * g.k, g.k);
        }
        t.graphs.push_back(std::move(g));

        r.expect_tag("HEAD", l);
        std::vector<float> logits(c.num_classes), probs(c.num_classes);
        r.f32_array(logits.data(), logits.size());
        r.f32_array(probs.data(), probs.size());
        t.logits.push_back(std::move(logits));
        t.probs.push_back(std::move(probs));
    }
    r.expect_tag("PRED", L);
    t.prediction = int(r.u32());

    t.validate();
    return t;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open manifest " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        ManifestEntry e;
        std::size_t tab1 = line.find('\t');
        e.image_path = line.substr(0, tab1);
        if (e.image_path.empty()) {
            throw Error(ErrorKind::CorruptStream,
                        "manifest line " + std::to_string(lineno) + ": empty image path");
        }
        if (tab1 != std::string::npos) {
            std::size_t tab2 = line.find('\t', tab1 + 1);
            std::string label_str = line.substr(tab1 + 1, tab2 == std::string::npos
                                                              ? std::string::npos
                                                              : tab2 - tab1 - 1);
            if (!label_str.empty()) {
                try {
                    e.label = std::stoi(label_str);
                } catch (const std::exception&) {
                    throw Error(ErrorKind::CorruptStream, "manifest line " +
                                                              std::to_string(lineno) +
                                                              ": bad label '" + label_str + "'");
                }
            }
            if (tab2 != std::string::npos) e.mask_path = line.substr(tab2 + 1);
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace vigxray
