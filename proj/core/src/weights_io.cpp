#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "vigxray/error.hpp"
#include "vigxray/model.hpp"

namespace vigxray {

namespace {

constexpr char kMagic[8] = {'V', 'I', 'G', 'X', 'R', 'A', 'Y', 'W'};
constexpr std::uint32_t kVersion = 1;

class LeWriter {
  public:
    explicit LeWriter(std::ostream& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.put(char(v)); }
    void u16(std::uint16_t v) { bytes(v, 2); }
    void u32(std::uint32_t v) { bytes(v, 4); }
    void u64(std::uint64_t v) { bytes(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), std::streamsize(n));
    }
    void f32_array(const float* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) f32(p[i]);
    }

  private:
    void bytes(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out_.put(char((v >> (8 * i)) & 0xFF));
    }
    std::ostream& out_;
};

class LeReader {
  public:
    LeReader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

    std::uint8_t u8() { return std::uint8_t(bytes(1)); }
    std::uint16_t u16() { return std::uint16_t(bytes(2)); }
    std::uint32_t u32() { return std::uint32_t(bytes(4)); }
    std::uint64_t u64() { return bytes(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    void raw(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), std::streamsize(n));
        if (std::size_t(in_.gcount()) != n) {
            throw Error(ErrorKind::CorruptStream, "truncated " + what_);
        }
    }
    void f32_array(float* p, std::size_t n) {
        std::vector<std::uint8_t> buf(n * 4);
        raw(buf.data(), buf.size());
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t v = std::uint32_t(buf[i * 4]) | (std::uint32_t(buf[i * 4 + 1]) << 8) |
                              (std::uint32_t(buf[i * 4 + 2]) << 16) |
                              (std::uint32_t(buf[i * 4 + 3]) << 24);
            p[i] = std::bit_cast<float>(v);
        }
    }

  private:
    std::uint64_t bytes(int n) {
        std::uint8_t b[8];
        raw(b, std::size_t(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t(b[i]) << (8 * i);
        return v;
    }
    std::istream& in_;
    std::string what_;
};

void write_tensor(LeWriter& w, const std::string& name, const Tensor& t) {
    w.u16(std::uint16_t(name.size()));
    w.raw(name.data(), name.size());
    w.u8(std::uint8_t(t.shape.size()));
    for (int d : t.shape) w.u32(std::uint32_t(d));
    w.f32_array(t.data.data(), t.data.size());
}

Tensor read_tensor(LeReader& r, const std::string& want_name) {
    std::uint16_t name_len = r.u16();
    std::string name(name_len, '\0');
    r.raw(name.data(), name_len);
    if (name != want_name) {
        throw Error(ErrorKind::ShapeMismatch,
                    "expected tensor '" + want_name + "', found '" + name + "'");
    }
    int ndim = r.u8();
    Tensor t;
    std::size_t n = 1;
    for (int i = 0; i < ndim; ++i) {
        std::uint32_t d = r.u32();
        if (d == 0 || d > (1u << 24)) {
            throw Error(ErrorKind::CorruptStream, "implausible dimension in tensor " + name);
        }
        t.shape.push_back(int(d));
        n *= d;
    }
    t.data.resize(n);
    r.f32_array(t.data.data(), n);
    return t;
}

template <typename MW, typename Fn>
void for_each_tensor(MW& w, Fn&& fn) {
    fn("stem_proj", w.stem_proj);
    fn("stem_bias", w.stem_bias);
    fn("pos_enc", w.pos_enc);
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        std::string prefix = "layer" + std::to_string(l) + ".";
        auto& lw = w.layers[l];
        fn(prefix + "w_in", lw.w_in);
        fn(prefix + "b_in", lw.b_in);
        fn(prefix + "w_update", lw.w_update);
        fn(prefix + "b_update", lw.b_update);
        fn(prefix + "w_out", lw.w_out);
        fn(prefix + "b_out", lw.b_out);
        fn(prefix + "ffn_w1", lw.ffn_w1);
        fn(prefix + "ffn_b1", lw.ffn_b1);
        fn(prefix + "ffn_w2", lw.ffn_w2);
        fn(prefix + "ffn_b2", lw.ffn_b2);
    }
    fn("head_w", w.head_w);
    fn("head_b", w.head_b);
}

}  // namespace

void save_weights(const ModelWeights& weights, const std::string& path) {
    weights.validate_shapes();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");

    LeWriter w(out);
    w.raw(kMagic, 8);
    w.u32(kVersion);
    const ModelConfig& c = weights.config;
    w.u32(std::uint32_t(c.num_layers));
    w.u32(std::uint32_t(c.hidden_dim));
    w.u32(std::uint32_t(c.k));
    w.u32(std::uint32_t(c.num_classes));
    w.u32(std::uint32_t(c.num_heads));
    w.u32(std::uint32_t(c.ffn_ratio));
    w.u32(std::uint32_t(c.num_nodes));
    w.u8(c.k_schedule ? 1 : 0);
    w.u64(c.seed);

    std::uint32_t count = 5 + std::uint32_t(weights.layers.size()) * 10;
    w.u32(count);
    for_each_tensor(weights,
                    [&](const std::string& name, const Tensor& t) { write_tensor(w, name, t); });
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

ModelWeights load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    LeReader r(in, "weights file " + path);

    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) {
        throw Error(ErrorKind::UnsupportedFormat, "not a weights container: " + path);
    }
    std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw Error(ErrorKind::VersionMismatch,
                    "weights container version " + std::to_string(version) + ", expected " +
                        std::to_string(kVersion));
    }

    ModelWeights w;
    ModelConfig& c = w.config;
    c.num_layers = int(r.u32());
    c.hidden_dim = int(r.u32());
    c.k = int(r.u32());
    c.num_classes = int(r.u32());
    c.num_heads = int(r.u32());
    c.ffn_ratio = int(r.u32());
    c.num_nodes = int(r.u32());
    c.k_schedule = r.u8() != 0;
    c.seed = r.u64();
    c.validate();

    std::uint32_t count = r.u32();
    std::uint32_t expected = 5 + std::uint32_t(c.num_layers) * 10;
    if (count != expected) {
        throw Error(ErrorKind::ShapeMismatch, "weights tensor count does not match config");
    }
    w.layers.resize(c.num_layers);
    for_each_tensor(w, [&](const std::string& name, Tensor& t) { t = read_tensor(r, name); });

    try {
        w.validate_shapes();
    } catch (const Error& e) {
        // Shapes that disagree with the header config are a consistency error
        // regardless of which check tripped first.
        throw Error(ErrorKind::ShapeMismatch, std::string("weights file ") + path +
                                                  " inconsistent with its header: " + e.what());
    }
    for_each_tensor(w, [&](const std::string& name, Tensor& t) {
        for (float v : t.data) {
            if (!std::isfinite(v)) {
                throw Error(ErrorKind::CorruptStream, "non-finite value in tensor " + name);
            }
        }
    });
    return w;
}

}  // namespace vigxray
