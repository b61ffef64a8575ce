#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vigxray/error.hpp"
#include "vigxray/heatmap.hpp"
#include "vigxray/image.hpp"
#include "vigxray/metrics.hpp"

namespace vigxray {

namespace {

struct Rgb {
    std::uint8_t r, g, b;
};

// Matplotlib's default cycle, so the curves look like everyone else's.
constexpr Rgb kSvisColor{44, 160, 44};
constexpr Rgb kDistColor{255, 127, 14};
constexpr Rgb kSembColor{31, 119, 180};
constexpr Rgb kQColor{214, 39, 40};
constexpr Rgb kPColor{148, 103, 189};

constexpr Rgb kBlack{0, 0, 0};
constexpr Rgb kGrid{225, 225, 225};

void put(ImageRGB& img, int x, int y, Rgb c) {
    if (x < 0 || x >= img.width || y < 0 || y >= img.height) return;
    img.at(x, y, 0) = c.r;
    img.at(x, y, 1) = c.g;
    img.at(x, y, 2) = c.b;
}

void hline(ImageRGB& img, int x0, int x1, int y, Rgb c) {
    for (int x = x0; x <= x1; ++x) put(img, x, y, c);
}

void vline(ImageRGB& img, int x, int y0, int y1, Rgb c) {
    for (int y = y0; y <= y1; ++y) put(img, x, y, c);
}

void line(ImageRGB& img, int x0, int y0, int x1, int y1, Rgb c) {
    int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        put(img, x0, y0, c);
        if (x0 == x1 && y0 == y1) break;
        int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void marker(ImageRGB& img, int x, int y, Rgb c) {
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) put(img, x + dx, y + dy, c);
}

// 5x7 bitmap font, bit 4 = leftmost column. Uppercase, digits, and the
// few punctuation marks the labels need.
struct Glyph {
    char ch;
    std::uint8_t rows[7];
};

constexpr Glyph kFont[] = {
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
    {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
    {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
    {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
    {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
    {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
    {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
};

const Glyph* find_glyph(char ch) {
    char up = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    for (const Glyph& g : kFont)
        if (g.ch == up) return &g;
    return nullptr;
}

constexpr int kCharW = 6;  // 5 pixel columns + 1 of spacing

void text(ImageRGB& img, int x, int y, std::string_view s, Rgb c) {
    for (char ch : s) {
        if (const Glyph* g = find_glyph(ch)) {
            for (int row = 0; row < 7; ++row)
                for (int col = 0; col < 5; ++col)
                    if (g->rows[row] & (0x10 >> col)) put(img, x + col, y + row, c);
        }
        x += kCharW;
    }
}

int text_width(std::string_view s) { return static_cast<int>(s.size()) * kCharW - 1; }

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::string cell(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

struct Series {
    std::string_view name;
    Rgb color;
    std::vector<double> values;  // one per report row when complete, else empty
};

}  // namespace

std::vector<CurvePoint> curve_points(std::span<const double> values, int plot_x, int plot_y,
                                     int plot_w, int plot_h) {
    std::vector<CurvePoint> pts;
    if (values.empty() || plot_w < 1 || plot_h < 1) return pts;
    double mn = values[0], mx = values[0];
    for (double v : values) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    const std::size_t n = values.size();
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        int x = n == 1 ? plot_x + (plot_w - 1) / 2
                       : plot_x + static_cast<int>(std::lround(
                                      static_cast<double>(i) * (plot_w - 1) / (n - 1)));
        double norm = mx == mn ? 0.5 : (values[i] - mn) / (mx - mn);
        int y = plot_y + (plot_h - 1) - static_cast<int>(std::lround(norm * (plot_h - 1)));
        pts.push_back({x, y});
    }
    return pts;
}

void render_metric_curves(const std::vector<LayerMetrics>& report, const std::string& csv_path,
                          const std::string& png_path) {
    if (report.empty())
        throw Error(ErrorKind::InvalidArgument, "render_metric_curves: empty report");

    {
        std::ofstream out(csv_path, std::ios::binary);
        if (!out) throw Error(ErrorKind::Io, "cannot open " + csv_path + " for writing");
        out << "layer,S_vis,D,S_emb,Q,p\n";
        for (const LayerMetrics& m : report) {
            out << m.layer << ',' << cell(m.s_vis) << ',' << cell(m.spatial_d) << ','
                << cell(m.s_emb) << ',' << cell(m.q) << ',' << cell(m.p) << '\n';
        }
        if (!out.flush()) throw Error(ErrorKind::Io, "failed writing " + csv_path);
    }

    // A series is drawn only when every layer has it; analyze fills each
    // metric for all layers or none, so partial series never show up.
    Series series[] = {
        {"S_VIS", kSvisColor, {}}, {"D", kDistColor, {}}, {"S_EMB", kSembColor, {}},
        {"Q", kQColor, {}},        {"P", kPColor, {}},
    };
    auto gather = [&](Series& s, auto field) {
        std::vector<double> v;
        for (const LayerMetrics& m : report) {
            const std::optional<double>& f = m.*field;
            if (!f) return;
            v.push_back(*f);
        }
        s.values = std::move(v);
    };
    gather(series[0], &LayerMetrics::s_vis);
    gather(series[1], &LayerMetrics::spatial_d);
    gather(series[2], &LayerMetrics::s_emb);
    gather(series[3], &LayerMetrics::q);
    gather(series[4], &LayerMetrics::p);

    constexpr int kW = 640, kH = 400;
    constexpr int kPlotX = 56, kPlotY = 32, kPlotW = 470, kPlotH = 310;
    ImageRGB img(kW, kH);
    std::fill(img.data.begin(), img.data.end(), std::uint8_t{255});

    // Quarter-height gridlines, then the frame on top of them.
    for (int q = 0; q <= 4; ++q) {
        int y = kPlotY + static_cast<int>(std::lround(q * (kPlotH - 1) / 4.0));
        hline(img, kPlotX, kPlotX + kPlotW - 1, y, kGrid);
    }
    hline(img, kPlotX - 1, kPlotX + kPlotW, kPlotY - 1, kBlack);
    hline(img, kPlotX - 1, kPlotX + kPlotW, kPlotY + kPlotH, kBlack);
    vline(img, kPlotX - 1, kPlotY - 1, kPlotY + kPlotH, kBlack);
    vline(img, kPlotX + kPlotW, kPlotY - 1, kPlotY + kPlotH, kBlack);

    text(img, kPlotX, 12, "PER-LAYER METRICS (EACH SERIES MIN-MAX SCALED)", kBlack);
    text(img, 8, kPlotY, "MAX", kBlack);
    text(img, 8, kPlotY + kPlotH - 7, "MIN", kBlack);

    // Layer ticks along the bottom; thin them out if there are too many
    // to fit a label every point.
    const int n = static_cast<int>(report.size());
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = i;
    std::vector<CurvePoint> xpts = curve_points(xs, kPlotX, kPlotY, kPlotW, kPlotH);
    int label_step = std::max(1, (n + 19) / 20);
    for (int i = 0; i < n; ++i) {
        int px = n == 1 ? kPlotX + (kPlotW - 1) / 2 : xpts[i].x;
        vline(img, px, kPlotY + kPlotH + 1, kPlotY + kPlotH + 3, kBlack);
        if (i % label_step != 0 && i != n - 1) continue;
        std::string lbl = std::to_string(report[i].layer);
        text(img, px - text_width(lbl) / 2, kPlotY + kPlotH + 6, lbl, kBlack);
    }
    text(img, kPlotX + (kPlotW - text_width("LAYER")) / 2, kH - 14, "LAYER", kBlack);

    for (const Series& s : series) {
        if (s.values.empty()) continue;
        std::vector<CurvePoint> pts = curve_points(s.values, kPlotX, kPlotY, kPlotW, kPlotH);
        for (std::size_t i = 1; i < pts.size(); ++i)
            line(img, pts[i - 1].x, pts[i - 1].y, pts[i].x, pts[i].y, s.color);
        for (const CurvePoint& p : pts) marker(img, p.x, p.y, s.color);
    }

    int ly = kPlotY + 4;
    const int lx = kPlotX + kPlotW + 14;
    for (const Series& s : series) {
        if (s.values.empty()) continue;
        hline(img, lx, lx + 16, ly + 3, s.color);
        hline(img, lx, lx + 16, ly + 4, s.color);
        text(img, lx + 22, ly, s.name, kBlack);
        ly += 14;
    }

    save_png(img, png_path);
}

}  // namespace vigxray
