#include "sketchgen/toy.hpp"

#include <cmath>

#include "sketchgen/errors.hpp"

namespace sketchgen::toy {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Geometry is computed in doubles and snapped to a 1/16-pixel grid before
// rasterization, so sub-ulp libm differences cannot change the output.
constexpr double kFixed = 16.0;

double quantize(double v) { return std::round(v * kFixed) / kFixed; }

struct Point {
    double x, y;
};

// Open or closed polylines in the unit square, y growing downward.
std::vector<std::vector<Point>> primitive_strokes(Primitive p) {
    switch (p) {
    case kCircle: {
        std::vector<Point> ring;
        const int n = 40;
        for (int i = 0; i <= n; ++i) {
            const double a = 2.0 * kPi * i / n;
            ring.push_back({0.5 + 0.46 * std::cos(a), 0.5 + 0.46 * std::sin(a)});
        }
        return {ring};
    }
    case kTriangle:
        return {{{0.5, 0.04}, {0.96, 0.94}, {0.04, 0.94}, {0.5, 0.04}}};
    case kSquare:
        return {{{0.06, 0.06}, {0.94, 0.06}, {0.94, 0.94}, {0.06, 0.94}, {0.06, 0.06}}};
    case kCross:
        return {{{0.5, 0.04}, {0.5, 0.96}}, {{0.04, 0.5}, {0.96, 0.5}}};
    case kDiagonalStroke:
        return {{{0.06, 0.94}, {0.94, 0.06}}};
    case kArc: {
        std::vector<Point> arc;
        const int n = 20;
        for (int i = 0; i <= n; ++i) {
            const double a = kPi - kPi * i / n; // left to right over the top
            arc.push_back({0.5 + 0.46 * std::cos(a), 0.82 - 0.72 * std::sin(a)});
        }
        return {arc};
    }
    }
    throw DataError("unknown primitive");
}

// Three layout slots: top-left, top-right, bottom-center.
struct Box {
    double x, y, w, h;
};
Box slot_box(int slot) {
    switch (slot) {
    case 0: return {0.08, 0.06, 0.40, 0.40};
    case 1: return {0.52, 0.06, 0.40, 0.40};
    case 2: return {0.28, 0.52, 0.44, 0.42};
    default: throw DataError("slot out of range");
    }
}

void plot_thick(TensorF& img, int64_t x, int64_t y, int width) {
    const int64_t res = img.dim(0);
    const int lo = -(width - 1) / 2;
    const int hi = width / 2;
    for (int dy = lo; dy <= hi; ++dy)
        for (int dx = lo; dx <= hi; ++dx) {
            const int64_t px = x + dx, py = y + dy;
            if (px >= 0 && px < res && py >= 0 && py < res) img.at(py, px) = 1.0f;
        }
}

// Integer Bresenham between quantized endpoints.
void draw_segment(TensorF& img, Point a, Point b, int width) {
    int64_t x0 = static_cast<int64_t>(std::lround(a.x));
    int64_t y0 = static_cast<int64_t>(std::lround(a.y));
    const int64_t x1 = static_cast<int64_t>(std::lround(b.x));
    const int64_t y1 = static_cast<int64_t>(std::lround(b.y));
    const int64_t dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int64_t dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int64_t err = dx + dy;
    while (true) {
        plot_thick(img, x0, y0, width);
        if (x0 == x1 && y0 == y1) break;
        const int64_t e2 = 2 * err;
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

std::vector<Point> subdivide_with_bow(const Point& a, const Point& b, double bow) {
    std::vector<Point> pts;
    const int n = 6;
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len = std::sqrt(vx * vx + vy * vy);
    if (len < 1e-9) return {a, b};
    const double nx = -vy / len, ny = vx / len;
    for (int i = 0; i <= n; ++i) {
        const double t = static_cast<double>(i) / n;
        const double s = bow * len * t * (1.0 - t); // parabolic sagitta
        pts.push_back({a.x + vx * t + nx * s, a.y + vy * t + ny * s});
    }
    return pts;
}

} // namespace

const std::vector<std::vector<Component>>& composition_table() {
    static const std::vector<std::vector<Component>> table = {
        // Base classes over the first four primitives.
        {{kCircle, 0}},
        {{kTriangle, 1}},
        {{kSquare, 2}},
        {{kCross, 0}},
        {{kCircle, 0}, {kSquare, 1}},
        {{kTriangle, 0}, {kCross, 1}},
        {{kSquare, 0}, {kCircle, 2}},
        {{kCross, 1}, {kTriangle, 2}},
        // Recombinations of the same primitives.
        {{kCircle, 0}, {kTriangle, 1}, {kSquare, 2}},
        {{kCross, 0}, {kSquare, 1}, {kCircle, 2}},
        {{kTriangle, 0}, {kCircle, 1}, {kCross, 2}},
        {{kSquare, 0}, {kCross, 1}, {kTriangle, 2}},
        {{kCircle, 1}, {kCircle, 2}},
        {{kSquare, 0}, {kSquare, 2}},
        {{kTriangle, 1}, {kTriangle, 2}},
        {{kCross, 0}, {kCross, 2}},
        // Classes introducing components unseen above.
        {{kDiagonalStroke, 0}},
        {{kArc, 1}},
        {{kDiagonalStroke, 0}, {kArc, 1}},
        {{kCircle, 0}, {kDiagonalStroke, 1}},
        {{kArc, 0}, {kSquare, 1}},
        {{kDiagonalStroke, 2}, {kTriangle, 0}},
        {{kArc, 2}, {kCross, 0}},
        {{kDiagonalStroke, 1}, {kArc, 2}, {kCircle, 0}},
    };
    return table;
}

int max_toy_classes() { return static_cast<int>(composition_table().size()); }

std::string primitive_name(Primitive p) {
    switch (p) {
    case kCircle: return "circle";
    case kTriangle: return "triangle";
    case kSquare: return "square";
    case kCross: return "cross";
    case kDiagonalStroke: return "diagonal";
    case kArc: return "arc";
    }
    return "?";
}

std::vector<ToyStyleParams> toy_painter_styles(int painter_count, uint64_t seed) {
    std::vector<ToyStyleParams> styles(static_cast<size_t>(painter_count));
    const int p = painter_count;
    auto grid = [p](int i, double lo, double hi) {
        return p > 1 ? lo + (hi - lo) * i / (p - 1) : 0.5 * (lo + hi);
    };
    // Independent permutations per parameter keep the parameter grids but
    // decorrelate them across painters.
    std::vector<int> slant_ix(static_cast<size_t>(p)), width_ix(static_cast<size_t>(p)),
        jitter_ix(static_cast<size_t>(p)), curve_ix(static_cast<size_t>(p));
    for (int i = 0; i < p; ++i) slant_ix[i] = width_ix[i] = jitter_ix[i] = curve_ix[i] = i;
    Rng r1 = Rng::derive(seed, 101), r2 = Rng::derive(seed, 102);
    Rng r3 = Rng::derive(seed, 103), r4 = Rng::derive(seed, 104);
    r1.shuffle(slant_ix.begin(), slant_ix.end());
    r2.shuffle(width_ix.begin(), width_ix.end());
    r3.shuffle(jitter_ix.begin(), jitter_ix.end());
    r4.shuffle(curve_ix.begin(), curve_ix.end());

    for (int i = 0; i < p; ++i) {
        auto& s = styles[static_cast<size_t>(i)];
        s.slant_shear_deg = grid(slant_ix[i], -25.0, 25.0);
        s.stroke_width = 1 + width_ix[i] % 4;
        s.corner_jitter = grid(jitter_ix[i], 0.0, 1.5);
        s.curvature_bias = grid(curve_ix[i], -0.5, 0.5);
    }
    return styles;
}

TensorF render_toy_sketch(int class_id, const ToyStyleParams& style, int resolution,
                          uint64_t seed, int class_label, int painter_label, int sample_index) {
    const auto& table = composition_table();
    if (class_id < 0 || class_id >= static_cast<int>(table.size()))
        throw DataError("class id exceeds the composition table");
    const bool icon = sample_index < 0;

    TensorF img({resolution, resolution});
    const double scale = static_cast<double>(resolution);
    const double cy = 0.5 * scale;
    // Shear factor quantized so downstream arithmetic is stable across libm
    // rounding differences.
    const double shear =
        icon ? 0.0 : quantize(std::tan(style.slant_shear_deg * kPi / 180.0) * 256.0) / 256.0;
    const double noise_sigma = icon ? 0.0 : 1.5 * resolution / 128.0;
    const int width = icon ? 2 : style.stroke_width;

    Rng rng = Rng::derive(seed, 7000 + static_cast<uint64_t>(class_label),
                          static_cast<uint64_t>(painter_label) + 1,
                          static_cast<uint64_t>(std::max(sample_index, 0)) + 1);

    for (const Component& comp : table[static_cast<size_t>(class_id)]) {
        const Box box = slot_box(comp.slot);
        for (const auto& stroke : primitive_strokes(comp.primitive)) {
            // Place in the slot (canvas pixel coordinates).
            std::vector<Point> pts;
            pts.reserve(stroke.size());
            for (const Point& q : stroke)
                pts.push_back({(box.x + q.x * box.w) * scale, (box.y + q.y * box.h) * scale});
            // Per-sample control-point displacement.
            if (!icon) {
                for (Point& q : pts) {
                    q.x += rng.normal(0.0, noise_sigma) + rng.uniform(-style.corner_jitter,
                                                                      style.corner_jitter);
                    q.y += rng.normal(0.0, noise_sigma) + rng.uniform(-style.corner_jitter,
                                                                      style.corner_jitter);
                }
            }
            const double bow = icon ? 0.0 : style.curvature_bias;
            for (size_t i = 0; i + 1 < pts.size(); ++i) {
                const auto seg = subdivide_with_bow(pts[i], pts[i + 1], bow);
                for (size_t k = 0; k + 1 < seg.size(); ++k) {
                    Point a = seg[k], b = seg[k + 1];
                    a.x = quantize(a.x + shear * (cy - a.y));
                    a.y = quantize(a.y);
                    b.x = quantize(b.x + shear * (cy - b.y));
                    b.y = quantize(b.y);
                    draw_segment(img, a, b, width);
                }
            }
        }
    }
    return img;
}

Dataset make_toy_dataset(int class_count, int painter_count, int samples_per_pair, int resolution,
                         uint64_t seed) {
    if (class_count <= 0 || class_count > max_toy_classes())
        throw DataError("class_count must lie in [1, " + std::to_string(max_toy_classes()) + "]");
    if (painter_count <= 0 || samples_per_pair <= 0)
        throw DataError("painter_count and samples_per_pair must be positive");
    if (resolution != 32 && resolution != 64 && resolution != 128)
        throw DataError("toy resolution must be one of 32, 64, 128");

    Dataset ds;
    ds.class_count = class_count;
    ds.painter_count = painter_count;
    ds.resolution = resolution;

    const auto& table = composition_table();
    for (int c = 0; c < class_count; ++c) {
        std::vector<int> comps;
        for (const Component& comp : table[static_cast<size_t>(c)])
            comps.push_back(static_cast<int>(comp.primitive));
        ds.class_components.push_back(std::move(comps));
        ds.icon_table.push_back(std::make_shared<const TensorF>(
            render_toy_sketch(c, ToyStyleParams{}, resolution, seed, c, -1, -1)));
    }

    const auto styles = toy_painter_styles(painter_count, seed);
    ds.samples.reserve(static_cast<size_t>(class_count) * painter_count * samples_per_pair);
    for (int c = 0; c < class_count; ++c)
        for (int p = 0; p < painter_count; ++p)
            for (int i = 0; i < samples_per_pair; ++i) {
                ContentSample s;
                s.sketch = render_toy_sketch(c, styles[static_cast<size_t>(p)], resolution, seed,
                                             c, p, i);
                s.class_label = c;
                s.painter_label = p;
                s.content_icon = ds.icon_table[static_cast<size_t>(c)];
                ds.samples.push_back(std::move(s));
            }
    return ds;
}

} // namespace sketchgen::toy
