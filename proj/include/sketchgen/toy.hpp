#pragma once

#include <array>
#include <string>
#include <vector>

#include "sketchgen/dataset.hpp"

namespace sketchgen::toy {

// Fixed per-painter rendering characteristics. Within-painter variation comes
// only from per-sample control-point noise.
struct ToyStyleParams {
    double slant_shear_deg = 0.0; // in [-25, +25]
    int stroke_width = 2;         // pixels, in {1,2,3,4}
    double corner_jitter = 0.0;   // pixels, in [0, 3]
    double curvature_bias = 0.0;  // in [-0.5, 0.5]
};

enum Primitive : int {
    kCircle = 0,
    kTriangle = 1,
    kSquare = 2,
    kCross = 3,
    kDiagonalStroke = 4,
    kArc = 5,
};

struct Component {
    Primitive primitive;
    int slot; // one of three layout slots
};

// The full composition table. Ordering is structured: entries 0-7 use only the
// first four primitives, 8-15 recombine those same primitives, and 16+
// introduce the diagonal stroke and the arc. class_count indexes a prefix.
const std::vector<std::vector<Component>>& composition_table();
int max_toy_classes();

std::string primitive_name(Primitive p);

// Style parameters for every painter, stratified over the parameter ranges so
// that painters stay separable by construction, then deterministically
// permuted by seed.
std::vector<ToyStyleParams> toy_painter_styles(int painter_count, uint64_t seed);

// Renders one sample: the class composition under the painter's style plus
// per-sample control-point noise. Pass sample_index < 0 for the clean icon
// (no style, no noise, fixed stroke width).
TensorF render_toy_sketch(int class_id, const ToyStyleParams& style, int resolution,
                          uint64_t seed, int class_label, int painter_label, int sample_index);

// Procedural stand-in corpus: class_count compositions x painter_count styles
// x samples_per_pair noisy renderings, plus the style-free icon table.
// Bit-identical output for equal arguments.
Dataset make_toy_dataset(int class_count, int painter_count, int samples_per_pair, int resolution,
                         uint64_t seed);

} // namespace sketchgen::toy
