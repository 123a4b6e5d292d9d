#pragma once

#include <filesystem>
#include <memory>
#include <utility>
#include <vector>

#include "sketchgen/rng.hpp"
#include "sketchgen/tensor.hpp"

namespace sketchgen {

// One labelled sketch record. The icon is shared per class, so two samples of
// the same class reference bit-identical icon storage.
struct ContentSample {
    TensorF sketch; // [H,W] in [0,1], ink = 1
    int class_label = 0;
    int painter_label = 0;
    std::shared_ptr<const TensorF> content_icon;
};

// Immutable after construction; safe for concurrent readers.
struct Dataset {
    std::vector<ContentSample> samples;
    int class_count = 0;
    int painter_count = 0;
    int resolution = 0;
    std::vector<std::shared_ptr<const TensorF>> icon_table; // indexed by class label
    // Toy corpora record each class's primitive components (by id); empty for
    // corpora loaded from disk.
    std::vector<std::vector<int>> class_components;

    bool is_toy() const { return !class_components.empty(); }
};

// Directory layout: root/icons/<class>.png, root/sketches/<class>/<painter>/<n>.png,
// root/meta.json with class_count / painter_count / resolution.
Dataset load_dataset(const std::filesystem::path& root);
void save_dataset(const Dataset& ds, const std::filesystem::path& root);

// Upstream corpora ship in their own export formats; adapting them is a
// documented non-goal, so this entry point only names the contract.
void convert_sketchime_tree(const std::filesystem::path& src, const std::filesystem::path& dst);

// Partition by painter: the painter label sets of the two halves are disjoint,
// every sample lands in exactly one half, and the test side receives
// max(1, round(test_fraction * painter_count)) painters. Deterministic in seed.
std::pair<Dataset, Dataset> split_by_painter(const Dataset& ds, double test_fraction,
                                             uint64_t seed);

// Uniform draw over the whole dataset; the style sample's class and painter are
// unconstrained.
const ContentSample& sample_style(const Dataset& ds, Rng& rng);

enum class ExtensionOption { recombination, novel_components };

// Partition by class for the class-extension protocol. Training classes are
// taken in class-index order; the test side keeps exactly the remaining
// classes that satisfy the option's constraint against the training component
// set (others are dropped, mirroring how the paper-style protocol selects its
// two disjoint test pools from one training split).
std::pair<Dataset, Dataset> class_extension_split(const Dataset& ds, int train_class_count,
                                                  ExtensionOption option);

// Keeps samples matching the given class/painter predicates; icon table and
// counts are preserved.
Dataset filter_dataset(const Dataset& ds, const std::vector<int>& classes,
                       const std::vector<int>& painters);

} // namespace sketchgen
