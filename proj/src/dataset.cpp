#include "sketchgen/dataset.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sketchgen/errors.hpp"
#include "sketchgen/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sketchgen {

namespace {

int parse_numeric_name(const fs::path& p) {
    const std::string stem = p.stem().string();
    try {
        size_t used = 0;
        const int v = std::stoi(stem, &used);
        if (used != stem.size() || v < 0) return -1;
        return v;
    } catch (const std::exception&) {
        return -1;
    }
}

} // namespace

Dataset load_dataset(const fs::path& root) {
    const fs::path meta_path = root / "meta.json";
    if (!fs::exists(meta_path)) throw DataError("missing meta.json under " + root.string());
    json meta;
    try {
        std::ifstream in(meta_path);
        in >> meta;
    } catch (const std::exception& e) {
        throw DataError("unreadable meta.json: " + std::string(e.what()));
    }
    Dataset ds;
    ds.class_count = meta.at("class_count").get<int>();
    ds.painter_count = meta.at("painter_count").get<int>();
    ds.resolution = meta.at("resolution").get<int>();
    if (ds.class_count <= 0 || ds.painter_count <= 0 || ds.resolution <= 0)
        throw DataError("meta.json declares non-positive counts");

    // Discover samples first so a missing icon can be reported per class.
    struct Entry {
        int cls, painter;
        fs::path path;
    };
    std::vector<Entry> entries;
    const fs::path sk_root = root / "sketches";
    if (fs::exists(sk_root)) {
        for (const auto& cdir : fs::directory_iterator(sk_root)) {
            if (!cdir.is_directory()) continue;
            const int cls = parse_numeric_name(cdir.path());
            if (cls < 0 || cls >= ds.class_count)
                throw DataError("sketch directory with invalid class id: " +
                                cdir.path().string());
            for (const auto& pdir : fs::directory_iterator(cdir.path())) {
                if (!pdir.is_directory()) continue;
                const int painter = parse_numeric_name(pdir.path());
                if (painter < 0 || painter >= ds.painter_count)
                    throw DataError("sketch directory with invalid painter id: " +
                                    pdir.path().string());
                for (const auto& f : fs::directory_iterator(pdir.path())) {
                    if (f.path().extension() != ".png") continue;
                    entries.push_back({cls, painter, f.path()});
                }
            }
        }
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return std::tie(a.cls, a.painter, a.path) < std::tie(b.cls, b.painter, b.path);
    });

    std::set<int> classes_present;
    for (const auto& e : entries) classes_present.insert(e.cls);

    ds.icon_table.assign(static_cast<size_t>(ds.class_count), nullptr);
    for (int c = 0; c < ds.class_count; ++c) {
        const fs::path icon_path = root / "icons" / (std::to_string(c) + ".png");
        if (!fs::exists(icon_path)) {
            if (classes_present.count(c))
                throw DataError("missing content icon for class " + std::to_string(c));
            continue;
        }
        TensorF icon = io::read_png_gray(icon_path);
        icon = io::resize_nearest(icon, ds.resolution, ds.resolution);
        ds.icon_table[static_cast<size_t>(c)] = std::make_shared<const TensorF>(std::move(icon));
    }

    ds.samples.reserve(entries.size());
    for (const auto& e : entries) {
        ContentSample s;
        s.sketch = io::read_png_gray(e.path);
        if (s.sketch.dim(0) != ds.resolution || s.sketch.dim(1) != ds.resolution)
            s.sketch = io::resize_nearest(s.sketch, ds.resolution, ds.resolution);
        s.class_label = e.cls;
        s.painter_label = e.painter;
        s.content_icon = ds.icon_table[static_cast<size_t>(e.cls)];
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

void save_dataset(const Dataset& ds, const fs::path& root) {
    fs::create_directories(root / "icons");
    json meta = {{"class_count", ds.class_count},
                 {"painter_count", ds.painter_count},
                 {"resolution", ds.resolution}};
    std::ofstream(root / "meta.json") << meta.dump(2) << "\n";
    for (int c = 0; c < ds.class_count; ++c) {
        const auto& icon = ds.icon_table[static_cast<size_t>(c)];
        if (icon) io::write_png_gray(root / "icons" / (std::to_string(c) + ".png"), *icon);
    }
    std::map<std::pair<int, int>, int> counters;
    for (const auto& s : ds.samples) {
        const fs::path dir =
            root / "sketches" / std::to_string(s.class_label) / std::to_string(s.painter_label);
        fs::create_directories(dir);
        const int n = counters[{s.class_label, s.painter_label}]++;
        io::write_png_gray(dir / (std::to_string(n) + ".png"), s.sketch);
    }
}

void convert_sketchime_tree(const fs::path&, const fs::path&) {
    throw DataError(
        "SketchIME conversion is not implemented; arrange files in the documented "
        "icons/ + sketches/ layout instead");
}

std::pair<Dataset, Dataset> split_by_painter(const Dataset& ds, double test_fraction,
                                             uint64_t seed) {
    if (ds.painter_count < 2)
        throw DataError("painter-disjoint split needs at least 2 painters");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw DataError("test_fraction must lie in (0,1)");

    std::vector<int> painters(static_cast<size_t>(ds.painter_count));
    for (int i = 0; i < ds.painter_count; ++i) painters[static_cast<size_t>(i)] = i;
    Rng rng = Rng::derive(seed, 0x5011717);
    rng.shuffle(painters.begin(), painters.end());

    int n_test = static_cast<int>(std::lround(test_fraction * ds.painter_count));
    n_test = std::clamp(n_test, 1, ds.painter_count - 1);

    std::vector<bool> is_test(static_cast<size_t>(ds.painter_count), false);
    for (int i = 0; i < n_test; ++i) is_test[static_cast<size_t>(painters[static_cast<size_t>(i)])] = true;

    Dataset train = ds, test = ds;
    train.samples.clear();
    test.samples.clear();
    for (const auto& s : ds.samples)
        (is_test[static_cast<size_t>(s.painter_label)] ? test : train).samples.push_back(s);
    return {std::move(train), std::move(test)};
}

const ContentSample& sample_style(const Dataset& ds, Rng& rng) {
    if (ds.samples.empty()) throw DataError("cannot sample a style from an empty dataset");
    return ds.samples[static_cast<size_t>(rng.uniform_index(
        static_cast<int64_t>(ds.samples.size())))];
}

std::pair<Dataset, Dataset> class_extension_split(const Dataset& ds, int train_class_count,
                                                  ExtensionOption option) {
    if (!ds.is_toy())
        throw DataError("class_extension_split needs component metadata (toy corpus)");
    if (train_class_count <= 0 || train_class_count >= ds.class_count)
        throw DataError("train_class_count must lie in [1, class_count)");

    std::set<int> train_classes;
    for (int c = 0; c < train_class_count; ++c) train_classes.insert(c);

    std::set<int> train_components;
    for (int c : train_classes)
        for (int comp : ds.class_components[static_cast<size_t>(c)]) train_components.insert(comp);

    std::vector<int> test_classes;
    for (int c = train_class_count; c < ds.class_count; ++c) {
        const auto& comps = ds.class_components[static_cast<size_t>(c)];
        bool covered = true;
        for (int comp : comps) covered = covered && train_components.count(comp) > 0;
        const bool keep =
            option == ExtensionOption::recombination ? covered : !covered;
        if (keep) test_classes.push_back(c);
    }
    if (test_classes.empty())
        throw DataError("no test class satisfies the requested class-extension option");

    std::vector<int> train_list(train_classes.begin(), train_classes.end());
    std::vector<int> all_painters(static_cast<size_t>(ds.painter_count));
    for (int p = 0; p < ds.painter_count; ++p) all_painters[static_cast<size_t>(p)] = p;

    return {filter_dataset(ds, train_list, all_painters),
            filter_dataset(ds, test_classes, all_painters)};
}

Dataset filter_dataset(const Dataset& ds, const std::vector<int>& classes,
                       const std::vector<int>& painters) {
    std::set<int> cs(classes.begin(), classes.end());
    std::set<int> ps(painters.begin(), painters.end());
    Dataset out = ds;
    out.samples.clear();
    for (const auto& s : ds.samples)
        if (cs.count(s.class_label) && ps.count(s.painter_label)) out.samples.push_back(s);
    return out;
}

} // namespace sketchgen
