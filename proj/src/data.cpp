#include "virlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "virlab/error.hpp"
#include "virlab/random.hpp"

namespace virlab {

void Dataset::validate() const {
    if (!features.defined() || features.rank() != 2) throw ShapeError("dataset features must be [n, d]");
    if (features.dim(0) != labels.size())
        throw ShapeError("dataset has " + std::to_string(features.dim(0)) + " rows but " +
                         std::to_string(labels.size()) + " labels");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw IndexError("dataset label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    const std::size_t d = dim();
    std::vector<double> x(indices.size() * d);
    std::vector<int> y(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto row = features.row(indices[r]);
        std::copy(row.begin(), row.end(), x.begin() + static_cast<std::ptrdiff_t>(r * d));
        y[r] = labels[indices[r]];
    }
    return {Tensor({indices.size(), d}, std::move(x)), std::move(y), num_classes, class_names, bounds};
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

// -- IDX ---------------------------------------------------------------------

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off, const std::filesystem::path& path) {
    if (off + 4 > b.size()) throw IoError(path.string() + ": truncated IDX header");
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::optional<std::size_t> limit) {
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);

    if (const auto magic = read_be32(img, 0, images_path); magic != 0x00000803)
        throw IoError(images_path.string() + ": bad IDX image magic 0x" + [&] {
            std::ostringstream s;
            s << std::hex << std::setw(8) << std::setfill('0') << magic;
            return s.str();
        }());
    if (const auto magic = read_be32(lab, 0, labels_path); magic != 0x00000801)
        throw IoError(labels_path.string() + ": bad IDX label magic");

    const std::size_t n_img = read_be32(img, 4, images_path);
    const std::size_t rows = read_be32(img, 8, images_path);
    const std::size_t cols = read_be32(img, 12, images_path);
    const std::size_t n_lab = read_be32(lab, 4, labels_path);
    if (n_img != n_lab)
        throw IoError("IDX count mismatch: " + std::to_string(n_img) + " images vs " + std::to_string(n_lab) +
                      " labels");
    const std::size_t d = rows * cols;
    if (d == 0) throw IoError(images_path.string() + ": zero-sized images");
    if (img.size() < 16 + n_img * d) throw IoError(images_path.string() + ": truncated image payload");
    if (lab.size() < 8 + n_lab) throw IoError(labels_path.string() + ": truncated label payload");

    const std::size_t n = limit ? std::min(*limit, n_img) : n_img;
    std::vector<double> x(n * d);
    for (std::size_t i = 0; i < n * d; ++i) x[i] = static_cast<double>(img[16 + i]) / 255.0;
    std::vector<int> y(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = lab[8 + i];
        max_label = std::max(max_label, y[i]);
    }
    Dataset ds{Tensor({n, d}, std::move(x)), std::move(y), static_cast<std::size_t>(max_label) + 1, {}, Bounds{0.0, 1.0}};
    ds.validate();
    return ds;
}

// -- CSV ---------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream s(line);
    while (std::getline(s, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& cell, const std::filesystem::path& path, std::size_t line) {
    try {
        std::size_t used = 0;
        double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw IoError(path.string() + ":" + std::to_string(line) + ": non-numeric value '" + cell + "'");
    }
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, std::optional<Bounds> bounds) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError(path.string() + ": empty CSV");
    const auto header = split_csv_line(line);
    const auto label_it = std::find(header.begin(), header.end(), "label");
    if (label_it == header.end()) throw IoError(path.string() + ": no 'label' column");
    const auto label_col = static_cast<std::size_t>(label_it - header.begin());
    const std::size_t d = header.size() - 1;
    if (d == 0) throw IoError(path.string() + ": no feature columns");

    std::vector<double> x;
    std::vector<int> y;
    std::size_t line_no = 1;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                          std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const double v = parse_double(cells[c], path, line_no);
            if (c == label_col) {
                if (v < 0 || v != std::floor(v) || v > std::numeric_limits<int>::max())
                    throw IoError(path.string() + ":" + std::to_string(line_no) + ": label must be a non-negative integer");
                y.push_back(static_cast<int>(v));
                max_label = std::max(max_label, y.back());
            } else {
                x.push_back(v);
            }
        }
    }
    if (y.empty()) throw IoError(path.string() + ": no data rows");
    const std::size_t n = y.size();
    Dataset ds{Tensor({n, d}, std::move(x)), std::move(y), static_cast<std::size_t>(max_label) + 1, {}, bounds};
    ds.validate();
    return ds;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "label";
    for (std::size_t j = 0; j < data.dim(); ++j) out << ",x" << j;
    out << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << data.labels[i];
        for (double v : data.features.row(i)) out << ',' << v;
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

// -- synthetic ---------------------------------------------------------------

Dataset gmm_dataset(const gmm::GmmSpec& spec, std::size_t n, std::uint64_t seed) {
    auto s = gmm::sample_gmm(spec, n, seed);
    std::vector<int> y(s.labels.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = s.labels[i] > 0 ? 1 : 0;
    return {Tensor({n, static_cast<std::size_t>(spec.d)}, std::move(s.features)), std::move(y), 2, {"-1", "+1"},
            std::nullopt};
}

std::vector<double> simplex_vertices(std::size_t num_classes, std::size_t d, double separation) {
    if (num_classes < 2) throw ConfigError("simplex needs at least two classes");
    if (num_classes > d + 1)
        throw ConfigError("cannot place " + std::to_string(num_classes) + " simplex vertices in " + std::to_string(d) +
                          " dimensions");
    // Coordinates of e_c in the Helmert basis of the plane orthogonal to (1,...,1):
    // h_k = (1,...,1, -k, 0, ...) / sqrt(k (k + 1)), k = 1..C-1.
    std::vector<double> v(num_classes * d, 0.0);
    const double scale = separation / std::numbers::sqrt2;
    for (std::size_t c = 0; c < num_classes; ++c)
        for (std::size_t k = 1; k < num_classes; ++k) {
            double h = 0.0;
            if (c < k) h = 1.0;
            else if (c == k) h = -static_cast<double>(k);
            v[c * d + (k - 1)] = scale * h / std::sqrt(static_cast<double>(k * (k + 1)));
        }
    return v;
}

Dataset synth_multiclass(std::size_t num_classes, std::span<const std::size_t> per_class_n,
                         std::span<const double> variances, double separation, std::size_t d, std::uint64_t seed) {
    if (per_class_n.size() != num_classes || variances.size() != num_classes)
        throw ConfigError("synth_multiclass: per_class_n and variances need one entry per class");
    for (double v : variances)
        if (!(v > 0.0)) throw ConfigError("synth_multiclass: variances must be > 0");
    if (!(separation > 0.0)) throw ConfigError("synth_multiclass: separation must be > 0");
    const auto centers = simplex_vertices(num_classes, d, separation);

    const std::size_t n = std::accumulate(per_class_n.begin(), per_class_n.end(), std::size_t{0});
    std::vector<double> x;
    x.reserve(n * d);
    std::vector<int> y;
    y.reserve(n);
    Rng rng(mix_seed(seed));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t c = 0; c < num_classes; ++c) {
        const double sd = std::sqrt(variances[c]);
        for (std::size_t i = 0; i < per_class_n[c]; ++i) {
            for (std::size_t j = 0; j < d; ++j) x.push_back(centers[c * d + j] + sd * normal(rng));
            y.push_back(static_cast<int>(c));
        }
    }
    Dataset ds{Tensor({n, d}, std::move(x)), std::move(y), num_classes, {}, std::nullopt};
    ds.validate();
    return ds;
}

// -- iteration ---------------------------------------------------------------

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {0x5eedULL, static_cast<std::uint64_t>(epoch)}));
    // Fisher-Yates with an explicit draw so the order does not depend on the
    // standard library's shuffle implementation.
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

std::vector<Batch> batches(const Dataset& data, std::size_t batch_size, std::uint64_t seed, int epoch) {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    const auto perm = epoch_permutation(data.size(), seed, epoch);
    std::vector<Batch> out;
    for (std::size_t start = 0; start < perm.size(); start += batch_size) {
        const std::size_t end = std::min(perm.size(), start + batch_size);
        Batch b;
        b.indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(start), perm.begin() + static_cast<std::ptrdiff_t>(end));
        auto sub = data.subset(b.indices);
        b.x = std::move(sub.features);
        b.y = std::move(sub.labels);
        out.push_back(std::move(b));
    }
    return out;
}

std::map<int, std::vector<std::size_t>> per_class_split(const Dataset& data) {
    std::map<int, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < data.labels.size(); ++i) out[data.labels[i]].push_back(i);
    return out;
}

}  // namespace virlab
