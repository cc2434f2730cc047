#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "virlab/attacks.hpp"
#include "virlab/gmm.hpp"
#include "virlab/tensor.hpp"

namespace virlab {

struct Dataset {
    Tensor features;  // [n, d]
    std::vector<int> labels;
    std::size_t num_classes = 0;
    std::vector<std::string> class_names;
    std::optional<Bounds> bounds;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.dim(1); }
    /// Throws if labels fall outside [0, num_classes) or counts disagree.
    void validate() const;
    /// Rows `indices` as a new dataset.
    Dataset subset(std::span<const std::size_t> indices) const;
    std::vector<std::size_t> class_counts() const;
};

/// Big-endian IDX images (magic 0x00000803) and labels (0x00000801). Pixels
/// are divided by 255; bounds are [0, 1]. `limit` keeps the first rows.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::optional<std::size_t> limit = std::nullopt);

/// Header row, one column named "label", all other columns numeric features.
Dataset load_csv(const std::filesystem::path& path, std::optional<Bounds> bounds = std::nullopt);
void save_csv(const Dataset& data, const std::filesystem::path& path);

/// Two-class mixture with labels mapped -1 -> 0, +1 -> 1; unbounded.
Dataset gmm_dataset(const gmm::GmmSpec& spec, std::size_t n, std::uint64_t seed);

/// C isotropic Gaussians centred on the vertices of a regular simplex with
/// edge length `separation`; class c has per-coordinate variance variances[c].
/// Requires C <= d + 1.
Dataset synth_multiclass(std::size_t num_classes, std::span<const std::size_t> per_class_n,
                         std::span<const double> variances, double separation, std::size_t d, std::uint64_t seed);

/// Simplex vertex coordinates used by synth_multiclass, row-major [C, d].
std::vector<double> simplex_vertices(std::size_t num_classes, std::size_t d, double separation);

struct Batch {
    std::vector<std::size_t> indices;
    Tensor x;
    std::vector<int> y;
};

/// Shuffled partition into batches of size M (last one may be short);
/// the permutation is a function of (seed, epoch).
std::vector<Batch> batches(const Dataset& data, std::size_t batch_size, std::uint64_t seed, int epoch);

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, int epoch);

std::map<int, std::vector<std::size_t>> per_class_split(const Dataset& data);

}  // namespace virlab
