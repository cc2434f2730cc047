#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "virlab/tensor.hpp"

namespace virlab {

/// Fully connected ReLU network: widths = [input, hidden..., classes].
struct Architecture {
    std::vector<std::size_t> widths;

    std::size_t input_dim() const { return widths.front(); }
    std::size_t num_classes() const { return widths.back(); }
    std::size_t num_layers() const { return widths.size() - 1; }
    /// Throws ConfigError for fewer than two widths or a zero width.
    void validate() const;
    bool operator==(const Architecture&) const = default;
};

struct NamedParameter {
    std::string name;
    Tensor value;
};

/// f_theta: maps [batch, input_dim] inputs to [batch, C] logits.
class Classifier {
public:
    Classifier(Architecture arch, std::vector<NamedParameter> params);

    const Architecture& arch() const { return arch_; }
    std::size_t num_classes() const { return arch_.num_classes(); }
    std::size_t input_dim() const { return arch_.input_dim(); }
    std::size_t parameter_count() const;

    std::span<NamedParameter> parameters() { return params_; }
    std::span<const NamedParameter> parameters() const { return params_; }
    const Tensor& parameter(const std::string& name) const;

    /// Logits, recorded on the tape for both parameters and x.
    Tensor forward(const Tensor& x) const;
    std::vector<int> predict(const Tensor& x) const;

    /// Copy whose parameters are constants; used by attacks so parameter
    /// grads are never touched while differentiating w.r.t. inputs.
    Classifier frozen() const;
    void zero_grad();

private:
    Architecture arch_;
    std::vector<NamedParameter> params_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
Classifier init_classifier(const Architecture& arch, std::uint64_t seed);

/// Model built from explicit per-layer weights [in,out] and biases [out]; used by tests and tools.
Classifier make_classifier(const Architecture& arch, std::vector<std::vector<double>> weights,
                           std::vector<std::vector<double>> biases);

/// softmax(forward(x))_y for a single input row.
double true_class_prob(const Classifier& model, std::span<const double> x, int y);
/// Batched true-class probabilities, computed without a tape.
std::vector<double> true_class_probs(const Classifier& model, const Tensor& x, std::span<const int> y);

/// Indices sorted from most to least vulnerable: ascending true-class
/// probability, ties broken by index.
std::vector<std::size_t> vulnerability_ranking(std::span<const double> true_probs);

// -- checkpoints -------------------------------------------------------------

struct Checkpoint {
    Classifier model;
    std::int64_t epoch = 0;
    std::string rng_state;
};

inline constexpr char kCheckpointMagic[] = "VIRCKPT1";
inline constexpr int kCheckpointVersion = 1;

/// Layout: magic "VIRCKPT1"; u64 length + canonical JSON header; per parameter
/// u64 name length, name, u64 rank, rank x u64 dims, raw f64 payload; trailing
/// CRC32 (u32) of all preceding bytes. All integers little-endian.
void save_checkpoint(const Classifier& model, const std::filesystem::path& path, std::int64_t epoch = 0,
                     const std::string& rng_state = {});
std::vector<std::uint8_t> encode_checkpoint(const Classifier& model, std::int64_t epoch,
                                            const std::string& rng_state);
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace virlab
