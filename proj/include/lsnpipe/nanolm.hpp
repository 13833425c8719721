#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lsnpipe/autodiff.hpp"

namespace lsnpipe::corpus {
struct LangCorpus;
}

namespace lsnpipe::nanolm {

enum class Activation : uint8_t { Relu, Gelu };

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 256;       // FFN hidden width; the per-layer neuron count
    int max_seq = 256;
    uint64_t seed = 0;
    Activation activation = Activation::Relu;

    void validate() const;
    int head_dim() const { return d_model / n_heads; }
    int total_neurons() const { return n_layers * d_ff; }
    bool operator==(const ModelConfig&) const = default;
};

// An FFN hidden unit: the unit of detection, masked training and merging.
struct NeuronId {
    int layer = 0;
    int index = 0;
    auto operator<=>(const NeuronId&) const = default;
};

// The full named-parameter set, addressable by stable path strings. Paths and
// total count are pure functions of the config.
class Params {
public:
    static Params init(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    autodiff::Tensor& at(const std::string& path);
    const autodiff::Tensor& at(const std::string& path) const;
    bool has(const std::string& path) const { return tensors_.count(path) > 0; }

    // Paths in the canonical (sorted) order used by checkpoints.
    std::vector<std::string> paths() const;
    int64_t total_params() const;
    void zero_grads();
    std::vector<autodiff::Tensor*> all_tensors();

    bool bitwise_equal(const Params& other) const;
    // Number of scalar parameter values that differ bitwise.
    int64_t count_differing_values(const Params& other) const;

    static int64_t expected_param_count(const ModelConfig& config);

private:
    ModelConfig config_;
    // map keeps paths sorted, which fixes checkpoint and iteration order
    std::map<std::string, autodiff::Tensor> tensors_;
};

// Parameter paths owned by one neuron: row `index` of the layer's FFN input
// matrix, input bias element `index`, and column `index` of the FFN output
// matrix - 2*d_model+1 scalars, disjoint across neurons.
struct OwnedSlices {
    std::string w_in_path;   // row `index` of [d_ff, d_model]
    std::string b_in_path;   // element `index` of [d_ff]
    std::string w_out_path;  // column `index` of [d_model, d_ff]
    int index = 0;
};
OwnedSlices owned_slices(const NeuronId& id, const ModelConfig& config);
int64_t params_per_neuron(const ModelConfig& config);  // 2*d_model+1

struct ForwardResult {
    autodiff::Tape tape;
    autodiff::Var logits;                        // [t, vocab]
    std::vector<autodiff::Tensor> ffn_activations;  // per layer [t, d_ff] when captured
};

// Causal forward pass over a token sequence. When capture is set, the
// post-nonlinearity FFN activations are copied out per layer.
ForwardResult forward(Params& params, std::span<const int> tokens, bool capture);

struct LossResult {
    autodiff::Tape tape;
    autodiff::Var loss;  // scalar mean next-token cross-entropy, scaled by loss_scale
};

// Next-token LM loss over one sequence: positions 0..n-2 predict 1..n-1.
LossResult lm_loss(Params& params, std::span<const int> tokens, double loss_scale = 1.0);

// exp(mean next-token cross-entropy) over every position of every sample.
double perplexity(Params& params, const corpus::LangCorpus& corpus);
double mean_cross_entropy(Params& params, const corpus::LangCorpus& corpus);

// Greedy argmax continuation, used only to build deterministic eval fixtures.
std::vector<int> generate_greedy(Params& params, std::span<const int> prompt, int n_new_tokens);

// Versioned binary checkpoint: magic, format version, text header carrying the
// config, tensors as little-endian f64 in path-sorted order, FNV-1a checksum.
void save_checkpoint(const Params& params, const std::filesystem::path& path);
Params load_checkpoint(const std::filesystem::path& path);
// Loads into an existing model; the stored config must match exactly.
void load_checkpoint_into(Params& params, const std::filesystem::path& path);

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

}  // namespace lsnpipe::nanolm
