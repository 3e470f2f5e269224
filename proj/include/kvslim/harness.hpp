#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kvslim/cache.hpp"
#include "kvslim/numerics.hpp"
#include "kvslim/spectral.hpp"

namespace kvslim {

// --- seeded random builders ----------------------------------------------

using Rng = std::mt19937_64;

Vector gaussian_vector(Rng& rng, std::size_t n, double stddev = 1.0);
Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev = 1.0);
/// rows x cols (rows >= cols) with orthonormal columns, from Gram-Schmidt
/// over a Gaussian draw.
Matrix random_orthonormal(Rng& rng, std::size_t rows, std::size_t cols);

// --- synthetic model and token stream ------------------------------------

struct ModelDims {
    std::size_t d_model = 64;
    std::size_t d_head = 16;
    std::size_t heads = 4;
};

/// Projection weights with a controlled singular-value decay σ_i ∝ (i+1)^-β
/// per head. Full matrices are d_model x (heads * d_head); head h occupies
/// columns [h*d_head, (h+1)*d_head).
struct SyntheticModel {
    ModelDims dims;
    double spectral_decay = 0.0;
    Matrix w_q;
    Matrix w_k;
    Matrix w_v;

    Matrix head_slice(const Matrix& w, std::size_t head) const;
};

struct TokenStream {
    std::vector<Vector> hidden_states;
    double rho = 0.0;
};

SyntheticModel gen_model(std::uint64_t seed, const ModelDims& dims, double beta);
/// Per-head weight block built as U diag(σ) Vᵀ; exposed so tests can check
/// the decay directly. `anchor` pulls the leading left mode toward the
/// first input coordinate before orthonormalization — the desk-scale
/// stand-in for the train-time co-adaptation between a projection's top
/// modes and the hidden stream's dominant direction.
Matrix gen_weight(Rng& rng, std::size_t rows, std::size_t cols, double beta,
                  double anchor = 0.0);

/// AR(1): x_{t+1} = ρ x_t + sqrt(1-ρ²) ξ_t with unit-variance Gaussian
/// noise. `bias` shifts the noise mean along the first coordinate, giving
/// the stream a persistent direction (the analogue of the dominant static
/// component of transformer hidden states); the centered adjacent
/// correlation stays ρ.
TokenStream gen_stream(std::uint64_t seed, std::size_t length, std::size_t d_model, double rho,
                       double bias = 0.0);

// --- decode simulation ----------------------------------------------------

struct SimulationOptions {
    std::uint64_t seed = 0;  // drives the asymkv surrogate-gradient draws
};

struct SimulationResult {
    std::vector<double> per_step_l2_error;   // head-averaged relative L2
    std::vector<double> per_step_cos_error;  // head-averaged 1 - cos
    std::vector<std::size_t> per_step_cache_len;
    std::vector<std::size_t> per_step_merges;
    std::vector<std::size_t> per_step_fallbacks;
    std::size_t final_cache_len = 0;
    std::size_t merge_count = 0;
    double fallback_rate = 0.0;
    std::uint64_t attention_evals = 0;
    std::uint64_t compress_steps = 0;
};

/// Runs the chunked decode loop: per step project the hidden state into
/// per-head (q, k, v), append to each head's cache, compress when the
/// trigger fires, then score the compressed attention output against the
/// uncompressed reference. Pair indices are shared across heads (metric
/// averaged over heads); merge weights are computed per head.
SimulationResult simulate_decode(const SyntheticModel& model, const TokenStream& stream,
                                 const CompressionConfig& config,
                                 const SimulationOptions& opts = {});

struct AlgorithmRow {
    std::string algorithm;
    double mean_error = 0.0;
    double median_error = 0.0;
    double p95_error = 0.0;
    double fallback_rate = 0.0;
    std::size_t final_cache_len = 0;
};

std::string algorithm_name(MergeAlgorithm a);
MergeAlgorithm parse_algorithm(const std::string& name);
std::string strategy_name(PairStrategy p);
PairStrategy parse_strategy(const std::string& name);

/// Runs simulate_decode once per algorithm on the same model/stream/seed.
std::vector<AlgorithmRow> compare_algorithms(const SyntheticModel& model,
                                             const TokenStream& stream,
                                             const CompressionConfig& base_config,
                                             const std::vector<MergeAlgorithm>& algorithms,
                                             const SimulationOptions& opts = {});

}  // namespace kvslim
