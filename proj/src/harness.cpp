#include "kvslim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kvslim/attention.hpp"

namespace kvslim {

Vector gaussian_vector(Rng& rng, std::size_t n, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Vector v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (double& x : m.data) x = dist(rng);
    return m;
}

namespace {

// Gram-Schmidt over Gaussian draws; `anchor` is added to the first
// coordinate of the first column before orthonormalization.
Matrix orthonormal_columns(Rng& rng, std::size_t rows, std::size_t cols, double anchor) {
    if (cols > rows) throw DimensionMismatch("random_orthonormal: cols > rows");
    Matrix m(rows, cols);
    for (std::size_t c = 0; c < cols; ++c) {
        Vector v;
        double n = 0.0;
        do {
            v = gaussian_vector(rng, rows);
            if (c == 0) v[0] += anchor;
            // modified Gram-Schmidt against earlier columns
            for (std::size_t k = 0; k < c; ++k) {
                double proj = 0.0;
                for (std::size_t r = 0; r < rows; ++r) proj += m(r, k) * v[r];
                for (std::size_t r = 0; r < rows; ++r) v[r] -= proj * m(r, k);
            }
            n = norm2(v);
        } while (n < 1e-8);
        for (std::size_t r = 0; r < rows; ++r) m(r, c) = v[r] / n;
    }
    return m;
}

}  // namespace

Matrix random_orthonormal(Rng& rng, std::size_t rows, std::size_t cols) {
    return orthonormal_columns(rng, rows, cols, 0.0);
}

Matrix SyntheticModel::head_slice(const Matrix& w, std::size_t head) const {
    if (head >= dims.heads) throw IndexOutOfRange("head_slice: head");
    Matrix out(w.rows, dims.d_head);
    for (std::size_t r = 0; r < w.rows; ++r)
        for (std::size_t c = 0; c < dims.d_head; ++c)
            out(r, c) = w(r, head * dims.d_head + c);
    return out;
}

Matrix gen_weight(Rng& rng, std::size_t rows, std::size_t cols, double beta, double anchor) {
    const std::size_t k = std::min(rows, cols);
    const Matrix u = orthonormal_columns(rng, rows, k, anchor);
    const Matrix v = random_orthonormal(rng, cols, k);
    Matrix w(rows, cols);
    for (std::size_t i = 0; i < k; ++i) {
        const double sigma = std::pow(static_cast<double>(i + 1), -beta);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) w(r, c) += sigma * u(r, i) * v(c, i);
    }
    return w;
}

SyntheticModel gen_model(std::uint64_t seed, const ModelDims& dims, double beta) {
    if (beta < 0.0) throw Error("gen_model: beta must be >= 0");
    Rng rng(seed);
    SyntheticModel m;
    m.dims = dims;
    m.spectral_decay = beta;
    const std::size_t total = dims.heads * dims.d_head;
    m.w_q = Matrix(dims.d_model, total);
    m.w_k = Matrix(dims.d_model, total);
    m.w_v = Matrix(dims.d_model, total);
    for (std::size_t h = 0; h < dims.heads; ++h) {
        // Q and K decay with beta; V stays flat-spectrum, mirroring the
        // concentrated-vs-dispersed asymmetry the harness studies.
        const Matrix bq = gen_weight(rng, dims.d_model, dims.d_head, beta);
        const Matrix bk = gen_weight(rng, dims.d_model, dims.d_head, beta);
        const Matrix bv = gen_weight(rng, dims.d_model, dims.d_head, 0.0);
        for (std::size_t r = 0; r < dims.d_model; ++r)
            for (std::size_t c = 0; c < dims.d_head; ++c) {
                m.w_q(r, h * dims.d_head + c) = bq(r, c);
                m.w_k(r, h * dims.d_head + c) = bk(r, c);
                m.w_v(r, h * dims.d_head + c) = bv(r, c);
            }
    }
    return m;
}

TokenStream gen_stream(std::uint64_t seed, std::size_t length, std::size_t d_model,
                       double rho, double bias) {
    if (rho < 0.0 || rho >= 1.0) throw Error("gen_stream: rho must be in [0, 1)");
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    TokenStream ts;
    ts.rho = rho;
    ts.hidden_states.reserve(length);
    const double noise_scale = std::sqrt(1.0 - rho * rho);
    Vector x = gaussian_vector(rng, d_model);
    // start at the stationary mean so the persistent direction is present
    // from the first token
    x[0] += bias * noise_scale / (1.0 - rho);
    ts.hidden_states.push_back(x);
    for (std::size_t t = 1; t < length; ++t) {
        Vector xi = gaussian_vector(rng, d_model);
        xi[0] += bias;
        for (std::size_t i = 0; i < d_model; ++i) x[i] = rho * x[i] + noise_scale * xi[i];
        ts.hidden_states.push_back(x);
    }
    return ts;
}

namespace {

Vector head_project(const Vector& x, const Matrix& w, std::size_t head, std::size_t d_head) {
    Vector out(d_head, 0.0);
    const std::size_t base = head * d_head;
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double xr = x[r];
        if (xr == 0.0) continue;
        for (std::size_t c = 0; c < d_head; ++c) out[c] += xr * w(r, base + c);
    }
    return out;
}

}  // namespace

SimulationResult simulate_decode(const SyntheticModel& model, const TokenStream& stream,
                                 const CompressionConfig& config,
                                 const SimulationOptions& opts) {
    config.validate();
    const std::size_t heads = model.dims.heads;
    const std::size_t dh = model.dims.d_head;
    const std::size_t steps = stream.hidden_states.size();

    std::vector<KvCache> caches(heads, KvCache(config));
    // Uncompressed reference per head.
    std::vector<std::vector<Vector>> ref_keys(heads), ref_values(heads);

    Rng grad_rng(opts.seed * 0x2545F4914F6CDD1DULL + 0x1234567ULL);

    SimulationResult res;
    res.per_step_l2_error.reserve(steps);
    res.per_step_cos_error.reserve(steps);
    res.per_step_cache_len.reserve(steps);
    std::size_t total_merges = 0, total_fallbacks = 0;

    for (std::size_t t = 0; t < steps; ++t) {
        const Vector& x = stream.hidden_states[t];
        std::vector<Vector> q(heads);
        for (std::size_t h = 0; h < heads; ++h) {
            q[h] = head_project(x, model.w_q, h, dh);
            Vector k = head_project(x, model.w_k, h, dh);
            Vector v = head_project(x, model.w_v, h, dh);
            caches[h].append(k, v);
            ref_keys[h].push_back(std::move(k));
            ref_values[h].push_back(std::move(v));
        }

        std::size_t step_merges = 0, step_fallbacks = 0;
        if (config.algorithm != MergeAlgorithm::none && caches[0].compression_due()) {
            // Shared pair selection: average the per-head metric.
            std::vector<AttentionSnapshot> snaps(heads);
            std::vector<double> metric;
            const std::size_t count = caches[0].size() - config.budget;
            for (std::size_t h = 0; h < heads; ++h) {
                snaps[h] = attention_forward(q[h], caches[h].keys(), caches[h].values());
                res.attention_evals++;
                std::vector<double> mh = pair_metrics(caches[h].body(), config.pair_strategy,
                                                      snaps[h], config.sink_len);
                if (metric.empty())
                    metric = std::move(mh);
                else
                    for (std::size_t i = 0; i < metric.size(); ++i) metric[i] += mh[i];
            }
            for (double& v : metric) v /= static_cast<double>(heads);
            const auto pairs = choose_disjoint_pairs(metric, count);
            for (std::size_t h = 0; h < heads; ++h) {
                std::optional<Vector> e;
                if (config.algorithm == MergeAlgorithm::asymkv)
                    e = gaussian_vector(grad_rng, dh);
                const CompressionReport rep = caches[h].apply_pairs(pairs, snaps[h], e);
                step_merges += rep.merges;
                step_fallbacks += rep.fallbacks;
            }
            res.compress_steps++;
            total_merges += step_merges;
            total_fallbacks += step_fallbacks;
        }

        double l2 = 0.0, cos_err = 0.0;
        for (std::size_t h = 0; h < heads; ++h) {
            const AttentionSnapshot comp =
                attention_forward(q[h], caches[h].keys(), caches[h].values());
            const AttentionSnapshot full = attention_forward(q[h], ref_keys[h], ref_values[h]);
            res.attention_evals += 2;
            const Vector diff = sub(comp.output, full.output);
            const double denom = norm2(full.output);
            l2 += denom > 0.0 ? norm2(diff) / denom : norm2(diff);
            const double no = norm2(comp.output);
            cos_err += (denom > kDegenerateEps && no > kDegenerateEps)
                           ? 1.0 - cosine(comp.output, full.output)
                           : 0.0;
        }
        res.per_step_l2_error.push_back(l2 / static_cast<double>(heads));
        res.per_step_cos_error.push_back(cos_err / static_cast<double>(heads));
        res.per_step_cache_len.push_back(caches[0].size());
        res.per_step_merges.push_back(step_merges);
        res.per_step_fallbacks.push_back(step_fallbacks);
    }

    res.final_cache_len = caches[0].size();
    res.merge_count = total_merges;
    res.fallback_rate = total_merges == 0 ? 0.0
                                          : static_cast<double>(total_fallbacks) /
                                                static_cast<double>(total_merges);
    return res;
}

std::string algorithm_name(MergeAlgorithm a) {
    switch (a) {
        case MergeAlgorithm::kvslimmer: return "kvslimmer";
        case MergeAlgorithm::asymkv: return "asymkv";
        case MergeAlgorithm::mean: return "mean";
        case MergeAlgorithm::none: return "none";
    }
    return "?";
}

MergeAlgorithm parse_algorithm(const std::string& name) {
    if (name == "kvslimmer") return MergeAlgorithm::kvslimmer;
    if (name == "asymkv") return MergeAlgorithm::asymkv;
    if (name == "mean") return MergeAlgorithm::mean;
    if (name == "none") return MergeAlgorithm::none;
    throw Error("unknown algorithm: " + name);
}

std::string strategy_name(PairStrategy p) {
    switch (p) {
        case PairStrategy::highest_key_similarity: return "highest_key_similarity";
        case PairStrategy::lowest_attention_mass: return "lowest_attention_mass";
        case PairStrategy::oldest_first: return "oldest_first";
    }
    return "?";
}

PairStrategy parse_strategy(const std::string& name) {
    if (name == "highest_key_similarity") return PairStrategy::highest_key_similarity;
    if (name == "lowest_attention_mass") return PairStrategy::lowest_attention_mass;
    if (name == "oldest_first") return PairStrategy::oldest_first;
    throw Error("unknown pair strategy: " + name);
}

std::vector<AlgorithmRow> compare_algorithms(const SyntheticModel& model,
                                             const TokenStream& stream,
                                             const CompressionConfig& base_config,
                                             const std::vector<MergeAlgorithm>& algorithms,
                                             const SimulationOptions& opts) {
    std::vector<AlgorithmRow> rows;
    for (MergeAlgorithm algo : algorithms) {
        CompressionConfig cfg = base_config;
        cfg.algorithm = algo;
        const SimulationResult r = simulate_decode(model, stream, cfg, opts);
        AlgorithmRow row;
        row.algorithm = algorithm_name(algo);
        std::vector<double> errs = r.per_step_l2_error;
        if (!errs.empty()) {
            row.mean_error = std::accumulate(errs.begin(), errs.end(), 0.0) /
                             static_cast<double>(errs.size());
            std::sort(errs.begin(), errs.end());
            row.median_error = errs[errs.size() / 2];
            row.p95_error = errs[static_cast<std::size_t>(
                std::min<double>(static_cast<double>(errs.size()) - 1.0,
                                 0.95 * static_cast<double>(errs.size())))];
        }
        row.fallback_rate = r.fallback_rate;
        row.final_cache_len = r.final_cache_len;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace kvslim
