// kvslim command-line surface: oracle verification, weight spectrum
// analysis, and the chunked KV-compression decode simulator.

#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kvslim/harness.hpp"
#include "kvslim/report.hpp"
#include "kvslim/spectral.hpp"
#include "kvslim/tensor_io.hpp"
#include "kvslim/verify.hpp"

namespace {

using nlohmann::json;
using namespace kvslim;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

struct SimFlags {
    std::size_t budget = 2048;
    std::size_t chunk_size = 512;
    std::size_t sink = 32;
    std::string algo = "kvslimmer";
    std::string pair_strategy = "lowest_attention_mass";
    double beta = 2.0;
    double rho = 0.9;
    std::size_t length = 4096;
    int seeds = 1;
    std::size_t d_model = 64;
    std::size_t d_head = 16;
    std::size_t heads = 4;
    std::string out_csv;
    std::string out_json;
};

void add_sim_flags(CLI::App* cmd, SimFlags& f) {
    cmd->add_option("--budget", f.budget, "cache budget (entries)")->check(CLI::PositiveNumber);
    cmd->add_option("--chunk-size", f.chunk_size, "pairs merged per compression")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--sink", f.sink, "initial tokens preserved verbatim");
    cmd->add_option("--pair-strategy", f.pair_strategy,
                    "highest_key_similarity | lowest_attention_mass | oldest_first");
    cmd->add_option("--beta", f.beta, "singular-value decay exponent of Q/K weights");
    cmd->add_option("--rho", f.rho, "AR(1) correlation of the hidden-state stream");
    cmd->add_option("--length", f.length, "decode steps")->check(CLI::PositiveNumber);
    cmd->add_option("--seeds", f.seeds, "number of seeds")->check(CLI::PositiveNumber);
    cmd->add_option("--d-model", f.d_model, "hidden-state width");
    cmd->add_option("--d-head", f.d_head, "per-head key/value width");
    cmd->add_option("--heads", f.heads, "attention heads");
    cmd->add_option("--out", f.out_csv, "per-step CSV output path");
    cmd->add_option("--json", f.out_json, "JSON summary output path (default: stdout)");
}

CompressionConfig make_config(const SimFlags& f) {
    CompressionConfig cfg;
    cfg.budget = f.budget;
    cfg.chunk_size = f.chunk_size;
    cfg.sink_len = f.sink;
    cfg.algorithm = parse_algorithm(f.algo);
    cfg.pair_strategy = parse_strategy(f.pair_strategy);
    cfg.validate();
    return cfg;
}

struct AggregatedRun {
    std::vector<ReportRow> rows;
    double mean_error = 0.0;
    double p95_error = 0.0;
    double fallback_rate = 0.0;
    std::size_t final_cache_len = 0;
};

AggregatedRun run_algorithm(const SimFlags& f, MergeAlgorithm algo) {
    AggregatedRun agg;
    std::vector<double> all_errors;
    std::size_t merges = 0, fallbacks = 0;
    const std::string name = algorithm_name(algo);
    for (int seed = 0; seed < f.seeds; ++seed) {
        const SyntheticModel model =
            gen_model(static_cast<std::uint64_t>(seed), {f.d_model, f.d_head, f.heads}, f.beta);
        const TokenStream stream =
            gen_stream(static_cast<std::uint64_t>(seed), f.length, f.d_model, f.rho);
        CompressionConfig cfg = make_config(f);
        cfg.algorithm = algo;
        const SimulationResult r =
            simulate_decode(model, stream, cfg, {static_cast<std::uint64_t>(seed)});
        for (std::size_t t = 0; t < r.per_step_l2_error.size(); ++t) {
            ReportRow row;
            row.step = t;
            row.cache_len = r.per_step_cache_len[t];
            row.algorithm = name;
            row.l2_error = r.per_step_l2_error[t];
            row.cos_error = r.per_step_cos_error[t];
            row.merges = r.per_step_merges[t];
            row.fallbacks = r.per_step_fallbacks[t];
            agg.rows.push_back(std::move(row));
            all_errors.push_back(r.per_step_l2_error[t]);
        }
        merges += r.merge_count;
        fallbacks += static_cast<std::size_t>(r.fallback_rate *
                                              static_cast<double>(r.merge_count) + 0.5);
        agg.final_cache_len = r.final_cache_len;
    }
    if (!all_errors.empty()) {
        agg.mean_error = std::accumulate(all_errors.begin(), all_errors.end(), 0.0) /
                         static_cast<double>(all_errors.size());
        std::vector<double> sorted = all_errors;
        std::sort(sorted.begin(), sorted.end());
        agg.p95_error = sorted[static_cast<std::size_t>(
            std::min<double>(static_cast<double>(sorted.size()) - 1.0,
                             0.95 * static_cast<double>(sorted.size())))];
    }
    agg.fallback_rate =
        merges == 0 ? 0.0 : static_cast<double>(fallbacks) / static_cast<double>(merges);
    return agg;
}

void write_rows_csv(const std::string& path, const std::vector<ReportRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open CSV output " + path);
    write_csv_row(out, kReportHeader);
    for (const ReportRow& r : rows) write_report_row(out, r);
    if (!out) throw IoError("CSV write failed for " + path);
}

void emit_json(const std::string& path, const json& j) {
    if (path.empty()) {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open JSON output " + path);
    out << j.dump(2) << "\n";
}

json summary_json(const std::string& algo, const AggregatedRun& agg) {
    return json{{"algo", algo},
                {"mean_error", agg.mean_error},
                {"p95_error", agg.p95_error},
                {"final_cache_len", agg.final_cache_len},
                {"fallback_rate", agg.fallback_rate}};
}

int cmd_simulate(const SimFlags& f) {
    const MergeAlgorithm algo = parse_algorithm(f.algo);
    const AggregatedRun agg = run_algorithm(f, algo);
    if (!f.out_csv.empty()) write_rows_csv(f.out_csv, agg.rows);
    emit_json(f.out_json, summary_json(f.algo, agg));
    return kExitOk;
}

int cmd_compare(const SimFlags& f, const std::string& algos_csv) {
    std::vector<std::string> names;
    std::string cur;
    for (char c : algos_csv + ",") {
        if (c == ',') {
            if (!cur.empty()) names.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (names.empty()) throw Error("compare: --algos list is empty");

    std::vector<ReportRow> all_rows;
    json summaries = json::array();
    for (const std::string& name : names) {
        const AggregatedRun agg = run_algorithm(f, parse_algorithm(name));
        all_rows.insert(all_rows.end(), agg.rows.begin(), agg.rows.end());
        summaries.push_back(summary_json(name, agg));
    }
    if (!f.out_csv.empty()) write_rows_csv(f.out_csv, all_rows);
    emit_json(f.out_json, summaries);
    return kExitOk;
}

int cmd_spectrum(const std::string& weights_path, std::size_t heads, std::size_t head_dim,
                 const std::string& states_path, const std::string& out_path) {
    const Matrix w = read_tensor(weights_path).as_matrix();
    if (head_dim == 0) {
        if (w.cols % heads != 0)
            throw DimensionMismatch("spectrum: columns not divisible by --heads");
        head_dim = w.cols / heads;
    }
    if (heads * head_dim != w.cols)
        throw DimensionMismatch("spectrum: heads * head-dim != weight columns");

    std::vector<std::vector<Vector>> states;  // optional hidden-state rows
    if (!states_path.empty()) {
        const Tensor t = read_tensor(states_path);
        const Matrix xs = t.as_matrix();
        if (xs.cols != w.rows)
            throw DimensionMismatch("spectrum: state width != weight rows");
        states.resize(1);
        for (std::size_t r = 0; r < xs.rows; ++r) {
            Vector x(xs.cols);
            for (std::size_t c = 0; c < xs.cols; ++c) x[c] = xs(r, c);
            states[0].push_back(std::move(x));
        }
    }

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoError("cannot open CSV output " + out_path);
    write_csv_row(out, {"head", "mode_index", "lambda", "cumulative_energy", "c_i"});
    for (std::size_t h = 0; h < heads; ++h) {
        Matrix slice(w.rows, head_dim);
        for (std::size_t r = 0; r < w.rows; ++r)
            for (std::size_t c = 0; c < head_dim; ++c) slice(r, c) = w(r, h * head_dim + c);
        const SpectralProfile p = spectral_profile(slice);

        Vector mean_c(p.lambda.size(), 0.0);
        bool have_c = false;
        if (!states.empty() && states[0].size() >= 2) {
            std::size_t pairs = 0;
            for (std::size_t t = 0; t + 1 < states[0].size(); ++t) {
                const ModeContributions mc =
                    mode_contributions(states[0][t], states[0][t + 1], p);
                for (std::size_t i = 0; i < mean_c.size(); ++i)
                    mean_c[i] += mc.contributions[i];
                ++pairs;
            }
            for (double& v : mean_c) v /= static_cast<double>(pairs);
            have_c = true;
        }

        const double total = std::accumulate(p.lambda.begin(), p.lambda.end(), 0.0);
        double running = 0.0;
        for (std::size_t i = 0; i < p.lambda.size(); ++i) {
            running += p.lambda[i];
            write_csv_row(out, {std::to_string(h), std::to_string(i),
                                format_double(p.lambda[i]),
                                format_double(total > 0.0 ? running / total : 0.0),
                                have_c ? format_double(mean_c[i]) : ""});
        }
    }
    if (!out) throw IoError("CSV write failed for " + out_path);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"KV-cache merge analysis toolkit"};
    app.require_subcommand(1);

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "run the full oracle suite");
    int v_seeds = 20;
    int v_sizes = 0;  // 0 = full grid
    std::string v_mutation = "none";
    verify_cmd->add_option("--seeds", v_seeds, "seeds per check")->check(CLI::PositiveNumber);
    verify_cmd->add_option("--sizes", v_sizes, "limit the (n, d) grid to its first N sizes");
    verify_cmd
        ->add_option("--inject-mutation", v_mutation,
                     "test hook: none | c12-sign-flip | drop-dk-factor | "
                     "swap-weight-numerators")
        ->group("");

    // spectrum
    auto* spectrum_cmd =
        app.add_subcommand("spectrum", "eigen-spectrum of a projection weight file");
    std::string s_weights, s_states, s_out = "spectrum.csv";
    std::size_t s_heads = 1, s_head_dim = 0;
    spectrum_cmd->add_option("--weights", s_weights, "KVSL tensor file with a 2-D matrix")
        ->required();
    spectrum_cmd->add_option("--heads", s_heads,
                             "head count; head h occupies columns [h*D, (h+1)*D)");
    spectrum_cmd->add_option("--head-dim", s_head_dim, "columns per head (default cols/heads)");
    spectrum_cmd->add_option("--states", s_states,
                             "optional KVSL tensor of hidden states (tokens x d_model)");
    spectrum_cmd->add_option("--out", s_out, "CSV output path");

    // simulate / compare
    auto* simulate_cmd = app.add_subcommand("simulate", "chunked decode compression simulator");
    SimFlags sim;
    add_sim_flags(simulate_cmd, sim);
    simulate_cmd->add_option("--algo", sim.algo, "kvslimmer | asymkv | mean | none");

    auto* compare_cmd = app.add_subcommand("compare", "simulate several algorithms, shared seeds");
    SimFlags cmp;
    std::string algos = "mean,asymkv,kvslimmer";
    add_sim_flags(compare_cmd, cmp);
    compare_cmd->add_option("--algos", algos, "comma-separated algorithm list");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (verify_cmd->parsed()) {
            VerifyOptions opts;
            opts.seeds = v_seeds;
            opts.mutation = parse_mutation(v_mutation);
            if (v_sizes > 0) {
                opts.seq_lens.resize(
                    std::min<std::size_t>(opts.seq_lens.size(), static_cast<std::size_t>(v_sizes)));
                opts.dims.resize(
                    std::min<std::size_t>(opts.dims.size(), static_cast<std::size_t>(v_sizes)));
            }
            const auto results = run_verify(opts, std::cout);
            return all_passed(results) ? kExitOk : kExitVerifyFail;
        }
        if (spectrum_cmd->parsed())
            return cmd_spectrum(s_weights, s_heads, s_head_dim, s_states, s_out);
        if (simulate_cmd->parsed()) return cmd_simulate(sim);
        if (compare_cmd->parsed()) return cmd_compare(cmp, algos);
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
