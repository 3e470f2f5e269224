#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "kvslim/attention.hpp"
#include "kvslim/merge.hpp"
#include "kvslim/numerics.hpp"

namespace kvslim {

enum class MergeAlgorithm { kvslimmer, asymkv, mean, none };
enum class PairStrategy { highest_key_similarity, lowest_attention_mass, oldest_first };

struct CacheEntry {
    Vector key;
    Vector value;
    std::uint64_t merged_count = 1;
    std::uint64_t origin_first = 0;
    std::uint64_t origin_last = 0;
};

struct CompressionConfig {
    std::size_t budget = 2048;
    std::size_t chunk_size = 512;
    std::size_t sink_len = 32;
    MergeAlgorithm algorithm = MergeAlgorithm::kvslimmer;
    PairStrategy pair_strategy = PairStrategy::lowest_attention_mass;
    double eps = kMergeEps;

    void validate() const;
};

struct CompressionReport {
    std::vector<std::size_t> pair_first_indices;  // body indices of merged pairs
    std::size_t merges = 0;
    std::size_t fallbacks = 0;
};

struct CacheStats {
    std::size_t length = 0;
    std::uint64_t total_tokens_represented = 0;
    double mean_merged_count = 0.0;
    double fallback_rate = 0.0;
};

/// Per-candidate selection scores for adjacent body pairs (i, i+1).
/// Lower is preferred for every strategy (similarities are negated).
std::vector<double> pair_metrics(const std::vector<CacheEntry>& body, PairStrategy strategy,
                                 const AttentionSnapshot& query_context, std::size_t sink_len);

/// Picks `count` disjoint adjacent pairs by ascending metric, ties to the
/// earlier index. Returns first indices of the pairs, sorted ascending.
std::vector<std::size_t> choose_disjoint_pairs(const std::vector<double>& metrics,
                                               std::size_t count);

std::vector<std::size_t> select_pairs(const std::vector<CacheEntry>& body, std::size_t count,
                                      PairStrategy strategy,
                                      const AttentionSnapshot& query_context,
                                      std::size_t sink_len);

/// Sink + body KV store under a budget with chunk-based pair merging.
class KvCache {
  public:
    explicit KvCache(CompressionConfig config);

    void append(const Vector& key, const Vector& value);

    bool compression_due() const {
        return size() >= config_.budget + config_.chunk_size;
    }

    /// Merges size() - budget disjoint adjacent body pairs (== chunk_size in
    /// the standard decode loop), restoring the length to the budget.
    /// `query_context` must be an attention snapshot over the current
    /// entries (sink then body, in order). `surrogate_grad` feeds the
    /// asymkv gradient baseline; unused by the other algorithms.
    CompressionReport compress_step(const AttentionSnapshot& query_context,
                                    const std::optional<Vector>& surrogate_grad = std::nullopt);

    /// Merges exactly the given body pairs (first indices, disjoint,
    /// ascending). Exposed for the multi-head simulator, where pair indices
    /// are shared across heads.
    CompressionReport apply_pairs(const std::vector<std::size_t>& pair_firsts,
                                  const AttentionSnapshot& query_context,
                                  const std::optional<Vector>& surrogate_grad = std::nullopt);

    CacheStats stats() const;

    std::size_t size() const { return sink_.size() + body_.size(); }
    const std::vector<CacheEntry>& sink() const { return sink_; }
    const std::vector<CacheEntry>& body() const { return body_; }
    const CompressionConfig& config() const { return config_; }

    /// All entries in order (sink then body); keys/values views for
    /// attention over the cache.
    std::vector<Vector> keys() const;
    std::vector<Vector> values() const;

  private:
    CompressionConfig config_;
    std::vector<CacheEntry> sink_;
    std::vector<CacheEntry> body_;
    std::uint64_t next_token_ = 0;
    std::uint64_t total_merges_ = 0;
    std::uint64_t total_fallbacks_ = 0;
};

}  // namespace kvslim
