#include "kvslim/cache.hpp"

#include <algorithm>
#include <numeric>

namespace kvslim {

void CompressionConfig::validate() const {
    if (budget == 0) throw Error("config: budget must be positive");
    if (chunk_size == 0) throw Error("config: chunk_size must be positive");
    if (sink_len >= budget) throw Error("config: sink_len must be < budget");
}

std::vector<double> pair_metrics(const std::vector<CacheEntry>& body, PairStrategy strategy,
                                 const AttentionSnapshot& query_context, std::size_t sink_len) {
    std::vector<double> metrics;
    if (body.size() < 2) return metrics;
    metrics.resize(body.size() - 1);
    for (std::size_t i = 0; i + 1 < body.size(); ++i) {
        switch (strategy) {
            case PairStrategy::highest_key_similarity:
                metrics[i] = -cosine(body[i].key, body[i + 1].key);
                break;
            case PairStrategy::lowest_attention_mass: {
                const std::size_t g = sink_len + i;
                if (g + 1 >= query_context.n())
                    throw DimensionMismatch("pair_metrics: snapshot shorter than cache");
                metrics[i] = query_context.scores[g] + query_context.scores[g + 1];
                break;
            }
            case PairStrategy::oldest_first:
                metrics[i] = static_cast<double>(i);
                break;
        }
    }
    return metrics;
}

std::vector<std::size_t> choose_disjoint_pairs(const std::vector<double>& metrics,
                                               std::size_t count) {
    std::vector<std::size_t> order(metrics.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return metrics[a] < metrics[b]; });

    std::vector<bool> taken(metrics.size() + 1, false);
    std::vector<std::size_t> picked;
    picked.reserve(count);
    for (std::size_t idx : order) {
        if (picked.size() == count) break;
        if (taken[idx] || taken[idx + 1]) continue;
        taken[idx] = taken[idx + 1] = true;
        picked.push_back(idx);
    }
    // Greedy by metric can fragment the body; top up with any remaining
    // disjoint pairs left-to-right.
    for (std::size_t i = 0; picked.size() < count && i + 1 < taken.size(); ++i) {
        if (!taken[i] && !taken[i + 1]) {
            taken[i] = taken[i + 1] = true;
            picked.push_back(i);
        }
    }
    if (picked.size() < count)
        throw InsufficientPairs("choose_disjoint_pairs: cannot supply requested pair count");
    std::sort(picked.begin(), picked.end());
    return picked;
}

std::vector<std::size_t> select_pairs(const std::vector<CacheEntry>& body, std::size_t count,
                                      PairStrategy strategy,
                                      const AttentionSnapshot& query_context,
                                      std::size_t sink_len) {
    if (body.size() < 2 * count)
        throw InsufficientPairs("select_pairs: body shorter than 2*count");
    return choose_disjoint_pairs(pair_metrics(body, strategy, query_context, sink_len), count);
}

KvCache::KvCache(CompressionConfig config) : config_(config) { config_.validate(); }

void KvCache::append(const Vector& key, const Vector& value) {
    if (!sink_.empty() && (key.size() != sink_.front().key.size() ||
                           value.size() != sink_.front().value.size()))
        throw DimensionMismatch("append: dimensions differ from cache");
    if (sink_.empty() && !body_.empty() && (key.size() != body_.front().key.size() ||
                                            value.size() != body_.front().value.size()))
        throw DimensionMismatch("append: dimensions differ from cache");
    CacheEntry e{key, value, 1, next_token_, next_token_};
    ++next_token_;
    if (sink_.size() < config_.sink_len)
        sink_.push_back(std::move(e));
    else
        body_.push_back(std::move(e));
}

CompressionReport KvCache::compress_step(const AttentionSnapshot& query_context,
                                         const std::optional<Vector>& surrogate_grad) {
    if (config_.algorithm == MergeAlgorithm::none) return CompressionReport{};
    if (size() < config_.budget + config_.chunk_size)
        throw InsufficientLength("compress_step: length below budget + chunk_size");
    const std::size_t count = size() - config_.budget;
    const auto pairs =
        select_pairs(body_, count, config_.pair_strategy, query_context, sink_.size());
    return apply_pairs(pairs, query_context, surrogate_grad);
}

CompressionReport KvCache::apply_pairs(const std::vector<std::size_t>& pair_firsts,
                                       const AttentionSnapshot& query_context,
                                       const std::optional<Vector>& surrogate_grad) {
    CompressionReport report;
    if (config_.algorithm == MergeAlgorithm::none) return report;
    if (query_context.n() != size())
        throw DimensionMismatch("apply_pairs: snapshot length != cache length");

    std::vector<CacheEntry> merged;
    merged.reserve(body_.size() - pair_firsts.size());
    std::size_t next_pair = 0;
    for (std::size_t i = 0; i < body_.size();) {
        if (next_pair < pair_firsts.size() && pair_firsts[next_pair] == i) {
            const CacheEntry& a = body_[i];
            const CacheEntry& b = body_[i + 1];
            const std::size_t g = sink_.size() + i;  // snapshot index of entry a

            Vector key;
            switch (config_.algorithm) {
                case MergeAlgorithm::kvslimmer: {
                    const SensitivityTriple t = sensitivity_vectors(query_context, g);
                    const MergeWeights w = merge_weights_gradient_free(t, config_.eps);
                    if (w.fallback_used) ++report.fallbacks;
                    key = merge_key_closed_form(a.key, b.key, w);
                    break;
                }
                case MergeAlgorithm::asymkv: {
                    if (!surrogate_grad)
                        throw Error("apply_pairs: asymkv needs a surrogate loss gradient");
                    const Vector gm = key_gradient(query_context, *surrogate_grad, g);
                    const Vector gn = key_gradient(query_context, *surrogate_grad, g + 1);
                    key = merge_key_asymkv(a.key, b.key, gm, gn);
                    break;
                }
                case MergeAlgorithm::mean:
                    key = merge_key_mean(a.key, b.key);
                    break;
                case MergeAlgorithm::none:
                    break;
            }

            CacheEntry e;
            e.key = std::move(key);
            e.value = merge_value(a.value, b.value);
            e.merged_count = a.merged_count + b.merged_count;
            e.origin_first = a.origin_first;
            e.origin_last = b.origin_last;
            merged.push_back(std::move(e));
            ++report.merges;
            report.pair_first_indices.push_back(i);
            ++next_pair;
            i += 2;
        } else {
            merged.push_back(std::move(body_[i]));
            ++i;
        }
    }
    body_ = std::move(merged);
    total_merges_ += report.merges;
    total_fallbacks_ += report.fallbacks;
    return report;
}

CacheStats KvCache::stats() const {
    CacheStats st;
    st.length = size();
    for (const auto& e : sink_) st.total_tokens_represented += e.merged_count;
    for (const auto& e : body_) st.total_tokens_represented += e.merged_count;
    st.mean_merged_count =
        st.length == 0 ? 0.0
                       : static_cast<double>(st.total_tokens_represented) /
                             static_cast<double>(st.length);
    st.fallback_rate = total_merges_ == 0 ? 0.0
                                          : static_cast<double>(total_fallbacks_) /
                                                static_cast<double>(total_merges_);
    return st;
}

std::vector<Vector> KvCache::keys() const {
    std::vector<Vector> out;
    out.reserve(size());
    for (const auto& e : sink_) out.push_back(e.key);
    for (const auto& e : body_) out.push_back(e.key);
    return out;
}

std::vector<Vector> KvCache::values() const {
    std::vector<Vector> out;
    out.reserve(size());
    for (const auto& e : sink_) out.push_back(e.value);
    for (const auto& e : body_) out.push_back(e.value);
    return out;
}

}  // namespace kvslim
