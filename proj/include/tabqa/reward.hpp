// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabqa/table.hpp"

#include <algorithm>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tabqa {

/// Lowercased word tokens; punctuation at chunk boundaries becomes
/// standalone tokens, interior punctuation stays attached ("12.5", "1,200").
using TokenSeq = std::vector<std::string>;

struct TokenizeOptions {
    bool filter_stopwords = false;
};

TokenSeq tokenize(const std::string& text);
TokenSeq tokenize(const std::string& text, const TokenizeOptions& options);

/// Longest-common-subsequence DP, O(|a|*|b|) time, rolling O(min) memory.
/// Generic over the token type; the string overload below is the public
/// entry point and tests drive the same template at narrow token types.
template <typename T>
std::size_t lcs_length_span(std::span<const T> a, std::span<const T> b) {
    if (a.size() > b.size()) {
        const auto tmp = a;
        a = b;
        b = tmp;
    }
    if (a.empty()) return 0;
    std::size_t stack_row[64];
    std::vector<std::size_t> heap_row;
    std::size_t* row = stack_row;
    if (a.size() + 1 > 64) {
        heap_row.assign(a.size() + 1, 0);
        row = heap_row.data();
    } else {
        std::fill(row, row + a.size() + 1, std::size_t{0});
    }
    for (std::size_t j = 0; j < b.size(); ++j) {
        const T& bj = b[j];
        std::size_t diag = 0;
        std::size_t left = 0;
        for (std::size_t i = 1; i <= a.size(); ++i) {
            const std::size_t above = row[i];
            const std::size_t value = a[i - 1] == bj ? diag + 1 : (left > above ? left : above);
            row[i] = value;
            left = value;
            diag = above;
        }
    }
    return row[a.size()];
}

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b);

struct RougeScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

RougeScores rouge_l(const TokenSeq& candidate, const TokenSeq& reference);

enum class StepRewardKind { TabRouge, Confidence };

/// Scalar step reward: TabRouge values live in [0,1]; confidence values are
/// sums of log-probabilities and never positive.
struct StepReward {
    double value = 0.0;
    StepRewardKind kind = StepRewardKind::TabRouge;

    static StepReward tab_rouge_value(double value);
    static StepReward confidence_value(double value);
};

/// LCS(query tokens, encoding tokens) / |encoding tokens|; 0 for the empty
/// table.
StepReward tab_rouge(const std::string& query, const Table& table,
                     const EncodingConfig& config = {});

/// Per-step discount weights; defaults to all ones.
class DiscountSchedule {
  public:
    DiscountSchedule() = default;

    static DiscountSchedule uniform(double gamma);
    static DiscountSchedule per_step(std::vector<double> gammas);

    /// Weight for step `index` of `total`. Explicit schedules must match the
    /// series length exactly.
    double at(std::size_t index, std::size_t total) const;

  private:
    double scalar_ = 1.0;
    std::vector<double> gammas_;
    bool explicit_list_ = false;
};

/// Sum of discounted TabRouge step rewards; the flag-gated mean variant
/// divides by the step count.
double state_trajectory_reward(const std::vector<StepReward>& rewards,
                               const DiscountSchedule& discounts = {},
                               bool mean_normalized = false);

/// One generated token with its own log-probability and the top-k
/// alternatives (sorted by log-probability, descending).
struct TokenLogprob {
    std::string token;
    double logprob = 0.0;
    std::vector<std::pair<std::string, double>> top_k;
};

/// Sum over positions of the mean of the top-k candidate log-probabilities;
/// positions carrying fewer than k alternatives are padded with the token's
/// own log-probability.
double confidence_step_reward(const std::vector<TokenLogprob>& tokens, std::size_t k);

/// Chain-level aggregation: all steps concatenated into one sequence, with
/// per-position discounts over the concatenation.
double chain_confidence_reward(const std::vector<std::vector<TokenLogprob>>& steps, std::size_t k,
                               const DiscountSchedule& discounts = {});

/// Step-level aggregation: per-step confidence summed without discounts.
double step_confidence_reward(const std::vector<std::vector<TokenLogprob>>& steps, std::size_t k);

/// Answer selectors: equal-weight vote, chain confidence, stepwise
/// confidence, state reward.
enum class RewardModelKind { EQ, AC, AS, RG };

const char* reward_model_kind_name(RewardModelKind kind);
RewardModelKind reward_model_kind_from_name(const std::string& name);

} // namespace tabqa
