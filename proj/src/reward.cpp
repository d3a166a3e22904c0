// SPDX-License-Identifier: Apache-2.0
#include "tabqa/reward.hpp"

#include <cctype>
#include <set>

namespace tabqa {

namespace {

bool is_boundary_punct(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

const std::set<std::string>& stopwords() {
    static const std::set<std::string> words = {
        "a", "an", "the", "is", "are", "was", "were", "of", "to",
        "in", "on", "at", "and", "or", "for", "with", "by",
    };
    return words;
}

} // namespace

TokenSeq tokenize(const std::string& text, const TokenizeOptions& options) {
    TokenSeq tokens;
    auto emit = [&](std::string token) {
        if (token.empty()) return;
        if (options.filter_stopwords && stopwords().count(token)) return;
        tokens.push_back(std::move(token));
    };
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t begin = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (begin == i) continue;
        std::string chunk = text.substr(begin, i - begin);
        for (auto& c : chunk) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        std::size_t lo = 0, hi = chunk.size();
        while (lo < hi && is_boundary_punct(chunk[lo])) {
            emit(std::string(1, chunk[lo]));
            ++lo;
        }
        std::vector<char> trailing;
        while (hi > lo && is_boundary_punct(chunk[hi - 1])) {
            trailing.push_back(chunk[hi - 1]);
            --hi;
        }
        if (lo < hi) emit(chunk.substr(lo, hi - lo));
        for (auto it = trailing.rbegin(); it != trailing.rend(); ++it) emit(std::string(1, *it));
    }
    return tokens;
}

TokenSeq tokenize(const std::string& text) { return tokenize(text, TokenizeOptions{}); }

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
    return lcs_length_span(std::span<const std::string>(a), std::span<const std::string>(b));
}

RougeScores rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
    RougeScores scores;
    if (candidate.empty() || reference.empty()) return scores;
    const double lcs = static_cast<double>(lcs_length(candidate, reference));
    scores.precision = lcs / static_cast<double>(candidate.size());
    scores.recall = lcs / static_cast<double>(reference.size());
    if (scores.precision + scores.recall > 0)
        scores.f1 = 2.0 * scores.precision * scores.recall / (scores.precision + scores.recall);
    return scores;
}

StepReward StepReward::tab_rouge_value(double value) {
    if (value < 0.0 || value > 1.0)
        fail(ErrorCode::TypeMismatch, "tab_rouge reward outside [0,1]");
    return {value, StepRewardKind::TabRouge};
}

StepReward StepReward::confidence_value(double value) {
    if (value > 0.0) fail(ErrorCode::TypeMismatch, "confidence reward must be <= 0");
    return {value, StepRewardKind::Confidence};
}

StepReward tab_rouge(const std::string& query, const Table& table, const EncodingConfig& config) {
    const TokenSeq table_tokens = tokenize(encode(table, config));
    if (table_tokens.empty()) return StepReward::tab_rouge_value(0.0);
    const TokenSeq query_tokens = tokenize(query);
    const double lcs = static_cast<double>(lcs_length(query_tokens, table_tokens));
    return StepReward::tab_rouge_value(lcs / static_cast<double>(table_tokens.size()));
}

DiscountSchedule DiscountSchedule::uniform(double gamma) {
    if (gamma < 0.0 || gamma > 1.0) fail(ErrorCode::ConfigError, "discount outside [0,1]");
    DiscountSchedule schedule;
    schedule.scalar_ = gamma;
    return schedule;
}

DiscountSchedule DiscountSchedule::per_step(std::vector<double> gammas) {
    for (const double g : gammas) {
        if (g < 0.0 || g > 1.0) fail(ErrorCode::ConfigError, "discount outside [0,1]");
    }
    DiscountSchedule schedule;
    schedule.gammas_ = std::move(gammas);
    schedule.explicit_list_ = true;
    return schedule;
}

double DiscountSchedule::at(std::size_t index, std::size_t total) const {
    if (!explicit_list_) return scalar_;
    if (gammas_.size() != total)
        fail(ErrorCode::LengthMismatch, "discount schedule has " + std::to_string(gammas_.size()) +
                                            " entries for " + std::to_string(total) + " rewards");
    return gammas_[index];
}

double state_trajectory_reward(const std::vector<StepReward>& rewards,
                               const DiscountSchedule& discounts, bool mean_normalized) {
    double sum = 0.0;
    for (std::size_t l = 0; l < rewards.size(); ++l) {
        if (rewards[l].kind != StepRewardKind::TabRouge)
            fail(ErrorCode::TypeMismatch, "state trajectory reward needs TabRouge step rewards");
        sum += discounts.at(l, rewards.size()) * rewards[l].value;
    }
    if (mean_normalized && !rewards.empty()) sum /= static_cast<double>(rewards.size());
    return sum;
}

namespace {

double position_confidence(const TokenLogprob& token, std::size_t k) {
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        if (j < token.top_k.size()) sum += token.top_k[j].second;
        else sum += token.logprob;
    }
    return sum / static_cast<double>(k);
}

} // namespace

double confidence_step_reward(const std::vector<TokenLogprob>& tokens, std::size_t k) {
    if (k < 1) fail(ErrorCode::ConfigError, "top-k must be >= 1");
    double sum = 0.0;
    for (const auto& token : tokens) sum += position_confidence(token, k);
    return sum;
}

double chain_confidence_reward(const std::vector<std::vector<TokenLogprob>>& steps, std::size_t k,
                               const DiscountSchedule& discounts) {
    if (k < 1) fail(ErrorCode::ConfigError, "top-k must be >= 1");
    std::size_t total = 0;
    for (const auto& step : steps) total += step.size();
    double sum = 0.0;
    std::size_t position = 0;
    for (const auto& step : steps) {
        for (const auto& token : step) {
            sum += discounts.at(position, total) * position_confidence(token, k);
            ++position;
        }
    }
    return sum;
}

double step_confidence_reward(const std::vector<std::vector<TokenLogprob>>& steps, std::size_t k) {
    double sum = 0.0;
    for (const auto& step : steps) sum += confidence_step_reward(step, k);
    return sum;
}

const char* reward_model_kind_name(RewardModelKind kind) {
    switch (kind) {
        case RewardModelKind::EQ: return "EQ";
        case RewardModelKind::AC: return "AC";
        case RewardModelKind::AS: return "AS";
        case RewardModelKind::RG: return "RG";
    }
    return "EQ";
}

RewardModelKind reward_model_kind_from_name(const std::string& name) {
    if (name == "EQ" || name == "eq") return RewardModelKind::EQ;
    if (name == "AC" || name == "ac") return RewardModelKind::AC;
    if (name == "AS" || name == "as") return RewardModelKind::AS;
    if (name == "RG" || name == "rg") return RewardModelKind::RG;
    fail(ErrorCode::ConfigError, "unknown reward model '" + name + "'");
}

} // namespace tabqa
