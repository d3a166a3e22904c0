// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabqa/ops.hpp"
#include "tabqa/policy.hpp"
#include "tabqa/reward.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tabqa {

struct Step {
    std::size_t index = 0;
    std::string observation_digest;
    Action action;
    std::string reasoning;
    std::string report; // report text, or the error fed back to the policy
    std::string state_digest;
    std::optional<double> tab_rouge;
    std::optional<double> confidence;
    std::optional<std::vector<TokenLogprob>> token_logprobs;
    bool errored = false;
};

enum class HaltReason { FinalAnswer, Convergence, StepCap, Error };

const char* halt_reason_name(HaltReason reason);
HaltReason halt_reason_from_name(const std::string& name);

struct Trajectory {
    std::size_t index = 0;
    std::vector<Step> steps;
    std::optional<std::string> final_answer;
    HaltReason halted_by = HaltReason::Error;
    std::vector<double> tab_rouge_series; // one entry per state-evaluating turn
    std::map<RewardModelKind, double> rewards;
    std::string error;
};

/// Rolling-variance halting: true once at least max(window, min_steps)
/// rewards exist and the population variance of the last `window` values is
/// below epsilon.
struct ConvergenceConfig {
    std::size_t window = 5;
    double epsilon = 0.005;
    std::size_t min_steps = 5; // no verdict before this many rewards
    bool enabled = true;

    void validate() const;
};

bool converged(const std::vector<double>& history, const ConvergenceConfig& config);

enum class SearchMode { Chain, Tree };

struct SearchConfig {
    SearchMode mode = SearchMode::Chain;
    std::size_t trajectories = 10; // chain iterations per question
    std::size_t attempts = 20;     // tree attempts per question
    std::size_t max_steps = 25;
    bool st_feedback = true;
    DiscountSchedule discounts;
    bool mean_normalized = false;
    RewardModelKind selector = RewardModelKind::RG;
    bool weighted_vote = false;
    std::size_t top_k = 5;
    std::size_t observe_rows = 5;
    EncodingConfig encoding;
    ConvergenceConfig convergence;
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    void validate() const;
};

Trajectory run_trajectory(const Table& table, const std::string& question, PolicyBackend& policy,
                          const SearchConfig& config,
                          const std::map<std::string, Table>* aux_tables = nullptr);

/// I independent trajectories from the initial table, each with a fresh
/// policy session; trajectories may execute on worker threads but results
/// are ordered by index.
std::vector<Trajectory> run_chain(const Table& table, const std::string& question,
                                  const PolicyFactory& factory, const SearchConfig& config,
                                  const std::map<std::string, Table>* aux_tables = nullptr);

struct TreeStats {
    std::size_t nodes = 0;
    std::size_t cache_hits = 0;
    std::size_t cache_misses = 0;
};

/// K attempts sharing a snapshot tree keyed by state digest. Each attempt
/// branches from the root (probability 0.5) or from the highest-reward
/// node seen so far; duplicate (state digest, action) pairs reuse the cached
/// outcome instead of re-executing.
std::vector<Trajectory> run_tree(const Table& table, const std::string& question,
                                 const PolicyFactory& factory, const SearchConfig& config,
                                 const std::map<std::string, Table>* aux_tables = nullptr,
                                 TreeStats* stats = nullptr);

/// Lowercase, trim, strip trailing punctuation, canonicalize numbers
/// ("1,200" -> "1200").
std::string normalize_answer(const std::string& answer);

struct Selection {
    std::string answer;
    std::size_t trajectory_index = 0;
};

/// EQ: majority vote over normalized answers (ties: earliest trajectory).
/// AC/AS/RG: argmax of the trajectory reward (ties: fewer steps, then
/// earliest). Error-halted trajectories are excluded. The flag-gated
/// weighted vote weighs each answer by R(tau) for RG and 1 for EQ.
Selection select_answer(const std::vector<Trajectory>& trajectories, RewardModelKind kind,
                        bool weighted_vote = false);

/// JSON Lines log: one trajectory header record followed by one record per
/// step; digests are 64-bit hex of the canonical encoding.
void write_trajectories_jsonl(std::ostream& out, const std::vector<Trajectory>& trajectories,
                              const std::string& case_id);
std::vector<std::pair<std::string, std::vector<Trajectory>>> read_trajectories_jsonl(
    std::istream& in);

} // namespace tabqa
