// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabqa/search.hpp"

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tabqa {

struct BenchCase {
    std::string id;
    std::string table_path;
    std::optional<std::string> aux_table_path;
    std::string question;
    std::string gold;
};

struct CaseLoadError {
    std::string id;
    std::string message;
};

struct LoadResult {
    std::vector<BenchCase> cases;
    std::vector<CaseLoadError> errors;
};

/// Loads a JSON Lines manifest with fields {id, table, question, answer,
/// aux_table?}; `path` may also be a directory containing cases.jsonl.
/// Table paths resolve relative to the manifest. Per-case failures are
/// collected, duplicate ids raise ManifestError.
LoadResult load_cases(const std::string& path);

/// Loads, type-infers, and returns the table behind a case.
Table load_case_table(const std::string& path);

/// 1 iff the normalized answers match.
int exact_match(const std::string& predicted, const std::string& gold);

/// Sentence BLEU up to 4-grams: add-one smoothing on zero n-gram counts,
/// orders longer than the candidate dropped, standard brevity penalty.
double bleu(const std::string& predicted, const std::string& gold);

struct DriftPoint {
    long long offset = 0; // t - S, so the final step sits at 0
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t count = 0;
};

/// Aligns all reward series to their ending points and reports per-offset
/// mean/std across trajectories.
std::vector<DriftPoint> drift_report(const std::vector<Trajectory>& trajectories);
std::vector<DriftPoint> drift_series(const std::vector<std::vector<double>>& series);

struct CasePool {
    std::vector<Trajectory> trajectories;
    std::string gold;
};

struct CurvedPoint {
    std::size_t chains = 0;
    double mean = 0.0;
    double stddev = 0.0;
};

struct CurveResult {
    bool converged = false;
    std::size_t chains = 0; // smallest sample count meeting both thresholds
    std::vector<CurvedPoint> points;
};

/// Bootstrap accuracy of a selector as the per-case sample count grows;
/// converged at the smallest count with mean accuracy >= stability and
/// std < volatility.
CurveResult convergence_curve(const std::vector<CasePool>& pools, RewardModelKind kind,
                              bool weighted_vote, std::size_t max_chains,
                              double stability = 0.95, double volatility = 0.05,
                              std::size_t bootstrap = 200, std::uint64_t seed = 17);

enum class SizeBucket { S, M, L };

const char* size_bucket_name(SizeBucket bucket);

/// Token-count buckets: <300 small, 300-2000 medium, >2000 large.
SizeBucket size_bucket(const Table& table, const EncodingConfig& config = {});

struct OutcomeCounts {
    std::size_t correct_exec = 0;
    std::size_t exec_incorrect = 0;
    std::size_t failure = 0;
};

/// Sum of p*ln(p) over non-empty categories; 0 for a degenerate
/// distribution, more negative for more mixed outcomes.
double outcome_entropy(const OutcomeCounts& counts);

/// Binomial accuracy standard deviation in percent: 100*sqrt(p(1-p)/n).
double accuracy_std(double p, std::size_t n);

struct BucketStat {
    std::size_t count = 0;
    double accuracy = 0.0;
};

struct CaseResult {
    std::string id;
    std::string predicted;
    std::string gold;
    int exact = 0;
    double bleu_score = 0.0;
    double rouge_l_f1 = 0.0;
    std::string halted_by;
    std::size_t steps = 0; // of the selected trajectory
    std::size_t selected_trajectory = 0;
    std::size_t initial_table_tokens = 0;
    std::size_t response_tokens = 0;
    std::size_t total_steps = 0; // across all trajectories
    std::string bucket;
    std::vector<std::map<RewardModelKind, double>> trajectory_rewards;
    bool failed = false;
    std::string error;
};

struct RunReport {
    std::string label = "run";
    std::vector<CaseResult> cases;
    std::size_t failures = 0;
    double accuracy = 0.0;
    double accuracy_std_pct = 0.0;
    double bleu_mean = 0.0;
    double rouge_mean = 0.0;
    double entropy = 0.0;
    std::map<std::string, BucketStat> buckets;
    std::map<std::string, double> selector_accuracy; // per selector kind
    std::vector<DriftPoint> drift;
};

struct RunOutput {
    RunReport report;
    std::vector<std::pair<std::string, std::vector<Trajectory>>> trajectories;
};

/// Per-case policy factory: scripted runs hand each case its own scripts,
/// HTTP runs reuse one backend config.
using CasePolicyProvider = std::function<PolicyFactory(const BenchCase&, std::size_t)>;

/// Runs every loaded case through chain or tree search, selects answers,
/// and assembles the aggregate report. Cases run concurrently up to
/// config.workers; results are ordered by case position.
RunOutput run_cases(const LoadResult& loaded, const SearchConfig& config,
                    const CasePolicyProvider& provider);

enum class ReportFormat { Jsonl, Csv, Human };

void emit_report(const RunReport& report, ReportFormat format, std::ostream& out);
RunReport report_from_jsonl(std::istream& in);

} // namespace tabqa
