// SPDX-License-Identifier: Apache-2.0
#include "tabqa/bench.hpp"

#include "tabqa/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace tabqa {

namespace fs = std::filesystem;
using nlohmann::json;

LoadResult load_cases(const std::string& path) {
    fs::path manifest(path);
    if (fs::is_directory(manifest)) manifest /= "cases.jsonl";
    std::ifstream in(manifest);
    if (!in) fail(ErrorCode::ManifestError, "cannot open manifest '" + manifest.string() + "'");
    const fs::path base = manifest.parent_path();

    LoadResult result;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) {
            result.errors.push_back({"line " + std::to_string(line_no), "unparseable manifest line"});
            continue;
        }
        BenchCase entry;
        entry.id = doc.value("id", "");
        if (entry.id.empty()) entry.id = "case-" + std::to_string(line_no);
        if (!ids.insert(entry.id).second)
            fail(ErrorCode::ManifestError, "duplicate case id '" + entry.id + "'");
        entry.question = doc.value("question", "");
        entry.gold = doc.value("answer", "");
        const std::string table = doc.value("table", "");
        if (table.empty() || entry.question.empty() || entry.gold.empty()) {
            result.errors.push_back({entry.id, "missing table/question/answer field"});
            continue;
        }
        entry.table_path = (base / table).string();
        if (doc.contains("aux_table") && !doc["aux_table"].is_null())
            entry.aux_table_path = (base / doc["aux_table"].get<std::string>()).string();
        if (!fs::exists(entry.table_path)) {
            result.errors.push_back({entry.id, "table file not found: " + entry.table_path});
            continue;
        }
        if (entry.aux_table_path && !fs::exists(*entry.aux_table_path)) {
            result.errors.push_back({entry.id, "aux table not found: " + *entry.aux_table_path});
            continue;
        }
        result.cases.push_back(std::move(entry));
    }
    return result;
}

Table load_case_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::LoadError, "cannot open table '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const bool is_json = fs::path(path).extension() == ".json";
    return infer_types(parse_table(buffer.str(),
                                   is_json ? TableFormat::JsonRecords : TableFormat::Csv, path));
}

int exact_match(const std::string& predicted, const std::string& gold) {
    return normalize_answer(predicted) == normalize_answer(gold) ? 1 : 0;
}

double bleu(const std::string& predicted, const std::string& gold) {
    const TokenSeq candidate = tokenize(predicted);
    const TokenSeq reference = tokenize(gold);
    if (candidate.empty() || reference.empty()) return 0.0;

    double log_sum = 0.0;
    std::size_t orders = 0;
    for (std::size_t n = 1; n <= 4; ++n) {
        if (candidate.size() < n) break;
        const std::size_t total = candidate.size() - n + 1;
        std::map<std::vector<std::string>, std::size_t> ref_counts;
        if (reference.size() >= n) {
            for (std::size_t i = 0; i + n <= reference.size(); ++i) {
                std::vector<std::string> gram(reference.begin() + static_cast<long>(i),
                                              reference.begin() + static_cast<long>(i + n));
                ++ref_counts[gram];
            }
        }
        std::map<std::vector<std::string>, std::size_t> cand_counts;
        for (std::size_t i = 0; i + n <= candidate.size(); ++i) {
            std::vector<std::string> gram(candidate.begin() + static_cast<long>(i),
                                          candidate.begin() + static_cast<long>(i + n));
            ++cand_counts[gram];
        }
        std::size_t matches = 0;
        for (const auto& [gram, count] : cand_counts) {
            const auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) matches += std::min(count, it->second);
        }
        double p = 0.0;
        if (matches == 0)
            p = 1.0 / static_cast<double>(total + 1); // add-one smoothing
        else
            p = static_cast<double>(matches) / static_cast<double>(total);
        log_sum += std::log(p);
        ++orders;
    }
    if (orders == 0) return 0.0;
    double score = std::exp(log_sum / static_cast<double>(orders));
    if (candidate.size() < reference.size())
        score *= std::exp(1.0 - static_cast<double>(reference.size()) /
                                    static_cast<double>(candidate.size()));
    return score;
}

std::vector<DriftPoint> drift_series(const std::vector<std::vector<double>>& series) {
    long long min_offset = 0;
    for (const auto& s : series) {
        if (!s.empty()) min_offset = std::min(min_offset, 1 - static_cast<long long>(s.size()));
    }
    std::vector<DriftPoint> out;
    for (long long offset = min_offset; offset <= 0; ++offset) {
        DriftPoint point;
        point.offset = offset;
        std::vector<double> values;
        for (const auto& s : series) {
            const long long index = static_cast<long long>(s.size()) - 1 + offset;
            if (index >= 0 && index < static_cast<long long>(s.size()))
                values.push_back(s[static_cast<std::size_t>(index)]);
        }
        if (values.empty()) continue;
        double mean = 0.0;
        for (const double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double variance = 0.0;
        for (const double v : values) variance += (v - mean) * (v - mean);
        variance /= static_cast<double>(values.size());
        point.mean = mean;
        point.stddev = std::sqrt(variance);
        point.count = values.size();
        out.push_back(point);
    }
    return out;
}

std::vector<DriftPoint> drift_report(const std::vector<Trajectory>& trajectories) {
    std::vector<std::vector<double>> series;
    for (const auto& trajectory : trajectories) {
        if (!trajectory.tab_rouge_series.empty()) series.push_back(trajectory.tab_rouge_series);
    }
    return drift_series(series);
}

CurveResult convergence_curve(const std::vector<CasePool>& pools, RewardModelKind kind,
                              bool weighted_vote, std::size_t max_chains, double stability,
                              double volatility, std::size_t bootstrap, std::uint64_t seed) {
    if (pools.empty()) fail(ErrorCode::ConfigError, "no case pools");
    for (const auto& pool : pools) {
        if (pool.trajectories.empty()) fail(ErrorCode::ConfigError, "empty trajectory pool");
    }
    CurveResult result;
    result.chains = max_chains;
    Rng rng(seed);
    for (std::size_t n = 1; n <= max_chains; ++n) {
        std::vector<double> accuracies;
        accuracies.reserve(bootstrap);
        for (std::size_t b = 0; b < bootstrap; ++b) {
            std::size_t correct = 0;
            for (const auto& pool : pools) {
                std::vector<Trajectory> sample;
                sample.reserve(n);
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t pick =
                        static_cast<std::size_t>(rng.bounded(pool.trajectories.size()));
                    Trajectory t = pool.trajectories[pick];
                    t.index = i; // stable tie-breaking inside the sample
                    sample.push_back(std::move(t));
                }
                try {
                    const Selection selection = select_answer(sample, kind, weighted_vote);
                    correct += static_cast<std::size_t>(exact_match(selection.answer, pool.gold));
                } catch (const TabError&) {
                    // all error-halted draws: counts as wrong
                }
            }
            accuracies.push_back(static_cast<double>(correct) /
                                 static_cast<double>(pools.size()));
        }
        double mean = 0.0;
        for (const double a : accuracies) mean += a;
        mean /= static_cast<double>(accuracies.size());
        double variance = 0.0;
        for (const double a : accuracies) variance += (a - mean) * (a - mean);
        variance /= static_cast<double>(accuracies.size());
        const double stddev = std::sqrt(variance);
        result.points.push_back({n, mean, stddev});
        if (!result.converged && mean >= stability && stddev < volatility) {
            result.converged = true;
            result.chains = n;
            break;
        }
    }
    return result;
}

const char* size_bucket_name(SizeBucket bucket) {
    switch (bucket) {
        case SizeBucket::S: return "S";
        case SizeBucket::M: return "M";
        case SizeBucket::L: return "L";
    }
    return "S";
}

SizeBucket size_bucket(const Table& table, const EncodingConfig& config) {
    const std::size_t tokens = token_length(table, config);
    if (tokens < 300) return SizeBucket::S;
    if (tokens <= 2000) return SizeBucket::M;
    return SizeBucket::L;
}

double outcome_entropy(const OutcomeCounts& counts) {
    const std::size_t total = counts.correct_exec + counts.exec_incorrect + counts.failure;
    if (total == 0) fail(ErrorCode::ConfigError, "outcome entropy needs at least one outcome");
    double entropy = 0.0;
    for (const std::size_t count : {counts.correct_exec, counts.exec_incorrect, counts.failure}) {
        if (count == 0) continue;
        const double p = static_cast<double>(count) / static_cast<double>(total);
        entropy += p * std::log(p);
    }
    return entropy;
}

double accuracy_std(double p, std::size_t n) {
    if (p < 0.0 || p > 1.0) fail(ErrorCode::ConfigError, "accuracy outside [0,1]");
    if (n < 1) fail(ErrorCode::ConfigError, "sample count must be >= 1");
    return 100.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

namespace {

std::size_t count_response_tokens(const std::vector<Trajectory>& trajectories) {
    std::size_t total = 0;
    for (const auto& trajectory : trajectories) {
        for (const auto& step : trajectory.steps) {
            if (step.token_logprobs) total += step.token_logprobs->size();
        }
    }
    return total;
}

void aggregate_report(RunReport& report) {
    double accuracy = 0.0, bleu_sum = 0.0, rouge_sum = 0.0;
    OutcomeCounts outcomes;
    std::map<std::string, std::pair<std::size_t, std::size_t>> bucket_hits; // count, correct
    for (const auto& result : report.cases) {
        accuracy += result.exact;
        bleu_sum += result.bleu_score;
        rouge_sum += result.rouge_l_f1;
        if (result.failed) {
            ++outcomes.failure;
        } else if (result.exact) {
            ++outcomes.correct_exec;
        } else {
            ++outcomes.exec_incorrect;
        }
        auto& slot = bucket_hits[result.bucket];
        ++slot.first;
        slot.second += static_cast<std::size_t>(result.exact);
    }
    const double n = static_cast<double>(report.cases.size());
    if (!report.cases.empty()) {
        report.accuracy = accuracy / n;
        report.bleu_mean = bleu_sum / n;
        report.rouge_mean = rouge_sum / n;
        report.accuracy_std_pct = accuracy_std(report.accuracy, report.cases.size());
        report.entropy = outcome_entropy(outcomes);
    }
    for (const auto& [bucket, hits] : bucket_hits) {
        report.buckets[bucket] = {hits.first, hits.first == 0
                                                  ? 0.0
                                                  : static_cast<double>(hits.second) /
                                                        static_cast<double>(hits.first)};
    }
}

} // namespace

RunOutput run_cases(const LoadResult& loaded, const SearchConfig& config,
                    const CasePolicyProvider& provider) {
    config.validate();
    RunOutput output;
    output.report.failures = loaded.errors.size();
    for (const auto& error : loaded.errors) {
        CaseResult result;
        result.id = error.id;
        result.failed = true;
        result.error = error.message;
        result.halted_by = "error";
        result.bucket = "S";
        output.report.cases.push_back(std::move(result));
    }

    const std::size_t n = loaded.cases.size();
    std::vector<CaseResult> results(n);
    std::vector<std::vector<Trajectory>> logs(n);

    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            const BenchCase& entry = loaded.cases[i];
            CaseResult result;
            result.id = entry.id;
            result.gold = entry.gold;
            try {
                const Table table = load_case_table(entry.table_path);
                std::map<std::string, Table> aux;
                if (entry.aux_table_path)
                    aux.emplace("aux", load_case_table(*entry.aux_table_path));
                result.initial_table_tokens = token_length(table, config.encoding);
                result.bucket = size_bucket_name(size_bucket(table, config.encoding));

                // Per-case searches stay single-threaded: the worker pool
                // here already provides the parallelism.
                SearchConfig case_config = config;
                case_config.workers = 1;
                const PolicyFactory factory = provider(entry, i);
                std::vector<Trajectory> trajectories =
                    config.mode == SearchMode::Tree
                        ? run_tree(table, entry.question, factory, case_config,
                                   aux.empty() ? nullptr : &aux)
                        : run_chain(table, entry.question, factory, case_config,
                                    aux.empty() ? nullptr : &aux);

                for (const auto& trajectory : trajectories) {
                    result.total_steps += trajectory.steps.size();
                    result.trajectory_rewards.push_back(trajectory.rewards);
                }
                result.response_tokens = count_response_tokens(trajectories);

                const Selection selection =
                    select_answer(trajectories, config.selector, config.weighted_vote);
                result.predicted = selection.answer;
                result.selected_trajectory = selection.trajectory_index;
                for (const auto& trajectory : trajectories) {
                    if (trajectory.index == selection.trajectory_index) {
                        result.halted_by = halt_reason_name(trajectory.halted_by);
                        result.steps = trajectory.steps.size();
                        break;
                    }
                }
                result.exact = exact_match(result.predicted, entry.gold);
                result.bleu_score = bleu(result.predicted, entry.gold);
                result.rouge_l_f1 =
                    rouge_l(tokenize(result.predicted), tokenize(entry.gold)).f1;
                logs[i] = std::move(trajectories);
            } catch (const TabError& e) {
                result.failed = true;
                result.error = e.what();
                result.halted_by = "error";
                if (result.bucket.empty()) result.bucket = "S";
            }
            results[i] = std::move(result);
        }
    };
    const std::size_t threads = std::min<std::size_t>(std::max<std::size_t>(config.workers, 1),
                                                      std::max<std::size_t>(n, 1));
    if (threads <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(work);
        for (auto& thread : pool) thread.join();
    }

    std::vector<std::vector<double>> drift_input;
    for (std::size_t i = 0; i < n; ++i) {
        if (results[i].failed) ++output.report.failures;
        output.report.cases.push_back(std::move(results[i]));
        output.trajectories.emplace_back(loaded.cases[i].id, std::move(logs[i]));
        for (const auto& trajectory : output.trajectories.back().second) {
            if (!trajectory.tab_rouge_series.empty())
                drift_input.push_back(trajectory.tab_rouge_series);
        }
    }
    output.report.drift = drift_series(drift_input);

    // Accuracy under every applicable selector, for the report's main table.
    for (const RewardModelKind kind : {RewardModelKind::EQ, RewardModelKind::AC,
                                       RewardModelKind::AS, RewardModelKind::RG}) {
        std::size_t correct = 0;
        bool available = !output.trajectories.empty();
        for (std::size_t i = 0; i < output.trajectories.size(); ++i) {
            try {
                const Selection selection =
                    select_answer(output.trajectories[i].second, kind, config.weighted_vote);
                correct += static_cast<std::size_t>(
                    exact_match(selection.answer, loaded.cases[i].gold));
            } catch (const TabError& e) {
                if (e.code() == ErrorCode::ConfidenceUnavailable) {
                    available = false;
                    break;
                }
                // NoAnswerAvailable: the case counts as wrong
            }
        }
        if (available)
            output.report.selector_accuracy[reward_model_kind_name(kind)] =
                static_cast<double>(correct) /
                static_cast<double>(std::max<std::size_t>(output.trajectories.size(), 1));
    }

    aggregate_report(output.report);
    return output;
}

namespace {

json report_aggregate_json(const RunReport& report) {
    json buckets = json::object();
    for (const auto& [name, stat] : report.buckets)
        buckets[name] = json{{"count", stat.count}, {"accuracy", stat.accuracy}};
    json drift = json::array();
    for (const auto& point : report.drift)
        drift.push_back(json{{"offset", point.offset},
                             {"mean", point.mean},
                             {"stddev", point.stddev},
                             {"count", point.count}});
    return json{{"type", "aggregate"},
                {"label", report.label},
                {"cases", report.cases.size()},
                {"failures", report.failures},
                {"accuracy", report.accuracy},
                {"accuracy_std_pct", report.accuracy_std_pct},
                {"bleu", report.bleu_mean},
                {"rouge_l", report.rouge_mean},
                {"outcome_entropy", report.entropy},
                {"buckets", buckets},
                {"selector_accuracy", report.selector_accuracy},
                {"drift", drift}};
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (const char c : field) {
        out += c;
        if (c == '"') out += '"';
    }
    out += '"';
    return out;
}

} // namespace

void emit_report(const RunReport& report, ReportFormat format, std::ostream& out) {
    if (format == ReportFormat::Jsonl) {
        for (const auto& result : report.cases) {
            json rewards = json::array();
            for (const auto& per_traj : result.trajectory_rewards) {
                json entry = json::object();
                for (const auto& [kind, value] : per_traj)
                    entry[reward_model_kind_name(kind)] = value;
                rewards.push_back(std::move(entry));
            }
            out << json{{"type", "case"},
                        {"id", result.id},
                        {"predicted", result.predicted},
                        {"gold", result.gold},
                        {"exact", result.exact},
                        {"bleu", result.bleu_score},
                        {"rouge_l", result.rouge_l_f1},
                        {"halted_by", result.halted_by},
                        {"steps", result.steps},
                        {"selected_trajectory", result.selected_trajectory},
                        {"initial_table_tokens", result.initial_table_tokens},
                        {"response_tokens", result.response_tokens},
                        {"total_steps", result.total_steps},
                        {"bucket", result.bucket},
                        {"trajectory_rewards", rewards},
                        {"failed", result.failed},
                        {"error", result.error}}
                       .dump()
                << "\n";
        }
        out << report_aggregate_json(report).dump() << "\n";
        return;
    }
    if (format == ReportFormat::Csv) {
        out << "id,predicted,gold,exact,bleu,rouge_l,halted_by,steps,selected_trajectory,"
               "initial_table_tokens,response_tokens,total_steps,bucket,failed,error\n";
        for (const auto& result : report.cases) {
            out << csv_escape(result.id) << "," << csv_escape(result.predicted) << ","
                << csv_escape(result.gold) << "," << result.exact << ","
                << render_double(result.bleu_score) << "," << render_double(result.rouge_l_f1)
                << "," << result.halted_by << "," << result.steps << ","
                << result.selected_trajectory << "," << result.initial_table_tokens << ","
                << result.response_tokens << "," << result.total_steps << "," << result.bucket
                << "," << (result.failed ? 1 : 0) << "," << csv_escape(result.error) << "\n";
        }
        return;
    }
    // Human: the run as one row, selector kinds as columns.
    out << "== " << report.label << " ==\n";
    out << "cases: " << report.cases.size() << "  failures: " << report.failures << "\n";
    out << "accuracy: " << render_double(report.accuracy * 100.0) << "% (+/- "
        << render_double(report.accuracy_std_pct) << ")  BLEU: "
        << render_double(report.bleu_mean * 100.0) << "  ROUGE-L: "
        << render_double(report.rouge_mean * 100.0) << "\n";
    out << "outcome entropy: " << render_double(report.entropy) << "\n\n";
    out << "config";
    for (const char* kind : {"EQ", "AC", "AS", "RG"}) out << "\t" << kind;
    out << "\n" << report.label;
    for (const char* kind : {"EQ", "AC", "AS", "RG"}) {
        const auto it = report.selector_accuracy.find(kind);
        out << "\t" << (it == report.selector_accuracy.end()
                            ? "-"
                            : render_double(it->second * 100.0));
    }
    out << "\n\nsize buckets:\n";
    for (const auto& [name, stat] : report.buckets)
        out << "  " << name << ": " << stat.count << " cases, accuracy "
            << render_double(stat.accuracy * 100.0) << "%\n";
    if (!report.drift.empty()) {
        out << "\ndrift (offset, mean, std, count):\n";
        for (const auto& point : report.drift)
            out << "  " << point.offset << ", " << render_double(point.mean) << ", "
                << render_double(point.stddev) << ", " << point.count << "\n";
    }
}

RunReport report_from_jsonl(std::istream& in) {
    RunReport report;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded()) fail(ErrorCode::ParseError, "bad report line");
        const std::string type = doc.value("type", "");
        if (type == "case") {
            CaseResult result;
            result.id = doc.value("id", "");
            result.predicted = doc.value("predicted", "");
            result.gold = doc.value("gold", "");
            result.exact = doc.value("exact", 0);
            result.bleu_score = doc.value("bleu", 0.0);
            result.rouge_l_f1 = doc.value("rouge_l", 0.0);
            result.halted_by = doc.value("halted_by", "");
            result.steps = doc.value("steps", std::size_t{0});
            result.selected_trajectory = doc.value("selected_trajectory", std::size_t{0});
            result.initial_table_tokens = doc.value("initial_table_tokens", std::size_t{0});
            result.response_tokens = doc.value("response_tokens", std::size_t{0});
            result.total_steps = doc.value("total_steps", std::size_t{0});
            result.bucket = doc.value("bucket", "S");
            for (const auto& entry : doc.value("trajectory_rewards", json::array())) {
                std::map<RewardModelKind, double> rewards;
                for (const auto& [name, value] : entry.items())
                    rewards[reward_model_kind_from_name(name)] = value.get<double>();
                result.trajectory_rewards.push_back(std::move(rewards));
            }
            result.failed = doc.value("failed", false);
            result.error = doc.value("error", "");
            report.cases.push_back(std::move(result));
        } else if (type == "aggregate") {
            report.label = doc.value("label", "run");
            report.failures = doc.value("failures", std::size_t{0});
            report.accuracy = doc.value("accuracy", 0.0);
            report.accuracy_std_pct = doc.value("accuracy_std_pct", 0.0);
            report.bleu_mean = doc.value("bleu", 0.0);
            report.rouge_mean = doc.value("rouge_l", 0.0);
            report.entropy = doc.value("outcome_entropy", 0.0);
            for (const auto& [name, stat] : doc.value("buckets", json::object()).items())
                report.buckets[name] = {stat.value("count", std::size_t{0}),
                                        stat.value("accuracy", 0.0)};
            for (const auto& [name, value] :
                 doc.value("selector_accuracy", json::object()).items())
                report.selector_accuracy[name] = value.get<double>();
            for (const auto& point : doc.value("drift", json::array()))
                report.drift.push_back({point.value("offset", 0LL), point.value("mean", 0.0),
                                        point.value("stddev", 0.0),
                                        point.value("count", std::size_t{0})});
        }
    }
    return report;
}

} // namespace tabqa
