// SPDX-License-Identifier: Apache-2.0
#include "tabqa/bench.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace tabqa;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::LoadError, "cannot open '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

Table load_table_arg(const std::string& path, const std::string& format) {
    const bool json_format =
        format == "json" || (format.empty() && fs::path(path).extension() == ".json");
    Table raw = parse_table(slurp(path), json_format ? TableFormat::JsonRecords : TableFormat::Csv,
                            path);
    return infer_types(raw);
}

struct EncodingFlags {
    std::string relation = "is";
    std::string separator = ",";
    std::string row_delimiter = "\n";

    EncodingConfig to_config() const {
        EncodingConfig config;
        config.relation_token = relation;
        config.pair_separator = separator;
        config.row_delimiter = row_delimiter;
        return config;
    }
};

void add_encoding_flags(CLI::App* cmd, EncodingFlags& flags) {
    cmd->add_option("--relation", flags.relation, "relation token (default 'is')");
    cmd->add_option("--separator", flags.separator, "pair separator token (default ',')");
    cmd->add_option("--row-delimiter", flags.row_delimiter, "row delimiter (default newline)");
}

ReportFormat parse_format(const std::string& name) {
    if (name == "jsonl") return ReportFormat::Jsonl;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "human") return ReportFormat::Human;
    fail(ErrorCode::ConfigError, "unknown report format '" + name + "'");
}

std::map<std::string, std::vector<Script>> load_case_scripts(const std::string& path) {
    nlohmann::json doc = nlohmann::json::parse(slurp(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        fail(ErrorCode::ConfigError, "scripts file must be a JSON object");
    const nlohmann::json& cases = doc.contains("cases") ? doc["cases"] : doc;
    std::map<std::string, std::vector<Script>> out;
    for (const auto& [id, entry] : cases.items()) out[id] = scripts_from_json(entry);
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"reward-guided tabular question answering"};
    app.require_subcommand(1);

    // encode
    auto* encode_cmd = app.add_subcommand("encode", "print the textual encoding of a table");
    std::string table_path, table_format;
    EncodingFlags encoding_flags;
    encode_cmd->add_option("--table", table_path, "table file (.csv or .json)")->required();
    encode_cmd->add_option("--format", table_format, "csv|json (default: by extension)");
    add_encoding_flags(encode_cmd, encoding_flags);

    // reward
    auto* reward_cmd = app.add_subcommand("reward", "score a table against a query");
    std::string query;
    reward_cmd->add_option("--table", table_path, "table file")->required();
    reward_cmd->add_option("--query", query, "natural-language query")->required();
    reward_cmd->add_option("--format", table_format, "csv|json (default: by extension)");
    add_encoding_flags(reward_cmd, encoding_flags);

    // run
    auto* run_cmd = app.add_subcommand("run", "run a case manifest end to end");
    std::string manifest_path, out_dir = ".", backend = "http", backend_config_path, scripts_path;
    std::string mode = "chain", selector = "RG", report_format = "human", label = "run";
    SearchConfig search;
    double gamma = 1.0;
    bool no_convergence = false, no_feedback = false, weighted_vote = false, mean_norm = false;
    run_cmd->add_option("--manifest", manifest_path, "JSONL case manifest")->required();
    run_cmd->add_option("--out", out_dir, "output directory (default .)");
    run_cmd->add_option("--mode", mode, "chain|tree");
    run_cmd->add_option("--trajectories", search.trajectories, "chain iterations per question");
    run_cmd->add_option("--attempts", search.attempts, "tree attempts per question");
    run_cmd->add_option("--max-steps", search.max_steps, "step cap per trajectory");
    run_cmd->add_option("--window", search.convergence.window, "convergence window");
    run_cmd->add_option("--epsilon", search.convergence.epsilon, "convergence threshold");
    run_cmd->add_option("--min-steps", search.convergence.min_steps,
                        "rewards required before convergence checks");
    run_cmd->add_flag("--no-convergence", no_convergence, "disable convergence halting");
    run_cmd->add_flag("--no-feedback", no_feedback, "disable reward feedback prompts");
    run_cmd->add_option("--selector", selector, "EQ|AC|AS|RG");
    run_cmd->add_flag("--weighted-vote", weighted_vote, "reward-weighted vote instead of argmax");
    run_cmd->add_option("--gamma", gamma, "uniform discount factor (default 1)");
    run_cmd->add_flag("--mean-normalized", mean_norm, "mean-normalize the state reward");
    run_cmd->add_option("--top-k", search.top_k, "top-k for confidence rewards");
    run_cmd->add_option("--observe-rows", search.observe_rows, "rows per observation");
    run_cmd->add_option("--seed", search.seed, "search seed");
    run_cmd->add_option("--workers", search.workers, "concurrent case workers");
    run_cmd->add_option("--backend", backend, "http|scripted");
    run_cmd->add_option("--config", backend_config_path, "backend config JSON");
    run_cmd->add_option("--scripts", scripts_path, "scripted backend responses JSON");
    run_cmd->add_option("--report-format", report_format, "jsonl|csv|human (stdout rendering)");
    run_cmd->add_option("--label", label, "run label in reports");
    add_encoding_flags(run_cmd, encoding_flags);

    // select
    auto* select_cmd = app.add_subcommand("select", "pick answers from trajectory logs");
    std::string logs_path, kind_name = "RG";
    select_cmd->add_option("--logs", logs_path, "trajectories.jsonl")->required();
    select_cmd->add_option("--kind", kind_name, "EQ|AC|AS|RG");
    select_cmd->add_flag("--weighted-vote", weighted_vote, "reward-weighted vote");

    // drift
    auto* drift_cmd = app.add_subcommand("drift", "end-aligned reward drift series");
    drift_cmd->add_option("--logs", logs_path, "trajectories.jsonl")->required();

    // curve
    auto* curve_cmd = app.add_subcommand("curve", "chains-to-convergence under a selector");
    std::size_t max_chains = 25, bootstrap = 200;
    double stability = 0.95, volatility = 0.05;
    std::uint64_t curve_seed = 17;
    curve_cmd->add_option("--logs", logs_path, "trajectories.jsonl")->required();
    curve_cmd->add_option("--manifest", manifest_path, "manifest with gold answers")->required();
    curve_cmd->add_option("--kind", kind_name, "EQ|AC|AS|RG");
    curve_cmd->add_flag("--weighted-vote", weighted_vote, "reward-weighted vote");
    curve_cmd->add_option("--max-chains", max_chains, "largest sample count");
    curve_cmd->add_option("--stability", stability, "accuracy target (default 0.95)");
    curve_cmd->add_option("--volatility", volatility, "std cap (default 0.05)");
    curve_cmd->add_option("--bootstrap", bootstrap, "bootstrap resamples");
    curve_cmd->add_option("--seed", curve_seed, "bootstrap seed");

    // report
    auto* report_cmd = app.add_subcommand("report", "re-render a report.jsonl");
    std::string report_in, report_out_format = "human";
    report_cmd->add_option("--in", report_in, "report.jsonl")->required();
    report_cmd->add_option("--format", report_out_format, "csv|human|jsonl");

    CLI11_PARSE(app, argc, argv);

    try {
        if (encode_cmd->parsed()) {
            const Table table = load_table_arg(table_path, table_format);
            std::cout << encode(table, encoding_flags.to_config()) << "\n";
            return 0;
        }
        if (reward_cmd->parsed()) {
            const Table table = load_table_arg(table_path, table_format);
            std::cout << render_double(tab_rouge(query, table, encoding_flags.to_config()).value)
                      << "\n";
            return 0;
        }
        if (run_cmd->parsed()) {
            search.mode = mode == "tree" ? SearchMode::Tree : SearchMode::Chain;
            search.selector = reward_model_kind_from_name(selector);
            search.weighted_vote = weighted_vote;
            search.st_feedback = !no_feedback;
            search.convergence.enabled = !no_convergence;
            search.discounts = DiscountSchedule::uniform(gamma);
            search.mean_normalized = mean_norm;
            search.encoding = encoding_flags.to_config();
            search.validate();

            const LoadResult loaded = load_cases(manifest_path);
            CasePolicyProvider provider;
            if (backend == "scripted") {
                if (scripts_path.empty())
                    fail(ErrorCode::ConfigError, "--scripts is required for the scripted backend");
                auto scripts = std::make_shared<std::map<std::string, std::vector<Script>>>(
                    load_case_scripts(scripts_path));
                provider = [scripts](const BenchCase& entry, std::size_t) -> PolicyFactory {
                    const auto it = scripts->find(entry.id);
                    if (it == scripts->end())
                        fail(ErrorCode::ConfigError, "no scripts for case '" + entry.id + "'");
                    return scripted_factory(it->second);
                };
            } else if (backend == "http") {
                if (backend_config_path.empty())
                    fail(ErrorCode::ConfigError, "--config is required for the http backend");
                const BackendConfig config = BackendConfig::from_file(backend_config_path);
                provider = [config](const BenchCase&, std::size_t) -> PolicyFactory {
                    return http_factory(config);
                };
            } else {
                fail(ErrorCode::ConfigError, "unknown backend '" + backend + "'");
            }

            RunOutput output = run_cases(loaded, search, provider);
            output.report.label = label;

            fs::create_directories(out_dir);
            {
                std::ofstream trajectories_out(fs::path(out_dir) / "trajectories.jsonl");
                for (const auto& [case_id, trajectories] : output.trajectories)
                    write_trajectories_jsonl(trajectories_out, trajectories, case_id);
            }
            {
                std::ofstream report_out(fs::path(out_dir) / "report.jsonl");
                emit_report(output.report, ReportFormat::Jsonl, report_out);
            }
            emit_report(output.report, parse_format(report_format), std::cout);
            return output.report.failures > 0 ? 2 : 0;
        }
        if (select_cmd->parsed()) {
            std::ifstream in(logs_path);
            if (!in) fail(ErrorCode::LoadError, "cannot open '" + logs_path + "'");
            const auto cases = read_trajectories_jsonl(in);
            const RewardModelKind kind = reward_model_kind_from_name(kind_name);
            for (const auto& [case_id, trajectories] : cases) {
                const Selection selection = select_answer(trajectories, kind, weighted_vote);
                std::cout << case_id << "\t" << selection.answer << "\t(trajectory "
                          << selection.trajectory_index << ")\n";
            }
            return 0;
        }
        if (drift_cmd->parsed()) {
            std::ifstream in(logs_path);
            if (!in) fail(ErrorCode::LoadError, "cannot open '" + logs_path + "'");
            std::vector<Trajectory> all;
            for (auto& [case_id, trajectories] : read_trajectories_jsonl(in))
                for (auto& trajectory : trajectories) all.push_back(std::move(trajectory));
            std::cout << "offset,mean,std,count\n";
            for (const auto& point : drift_report(all))
                std::cout << point.offset << "," << render_double(point.mean) << ","
                          << render_double(point.stddev) << "," << point.count << "\n";
            return 0;
        }
        if (curve_cmd->parsed()) {
            std::ifstream in(logs_path);
            if (!in) fail(ErrorCode::LoadError, "cannot open '" + logs_path + "'");
            const auto cases = read_trajectories_jsonl(in);
            const LoadResult loaded = load_cases(manifest_path);
            std::map<std::string, std::string> golds;
            for (const auto& entry : loaded.cases) golds[entry.id] = entry.gold;
            std::vector<CasePool> pools;
            for (const auto& [case_id, trajectories] : cases) {
                const auto it = golds.find(case_id);
                if (it == golds.end()) continue;
                pools.push_back({trajectories, it->second});
            }
            const CurveResult curve =
                convergence_curve(pools, reward_model_kind_from_name(kind_name), weighted_vote,
                                  max_chains, stability, volatility, bootstrap, curve_seed);
            std::cout << "chains,mean_accuracy,std\n";
            for (const auto& point : curve.points)
                std::cout << point.chains << "," << render_double(point.mean) << ","
                          << render_double(point.stddev) << "\n";
            if (curve.converged)
                std::cout << "converged_at," << curve.chains << "\n";
            else
                std::cout << "not_converged," << curve.chains << "\n";
            return 0;
        }
        if (report_cmd->parsed()) {
            std::ifstream in(report_in);
            if (!in) fail(ErrorCode::LoadError, "cannot open '" + report_in + "'");
            const RunReport report = report_from_jsonl(in);
            emit_report(report, parse_format(report_out_format), std::cout);
            return 0;
        }
    } catch (const TabError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
