// SPDX-License-Identifier: Apache-2.0
#include "tabqa/search.hpp"

#include <nlohmann/json.hpp>

#include "tabqa/rng.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <istream>
#include <mutex>
#include <ostream>
#include <thread>

namespace tabqa {

using nlohmann::json;

const char* halt_reason_name(HaltReason reason) {
    switch (reason) {
        case HaltReason::FinalAnswer: return "final_answer";
        case HaltReason::Convergence: return "convergence";
        case HaltReason::StepCap: return "step_cap";
        case HaltReason::Error: return "error";
    }
    return "error";
}

HaltReason halt_reason_from_name(const std::string& name) {
    if (name == "final_answer") return HaltReason::FinalAnswer;
    if (name == "convergence") return HaltReason::Convergence;
    if (name == "step_cap") return HaltReason::StepCap;
    if (name == "error") return HaltReason::Error;
    fail(ErrorCode::ConfigError, "unknown halt reason '" + name + "'");
}

void ConvergenceConfig::validate() const {
    if (window < 2) fail(ErrorCode::ConfigError, "convergence window must be >= 2");
    if (epsilon <= 0.0) fail(ErrorCode::ConfigError, "convergence epsilon must be > 0");
}

void SearchConfig::validate() const {
    if (trajectories < 1) fail(ErrorCode::ConfigError, "trajectories must be >= 1");
    if (attempts < 1) fail(ErrorCode::ConfigError, "attempts must be >= 1");
    if (max_steps < 1) fail(ErrorCode::ConfigError, "max_steps must be >= 1");
    convergence.validate();
    encoding.validate();
}

bool converged(const std::vector<double>& history, const ConvergenceConfig& config) {
    config.validate();
    if (history.size() < std::max(config.window, config.min_steps)) return false;
    const std::size_t w = config.window;
    double mean = 0.0;
    for (std::size_t i = history.size() - w; i < history.size(); ++i) mean += history[i];
    mean /= static_cast<double>(w);
    double variance = 0.0;
    for (std::size_t i = history.size() - w; i < history.size(); ++i) {
        const double d = history[i] - mean;
        variance += d * d;
    }
    variance /= static_cast<double>(w);
    return variance < config.epsilon;
}

namespace {

std::string digest_text(const std::string& text) {
    char buffer[17];
    std::snprintf(buffer, sizeof(buffer), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(text)));
    return buffer;
}

std::string truncate_note(const std::string& text, std::size_t limit = 400) {
    if (text.size() <= limit) return text;
    return text.substr(0, limit) + "...";
}

struct StepCache {
    std::map<std::pair<std::string, std::string>, StepOutcome> entries;
    std::mutex mutex;
    TreeStats* stats = nullptr;
};

StepOutcome cached_apply(const Table& state, const ActionContext& context, const Action& action,
                         StepCache* cache) {
    if (!cache) return apply_action(state, context, action);
    const std::pair<std::string, std::string> key{table_digest(state),
                                                  action_to_json(action).dump()};
    {
        std::lock_guard lock(cache->mutex);
        const auto it = cache->entries.find(key);
        if (it != cache->entries.end()) {
            if (cache->stats) ++cache->stats->cache_hits;
            return it->second;
        }
    }
    StepOutcome outcome = apply_action(state, context, action);
    std::lock_guard lock(cache->mutex);
    cache->entries.emplace(key, outcome);
    if (cache->stats) ++cache->stats->cache_misses;
    return outcome;
}

void finalize_rewards(Trajectory& trajectory, const SearchConfig& config) {
    std::vector<StepReward> series;
    series.reserve(trajectory.tab_rouge_series.size());
    for (const double value : trajectory.tab_rouge_series)
        series.push_back(StepReward::tab_rouge_value(value));
    trajectory.rewards[RewardModelKind::RG] =
        state_trajectory_reward(series, config.discounts, config.mean_normalized);
    trajectory.rewards[RewardModelKind::EQ] = 1.0;

    bool have_logprobs = !trajectory.steps.empty();
    std::vector<std::vector<TokenLogprob>> steps_logprobs;
    for (const auto& step : trajectory.steps) {
        if (!step.token_logprobs) {
            have_logprobs = false;
            break;
        }
        steps_logprobs.push_back(*step.token_logprobs);
    }
    if (have_logprobs) {
        trajectory.rewards[RewardModelKind::AC] =
            chain_confidence_reward(steps_logprobs, config.top_k, config.discounts);
        trajectory.rewards[RewardModelKind::AS] =
            step_confidence_reward(steps_logprobs, config.top_k);
    }
}

using StateObserver = std::function<void(const Table&, double)>;

Trajectory run_one(const Table& start_state, const Table& original, const std::string& question,
                   PolicyBackend& policy, const SearchConfig& config,
                   const std::map<std::string, Table>* aux_tables, StepCache* cache,
                   const StateObserver& on_state) {
    config.validate();
    if (start_state.column_count() == 0)
        fail(ErrorCode::SchemaError, "cannot run a trajectory on a table with no columns");

    Trajectory trajectory;
    Table state = start_state;
    ActionContext context;
    context.original = &original;
    context.aux_tables = aux_tables;

    double prev_reward = tab_rouge(question, state, config.encoding).value;
    std::vector<HistoryEntry> history;
    PolicyFeedback feedback{};
    bool have_feedback = false;

    auto make_request = [&](std::size_t t, bool force_final) {
        PolicyRequest request;
        request.question = question;
        request.observation = observe(state, config.observe_rows);
        request.observation.step_index = t;
        request.history = history;
        if (config.st_feedback && have_feedback) request.feedback = feedback;
        request.force_final = force_final;
        return request;
    };

    auto record_policy_error = [&](std::size_t t, const PolicyRequest& request, const TabError& e) {
        Step step;
        step.index = t;
        step.observation_digest = digest_text(request.observation.to_text());
        step.action = PrintTable{};
        step.report = e.what();
        step.state_digest = table_digest(state);
        step.errored = true;
        trajectory.steps.push_back(std::move(step));
        trajectory.halted_by = HaltReason::Error;
        trajectory.error = e.what();
    };

    // One extra policy call restricted to the final answer, issued after the
    // reward series converges.
    auto forced_final_turn = [&](std::size_t t) {
        const PolicyRequest request = make_request(t, true);
        PolicyResponse response;
        try {
            response = policy.next_action(request);
        } catch (const TabError& e) {
            record_policy_error(t, request, e);
            return;
        }
        Step step;
        step.index = t;
        step.observation_digest = digest_text(request.observation.to_text());
        step.action = response.action;
        step.reasoning = response.reasoning;
        step.state_digest = table_digest(state);
        step.tab_rouge = prev_reward;
        step.token_logprobs = response.token_logprobs;
        if (response.token_logprobs)
            step.confidence = confidence_step_reward(*response.token_logprobs, config.top_k);
        if (const auto* final = std::get_if<FinalAnswer>(&response.action)) {
            trajectory.final_answer = final->answer;
            trajectory.halted_by = HaltReason::Convergence;
        } else {
            step.errored = true;
            step.report = "forced final turn returned " + action_name(response.action);
            trajectory.halted_by = HaltReason::Error;
            trajectory.error = step.report;
        }
        trajectory.steps.push_back(std::move(step));
    };

    for (std::size_t t = 0; t < config.max_steps; ++t) {
        const PolicyRequest request = make_request(t, false);
        PolicyResponse response;
        try {
            response = policy.next_action(request);
        } catch (const TabError& e) {
            record_policy_error(t, request, e);
            finalize_rewards(trajectory, config);
            return trajectory;
        }

        Step step;
        step.index = t;
        step.observation_digest = digest_text(request.observation.to_text());
        step.action = response.action;
        step.reasoning = response.reasoning;
        step.token_logprobs = response.token_logprobs;
        if (response.token_logprobs)
            step.confidence = confidence_step_reward(*response.token_logprobs, config.top_k);

        HistoryEntry entry;
        entry.reasoning = response.reasoning;
        entry.action = response.action;

        StepOutcome outcome;
        bool op_failed = false;
        try {
            outcome = cached_apply(state, context, response.action, cache);
        } catch (const TabError& e) {
            op_failed = true;
            step.errored = true;
            step.report = e.what();
            entry.result_note = e.what();
        }

        if (!op_failed && outcome.kind == StepOutcome::Kind::Terminal) {
            step.state_digest = table_digest(state);
            step.tab_rouge = prev_reward;
            trajectory.steps.push_back(std::move(step));
            trajectory.final_answer = outcome.answer;
            trajectory.halted_by = HaltReason::FinalAnswer;
            finalize_rewards(trajectory, config);
            return trajectory;
        }

        if (!op_failed) {
            if (outcome.kind == StepOutcome::Kind::NewState) {
                state = outcome.table;
            } else {
                step.report = outcome.report;
                entry.result_note = truncate_note(outcome.report);
            }
        }

        // The reward series gets one entry per state-evaluating turn whether
        // or not the state changed; plateaus are what the halting rule needs.
        const double current = tab_rouge(question, state, config.encoding).value;
        step.state_digest = table_digest(state);
        step.tab_rouge = current;
        trajectory.tab_rouge_series.push_back(current);
        if (!op_failed && outcome.kind == StepOutcome::Kind::NewState && on_state)
            on_state(state, current);

        feedback.reward = current;
        feedback.delta = current - prev_reward;
        prev_reward = current;
        have_feedback = true;
        entry.feedback = feedback;

        history.push_back(std::move(entry));
        trajectory.steps.push_back(std::move(step));

        if (config.convergence.enabled && converged(trajectory.tab_rouge_series, config.convergence)) {
            forced_final_turn(t + 1);
            finalize_rewards(trajectory, config);
            return trajectory;
        }
    }
    trajectory.halted_by = HaltReason::StepCap;
    finalize_rewards(trajectory, config);
    return trajectory;
}

} // namespace

Trajectory run_trajectory(const Table& table, const std::string& question, PolicyBackend& policy,
                          const SearchConfig& config,
                          const std::map<std::string, Table>* aux_tables) {
    return run_one(table, table, question, policy, config, aux_tables, nullptr, nullptr);
}

std::vector<Trajectory> run_chain(const Table& table, const std::string& question,
                                  const PolicyFactory& factory, const SearchConfig& config,
                                  const std::map<std::string, Table>* aux_tables) {
    config.validate();
    std::vector<Trajectory> out(config.trajectories);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= config.trajectories) return;
            auto backend = factory(i);
            out[i] = run_one(table, table, question, *backend, config, aux_tables, nullptr,
                             nullptr);
            out[i].index = i;
        }
    };
    const std::size_t threads = std::min<std::size_t>(std::max<std::size_t>(config.workers, 1),
                                                      config.trajectories);
    if (threads <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(work);
        for (auto& thread : pool) thread.join();
    }
    return out;
}

std::vector<Trajectory> run_tree(const Table& table, const std::string& question,
                                 const PolicyFactory& factory, const SearchConfig& config,
                                 const std::map<std::string, Table>* aux_tables,
                                 TreeStats* stats) {
    config.validate();
    struct TreeNode {
        std::string digest;
        Table snapshot;
        double reward = 0.0;
    };
    std::vector<TreeNode> nodes;
    std::map<std::string, std::size_t> by_digest;
    auto insert_node = [&](const Table& snapshot, double reward) {
        const std::string digest = table_digest(snapshot);
        if (by_digest.count(digest)) return;
        by_digest[digest] = nodes.size();
        nodes.push_back({digest, snapshot, reward});
    };
    insert_node(table, tab_rouge(question, table, config.encoding).value);

    StepCache cache;
    cache.stats = stats;
    Rng rng(config.seed);

    // Attempts run sequentially: the branch choice depends on the tree built
    // so far, and ordering must stay deterministic for a fixed seed.
    std::vector<Trajectory> out;
    out.reserve(config.attempts);
    for (std::size_t k = 0; k < config.attempts; ++k) {
        std::size_t start = 0;
        if (rng.uniform01() >= 0.5) {
            for (std::size_t i = 1; i < nodes.size(); ++i) {
                if (nodes[i].reward > nodes[start].reward) start = i;
            }
        }
        auto backend = factory(k);
        Trajectory trajectory = run_one(nodes[start].snapshot, table, question, *backend, config,
                                        aux_tables, &cache, insert_node);
        trajectory.index = k;
        out.push_back(std::move(trajectory));
    }
    if (stats) stats->nodes = nodes.size();
    return out;
}

std::string normalize_answer(const std::string& answer) {
    std::string text = answer;
    auto trim = [&] {
        std::size_t begin = 0, end = text.size();
        while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
        while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
        text = text.substr(begin, end - begin);
    };
    trim();
    for (auto& c : text) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    static const std::string trailing = ".,!?;:%";
    while (!text.empty() && trailing.find(text.back()) != std::string::npos) text.pop_back();
    trim();
    // Whole-string numbers get a canonical rendering, thousands separators
    // removed.
    std::string digits;
    for (const char c : text) {
        if (c != ',') digits += c;
    }
    if (!digits.empty()) {
        double value = 0.0;
        const char* begin = digits.data();
        const char* end = digits.data() + digits.size();
        const auto result = std::from_chars(begin, end, value);
        if (result.ec == std::errc() && result.ptr == end && std::isfinite(value)) {
            if (std::nearbyint(value) == value && std::fabs(value) < 9.0e15)
                return std::to_string(static_cast<std::int64_t>(value));
            return render_double(value);
        }
    }
    return text;
}

Selection select_answer(const std::vector<Trajectory>& trajectories, RewardModelKind kind,
                        bool weighted_vote) {
    std::vector<const Trajectory*> usable;
    for (const auto& trajectory : trajectories) {
        if (trajectory.halted_by == HaltReason::Error) continue;
        if (!trajectory.final_answer) continue;
        usable.push_back(&trajectory);
    }
    if (usable.empty()) fail(ErrorCode::NoAnswerAvailable, "no trajectory produced an answer");

    const bool vote = kind == RewardModelKind::EQ ||
                      (weighted_vote && kind == RewardModelKind::RG);
    if (vote) {
        struct Bucket {
            double weight = 0.0;
            std::size_t first_index = 0;
            std::string answer;
        };
        std::map<std::string, Bucket> buckets;
        for (const auto* trajectory : usable) {
            const std::string key = normalize_answer(*trajectory->final_answer);
            double weight = 1.0;
            if (kind == RewardModelKind::RG && weighted_vote)
                weight = trajectory->rewards.at(RewardModelKind::RG);
            auto [it, fresh] = buckets.try_emplace(key);
            if (fresh) {
                it->second.first_index = trajectory->index;
                it->second.answer = *trajectory->final_answer;
            }
            it->second.weight += weight;
        }
        const Bucket* best = nullptr;
        for (const auto& [key, bucket] : buckets) {
            if (!best || bucket.weight > best->weight ||
                (bucket.weight == best->weight && bucket.first_index < best->first_index))
                best = &bucket;
        }
        return {best->answer, best->first_index};
    }

    const Trajectory* best = nullptr;
    for (const auto* trajectory : usable) {
        const auto it = trajectory->rewards.find(kind);
        if (it == trajectory->rewards.end())
            fail(ErrorCode::ConfidenceUnavailable,
                 std::string(reward_model_kind_name(kind)) +
                     " selection needs token log-probabilities");
        if (!best) {
            best = trajectory;
            continue;
        }
        const double lhs = it->second;
        const double rhs = best->rewards.at(kind);
        if (lhs > rhs ||
            (lhs == rhs && (trajectory->steps.size() < best->steps.size() ||
                            (trajectory->steps.size() == best->steps.size() &&
                             trajectory->index < best->index))))
            best = trajectory;
    }
    return {*best->final_answer, best->index};
}

namespace {

json logprobs_to_json(const std::vector<TokenLogprob>& tokens) {
    json out = json::array();
    for (const auto& token : tokens) {
        json top = json::array();
        for (const auto& [alt, lp] : token.top_k) top.push_back(json::array({alt, lp}));
        out.push_back(json{{"token", token.token}, {"logprob", token.logprob}, {"top", top}});
    }
    return out;
}

std::vector<TokenLogprob> logprobs_from_json(const json& doc) {
    std::vector<TokenLogprob> tokens;
    for (const auto& entry : doc) {
        TokenLogprob token;
        token.token = entry.value("token", "");
        token.logprob = entry.value("logprob", 0.0);
        for (const auto& alt : entry.value("top", json::array()))
            token.top_k.emplace_back(alt[0].get<std::string>(), alt[1].get<double>());
        tokens.push_back(std::move(token));
    }
    return tokens;
}

} // namespace

void write_trajectories_jsonl(std::ostream& out, const std::vector<Trajectory>& trajectories,
                              const std::string& case_id) {
    for (const auto& trajectory : trajectories) {
        json rewards = json::object();
        for (const auto& [kind, value] : trajectory.rewards)
            rewards[reward_model_kind_name(kind)] = value;
        json header{{"type", "trajectory"},
                    {"case_id", case_id},
                    {"index", trajectory.index},
                    {"halted_by", halt_reason_name(trajectory.halted_by)},
                    {"final_answer",
                     trajectory.final_answer ? json(*trajectory.final_answer) : json(nullptr)},
                    {"rewards", rewards},
                    {"tab_rouge_series", trajectory.tab_rouge_series},
                    {"steps", trajectory.steps.size()}};
        if (!trajectory.error.empty()) header["error"] = trajectory.error;
        out << header.dump() << "\n";
        for (const auto& step : trajectory.steps) {
            json record{{"type", "step"},
                        {"case_id", case_id},
                        {"trajectory", trajectory.index},
                        {"t", step.index},
                        {"observation_digest", step.observation_digest},
                        {"state_digest", step.state_digest},
                        {"action", action_to_json(step.action)},
                        {"reasoning", step.reasoning},
                        {"report", step.report},
                        {"tab_rouge", step.tab_rouge ? json(*step.tab_rouge) : json(nullptr)},
                        {"confidence", step.confidence ? json(*step.confidence) : json(nullptr)},
                        {"errored", step.errored}};
            if (step.token_logprobs) record["logprobs"] = logprobs_to_json(*step.token_logprobs);
            out << record.dump() << "\n";
        }
    }
}

std::vector<std::pair<std::string, std::vector<Trajectory>>> read_trajectories_jsonl(
    std::istream& in) {
    std::vector<std::pair<std::string, std::vector<Trajectory>>> cases;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded()) fail(ErrorCode::ParseError, "bad JSONL line: " + line.substr(0, 80));
        const std::string type = doc.value("type", "");
        const std::string case_id = doc.value("case_id", "");
        if (cases.empty() || cases.back().first != case_id) cases.emplace_back(case_id,
                                                                               std::vector<Trajectory>{});
        auto& trajectories = cases.back().second;
        if (type == "trajectory") {
            Trajectory trajectory;
            trajectory.index = doc.value("index", std::size_t{0});
            trajectory.halted_by = halt_reason_from_name(doc.value("halted_by", "error"));
            if (doc.contains("final_answer") && !doc["final_answer"].is_null())
                trajectory.final_answer = doc["final_answer"].get<std::string>();
            for (const auto& [name, value] : doc.value("rewards", json::object()).items())
                trajectory.rewards[reward_model_kind_from_name(name)] = value.get<double>();
            for (const auto& value : doc.value("tab_rouge_series", json::array()))
                trajectory.tab_rouge_series.push_back(value.get<double>());
            trajectory.error = doc.value("error", "");
            trajectories.push_back(std::move(trajectory));
        } else if (type == "step") {
            if (trajectories.empty())
                fail(ErrorCode::ParseError, "step record before trajectory header");
            Step step;
            step.index = doc.value("t", std::size_t{0});
            step.observation_digest = doc.value("observation_digest", "");
            step.state_digest = doc.value("state_digest", "");
            step.action = action_from_json(doc["action"]);
            step.reasoning = doc.value("reasoning", "");
            step.report = doc.value("report", "");
            if (doc.contains("tab_rouge") && !doc["tab_rouge"].is_null())
                step.tab_rouge = doc["tab_rouge"].get<double>();
            if (doc.contains("confidence") && !doc["confidence"].is_null())
                step.confidence = doc["confidence"].get<double>();
            step.errored = doc.value("errored", false);
            if (doc.contains("logprobs")) step.token_logprobs = logprobs_from_json(doc["logprobs"]);
            trajectories.back().steps.push_back(std::move(step));
        }
    }
    return cases;
}

} // namespace tabqa
