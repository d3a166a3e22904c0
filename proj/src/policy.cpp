// SPDX-License-Identifier: Apache-2.0
#include "tabqa/policy.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace tabqa {

using nlohmann::json;

namespace {

std::string trim_copy(const std::string& text) {
    std::size_t begin = 0, end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    return text.substr(begin, end - begin);
}

std::string signed_number(double value) {
    const std::string text = render_double(value);
    if (value >= 0.0) return "+" + text;
    return text;
}

} // namespace

std::string render_prompt(const PolicyRequest& request) {
    std::ostringstream out;
    out << "Task. Answer the following question about the loaded table: " << request.question
        << "\n\n";
    out << "Environment. The table is loaded as the current state. There are "
        << request.tools.size() << " tools available:\n";
    for (const auto& tool : request.tools) out << "  " << tool.dump() << "\n";
    out << "\nInstruction. Follow your reasoning steps, then provide a clear final answer. Reply "
           "with brief reasoning followed by exactly one tool call as a JSON object "
           "{\"tool\": \"<name>\", \"args\": {...}}.\n";
    out << "\nPre-processing (before reasoning).\n"
           "1. If a name/entity mentioned in the question is not found in the table, make "
           "sensible inferences to map the entity to the table. Assume an answer always "
           "exists.\n"
           "2. If the table contains unit symbols (e.g., $) or commas as thousand separators, "
           "use f_string_operation to clean the data and parse values into numbers before "
           "further computation.\n";
    out << "\nTips (use if necessary).\n"
           "- Some columns may contain only a single group/category.\n"
           "- The toolset computes time differences in days.\n"
           "- The question may contain typos; interpret it so that at least one valid answer "
           "exists.\n"
           "- If the question does not specify alphabetical or chronological ordering, preserve "
           "the original row order of the table.\n"
           "- For NA-indicating symbols (e.g., -, \"N/A\", \"unknown\", \"null\"): convert them "
           "to nulls with f_string_operation (to_na), then handle them with f_handle_missing.\n"
           "- If the table seems cleared or unavailable, use f_retrieve_original to restore the "
           "original table.\n";
    out << "\nCurrent observation (step " << request.observation.step_index << "):\n"
        << request.observation.to_text();
    if (!request.history.empty()) {
        out << "\nHistory:\n";
        for (std::size_t i = 0; i < request.history.size(); ++i) {
            const auto& entry = request.history[i];
            out << "[" << i + 1 << "] action: " << action_to_json(entry.action).dump();
            if (!entry.reasoning.empty()) out << " | reasoning: " << entry.reasoning;
            if (!entry.result_note.empty()) out << " | result: " << entry.result_note;
            if (entry.feedback)
                out << " | reward: " << render_double(entry.feedback->reward) << " (change: "
                    << signed_number(entry.feedback->delta) << ")";
            out << "\n";
        }
    }
    if (request.feedback) {
        out << "\nReward after your last action: " << render_double(request.feedback->reward)
            << " (change: " << signed_number(request.feedback->delta) << ")\n";
    }
    if (request.force_final) {
        out << "\nProduce your final answer now with a single f_final_answer call.\n";
    }
    return out.str();
}

namespace {

// Finds the first balanced {...} block that parses as a tool call.
// Returns the byte range so callers can split off the reasoning prefix.
bool find_action_json(const std::string& raw, std::size_t& begin, std::size_t& end, json& parsed) {
    for (std::size_t start = raw.find('{'); start != std::string::npos;
         start = raw.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        for (std::size_t i = start; i < raw.size(); ++i) {
            const char c = raw[i];
            if (in_string) {
                if (c == '\\') ++i;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}') {
                --depth;
                if (depth == 0) {
                    const std::string candidate = raw.substr(start, i - start + 1);
                    json doc = json::parse(candidate, nullptr, false);
                    if (!doc.is_discarded() && doc.is_object() && doc.contains("tool")) {
                        begin = start;
                        end = i + 1;
                        parsed = std::move(doc);
                        return true;
                    }
                    break;
                }
            }
        }
    }
    return false;
}

} // namespace

Action parse_action(const std::string& raw) {
    std::size_t begin = 0, end = 0;
    json doc;
    if (!find_action_json(raw, begin, end, doc))
        fail(ErrorCode::NoActionFound, "no tool-call JSON object in response: " +
                                           raw.substr(0, std::min<std::size_t>(raw.size(), 160)));
    return action_from_json(doc);
}

PolicyResponse ScriptedPolicy::next_action(const PolicyRequest& request) {
    prompts_.push_back(render_prompt(request));
    if (request.force_final && script_.forced_answer) {
        PolicyResponse response;
        response.action = FinalAnswer{*script_.forced_answer};
        response.raw = action_to_json(response.action).dump();
        if (script_.supports_logprobs) response.token_logprobs = std::vector<TokenLogprob>{};
        return response;
    }
    if (position_ >= script_.turns.size())
        fail(ErrorCode::PolicyError, "script exhausted at turn " + std::to_string(position_));
    const ScriptedTurn& turn = script_.turns[position_++];
    PolicyResponse response;
    response.raw = turn.raw;
    std::size_t begin = 0, end = 0;
    json doc;
    if (!find_action_json(turn.raw, begin, end, doc))
        fail(ErrorCode::NoActionFound, "no tool-call JSON object in response: " + turn.raw);
    response.action = action_from_json(doc);
    response.reasoning = trim_copy(turn.raw.substr(0, begin));
    if (script_.supports_logprobs) response.token_logprobs = turn.logprobs;
    return response;
}

BackendConfig BackendConfig::from_json(const json& doc) {
    BackendConfig config;
    if (!doc.is_object()) fail(ErrorCode::ConfigError, "backend config must be an object");
    auto read_string = [&](const char* key, std::string& out, bool required) {
        if (doc.contains(key)) out = doc[key].get<std::string>();
        else if (required) fail(ErrorCode::ConfigError, std::string("missing key '") + key + "'");
    };
    read_string("endpoint", config.endpoint, true);
    read_string("model", config.model, true);
    read_string("api_key_env", config.api_key_env, false);
    if (doc.contains("temperature")) config.temperature = doc["temperature"].get<double>();
    if (doc.contains("top_logprobs")) config.top_logprobs = doc["top_logprobs"].get<int>();
    if (doc.contains("timeout_s")) config.timeout_s = doc["timeout_s"].get<int>();
    if (doc.contains("max_retries")) config.max_retries = doc["max_retries"].get<int>();
    if (doc.contains("backoff_base_s")) config.backoff_base_s = doc["backoff_base_s"].get<double>();
    if (doc.contains("max_concurrent")) config.max_concurrent = doc["max_concurrent"].get<int>();
    if (config.top_logprobs < 1) fail(ErrorCode::ConfigError, "top_logprobs must be >= 1");
    return config;
}

BackendConfig BackendConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::ConfigError, "cannot open backend config '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("backend config: ") + e.what());
    }
    return from_json(doc);
}

/// Caps the number of in-flight HTTP requests across all sessions.
class HttpLimiter {
  public:
    explicit HttpLimiter(int max_concurrent) : available_(max_concurrent) {}

    void acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return available_ > 0; });
        --available_;
    }

    void release() {
        {
            std::lock_guard lock(mutex_);
            ++available_;
        }
        cv_.notify_one();
    }

  private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int available_;
};

namespace {

struct EndpointParts {
    std::string base; // scheme://host:port
    std::string path;
};

EndpointParts split_endpoint(const std::string& endpoint) {
    const std::size_t scheme = endpoint.find("://");
    if (scheme == std::string::npos)
        fail(ErrorCode::ConfigError, "endpoint must include a scheme: " + endpoint);
    const std::size_t path_start = endpoint.find('/', scheme + 3);
    EndpointParts parts;
    if (path_start == std::string::npos) {
        parts.base = endpoint;
        parts.path = "/";
    } else {
        parts.base = endpoint.substr(0, path_start);
        parts.path = endpoint.substr(path_start);
    }
    return parts;
}

std::vector<TokenLogprob> parse_logprobs(const json& content) {
    std::vector<TokenLogprob> tokens;
    for (const auto& entry : content) {
        TokenLogprob token;
        token.token = entry.value("token", "");
        token.logprob = entry.value("logprob", 0.0);
        if (entry.contains("top_logprobs")) {
            for (const auto& alt : entry["top_logprobs"])
                token.top_k.emplace_back(alt.value("token", ""), alt.value("logprob", 0.0));
            std::stable_sort(token.top_k.begin(), token.top_k.end(),
                             [](const auto& a, const auto& b) { return a.second > b.second; });
        }
        tokens.push_back(std::move(token));
    }
    return tokens;
}

} // namespace

HttpPolicy::HttpPolicy(BackendConfig config, std::shared_ptr<HttpLimiter> limiter)
    : config_(std::move(config)), limiter_(std::move(limiter)) {
    if (!limiter_) limiter_ = std::make_shared<HttpLimiter>(config_.max_concurrent);
}

HttpPolicy::~HttpPolicy() = default;

PolicyResponse HttpPolicy::next_action(const PolicyRequest& request) {
    const EndpointParts endpoint = split_endpoint(config_.endpoint);
    httplib::Client client(endpoint.base);
    client.set_connection_timeout(config_.timeout_s, 0);
    client.set_read_timeout(config_.timeout_s, 0);
    client.set_write_timeout(config_.timeout_s, 0);

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    json body{{"model", config_.model},
              {"messages", json::array({json{{"role", "user"}, {"content", render_prompt(request)}}})},
              {"temperature", config_.temperature},
              {"logprobs", true},
              {"top_logprobs", config_.top_logprobs}};
    const std::string payload = body.dump();

    std::string failure = "unreachable";
    bool timed_out = false;
    bool rate_limited = false;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            const double delay = config_.backoff_base_s * static_cast<double>(1 << (attempt - 1));
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
        limiter_->acquire();
        httplib::Result result = client.Post(endpoint.path, headers, payload, "application/json");
        limiter_->release();
        if (!result) {
            timed_out = result.error() == httplib::Error::Read ||
                        result.error() == httplib::Error::ConnectionTimeout;
            failure = httplib::to_string(result.error());
            continue;
        }
        if (result->status == 429 || result->status >= 500) {
            rate_limited = result->status == 429;
            failure = "HTTP " + std::to_string(result->status);
            continue;
        }
        if (result->status != 200)
            fail(ErrorCode::PolicyError, "HTTP " + std::to_string(result->status) + ": " +
                                             result->body.substr(0, 200));
        json doc = json::parse(result->body, nullptr, false);
        if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty())
            fail(ErrorCode::PolicyError, "malformed completion response");
        const json& choice = doc["choices"][0];
        PolicyResponse response;
        response.raw = choice["message"].value("content", "");
        std::size_t begin = 0, end = 0;
        json action_doc;
        if (!find_action_json(response.raw, begin, end, action_doc))
            fail(ErrorCode::NoActionFound,
                 "no tool-call JSON object in response: " + response.raw.substr(0, 160));
        response.action = action_from_json(action_doc);
        response.reasoning = trim_copy(response.raw.substr(0, begin));
        if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
            choice["logprobs"].contains("content"))
            response.token_logprobs = parse_logprobs(choice["logprobs"]["content"]);
        return response;
    }
    if (rate_limited) fail(ErrorCode::RateLimited, "retry budget exhausted: " + failure);
    if (timed_out) fail(ErrorCode::BackendTimeout, "retry budget exhausted: " + failure);
    fail(ErrorCode::PolicyError, "retry budget exhausted: " + failure);
}

PolicyFactory scripted_factory(std::vector<Script> scripts) {
    auto shared = std::make_shared<std::vector<Script>>(std::move(scripts));
    return [shared](std::size_t index) -> std::unique_ptr<PolicyBackend> {
        if (shared->empty()) fail(ErrorCode::ConfigError, "no scripts configured");
        return std::make_unique<ScriptedPolicy>((*shared)[index % shared->size()]);
    };
}

PolicyFactory http_factory(const BackendConfig& config) {
    auto limiter = std::make_shared<HttpLimiter>(config.max_concurrent);
    return [config, limiter](std::size_t) -> std::unique_ptr<PolicyBackend> {
        return std::make_unique<HttpPolicy>(config, limiter);
    };
}

std::vector<Script> scripts_from_json(const json& doc) {
    std::vector<Script> scripts;
    const json& list = doc.is_object() && doc.contains("trajectories") ? doc["trajectories"] : doc;
    if (!list.is_array()) fail(ErrorCode::ConfigError, "expected an array of trajectory scripts");
    for (const auto& entry : list) {
        Script script;
        if (entry.contains("forced_answer") && !entry["forced_answer"].is_null())
            script.forced_answer = entry["forced_answer"].get<std::string>();
        if (entry.contains("supports_logprobs"))
            script.supports_logprobs = entry["supports_logprobs"].get<bool>();
        for (const auto& turn_doc : entry.value("turns", json::array())) {
            ScriptedTurn turn;
            if (turn_doc.is_string()) {
                turn.raw = turn_doc.get<std::string>();
            } else {
                turn.raw = turn_doc.value("raw", "");
                for (const auto& lp : turn_doc.value("logprobs", json::array())) {
                    TokenLogprob token;
                    token.token = lp.value("token", "");
                    token.logprob = lp.value("logprob", 0.0);
                    for (const auto& alt : lp.value("top", json::array()))
                        token.top_k.emplace_back(alt[0].get<std::string>(), alt[1].get<double>());
                    turn.logprobs.push_back(std::move(token));
                }
            }
            script.turns.push_back(std::move(turn));
        }
        scripts.push_back(std::move(script));
    }
    return scripts;
}

nlohmann::json scripts_to_json(const std::vector<Script>& scripts) {
    json list = json::array();
    for (const auto& script : scripts) {
        json entry = json::object();
        if (script.forced_answer) entry["forced_answer"] = *script.forced_answer;
        entry["supports_logprobs"] = script.supports_logprobs;
        json turns = json::array();
        for (const auto& turn : script.turns) {
            json turn_doc = json::object();
            turn_doc["raw"] = turn.raw;
            json logprobs = json::array();
            for (const auto& token : turn.logprobs) {
                json top = json::array();
                for (const auto& [alt, lp] : token.top_k) top.push_back(json::array({alt, lp}));
                logprobs.push_back(
                    json{{"token", token.token}, {"logprob", token.logprob}, {"top", top}});
            }
            turn_doc["logprobs"] = logprobs;
            turns.push_back(std::move(turn_doc));
        }
        entry["turns"] = std::move(turns);
        list.push_back(std::move(entry));
    }
    return json{{"trajectories", list}};
}

} // namespace tabqa
