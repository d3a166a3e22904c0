// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabqa/action.hpp"
#include "tabqa/reward.hpp"
#include "tabqa/table.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tabqa {

struct PolicyFeedback {
    double reward = 0.0;
    double delta = 0.0;
};

struct HistoryEntry {
    std::string reasoning;
    Action action;
    std::string result_note; // report text or error fed back to the policy
    std::optional<PolicyFeedback> feedback;
};

/// Everything the policy sees for one turn. History length equals the
/// current step index; the prompt is a pure function of this struct.
struct PolicyRequest {
    std::string question;
    Observation observation;
    nlohmann::json tools = tool_schemas();
    std::vector<HistoryEntry> history;
    std::optional<PolicyFeedback> feedback;
    bool force_final = false;
};

struct PolicyResponse {
    std::string reasoning;
    Action action;
    std::optional<std::vector<TokenLogprob>> token_logprobs;
    std::string raw;
};

/// Chat-completions backend settings; the config file carries exactly these
/// keys.
struct BackendConfig {
    std::string endpoint;
    std::string model;
    std::string api_key_env;
    double temperature = 0.7;
    int top_logprobs = 5;
    int timeout_s = 60;
    int max_retries = 3;
    double backoff_base_s = 1.0;
    int max_concurrent = 4;

    static BackendConfig from_json(const nlohmann::json& doc);
    static BackendConfig from_file(const std::string& path);
};

/// Renders the agent prompt: task line, tool environment, pre-processing
/// rules, tips, serialized observation, history, and the reward-feedback
/// line when present.
std::string render_prompt(const PolicyRequest& request);

/// Extracts the first {"tool": ..., "args": ...} JSON object from free text
/// (fenced or bare) and validates it against the action schema.
Action parse_action(const std::string& raw);

class PolicyBackend {
  public:
    virtual ~PolicyBackend() = default;
    virtual PolicyResponse next_action(const PolicyRequest& request) = 0;
};

/// One trajectory's canned responses; `forced_answer` serves the
/// produce-final-answer turn issued after convergence.
struct ScriptedTurn {
    std::string raw;
    std::vector<TokenLogprob> logprobs;
};

struct Script {
    std::vector<ScriptedTurn> turns;
    std::optional<std::string> forced_answer;
    bool supports_logprobs = true;
};

class ScriptedPolicy : public PolicyBackend {
  public:
    explicit ScriptedPolicy(Script script) : script_(std::move(script)) {}

    PolicyResponse next_action(const PolicyRequest& request) override;

    const std::vector<std::string>& prompts() const { return prompts_; }

  private:
    Script script_;
    std::size_t position_ = 0;
    std::vector<std::string> prompts_;
};

class HttpLimiter;

/// OpenAI-compatible chat backend with logprobs, exponential-backoff retries
/// on transient failures, and a global in-flight request cap shared across
/// sessions.
class HttpPolicy : public PolicyBackend {
  public:
    explicit HttpPolicy(BackendConfig config, std::shared_ptr<HttpLimiter> limiter = nullptr);
    ~HttpPolicy() override;

    PolicyResponse next_action(const PolicyRequest& request) override;

  private:
    BackendConfig config_;
    std::shared_ptr<HttpLimiter> limiter_;
};

/// One backend instance (session) per trajectory index.
using PolicyFactory = std::function<std::unique_ptr<PolicyBackend>(std::size_t)>;

PolicyFactory scripted_factory(std::vector<Script> scripts);
PolicyFactory http_factory(const BackendConfig& config);

/// Scripts serialized as JSON: {"trajectories": [{"turns": [...],
/// "forced_answer": ...}]}, used by the CLI's scripted backend.
std::vector<Script> scripts_from_json(const nlohmann::json& doc);
nlohmann::json scripts_to_json(const std::vector<Script>& scripts);

} // namespace tabqa
