#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>

#include <httplib.h>

#include "rwb/core.hpp"
#include "rwb/reward.hpp"

namespace rwb {

/// FNV-1a over the normalized prompt; keys cassette entries and fixtures.
inline std::uint64_t prompt_hash(std::string_view prompt) {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : prompt) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

/// Minimal chat-completion interface. Implementations throw BackendError on
/// failure; the caller skips the round.
class ChatClient {
  public:
    virtual ~ChatClient() = default;
    virtual std::string complete(const std::string& prompt) = 0;
    virtual std::string kind() const = 0;
};

/// Deterministic offline client: answers from a fixture table keyed by the
/// normalized prompt, otherwise a canned fallback string.
class MockClient final : public ChatClient {
  public:
    explicit MockClient(std::string fallback = "unknown") : fallback_(std::move(fallback)) {}

    void add_fixture(std::string_view prompt, std::string completion) {
        fixtures_[normalize_text(prompt)] = std::move(completion);
    }

    /// Fixture file: JSONL rows {"prompt": ..., "completion": ...}.
    void load_fixtures(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open fixture file: " + path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            Json j;
            try {
                j = Json::parse(line);
            } catch (const std::exception& e) {
                throw ParseError("fixture parse_error at line " + std::to_string(line_no) + ": " +
                                 e.what());
            }
            add_fixture(j.at("prompt").get<std::string>(), j.at("completion").get<std::string>());
        }
    }

    std::string complete(const std::string& prompt) override {
        const auto it = fixtures_.find(normalize_text(prompt));
        return it != fixtures_.end() ? it->second : fallback_;
    }

    std::string kind() const override { return "mock"; }

  private:
    std::unordered_map<std::string, std::string> fixtures_;
    std::string fallback_;
};

/// Replays a cassette recorded earlier; never touches the network. A miss is
/// a BackendError, not a fabricated answer.
class RecordedClient final : public ChatClient {
  public:
    explicit RecordedClient(const std::string& cassette_path) {
        std::ifstream in(cassette_path);
        if (!in) throw ValidationError("cannot open cassette: " + cassette_path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            Json j;
            try {
                j = Json::parse(line);
            } catch (const std::exception& e) {
                throw ParseError("cassette parse_error at line " + std::to_string(line_no) + ": " +
                                 e.what());
            }
            entries_[j.at("prompt_hash").get<std::uint64_t>()] =
                j.at("completion").get<std::string>();
        }
    }

    std::string complete(const std::string& prompt) override {
        const auto it = entries_.find(prompt_hash(normalize_text(prompt)));
        if (it == entries_.end())
            throw BackendError("backend_unavailable: cassette miss for prompt");
        return it->second;
    }

    std::string kind() const override { return "recorded"; }

  private:
    std::unordered_map<std::uint64_t, std::string> entries_;
};

/// Appends (prompt_hash, prompt, completion) rows in the cassette format.
class CassetteWriter {
  public:
    explicit CassetteWriter(const std::string& path) : out_(path, std::ios::app) {
        if (!out_) throw ValidationError("cannot open cassette for writing: " + path);
    }

    void record(std::string_view prompt, std::string_view completion) {
        Json j{{"prompt_hash", prompt_hash(normalize_text(prompt))},
               {"prompt", std::string(prompt)},
               {"completion", std::string(completion)}};
        out_ << j.dump() << '\n';
        out_.flush();
    }

  private:
    std::ofstream out_;
};

struct LiveClientOptions {
    std::string base_url = "http://localhost:8000";
    std::string model = "gpt-4o-2024-08-06";
    double temperature = 0.0;
    int timeout_seconds = 60;
    int max_retries = 3;
    std::string api_key_env = "RWB_API_KEY";
    bool offline = false;  // set by --offline: any network attempt hard-fails
};

/// Chat-completion endpoint client with exponential-backoff retries.
/// Credentials come from the environment and never appear in logs or errors.
class LiveClient final : public ChatClient {
  public:
    explicit LiveClient(LiveClientOptions options) : opt_(std::move(options)) {
        if (opt_.offline)
            throw ValidationError("offline mode: live client is disabled");
        const char* key = std::getenv(opt_.api_key_env.c_str());
        api_key_ = key ? key : "";
    }

    std::string complete(const std::string& prompt) override {
        const Json body{{"model", opt_.model},
                        {"temperature", opt_.temperature},
                        {"messages", Json::array({Json{{"role", "user"}, {"content", prompt}}})}};
        std::string last_error = "no attempts made";
        for (int attempt = 0; attempt <= opt_.max_retries; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(std::chrono::milliseconds(250 * (1 << (attempt - 1))));
            try {
                std::lock_guard<std::mutex> lock(mutex_);
                httplib::Client cli(opt_.base_url);
                cli.set_read_timeout(opt_.timeout_seconds, 0);
                cli.set_connection_timeout(opt_.timeout_seconds, 0);
                httplib::Headers headers;
                if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
                const auto res =
                    cli.Post("/v1/chat/completions", headers, body.dump(), "application/json");
                if (!res) {
                    last_error = "transport failure";
                    continue;
                }
                if (res->status != 200) {
                    last_error = "http status " + std::to_string(res->status);
                    continue;
                }
                const Json j = Json::parse(res->body);
                return j.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const std::exception& e) {
                last_error = e.what();
            }
        }
        throw BackendError("backend_unavailable: " + last_error);
    }

    std::string kind() const override { return "live"; }

  private:
    LiveClientOptions opt_;
    std::string api_key_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Client-backed judge

inline std::string judge_prompt(std::string_view question, std::string_view system_answer,
                                std::string_view reference_answer) {
    std::string p = "You are grading answer consistency.\n";
    p += "Question: ";
    p += question;
    p += "\nReference answer: ";
    p += reference_answer;
    p += "\nSystem answer: ";
    p += system_answer;
    p += "\nIs the system answer consistent with the reference answer? Reply YES or NO.";
    return p;
}

/// Judge backed by any ChatClient (recorded cassette or live endpoint);
/// parses a leading yes/no from the completion.
class ClientJudge final : public Judge {
  public:
    explicit ClientJudge(ChatClient& client) : client_(client) {}

    int consistent(std::string_view question, std::string_view system_answer,
                   std::string_view reference_answer) override {
        const std::string reply =
            client_.complete(judge_prompt(question, system_answer, reference_answer));
        const std::string norm = normalize_text(reply);
        if (norm.rfind("yes", 0) == 0) return 1;
        if (norm.rfind("no", 0) == 0) return 0;
        throw BackendError("backend_unavailable: judge reply not parseable");
    }

  private:
    ChatClient& client_;
};

}  // namespace rwb
