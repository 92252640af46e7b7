#pragma once

#include <atomic>
#include <functional>
#include <string>
#include <thread>

#include "dgslow/corpus.hpp"
#include "dgslow/victim.hpp"
#include "httplib.h"
#include "json.hpp"

namespace dgslow::testing {

using nlohmann::json;

inline json rows(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    out.push_back(std::move(r));
  }
  return out;
}

// In-process stand-in for the bridge, answering from a local victim.
class FakeBridge {
 public:
  std::string version = "1";
  std::atomic<int> busy_replies{0};  // answer this many requests with 503 first
  std::atomic<int> fail_after{-1};   // once this many model requests were served, answer 503 forever
  std::atomic<int> requests{0};
  std::function<void(const std::string&, json&)> tamper;  // edits a reply before it is sent

  explicit FakeBridge(const VictimModel& victim) : victim_(victim) {
    server_.Get("/meta", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(json{{"protocol_version", version}, {"model_name", "fake"}, {"vocab_size", 10},
                           {"embed_dim", 4}}.dump(),
                      "application/json");
    });
    for (const char* route : {"/generate", "/score", "/gradients"})
      server_.Post(route, [this, route](const httplib::Request& req, httplib::Response& res) {
        handle(route, req, res);
      });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeBridge() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  void handle(const std::string& route, const httplib::Request& req, httplib::Response& res) {
    const int served = requests++;
    if (fail_after >= 0 && served >= fail_after) {
      res.status = 503;
      return;
    }
    if (busy_replies > 0) {
      --busy_replies;
      res.status = 503;
      return;
    }
    json body;
    try {
      body = json::parse(req.body);
    } catch (...) {
      res.status = 400;
      return;
    }
    if (!body.contains("utterance")) {
      res.status = 400;
      res.set_content(R"({"error":"missing utterance"})", "application/json");
      return;
    }
    DialogueInstance inst;
    inst.persona = body.value("persona", std::vector<std::string>{});
    inst.history = body.value("history", std::vector<std::string>{});
    inst.utterance = body["utterance"];
    const TokenizedSentence utt{body["utterance_tokens"].get<std::vector<std::string>>(), inst.utterance};
    json reply;
    if (route == "/generate") {
      const auto g = victim_.generate(inst, utt);
      json steps = json::array();
      for (const auto& s : g.step_stats) steps.push_back({{"eos_logit", s.eos_logit}, {"expected_logit", s.expected_logit}});
      reply = {{"tokens", g.tokens}, {"text", detokenize(g.tokens)}, {"steps_logit_summary", steps},
               {"ended_by_eos", g.ended_by_eos}};
    } else {
      const TokenizedSentence ref{body["reference_tokens"].get<std::vector<std::string>>(), body["reference"]};
      if (route == "/score") {
        reply = {{"token_probs", victim_.score_reference(inst, utt, ref).token_probs}};
      } else {
        const StopLossParams p{body["beta"], body["eps"], body["rho"]};
        const auto g = victim_.gradients(inst, utt, ref, p);
        reply = {{"g_ll", rows(g.g_ll)}, {"g_stop", rows(g.g_stop)},
                 {"utterance_span", {g.utterance.begin, g.utterance.end}}, {"l_ll", g.l_ll}, {"l_eos", g.l_eos}};
      }
    }
    if (tamper) tamper(route, reply);
    res.set_content(reply.dump(), "application/json");
  }

  const VictimModel& victim_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace dgslow::testing
