#include "dgslow/remote_victim.hpp"

#include <cmath>
#include <mutex>
#include <thread>

#include "dgslow/errors.hpp"
#include "httplib.h"
#include "json.hpp"

namespace dgslow {

using nlohmann::json;

struct RemoteVictim::Impl {
  std::string endpoint;
  std::string prefix;  // path below the host, without trailing slash
  RemoteOptions options;
  ModelInfo meta;
  mutable std::mutex mu;
  mutable std::unique_ptr<httplib::Client> client;

  Impl(const std::string& url, RemoteOptions opts) : endpoint(url), options(opts) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos || url.substr(0, scheme) != "http")
      throw ConfigError("remote victim URL must start with http:// (got '" + url + "')");
    const auto path = url.find('/', scheme + 3);
    const std::string host = path == std::string::npos ? url : url.substr(0, path);
    if (path != std::string::npos) prefix = url.substr(path);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    client = std::make_unique<httplib::Client>(host);
    client->set_connection_timeout(options.connect_timeout);
    client->set_read_timeout(options.read_timeout);
    client->set_write_timeout(options.read_timeout);
  }

  json call(const std::string& route, const json* body) const {
    std::lock_guard lock(mu);
    const std::string path = prefix + route;
    httplib::Result res;
    std::string failure;
    int retries = 0;
    for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
      if (attempt > 0) {
        ++retries;
        std::this_thread::sleep_for(options.retry_backoff * attempt);
      }
      res = body ? client->Post(path, body->dump(), "application/json") : client->Get(path);
      if (!res) {
        failure = endpoint + route + ": " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 503) {
        failure = endpoint + route + ": model busy (HTTP 503)";
        continue;
      }
      break;
    }
    if (!res || res->status == 503) throw ConnectionError(failure, retries);
    if (res->status != 200)
      throw ProtocolError(kRemoteProtocolVersion,
                          route + " returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw ProtocolError(kRemoteProtocolVersion, route + " returned invalid JSON: " + e.what());
    }
  }
};

namespace {

json request_body(const DialogueInstance& instance, const TokenizedSentence& utterance) {
  return json{{"persona", instance.persona},
              {"history", instance.history},
              {"utterance", detokenize(utterance)},
              {"utterance_tokens", utterance.tokens}};
}

template <typename T>
T field(const json& j, const char* route, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ProtocolError(kRemoteProtocolVersion, std::string(route) + " reply: bad field '" + key + "': " + e.what());
  }
}

Eigen::MatrixXd matrix_field(const json& j, const char* route, const char* key) {
  const auto rows = field<std::vector<std::vector<double>>>(j, route, key);
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols)
      throw ProtocolError(kRemoteProtocolVersion, std::string(route) + " reply: ragged matrix '" + key + "'");
    for (std::size_t k = 0; k < cols; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  }
  return m;
}

}  // namespace

RemoteVictim::RemoteVictim(const std::string& endpoint_url, RemoteOptions options)
    : impl_(std::make_unique<Impl>(endpoint_url, options)) {
  const json meta = impl_->call("/meta", nullptr);
  std::string version;
  if (meta.contains("protocol_version")) {
    const auto& v = meta["protocol_version"];
    version = v.is_string() ? v.get<std::string>() : v.dump();
  }
  if (version != kRemoteProtocolVersion) throw ProtocolError(version);
  impl_->meta.name = meta.value("model_name", std::string("remote"));
  impl_->meta.vocab_size = meta.value("vocab_size", std::size_t{0});
  impl_->meta.embed_dim = meta.value("embed_dim", std::size_t{0});
}

RemoteVictim::~RemoteVictim() = default;

const std::string& RemoteVictim::endpoint() const noexcept { return impl_->endpoint; }

ModelInfo RemoteVictim::info() const { return impl_->meta; }

GenerationResult RemoteVictim::generate(const DialogueInstance& instance, const TokenizedSentence& utterance) const {
  const json body = request_body(instance, utterance);
  const json reply = impl_->call("/generate", &body);
  GenerationResult g;
  g.tokens = field<std::vector<std::string>>(reply, "/generate", "tokens");
  for (const auto& s : field<json>(reply, "/generate", "steps_logit_summary")) {
    StepStatistics st;
    st.eos_logit = field<double>(s, "/generate", "eos_logit");
    st.expected_logit = field<double>(s, "/generate", "expected_logit");
    g.step_stats.push_back(st);
  }
  g.ended_by_eos = reply.contains("ended_by_eos") ? field<bool>(reply, "/generate", "ended_by_eos")
                                                  : g.step_stats.size() > g.tokens.size();
  return g;
}

ReferenceScore RemoteVictim::score_reference(const DialogueInstance& instance, const TokenizedSentence& utterance,
                                             const TokenizedSentence& reference) const {
  if (reference.empty()) throw EmptyReference();
  json body = request_body(instance, utterance);
  body["reference"] = detokenize(reference);
  body["reference_tokens"] = reference.tokens;
  const json reply = impl_->call("/score", &body);
  ReferenceScore s;
  s.token_probs = field<std::vector<double>>(reply, "/score", "token_probs");
  if (s.token_probs.size() != reference.size())
    throw ProtocolError(kRemoteProtocolVersion, "/score returned " + std::to_string(s.token_probs.size()) +
                                                    " probabilities for a " + std::to_string(reference.size()) +
                                                    "-token reference");
  for (double p : s.token_probs)
    if (!(p > 0.0 && p <= 1.0)) throw ProtocolError(kRemoteProtocolVersion, "/score returned a probability outside (0, 1]");
  return s;
}

GradientPair RemoteVictim::gradients(const DialogueInstance& instance, const TokenizedSentence& utterance,
                                     const TokenizedSentence& reference, const StopLossParams& params) const {
  if (reference.empty()) throw EmptyReference();
  json body = request_body(instance, utterance);
  body["reference"] = detokenize(reference);
  body["reference_tokens"] = reference.tokens;
  body["beta"] = params.beta;
  body["eps"] = params.eps;
  body["rho"] = params.rho;
  const json reply = impl_->call("/gradients", &body);
  GradientPair g;
  g.g_ll = matrix_field(reply, "/gradients", "g_ll");
  g.g_stop = matrix_field(reply, "/gradients", "g_stop");
  if (g.g_ll.rows() != g.g_stop.rows() || g.g_ll.cols() != g.g_stop.cols())
    throw ProtocolError(kRemoteProtocolVersion, "/gradients returned matrices of different shapes");
  if (!g.g_ll.allFinite() || !g.g_stop.allFinite()) throw NumericalError("/gradients returned non-finite entries");
  const auto span = field<std::vector<std::size_t>>(reply, "/gradients", "utterance_span");
  if (span.size() != 2 || span[0] > span[1] || span[1] > static_cast<std::size_t>(g.g_ll.rows()))
    throw ProtocolError(kRemoteProtocolVersion, "/gradients returned an invalid utterance_span");
  g.utterance = {span[0], span[1]};
  if (g.utterance.size() != utterance.size())
    throw ProtocolError(kRemoteProtocolVersion, "/gradients utterance_span covers " +
                                                    std::to_string(g.utterance.size()) + " rows for " +
                                                    std::to_string(utterance.size()) + " words");
  g.l_ll = reply.value("l_ll", 0.0);
  g.l_eos = reply.value("l_eos", 0.0);
  return g;
}

std::unique_ptr<VictimModel> connect_remote(const std::string& endpoint_url, RemoteOptions options) {
  return std::make_unique<RemoteVictim>(endpoint_url, options);
}

}  // namespace dgslow
