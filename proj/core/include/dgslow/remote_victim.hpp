#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "dgslow/victim.hpp"

namespace dgslow {

inline constexpr const char* kRemoteProtocolVersion = "1";

struct RemoteOptions {
  std::chrono::milliseconds connect_timeout{5000};
  std::chrono::milliseconds read_timeout{60000};
  int max_retries = 2;  // extra attempts after a transport failure or HTTP 503
  std::chrono::milliseconds retry_backoff{200};
};

// Client for a victim served over HTTP/JSON:
//   GET  /meta       -> {protocol_version, model_name, vocab_size, embed_dim}
//   POST /generate   {persona, history, utterance, utterance_tokens}
//                    -> {tokens, text, steps_logit_summary: [{eos_logit, expected_logit}]}
//   POST /score      {... , reference, reference_tokens} -> {token_probs}
//   POST /gradients  {... , reference, reference_tokens, beta, eps, rho}
//                    -> {g_ll, g_stop, utterance_span: [begin, end]}
// Calls are serialised through one connection. Transport failures raise
// ConnectionError (with the retry count); malformed or non-200 replies raise
// ProtocolError.
class RemoteVictim final : public VictimModel {
 public:
  // Performs the /meta handshake. Throws ConnectionError or ProtocolError.
  explicit RemoteVictim(const std::string& endpoint_url, RemoteOptions options = {});
  ~RemoteVictim() override;
  RemoteVictim(const RemoteVictim&) = delete;
  RemoteVictim& operator=(const RemoteVictim&) = delete;

  ModelInfo info() const override;
  GenerationResult generate(const DialogueInstance& instance, const TokenizedSentence& utterance) const override;
  ReferenceScore score_reference(const DialogueInstance& instance, const TokenizedSentence& utterance,
                                 const TokenizedSentence& reference) const override;
  GradientPair gradients(const DialogueInstance& instance, const TokenizedSentence& utterance,
                         const TokenizedSentence& reference, const StopLossParams& params) const override;

  const std::string& endpoint() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::unique_ptr<VictimModel> connect_remote(const std::string& endpoint_url, RemoteOptions options = {});

}  // namespace dgslow
