#include "dgslow/victim.hpp"

namespace dgslow {
namespace {

void append(SerializedInput& out, std::string_view token, Segment segment) {
  out.tokens.emplace_back(token);
  out.segments.push_back(segment);
}

}  // namespace

SerializedInput serialize_input(const DialogueInstance& instance, const TokenizedSentence& utterance) {
  SerializedInput out;
  bool first_block = true;
  auto separator = [&](Segment segment) {
    if (!first_block) append(out, kSeparatorToken, segment);
    first_block = false;
  };

  bool any_persona = false;
  for (const auto& sentence : instance.persona) {
    const auto words = split_words(sentence);
    if (words.empty()) continue;
    append(out, kPersonaToken, Segment::kPersona);
    for (const auto& w : words) append(out, w, Segment::kPersona);
    any_persona = true;
  }
  if (any_persona) first_block = false;

  for (const auto& turn : instance.history) {
    const auto words = split_words(turn);
    if (words.empty()) continue;
    separator(Segment::kHistory);
    for (const auto& w : words) append(out, w, Segment::kHistory);
  }

  separator(Segment::kUtterance);
  out.utterance.begin = out.tokens.size();
  for (const auto& w : utterance.tokens) append(out, w, Segment::kUtterance);
  out.utterance.end = out.tokens.size();
  return out;
}

void VictimSession::charge() {
  if (!can_afford(1)) throw BudgetExhausted();
  ++queries_;
}

GenerationResult VictimSession::generate(const DialogueInstance& instance, const TokenizedSentence& utterance) {
  charge();
  return model_->generate(instance, utterance);
}

ReferenceScore VictimSession::score_reference(const DialogueInstance& instance, const TokenizedSentence& utterance,
                                              const TokenizedSentence& reference) {
  charge();
  return model_->score_reference(instance, utterance, reference);
}

GradientPair VictimSession::gradients(const DialogueInstance& instance, const TokenizedSentence& utterance,
                                      const TokenizedSentence& reference, const StopLossParams& params) {
  charge();
  return model_->gradients(instance, utterance, reference, params);
}

}  // namespace dgslow
