#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "dgslow/corpus.hpp"
#include "dgslow/victim.hpp"

namespace dgslow {

class Vocabulary {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kPersona = 3;
  static constexpr std::size_t kSeparator = 4;

  Vocabulary();  // specials only
  explicit Vocabulary(std::vector<std::string> words);

  // Specials plus every token of the corpus, sorted.
  static Vocabulary from_corpus(std::span<const DialogueInstance> instances);

  std::size_t id(const std::string& word) const;  // kUnk for unknown words
  const std::string& word(std::size_t id) const { return words_.at(id); }
  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  bool contains(const std::string& word) const { return index_.contains(word); }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ToyVictimConfig {
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 48;
  std::size_t max_decode_len = 32;
  std::size_t train_epochs = 12;
  double learning_rate = 0.01;
  std::size_t batch_size = 8;
  double init_scale = 0.1;
  std::uint64_t seed = 7;

  void check() const;  // throws ConfigError
  friend bool operator==(const ToyVictimConfig&, const ToyVictimConfig&) = default;
};

// Parameters of the attention encoder-decoder.
//
// Encoder: a_i = E[x_i] + S[segment_i];
//          h_i = tanh(Wc a_i + Wl a_{i-1} + Wr a_{i+1} + be); k_i = Wa h_i.
// Decoder: s_0 = tanh(W0 mean(h) + b0), c_0 = mean(h);
//          s_t = tanh(Wss s_{t-1} + Wsy E[y_{t-1}] + Wsc c_{t-1} + bs);
//          alpha_t = softmax_i(s_t . k_i); c_t = sum_i alpha_ti h_i;
//          logits_t = Wv [s_t; c_t] + bv.
// The embedding table E is shared by encoder and decoder inputs.
struct ToyWeights {
  Eigen::MatrixXd E, S;
  Eigen::MatrixXd Wc, Wl, Wr;
  Eigen::VectorXd be;
  Eigen::MatrixXd Wa;
  Eigen::MatrixXd W0;
  Eigen::VectorXd b0;
  Eigen::MatrixXd Wss, Wsy, Wsc;
  Eigen::VectorXd bs;
  Eigen::MatrixXd Wv;
  Eigen::VectorXd bv;

  static ToyWeights zeros(std::size_t vocab, std::size_t embed, std::size_t hidden);
  static ToyWeights random(std::size_t vocab, std::size_t embed, std::size_t hidden, double scale, std::uint64_t seed);

  // Visits (name, storage) pairs in a fixed order.
  template <typename F>
  void for_each(F&& f) {
    f("E", E.data(), E.size()); f("S", S.data(), S.size());
    f("Wc", Wc.data(), Wc.size()); f("Wl", Wl.data(), Wl.size()); f("Wr", Wr.data(), Wr.size());
    f("be", be.data(), be.size()); f("Wa", Wa.data(), Wa.size());
    f("W0", W0.data(), W0.size()); f("b0", b0.data(), b0.size());
    f("Wss", Wss.data(), Wss.size()); f("Wsy", Wsy.data(), Wsy.size()); f("Wsc", Wsc.data(), Wsc.size());
    f("bs", bs.data(), bs.size()); f("Wv", Wv.data(), Wv.size()); f("bv", bv.data(), bv.size());
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<ToyWeights*>(this)->for_each([&](const char* n, double* p, Eigen::Index s) {
      f(n, static_cast<const double*>(p), s);
    });
  }
};

struct TrainingReport {
  std::vector<double> epoch_losses;  // mean token cross-entropy per epoch
  double final_loss = 0.0;
};

// Token ids of a serialized input, ready for the encoder.
struct EncodedInput {
  std::vector<std::size_t> ids;
  std::vector<Segment> segments;
  Span utterance;
};

class ToyVictim final : public VictimModel {
 public:
  static constexpr int kCheckpointVersion = 1;

  ToyVictim() = default;  // no weights: every query throws ModelNotReady
  ToyVictim(Vocabulary vocab, ToyVictimConfig config);  // randomly initialised

  ModelInfo info() const override;
  GenerationResult generate(const DialogueInstance& instance, const TokenizedSentence& utterance) const override;
  ReferenceScore score_reference(const DialogueInstance& instance, const TokenizedSentence& utterance,
                                 const TokenizedSentence& reference) const override;
  GradientPair gradients(const DialogueInstance& instance, const TokenizedSentence& utterance,
                         const TokenizedSentence& reference, const StopLossParams& params) const override;

  // Teacher-forced training on every reference of every instance.
  TrainingReport train(std::span<const DialogueInstance> instances,
                       const std::function<void(std::size_t, double)>& on_epoch = {});

  void save(const std::filesystem::path& path) const;
  static ToyVictim load(const std::filesystem::path& path);

  bool ready() const noexcept { return ready_; }
  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  const ToyVictimConfig& config() const noexcept { return config_; }
  const ToyWeights& weights() const noexcept { return weights_; }
  ToyWeights& mutable_weights() noexcept { return weights_; }

  // Forward-only evaluation with explicit input embedding rows, used to check
  // gradients by finite differences.
  EncodedInput encode(const DialogueInstance& instance, const TokenizedSentence& utterance) const;
  Eigen::MatrixXd input_embeddings(const EncodedInput& input) const;
  std::vector<std::size_t> token_ids(const TokenizedSentence& sentence) const;
  double loss_ll_at(const EncodedInput& input, const Eigen::MatrixXd& embeddings,
                    std::span<const std::size_t> reference) const;
  // Sum over the decoding steps of (EOS logit - expected logit), with the
  // decoder fed `decoded` (greedy output, EOS excluded). `steps` is
  // decoded.size() + 1 when the decode ended with EOS, else decoded.size().
  double loss_eos_at(const EncodedInput& input, const Eigen::MatrixXd& embeddings,
                     std::span<const std::size_t> decoded, std::size_t steps) const;

 private:
  void require_ready() const;

  Vocabulary vocab_;
  ToyVictimConfig config_;
  ToyWeights weights_;
  bool ready_ = false;
};

}  // namespace dgslow
