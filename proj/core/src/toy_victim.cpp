#include "dgslow/toy_victim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "dgslow/errors.hpp"
#include "dgslow/rng.hpp"
#include "json.hpp"

namespace dgslow {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr const char* kCheckpointFormat = "dgslow-toy-victim";

const std::vector<std::string>& special_words() {
  static const std::vector<std::string> s = {"<unk>", "<bos>", "<eos>", std::string(kPersonaToken),
                                             std::string(kSeparatorToken)};
  return s;
}

VectorXd softmax(const VectorXd& logits) {
  const double m = logits.maxCoeff();
  VectorXd p = (logits.array() - m).exp();
  return p / p.sum();
}

double log_sum_exp(const VectorXd& logits) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

std::size_t argmax(const VectorXd& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<std::size_t>(best);
}

struct EncoderState {
  MatrixXd A;  // n x embed (input embeddings + segment embeddings)
  MatrixXd H;  // n x hidden
  MatrixXd K;  // n x hidden, attention keys
  VectorXd mean;
};

EncoderState run_encoder(const ToyWeights& w, const MatrixXd& embeddings, const std::vector<Segment>& segments) {
  const Index n = embeddings.rows();
  EncoderState enc;
  enc.A = embeddings;
  for (Index i = 0; i < n; ++i) enc.A.row(i) += w.S.row(static_cast<Index>(segments[static_cast<std::size_t>(i)]));
  MatrixXd z = enc.A * w.Wc.transpose();
  if (n > 1) {
    z.bottomRows(n - 1).noalias() += enc.A.topRows(n - 1) * w.Wl.transpose();
    z.topRows(n - 1).noalias() += enc.A.bottomRows(n - 1) * w.Wr.transpose();
  }
  z.rowwise() += w.be.transpose();
  enc.H = z.array().tanh().matrix();
  enc.K = enc.H * w.Wa.transpose();
  enc.mean = enc.H.colwise().mean().transpose();
  return enc;
}

// Decoder activations for every step, kept for the backward pass.
struct DecoderTrace {
  std::vector<std::size_t> inputs;  // y_{t-1} for t = 1..L
  std::vector<VectorXd> s;          // s_0..s_L
  std::vector<VectorXd> c;          // c_0..c_L
  std::vector<VectorXd> alpha;      // alpha_1..alpha_L
  MatrixXd logits;                  // L x V
};

void start_decoder(const ToyWeights& w, const EncoderState& enc, DecoderTrace& tr) {
  tr.s.push_back((w.W0 * enc.mean + w.b0).array().tanh().matrix());
  tr.c.push_back(enc.mean);
}

VectorXd decoder_step(const ToyWeights& w, const EncoderState& enc, DecoderTrace& tr, std::size_t input) {
  const Index h = w.Wss.rows();
  VectorXd pre = w.bs;
  pre.noalias() += w.Wss * tr.s.back();
  pre.noalias() += w.Wsy * w.E.row(static_cast<Index>(input)).transpose();
  pre.noalias() += w.Wsc * tr.c.back();
  VectorXd s = pre.array().tanh().matrix();
  VectorXd alpha = softmax(enc.K * s);
  VectorXd c = enc.H.transpose() * alpha;
  VectorXd logits = w.bv;
  logits.noalias() += w.Wv.leftCols(h) * s;
  logits.noalias() += w.Wv.rightCols(h) * c;
  tr.inputs.push_back(input);
  tr.s.push_back(std::move(s));
  tr.c.push_back(std::move(c));
  tr.alpha.push_back(std::move(alpha));
  return logits;
}

void collect_logits(DecoderTrace& tr, const std::vector<VectorXd>& rows) {
  if (rows.empty()) {
    tr.logits.resize(0, 0);
    return;
  }
  tr.logits.resize(static_cast<Index>(rows.size()), rows.front().size());
  for (std::size_t t = 0; t < rows.size(); ++t) tr.logits.row(static_cast<Index>(t)) = rows[t].transpose();
}

DecoderTrace teacher_forced(const ToyWeights& w, const EncoderState& enc, std::span<const std::size_t> inputs) {
  DecoderTrace tr;
  start_decoder(w, enc, tr);
  std::vector<VectorXd> rows;
  rows.reserve(inputs.size());
  for (std::size_t y : inputs) rows.push_back(decoder_step(w, enc, tr, y));
  collect_logits(tr, rows);
  return tr;
}

DecoderTrace greedy(const ToyWeights& w, const EncoderState& enc, std::size_t max_len, std::vector<std::size_t>& out,
                    bool& ended) {
  DecoderTrace tr;
  start_decoder(w, enc, tr);
  std::vector<VectorXd> rows;
  std::size_t input = Vocabulary::kBos;
  ended = false;
  out.clear();
  while (out.size() < max_len) {
    rows.push_back(decoder_step(w, enc, tr, input));
    const std::size_t next = argmax(rows.back());
    if (next == Vocabulary::kEos) {
      ended = true;
      break;
    }
    out.push_back(next);
    input = next;
  }
  collect_logits(tr, rows);
  return tr;
}

// d(l_eos - sum_k p_k l_k) / d l = onehot(eos) - p - p .* (l - E[l]).
VectorXd eos_loss_grad(const VectorXd& logits, double& value) {
  const VectorXd p = softmax(logits);
  const double expected = p.dot(logits);
  value = logits[Vocabulary::kEos] - expected;
  VectorXd g = -p.array() - p.array() * (logits.array() - expected);
  g[Vocabulary::kEos] += 1.0;
  return g;
}

// Propagates d loss / d logits back to the encoder input rows. When `grads`
// is given, parameter gradients are accumulated into it as well.
MatrixXd backward(const ToyWeights& w, const EncoderState& enc, const std::vector<Segment>& segments,
                  std::span<const std::size_t> input_ids, const DecoderTrace& tr, const MatrixXd& dlogits,
                  ToyWeights* grads) {
  const Index h = w.Wss.rows();
  const Index n = enc.H.rows();
  const Index steps = tr.logits.rows();
  MatrixXd dH = MatrixXd::Zero(n, h);
  MatrixXd dK = MatrixXd::Zero(n, h);
  VectorXd ds_next = VectorXd::Zero(h);
  VectorXd dc_next = VectorXd::Zero(h);

  for (Index t = steps; t >= 1; --t) {
    const VectorXd dl = dlogits.row(t - 1).transpose();
    const VectorXd& s = tr.s[static_cast<std::size_t>(t)];
    const VectorXd& c = tr.c[static_cast<std::size_t>(t)];
    const VectorXd& s_prev = tr.s[static_cast<std::size_t>(t - 1)];
    const VectorXd& c_prev = tr.c[static_cast<std::size_t>(t - 1)];
    const VectorXd& alpha = tr.alpha[static_cast<std::size_t>(t - 1)];
    const std::size_t y = tr.inputs[static_cast<std::size_t>(t - 1)];

    VectorXd ds = w.Wv.leftCols(h).transpose() * dl + ds_next;
    VectorXd dc = w.Wv.rightCols(h).transpose() * dl + dc_next;
    if (grads) {
      grads->Wv.leftCols(h).noalias() += dl * s.transpose();
      grads->Wv.rightCols(h).noalias() += dl * c.transpose();
      grads->bv += dl;
    }
    // c = H^T alpha, alpha = softmax(K s)
    dH.noalias() += alpha * dc.transpose();
    const VectorXd dalpha = enc.H * dc;
    const VectorXd de = alpha.array() * (dalpha.array() - alpha.dot(dalpha));
    ds.noalias() += enc.K.transpose() * de;
    dK.noalias() += de * s.transpose();
    // s = tanh(Wss s_prev + Wsy E[y] + Wsc c_prev + bs)
    const VectorXd dpre = ds.array() * (1.0 - s.array().square());
    ds_next = w.Wss.transpose() * dpre;
    dc_next = w.Wsc.transpose() * dpre;
    if (grads) {
      grads->Wss.noalias() += dpre * s_prev.transpose();
      grads->Wsy.noalias() += dpre * w.E.row(static_cast<Index>(y));
      grads->Wsc.noalias() += dpre * c_prev.transpose();
      grads->bs += dpre;
      grads->E.row(static_cast<Index>(y)).noalias() += (w.Wsy.transpose() * dpre).transpose();
    }
  }

  // s_0 = tanh(W0 mean + b0), c_0 = mean
  const VectorXd dpre0 = ds_next.array() * (1.0 - tr.s[0].array().square());
  const VectorXd dmean = w.W0.transpose() * dpre0 + dc_next;
  if (grads) {
    grads->W0.noalias() += dpre0 * enc.mean.transpose();
    grads->b0 += dpre0;
    grads->Wa.noalias() += dK.transpose() * enc.H;
  }
  dH.rowwise() += dmean.transpose() / static_cast<double>(n);
  dH.noalias() += dK * w.Wa;

  const MatrixXd dz = (dH.array() * (1.0 - enc.H.array().square())).matrix();
  MatrixXd dA = dz * w.Wc;
  if (n > 1) {
    dA.topRows(n - 1).noalias() += dz.bottomRows(n - 1) * w.Wl;
    dA.bottomRows(n - 1).noalias() += dz.topRows(n - 1) * w.Wr;
  }
  if (grads) {
    grads->Wc.noalias() += dz.transpose() * enc.A;
    if (n > 1) {
      grads->Wl.noalias() += dz.bottomRows(n - 1).transpose() * enc.A.topRows(n - 1);
      grads->Wr.noalias() += dz.topRows(n - 1).transpose() * enc.A.bottomRows(n - 1);
    }
    grads->be += dz.colwise().sum().transpose();
    for (Index i = 0; i < n; ++i) {
      grads->S.row(static_cast<Index>(segments[static_cast<std::size_t>(i)])) += dA.row(i);
      grads->E.row(static_cast<Index>(input_ids[static_cast<std::size_t>(i)])) += dA.row(i);
    }
  }
  return dA;
}

void require_finite(double value, const char* what) {
  if (!std::isfinite(value)) throw NumericalError(std::string("non-finite ") + what);
}

nlohmann::ordered_json matrix_json(const double* data, Index size) { return std::vector<double>(data, data + size); }

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  words_ = special_words();
  for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
  for (auto& w : words) {
    if (index_.emplace(w, words_.size()).second) words_.push_back(std::move(w));
  }
}

Vocabulary Vocabulary::from_corpus(std::span<const DialogueInstance> instances) {
  std::set<std::string> words;
  auto add = [&](const std::string& s) {
    for (auto& t : split_words(s)) words.insert(std::move(t));
  };
  for (const auto& inst : instances) {
    for (const auto& s : inst.persona) add(s);
    for (const auto& s : inst.history) add(s);
    add(inst.utterance);
    for (const auto& s : inst.references) add(s);
  }
  for (const auto& s : special_words()) words.erase(s);
  return Vocabulary(std::vector<std::string>(words.begin(), words.end()));
}

std::size_t Vocabulary::id(const std::string& word) const {
  const auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

// ---------------------------------------------------------------------------
// Weights

void ToyVictimConfig::check() const {
  if (embed_dim < 1 || hidden_dim < 1 || max_decode_len < 1 || batch_size < 1)
    throw ConfigError("toy victim dimensions must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

ToyWeights ToyWeights::zeros(std::size_t vocab, std::size_t embed, std::size_t hidden) {
  const auto V = static_cast<Index>(vocab), d = static_cast<Index>(embed), h = static_cast<Index>(hidden);
  ToyWeights w;
  w.E = MatrixXd::Zero(V, d);
  w.S = MatrixXd::Zero(3, d);
  w.Wc = MatrixXd::Zero(h, d);
  w.Wl = MatrixXd::Zero(h, d);
  w.Wr = MatrixXd::Zero(h, d);
  w.be = VectorXd::Zero(h);
  w.Wa = MatrixXd::Zero(h, h);
  w.W0 = MatrixXd::Zero(h, h);
  w.b0 = VectorXd::Zero(h);
  w.Wss = MatrixXd::Zero(h, h);
  w.Wsy = MatrixXd::Zero(h, d);
  w.Wsc = MatrixXd::Zero(h, h);
  w.bs = VectorXd::Zero(h);
  w.Wv = MatrixXd::Zero(V, 2 * h);
  w.bv = VectorXd::Zero(V);
  return w;
}

ToyWeights ToyWeights::random(std::size_t vocab, std::size_t embed, std::size_t hidden, double scale,
                              std::uint64_t seed) {
  ToyWeights w = zeros(vocab, embed, hidden);
  Rng rng(seed);
  w.for_each([&](const char* name, double* data, Index size) {
    // Biases start at zero.
    if (name[0] == 'b') return;
    for (Index i = 0; i < size; ++i) data[i] = rng.normal(0.0, scale);
  });
  return w;
}

// ---------------------------------------------------------------------------
// ToyVictim

ToyVictim::ToyVictim(Vocabulary vocab, ToyVictimConfig config)
    : vocab_(std::move(vocab)), config_(config), ready_(true) {
  config_.check();
  weights_ = ToyWeights::random(vocab_.size(), config_.embed_dim, config_.hidden_dim, config_.init_scale, config_.seed);
}

void ToyVictim::require_ready() const {
  if (!ready_) throw ModelNotReady();
}

ModelInfo ToyVictim::info() const { return {"toy-attention-seq2seq", vocab_.size(), config_.embed_dim}; }

EncodedInput ToyVictim::encode(const DialogueInstance& instance, const TokenizedSentence& utterance) const {
  const SerializedInput s = serialize_input(instance, utterance);
  EncodedInput e;
  e.ids.reserve(s.tokens.size());
  for (const auto& t : s.tokens) e.ids.push_back(vocab_.id(t));
  e.segments = s.segments;
  e.utterance = s.utterance;
  return e;
}

Eigen::MatrixXd ToyVictim::input_embeddings(const EncodedInput& input) const {
  MatrixXd u(static_cast<Index>(input.ids.size()), weights_.E.cols());
  for (std::size_t i = 0; i < input.ids.size(); ++i)
    u.row(static_cast<Index>(i)) = weights_.E.row(static_cast<Index>(input.ids[i]));
  return u;
}

std::vector<std::size_t> ToyVictim::token_ids(const TokenizedSentence& sentence) const {
  std::vector<std::size_t> ids;
  ids.reserve(sentence.size());
  for (const auto& t : sentence.tokens) ids.push_back(vocab_.id(t));
  return ids;
}

GenerationResult ToyVictim::generate(const DialogueInstance& instance, const TokenizedSentence& utterance) const {
  require_ready();
  const EncodedInput in = encode(instance, utterance);
  const EncoderState enc = run_encoder(weights_, input_embeddings(in), in.segments);
  std::vector<std::size_t> out;
  GenerationResult result;
  const DecoderTrace tr = greedy(weights_, enc, config_.max_decode_len, out, result.ended_by_eos);
  result.tokens.reserve(out.size());
  for (std::size_t id : out) result.tokens.push_back(vocab_.word(id));
  result.step_logits = tr.logits;
  for (Index t = 0; t < tr.logits.rows(); ++t) {
    const VectorXd row = tr.logits.row(t).transpose();
    result.step_stats.push_back({row[Vocabulary::kEos], softmax(row).dot(row)});
  }
  return result;
}

ReferenceScore ToyVictim::score_reference(const DialogueInstance& instance, const TokenizedSentence& utterance,
                                          const TokenizedSentence& reference) const {
  require_ready();
  if (reference.empty()) throw EmptyReference();
  const EncodedInput in = encode(instance, utterance);
  const EncoderState enc = run_encoder(weights_, input_embeddings(in), in.segments);
  const auto ref = token_ids(reference);
  std::vector<std::size_t> inputs{Vocabulary::kBos};
  inputs.insert(inputs.end(), ref.begin(), ref.end() - 1);
  const DecoderTrace tr = teacher_forced(weights_, enc, inputs);
  ReferenceScore score;
  score.logit_rows = tr.logits;
  score.token_ids = ref;
  for (std::size_t t = 0; t < ref.size(); ++t) {
    const VectorXd p = softmax(tr.logits.row(static_cast<Index>(t)).transpose());
    score.token_probs.push_back(p[static_cast<Index>(ref[t])]);
  }
  return score;
}

GradientPair ToyVictim::gradients(const DialogueInstance& instance, const TokenizedSentence& utterance,
                                  const TokenizedSentence& reference, const StopLossParams& /*params*/) const {
  require_ready();
  if (reference.empty()) throw EmptyReference();
  const EncodedInput in = encode(instance, utterance);
  const MatrixXd u = input_embeddings(in);
  const EncoderState enc = run_encoder(weights_, u, in.segments);

  GradientPair out;
  out.utterance = in.utterance;

  // L_ll = sum_t log p(ref_t): d/dlogits = onehot - p.
  const auto ref = token_ids(reference);
  std::vector<std::size_t> inputs{Vocabulary::kBos};
  inputs.insert(inputs.end(), ref.begin(), ref.end() - 1);
  const DecoderTrace tf = teacher_forced(weights_, enc, inputs);
  MatrixXd d_ll(tf.logits.rows(), tf.logits.cols());
  for (std::size_t t = 0; t < ref.size(); ++t) {
    const VectorXd row = tf.logits.row(static_cast<Index>(t)).transpose();
    out.l_ll += row[static_cast<Index>(ref[t])] - log_sum_exp(row);
    VectorXd g = -softmax(row);
    g[static_cast<Index>(ref[t])] += 1.0;
    d_ll.row(static_cast<Index>(t)) = g.transpose();
  }
  require_finite(out.l_ll, "log-likelihood loss");
  out.g_ll = backward(weights_, enc, in.segments, in.ids, tf, d_ll, nullptr);

  // L_eos along the greedy decode path.
  std::vector<std::size_t> decoded;
  bool ended = false;
  const DecoderTrace gr = greedy(weights_, enc, config_.max_decode_len, decoded, ended);
  MatrixXd d_eos(gr.logits.rows(), gr.logits.cols());
  for (Index t = 0; t < gr.logits.rows(); ++t) {
    double v = 0.0;
    d_eos.row(t) = eos_loss_grad(gr.logits.row(t).transpose(), v).transpose();
    out.l_eos += v;
  }
  require_finite(out.l_eos, "end-of-sequence loss");
  out.g_stop = backward(weights_, enc, in.segments, in.ids, gr, d_eos, nullptr);

  if (!out.g_ll.allFinite() || !out.g_stop.allFinite()) throw NumericalError("non-finite gradient");
  return out;
}

double ToyVictim::loss_ll_at(const EncodedInput& input, const Eigen::MatrixXd& embeddings,
                             std::span<const std::size_t> reference) const {
  require_ready();
  if (reference.empty()) throw EmptyReference();
  const EncoderState enc = run_encoder(weights_, embeddings, input.segments);
  std::vector<std::size_t> inputs{Vocabulary::kBos};
  inputs.insert(inputs.end(), reference.begin(), reference.end() - 1);
  const DecoderTrace tr = teacher_forced(weights_, enc, inputs);
  double loss = 0.0;
  for (std::size_t t = 0; t < reference.size(); ++t) {
    const VectorXd row = tr.logits.row(static_cast<Index>(t)).transpose();
    loss += row[static_cast<Index>(reference[t])] - log_sum_exp(row);
  }
  return loss;
}

double ToyVictim::loss_eos_at(const EncodedInput& input, const Eigen::MatrixXd& embeddings,
                              std::span<const std::size_t> decoded, std::size_t steps) const {
  require_ready();
  const EncoderState enc = run_encoder(weights_, embeddings, input.segments);
  std::vector<std::size_t> inputs{Vocabulary::kBos};
  inputs.insert(inputs.end(), decoded.begin(), decoded.end());
  inputs.resize(steps);
  const DecoderTrace tr = teacher_forced(weights_, enc, inputs);
  double loss = 0.0;
  for (Index t = 0; t < tr.logits.rows(); ++t) {
    const VectorXd row = tr.logits.row(t).transpose();
    loss += row[Vocabulary::kEos] - softmax(row).dot(row);
  }
  return loss;
}

TrainingReport ToyVictim::train(std::span<const DialogueInstance> instances,
                                const std::function<void(std::size_t, double)>& on_epoch) {
  require_ready();
  struct Example {
    EncodedInput input;
    std::vector<std::size_t> decoder_inputs;
    std::vector<std::size_t> targets;
  };
  std::vector<Example> examples;
  for (const auto& inst : instances) {
    const TokenizedSentence utt = tokenize(inst.utterance);
    const EncodedInput in = encode(inst, utt);
    for (const auto& r : inst.references) {
      const auto ref = token_ids(tokenize(r));
      Example ex{in, {Vocabulary::kBos}, ref};
      ex.decoder_inputs.insert(ex.decoder_inputs.end(), ref.begin(), ref.end());
      ex.targets.push_back(Vocabulary::kEos);
      examples.push_back(std::move(ex));
    }
  }
  if (examples.empty()) throw ConfigError("no training examples");

  const ToyWeights zero = ToyWeights::zeros(vocab_.size(), config_.embed_dim, config_.hidden_dim);
  ToyWeights grads = zero, m1 = zero, m2 = zero;
  struct Slot {
    double* w;
    double* g;
    double* m;
    double* v;
    Index n;
  };
  std::vector<Slot> slots;
  {
    std::vector<std::pair<double*, Index>> pw, pg, pm, pv;
    weights_.for_each([&](const char*, double* p, Index n) { pw.emplace_back(p, n); });
    grads.for_each([&](const char*, double* p, Index n) { pg.emplace_back(p, n); });
    m1.for_each([&](const char*, double* p, Index n) { pm.emplace_back(p, n); });
    m2.for_each([&](const char*, double* p, Index n) { pv.emplace_back(p, n); });
    for (std::size_t i = 0; i < pw.size(); ++i)
      slots.push_back({pw[i].first, pg[i].first, pm[i].first, pv[i].first, pw[i].second});
  }

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8, kClip = 5.0;
  Rng rng(derive_seed(config_.seed, 1));
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t step = 0;
  TrainingReport report;

  for (std::size_t epoch = 0; epoch < config_.train_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t b = 0; b < order.size(); b += config_.batch_size) {
      for (auto& s : slots) std::fill(s.g, s.g + s.n, 0.0);
      std::size_t batch_tokens = 0;
      const std::size_t end = std::min(order.size(), b + config_.batch_size);
      for (std::size_t k = b; k < end; ++k) {
        const Example& ex = examples[order[k]];
        const EncoderState enc = run_encoder(weights_, input_embeddings(ex.input), ex.input.segments);
        const DecoderTrace tr = teacher_forced(weights_, enc, ex.decoder_inputs);
        MatrixXd dl(tr.logits.rows(), tr.logits.cols());
        for (std::size_t t = 0; t < ex.targets.size(); ++t) {
          const VectorXd row = tr.logits.row(static_cast<Index>(t)).transpose();
          epoch_loss -= row[static_cast<Index>(ex.targets[t])] - log_sum_exp(row);
          VectorXd g = softmax(row);
          g[static_cast<Index>(ex.targets[t])] -= 1.0;
          dl.row(static_cast<Index>(t)) = g.transpose();
        }
        batch_tokens += ex.targets.size();
        backward(weights_, enc, ex.input.segments, ex.input.ids, tr, dl, &grads);
      }
      epoch_tokens += batch_tokens;

      double norm2 = 0.0;
      for (const auto& s : slots)
        for (Index i = 0; i < s.n; ++i) {
          s.g[i] /= static_cast<double>(batch_tokens);
          norm2 += s.g[i] * s.g[i];
        }
      const double scale = std::sqrt(norm2) > kClip ? kClip / std::sqrt(norm2) : 1.0;
      ++step;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (const auto& s : slots)
        for (Index i = 0; i < s.n; ++i) {
          const double g = s.g[i] * scale;
          s.m[i] = kBeta1 * s.m[i] + (1.0 - kBeta1) * g;
          s.v[i] = kBeta2 * s.v[i] + (1.0 - kBeta2) * g * g;
          s.w[i] -= config_.learning_rate * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + kAdamEps);
        }
    }
    const double mean = epoch_loss / static_cast<double>(epoch_tokens);
    require_finite(mean, "training loss");
    report.epoch_losses.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  report.final_loss = report.epoch_losses.empty() ? 0.0 : report.epoch_losses.back();
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints

void ToyVictim::save(const std::filesystem::path& path) const {
  require_ready();
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = {{"embed_dim", config_.embed_dim},         {"hidden_dim", config_.hidden_dim},
                 {"max_decode_len", config_.max_decode_len}, {"train_epochs", config_.train_epochs},
                 {"learning_rate", config_.learning_rate},   {"batch_size", config_.batch_size},
                 {"init_scale", config_.init_scale},         {"seed", config_.seed}};
  j["vocab"] = vocab_.words();
  auto& w = j["weights"];
  w = nlohmann::ordered_json::object();
  weights_.for_each([&](const char* name, const double* data, Index size) { w[name] = matrix_json(data, size); });
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write checkpoint: " + path.string());
  out << j.dump() << '\n';
  if (!out) throw IOError("write failed: " + path.string());
}

ToyVictim ToyVictim::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open checkpoint: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IOError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat)
    throw CheckpointVersionError("not a toy victim checkpoint: " + path.string());
  if (j.value("version", -1) != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint version " + j["version"].dump() + " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  try {
    ToyVictimConfig cfg;
    const auto& c = j.at("config");
    cfg.embed_dim = c.at("embed_dim").get<std::size_t>();
    cfg.hidden_dim = c.at("hidden_dim").get<std::size_t>();
    cfg.max_decode_len = c.at("max_decode_len").get<std::size_t>();
    cfg.train_epochs = c.at("train_epochs").get<std::size_t>();
    cfg.learning_rate = c.at("learning_rate").get<double>();
    cfg.batch_size = c.at("batch_size").get<std::size_t>();
    cfg.init_scale = c.at("init_scale").get<double>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    cfg.check();
    auto words = j.at("vocab").get<std::vector<std::string>>();
    if (words.size() < special_words().size() ||
        !std::equal(special_words().begin(), special_words().end(), words.begin()))
      throw ConfigError("checkpoint vocabulary does not start with the special tokens");
    words.erase(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(special_words().size()));

    ToyVictim victim;
    victim.vocab_ = Vocabulary(std::move(words));
    victim.config_ = cfg;
    victim.weights_ = ToyWeights::zeros(victim.vocab_.size(), cfg.embed_dim, cfg.hidden_dim);
    const auto& w = j.at("weights");
    victim.weights_.for_each([&](const char* name, double* data, Index size) {
      const auto values = w.at(name).get<std::vector<double>>();
      if (static_cast<Index>(values.size()) != size)
        throw ConfigError(std::string("checkpoint tensor '") + name + "' has the wrong size");
      std::copy(values.begin(), values.end(), data);
    });
    victim.ready_ = true;
    return victim;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace dgslow
