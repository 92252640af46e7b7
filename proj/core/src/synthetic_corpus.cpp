#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dgslow/corpus.hpp"
#include "dgslow/errors.hpp"
#include "dgslow/rng.hpp"

namespace dgslow {
namespace {

// persona_chat_v1: two speakers exchange preferences about six topics. The
// bot's persona states its favourite item for three of them; every reply is a
// deterministic function of (utterance, persona), so a small model can learn
// the mapping.
constexpr const char* kGrammar = "persona_chat_v1";

struct Topic {
  const char* noun;
  std::vector<const char*> items;
};

const std::vector<Topic>& topics() {
  static const std::vector<Topic> t = {
      {"food", {"fish", "pasta", "steak", "tacos", "salad", "pizza", "soup", "rice", "apples", "oysters"}},
      {"pet", {"dog", "cat", "bird", "rabbit", "hamster", "turtle", "iguana", "owl"}},
      {"sport", {"soccer", "tennis", "hockey", "golf", "baseball", "swimming", "archery"}},
      {"music", {"jazz", "rock", "blues", "opera", "pop", "country", "reggae"}},
      {"city", {"paris", "london", "tokyo", "rome", "berlin", "madrid", "oslo"}},
      {"hobby", {"painting", "reading", "hiking", "cooking", "gardening", "chess", "knitting"}},
  };
  return t;
}

const std::vector<const char*> kPositive = {"love", "like", "adore", "enjoy"};
const std::vector<const char*> kNegative = {"hate", "dislike", "loathe"};
const std::vector<const char*> kGreeting = {"hi", "hello", "hey"};
const std::vector<const char*> kFiller = {"well", "actually", "honestly"};
const std::vector<const char*> kIntensifier = {"really", "truly", "so"};
const std::vector<const char*> kTime = {"today", "lately", "now"};

constexpr std::size_t kPet = 1;
constexpr std::size_t kCity = 4;

std::string article_for(const std::string& word) {
  return std::string("aeiou").find(word.front()) != std::string::npos ? "an" : "a";
}

struct Persona {
  // Favourite item index per topic, or -1 when the persona says nothing.
  std::array<int, 6> favourite{-1, -1, -1, -1, -1, -1};
  std::vector<std::string> sentences;
};

Persona make_persona(Rng& rng) {
  Persona p;
  std::vector<std::size_t> order = {0, 1, 2, 3, 4, 5};
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  std::vector<std::size_t> chosen(order.begin(), order.begin() + 3);
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t t : chosen) {
    const auto& topic = topics()[t];
    const auto item = rng.index(topic.items.size());
    p.favourite[t] = static_cast<int>(item);
    const std::string word = topic.items[item];
    if (t == kPet) {
      p.sentences.push_back("i have " + article_for(word) + " " + word + " .");
    } else if (t == kCity) {
      p.sentences.push_back("i live in " + word + " .");
    } else if (t == 0) {
      p.sentences.push_back(std::string("i ") + kPositive[rng.index(kPositive.size())] + " " + word + " .");
    } else {
      p.sentences.push_back(std::string("my favorite ") + topic.noun + " is " + word + " .");
    }
  }
  return p;
}

struct Turn {
  std::string utterance;
  std::string reference;
};

Turn make_turn(const Persona& persona, Rng& rng) {
  // Half of the turns target a topic the persona knows about.
  std::size_t t;
  if (rng.bernoulli(0.5)) {
    std::vector<std::size_t> known;
    for (std::size_t i = 0; i < 6; ++i)
      if (persona.favourite[i] >= 0) known.push_back(i);
    t = known[rng.index(known.size())];
  } else {
    t = rng.index(6);
  }
  const auto& topic = topics()[t];
  const std::string noun = topic.noun;
  const bool known = persona.favourite[t] >= 0;
  const std::string fav = known ? topic.items[static_cast<std::size_t>(persona.favourite[t])] : "";
  // Asked-about item: the favourite one a third of the time.
  std::string item = topic.items[rng.index(topic.items.size())];
  if (known && rng.index(3) == 0) item = fav;
  const std::string unknown_reply = "i do not know much about " + noun + " .";

  const std::string pos = kPositive[rng.index(kPositive.size())];
  Turn turn;
  switch (rng.index(t == kPet ? 6 : 5)) {
    case 0:
      turn.utterance = "do you " + pos + " " + item + " ?";
      if (!known) turn.reference = unknown_reply;
      else if (item == fav) turn.reference = "yes , i like " + item + " very much .";
      else turn.reference = "no , i prefer " + fav + " .";
      break;
    case 1:
      turn.utterance = std::string(kFiller[rng.index(kFiller.size())]) + " , what is your favorite " + noun + " ?";
      turn.reference = known ? "my favorite " + noun + " is " + fav + " ." : unknown_reply;
      break;
    case 2:
      turn.utterance = std::string(kGreeting[rng.index(kGreeting.size())]) + " , i " +
                       kIntensifier[rng.index(kIntensifier.size())] + " " + pos + " " + item +
                       " . what about you ?";
      turn.reference = known ? "i really like " + fav + " ." : unknown_reply;
      break;
    case 3:
      turn.utterance = "let's talk about " + noun + " " + kTime[rng.index(kTime.size())] + " .";
      turn.reference = known ? "sure , i like " + fav + " a lot ." : "sorry , " + unknown_reply;
      break;
    case 4: {
      const std::string neg = kNegative[rng.index(kNegative.size())];
      turn.utterance = "i " + neg + " " + item + " , do you ?";
      if (!known) turn.reference = unknown_reply;
      else if (item == fav) turn.reference = "no , i love " + item + " !";
      else turn.reference = "me too , i prefer " + fav + " .";
      break;
    }
    default:
      turn.utterance = "do you have " + article_for(item) + " " + item + " ?";
      if (!known) turn.reference = "no , i do not have a pet .";
      else if (item == fav) turn.reference = "yes , i have " + article_for(item) + " " + item + " .";
      else turn.reference = "no , i have " + article_for(fav) + " " + fav + " .";
      break;
  }
  return turn;
}

void require_known(const std::string& grammar) {
  if (grammar != kGrammar) throw ConfigError("unknown template grammar '" + grammar + "'");
}

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace

std::vector<std::string> known_grammars() { return {kGrammar}; }

std::vector<DialogueInstance> generate_synthetic_corpus(const CorpusSpec& spec) {
  require_known(spec.template_grammar);
  if (spec.turns_per_dialogue == 0) throw ConfigError("turns_per_dialogue must be >= 1");
  Rng rng(spec.seed);
  std::vector<DialogueInstance> out;
  out.reserve(spec.num_dialogues * spec.turns_per_dialogue);
  for (std::size_t d = 0; d < spec.num_dialogues; ++d) {
    const Persona persona = make_persona(rng);
    std::vector<std::string> history;
    for (std::size_t n = 0; n < spec.turns_per_dialogue; ++n) {
      Turn turn = make_turn(persona, rng);
      out.push_back(DialogueInstance{persona.sentences, history, turn.utterance, {turn.reference}});
      history.push_back(std::move(turn.utterance));
      history.push_back(std::move(turn.reference));
    }
  }
  return out;
}

SyntheticLexicon synthetic_lexicon(const std::string& template_grammar, std::uint64_t seed, std::size_t dim) {
  require_known(template_grammar);
  Rng rng(seed);

  // Semantic classes: members share a centroid. Antonym classes sit close to
  // the class they oppose, as they do in distributional embeddings.
  std::vector<std::vector<std::string>> classes;
  auto add_class = [&](const auto& words) { classes.emplace_back(words.begin(), words.end()); };
  std::vector<std::string> nouns;
  for (const auto& topic : topics()) {
    add_class(topic.items);
    nouns.emplace_back(topic.noun);
  }
  add_class(nouns);
  add_class(kPositive);
  add_class(kGreeting);
  add_class(kFiller);
  add_class(kIntensifier);
  add_class(kTime);

  std::map<std::string, std::vector<double>> table;
  const double spread = 0.8;
  auto member = [&](const std::vector<double>& centroid) {
    auto noise = random_unit(rng, dim);
    std::vector<double> v(dim);
    double norm = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      v[k] = centroid[k] + spread * noise[k];
      norm += v[k] * v[k];
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
  };
  std::vector<double> positive_centroid;
  for (const auto& cls : classes) {
    const auto centroid = random_unit(rng, dim);
    if (cls.front() == kPositive.front()) positive_centroid = centroid;
    for (const auto& w : cls) table[w] = member(centroid);
  }
  {
    auto centroid = random_unit(rng, dim);
    for (std::size_t k = 0; k < dim; ++k) centroid[k] = 0.8 * positive_centroid[k] + 0.6 * centroid[k];
    for (const char* w : kNegative) table[w] = member(centroid);
  }
  {
    const auto centroid = random_unit(rng, dim);
    table["yes"] = member(centroid);
    table["no"] = member(centroid);
  }

  // Every remaining token of the grammar gets an unrelated vector.
  std::set<std::string> vocab;
  CorpusSpec probe{seed, 200, 6, template_grammar};
  for (const auto& inst : generate_synthetic_corpus(probe)) {
    auto add = [&](const std::string& s) {
      for (auto& tok : split_words(s)) vocab.insert(std::move(tok));
    };
    for (const auto& s : inst.persona) add(s);
    add(inst.utterance);
    for (const auto& s : inst.references) add(s);
  }
  for (const auto& topic : topics())
    for (const char* item : topic.items) vocab.insert(item);
  for (const auto& w : vocab) {
    if (!table.contains(w)) table[w] = random_unit(rng, dim);
  }

  SyntheticLexicon lex;
  lex.vectors.assign(table.begin(), table.end());
  for (const char* p : kPositive)
    for (const char* n : kNegative) {
      lex.antonyms[p].emplace_back(n);
      lex.antonyms[n].emplace_back(p);
    }
  lex.antonyms["yes"] = {"no"};
  lex.antonyms["no"] = {"yes"};
  return lex;
}

}  // namespace dgslow
