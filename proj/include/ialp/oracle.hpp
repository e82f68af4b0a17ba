#pragma once

// Preference distillation judge. A prompt shows the user's history and k
// labelled candidates plus a trailing "None" label; the judge's answer
// selects an action (reward 1) or, on "None", a uniformly random candidate
// is taken with reward 0.

#include <cctype>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ialp/data.hpp"

namespace ialp {

class OracleError : public Error {
 public:
  enum class Kind { network, status, timeout, retries_exhausted, replay_miss };

  OracleError(Kind kind, const std::string& message)
      : Error(kind_name(kind), message), reason_(kind) {}
  Kind reason() const noexcept { return reason_; }

  static std::string kind_name(Kind k) {
    switch (k) {
      case Kind::network: return "oracle_network";
      case Kind::status: return "oracle_status";
      case Kind::timeout: return "oracle_timeout";
      case Kind::retries_exhausted: return "oracle_retries_exhausted";
      case Kind::replay_miss: return "oracle_replay_miss";
    }
    return "oracle";
  }

 private:
  Kind reason_;
};

inline constexpr std::size_t kMaxCandidates = 25;

struct PromptSpec {
  std::string scenario = "music streaming";
  std::string item_noun = "track";
  std::string behavior = "listening";
  std::vector<std::string> attribute_names = {"title", "album", "artist"};
  std::size_t k = 10;

  void validate() const {
    if (k < 2 || k > kMaxCandidates) throw ConfigError("candidate count k must lie in [2, 25]");
    if (attribute_names.empty()) throw ConfigError("prompt needs at least one attribute");
  }
};

inline char label_letter(std::size_t index) { return static_cast<char>('a' + index); }

struct OracleChoice {
  std::optional<std::size_t> label_index;  // absent: "None"
  std::string raw_response;
  bool parse_failed = false;
};

struct OracleOutcome {
  ItemId action = 0;
  Real reward = 0.0;
  bool was_none = true;
};

namespace detail {

inline std::string join_attributes(const ItemRecord& item, const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string* v = item.attribute(names[i]);
    if (v == nullptr) {
      throw DataError("item " + std::to_string(item.id) + " has no attribute '" + names[i] + "'");
    }
    if (i) out += "; ";
    out += *v;
  }
  return out;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace detail

inline constexpr std::string_view kPromptPreamble =
    "Below is an instruction that describes a task, paired with an input that provides "
    "further context. Write a response that appropriately completes the request.";
inline constexpr std::string_view kResponseStem =
    "By analysing the user's preference, the user will select";

inline std::string build_prompt(std::span<const ItemRecord> history,
                                std::span<const ItemRecord> candidates, const PromptSpec& spec) {
  spec.validate();
  if (history.empty()) throw DataError("prompt needs a nonempty history");
  if (candidates.size() != spec.k) {
    throw DataError("prompt expects " + std::to_string(spec.k) + " candidates, got " +
                    std::to_string(candidates.size()));
  }
  std::string attrs;
  for (std::size_t i = 0; i < spec.attribute_names.size(); ++i) {
    if (i) attrs += "; ";
    attrs += spec.attribute_names[i];
  }
  std::string p;
  p += kPromptPreamble;
  p += "\n\n### Instruction:\n";
  p += "You are a user in a " + spec.scenario + " platform now. The " + spec.item_noun +
       " is in the form of " + attrs + ". Given a user's " + spec.behavior + " history of " +
       spec.item_noun + ", and candidate " + spec.item_noun +
       " labelled by lowercase letter to be decided to recommend to the user, identify which " +
       spec.item_noun + " the user will mostly prefer to at next timestamp. " +
       "Please judge by the user's preference on " + attrs +
       "; if you think that none of the candidates will be selected by the user, please "
       "answer \"None\"\n\n";
  p += "### Input:\nHistory: ";
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (i) p += ", ";
    p += "\"" + detail::join_attributes(history[i], spec.attribute_names) + "\"";
  }
  p += ".\nWhich one the user will mostly like at next timestamp in the following candidates?\n";
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    p += label_letter(i);
    p += ". " + detail::join_attributes(candidates[i], spec.attribute_names) + "\n";
  }
  p += label_letter(candidates.size());
  p += ". None\n\n### Response:\n";
  p += kResponseStem;
  return p;
}

namespace detail {

struct Token {
  std::string core;  // lowercase, surrounding punctuation stripped
  bool decorated = false;  // had label punctuation: (x) x. x) x: "x"
  bool upper = false;      // single letter written in upper case
  bool sentence_end = false;
};

inline bool is_wrapper(char c) {
  return c == '(' || c == ')' || c == '[' || c == ']' || c == '"' || c == '\'' || c == '*' ||
         c == '`' || c == '.' || c == ',' || c == ':' || c == ';' || c == '!' || c == '?';
}

inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (start == i) break;
    std::string_view raw = text.substr(start, i - start);
    std::size_t b = 0, e = raw.size();
    while (b < e && is_wrapper(raw[b])) ++b;
    while (e > b && is_wrapper(raw[e - 1])) --e;
    Token t;
    std::string_view core = raw.substr(b, e - b);
    std::string_view prefix = raw.substr(0, b);
    std::string_view suffix = raw.substr(e);
    t.core = lower(core);
    t.upper = core.size() == 1 && std::isupper(static_cast<unsigned char>(core[0]));
    t.decorated = prefix.find_first_of("([\"'*`") != std::string_view::npos ||
                  suffix.find_first_of(").:]\"'*`") != std::string_view::npos;
    t.sentence_end = suffix.find_first_of(".!?") != std::string_view::npos;
    out.push_back(std::move(t));
  }
  return out;
}

inline bool is_label_token(const Token& t, std::size_t k, std::size_t& index) {
  if (t.core.size() != 1 || !std::isalpha(static_cast<unsigned char>(t.core[0]))) return false;
  const std::size_t idx = static_cast<std::size_t>(t.core[0] - 'a');
  if (idx > k) return false;  // k itself is the "None" label
  index = idx;
  return true;
}

inline bool is_filler(const std::string& w) {
  return w == "option" || w == "label" || w == "candidate" || w == "choice" || w == "item" ||
         w == "answer" || w == "is" || w == "letter" || w == "the" || w == "track" ||
         w == "product" || w == "number" || w.empty();
}

}  // namespace detail

// Reads a judge's free-text answer. After the anchor "the user will select"
// (when present) the first label or "None" wins; otherwise label-looking
// tokens are preferred over bare letters, a bare "a" counts only at the end
// of a sentence, and a bare capital counts only as the whole answer.
// Unparseable text maps to None with parse_failed set.
inline OracleChoice parse_response(std::string_view text, std::size_t k) {
  using detail::Token;
  OracleChoice choice;
  choice.raw_response = std::string(text);
  const std::string low = detail::lower(text);
  static constexpr std::string_view kAnchor = "the user will select";
  std::string_view region = text;
  bool anchored = false;
  if (auto pos = low.find(kAnchor); pos != std::string::npos) {
    region = text.substr(pos + kAnchor.size());
    anchored = true;
  }
  const auto tokens = detail::tokenize(region);

  auto resolve = [&](std::size_t idx) {
    if (idx == k) choice.label_index.reset();
    else choice.label_index = idx;
    return choice;
  };

  if (anchored) {
    for (const Token& t : tokens) {
      std::size_t idx = 0;
      if (t.core == "none") return choice;
      if (detail::is_label_token(t, k, idx) && !(t.upper && t.core == "i")) return resolve(idx);
      if (!detail::is_filler(t.core)) break;
    }
  }

  for (const Token& t : tokens) {
    std::size_t idx = 0;
    if (t.core == "none") return choice;
    if (t.decorated && detail::is_label_token(t, k, idx)) {
      return resolve(idx);
    }
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& t = tokens[i];
    std::size_t idx = 0;
    if ((t.upper && tokens.size() > 1) || !detail::is_label_token(t, k, idx)) continue;
    if (t.core == "a" && !t.sentence_end && i + 1 < tokens.size()) continue;
    return resolve(idx);
  }
  choice.parse_failed = true;
  return choice;
}

// Scores candidates by dot(mean history latent, candidate latent); picks the
// best (lowest position on ties) if it reaches `threshold`, else None.
inline OracleChoice synthetic_choice(std::span<const ItemId> history,
                                     std::span<const ItemId> candidates,
                                     const SyntheticGroundTruth& truth, Real threshold) {
  if (candidates.empty()) throw DataError("synthetic oracle needs candidates");
  if (history.empty()) throw DataError("synthetic oracle needs a history");
  std::vector<Real> centre(truth.latent_dim, 0.0);
  for (ItemId h : history) {
    const auto& v = truth.item_latents.at(h);
    for (std::size_t c = 0; c < truth.latent_dim; ++c) centre[c] += v[c];
  }
  for (Real& c : centre) c /= static_cast<Real>(history.size());
  std::size_t best = 0;
  Real best_score = -std::numeric_limits<Real>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& v = truth.item_latents.at(candidates[i]);
    Real s = 0.0;
    for (std::size_t c = 0; c < truth.latent_dim; ++c) s += centre[c] * v[c];
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  OracleChoice choice;
  if (best_score >= threshold) choice.label_index = best;
  choice.raw_response = choice.label_index ? std::string(1, label_letter(best)) : "None";
  return choice;
}

// Source of raw judge text for a prompt (HTTP client, replay fixture, stub).
class ResponseSource {
 public:
  virtual ~ResponseSource() = default;
  virtual std::string respond(const std::string& prompt) = 0;
};

class PreferenceOracle {
 public:
  virtual ~PreferenceOracle() = default;
  virtual OracleChoice choose(std::span<const ItemId> history,
                              std::span<const ItemId> candidates) = 0;
};

class SyntheticOracle : public PreferenceOracle {
 public:
  SyntheticOracle(std::shared_ptr<const SyntheticGroundTruth> truth, Real threshold)
      : truth_(std::move(truth)), threshold_(threshold) {}

  OracleChoice choose(std::span<const ItemId> history,
                      std::span<const ItemId> candidates) override {
    return synthetic_choice(history, candidates, *truth_, threshold_);
  }

 private:
  std::shared_ptr<const SyntheticGroundTruth> truth_;
  Real threshold_;
};

// Prompts a language model through a ResponseSource and parses its label.
class LlmOracle : public PreferenceOracle {
 public:
  LlmOracle(std::shared_ptr<const ItemCatalog> catalog, PromptSpec spec,
            std::shared_ptr<ResponseSource> source, std::size_t max_history = 10)
      : catalog_(std::move(catalog)),
        spec_(std::move(spec)),
        source_(std::move(source)),
        max_history_(max_history) {}

  std::string prompt_for(std::span<const ItemId> history,
                         std::span<const ItemId> candidates) const {
    const std::size_t start = history.size() > max_history_ ? history.size() - max_history_ : 0;
    std::vector<ItemRecord> hist, cands;
    for (std::size_t i = start; i < history.size(); ++i) hist.push_back(catalog_->at(history[i]));
    for (ItemId c : candidates) cands.push_back(catalog_->at(c));
    PromptSpec spec = spec_;
    spec.k = candidates.size();
    return build_prompt(hist, cands, spec);
  }

  OracleChoice choose(std::span<const ItemId> history,
                      std::span<const ItemId> candidates) override {
    const std::string prompt = prompt_for(history, candidates);
    auto choice = parse_response(source_->respond(prompt), candidates.size());
    if (choice.parse_failed) ++parse_failures;
    return choice;
  }

  std::size_t parse_failures = 0;

 private:
  std::shared_ptr<const ItemCatalog> catalog_;
  PromptSpec spec_;
  std::shared_ptr<ResponseSource> source_;
  std::size_t max_history_;
};

// Maps a judge choice to (action, reward).
inline OracleOutcome resolve_choice(const OracleChoice& choice,
                                    std::span<const ItemId> candidates, Rng& rng) {
  if (candidates.empty()) throw DataError("no candidates to resolve");
  OracleOutcome out;
  if (choice.label_index && *choice.label_index < candidates.size()) {
    out.action = candidates[*choice.label_index];
    out.reward = 1.0;
    out.was_none = false;
  } else {
    out.action = candidates[uniform_index(rng, candidates.size())];
    out.reward = 0.0;
    out.was_none = true;
  }
  return out;
}

inline OracleOutcome distill(std::span<const ItemId> history, std::span<const ItemId> candidates,
                             PreferenceOracle& oracle, Rng& rng) {
  return resolve_choice(oracle.choose(history, candidates), candidates, rng);
}

}  // namespace ialp
