#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "inconvad/matrix.hpp"
#include "inconvad/types.hpp"

namespace inconvad::lexicon {

class LexiconParseError : public std::runtime_error {
 public:
  LexiconParseError(const std::string& msg, std::size_t line)
      : std::runtime_error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Word -> (v, a, d) table with every value rescaled into [0, 1].
struct VadLexicon {
  std::unordered_map<std::string, VadVector> entries;
  double declared_lo = 0.0;
  double declared_hi = 1.0;
  std::size_t duplicates = 0;
  std::size_t skipped_multiword = 0;

  const VadVector* find(const std::string& word) const;
  std::size_t size() const { return entries.size(); }
};

inline constexpr VadVector kNeutralPrior{0.5, 0.5, 0.5};

// Tab-separated `term<TAB>v<TAB>a<TAB>d` rows; optional `#range lo hi`
// header (default [0, 1]); other `#` lines are comments. A header row
// naming valence/arousal/dominance columns is skipped.
VadLexicon parse_lexicon(const std::string& text);
VadLexicon load_lexicon(const std::string& path);

struct TokenPriorSequence {
  std::vector<VadVector> priors;
  double coverage = 0.0;

  Matrix as_matrix() const;  // T x 3
};

// Removes leading subword markers ("##", U+0120, U+2581).
std::string strip_subword_marker(const std::string& token);

// Per-token priors; unknown tokens get the neutral midpoint. When
// `word_ids` is given (one id per token, negative for none), pieces sharing
// an id are joined and looked up as one word that every piece inherits.
TokenPriorSequence priors_for_tokens(const std::vector<std::string>& tokens, const VadLexicon& lex,
                                     const std::vector<int>* word_ids = nullptr);

}  // namespace inconvad::lexicon
