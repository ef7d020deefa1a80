#include "inconvad/lexicon.hpp"

#include <algorithm>
#include <sstream>

#include "inconvad/config.hpp"

namespace inconvad::lexicon {

const VadVector* VadLexicon::find(const std::string& word) const {
  auto it = entries.find(word);
  return it == entries.end() ? nullptr : &it->second;
}

VadLexicon parse_lexicon(const std::string& text) {
  VadLexicon lex;
  struct Row {
    std::string term;
    double v, a, d;
  };
  std::vector<Row> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool seen_data = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const auto parts = split_whitespace(t);
      if (!parts.empty() && parts[0] == "#range") {
        if (parts.size() != 3) throw LexiconParseError("malformed #range header", lineno);
        try {
          lex.declared_lo = parse_double(parts[1], "range lo");
          lex.declared_hi = parse_double(parts[2], "range hi");
        } catch (const std::invalid_argument&) {
          throw LexiconParseError("non-numeric #range header", lineno);
        }
        if (!(lex.declared_hi > lex.declared_lo)) throw LexiconParseError("#range requires hi > lo", lineno);
      }
      continue;
    }
    const auto fields = split(line, '\t');
    if (fields.size() != 4) throw LexiconParseError("expected 4 tab-separated fields", lineno);
    if (!seen_data && to_lower(trim(fields[1])) == "valence" && to_lower(trim(fields[2])) == "arousal") {
      seen_data = true;
      continue;
    }
    seen_data = true;
    Row r;
    r.term = to_lower(trim(fields[0]));
    try {
      r.v = parse_double(fields[1], "valence");
      r.a = parse_double(fields[2], "arousal");
      r.d = parse_double(fields[3], "dominance");
    } catch (const std::invalid_argument&) {
      throw LexiconParseError("non-numeric value in row for '" + r.term + "'", lineno);
    }
    if (r.term.empty()) throw LexiconParseError("empty term", lineno);
    rows.push_back(r);
  }
  const double lo = lex.declared_lo, span = lex.declared_hi - lex.declared_lo;
  auto rescale = [&](double x) { return std::clamp((x - lo) / span, 0.0, 1.0); };
  for (const Row& r : rows) {
    if (r.term.find(' ') != std::string::npos) {
      ++lex.skipped_multiword;
      continue;
    }
    const VadVector value{rescale(r.v), rescale(r.a), rescale(r.d)};
    auto [it, inserted] = lex.entries.insert_or_assign(r.term, value);
    if (!inserted) ++lex.duplicates;
  }
  if (lex.entries.empty()) throw LexiconParseError("lexicon has no entries", lineno);
  return lex;
}

VadLexicon load_lexicon(const std::string& path) { return parse_lexicon(read_text_file(path)); }

Matrix TokenPriorSequence::as_matrix() const {
  Matrix m(priors.size(), 3);
  for (std::size_t t = 0; t < priors.size(); ++t) {
    m(t, 0) = priors[t].v;
    m(t, 1) = priors[t].a;
    m(t, 2) = priors[t].d;
  }
  return m;
}

std::string strip_subword_marker(const std::string& token) {
  static const std::string kMarkers[] = {"##", "\xC4\xA0", "\xE2\x96\x81"};
  std::string s = token;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& m : kMarkers) {
      if (s.size() >= m.size() && s.compare(0, m.size(), m) == 0) {
        s.erase(0, m.size());
        changed = true;
      }
    }
  }
  return s;
}

TokenPriorSequence priors_for_tokens(const std::vector<std::string>& tokens, const VadLexicon& lex,
                                     const std::vector<int>* word_ids) {
  TokenPriorSequence out;
  out.priors.assign(tokens.size(), kNeutralPrior);
  if (tokens.empty()) return out;
  if (word_ids && word_ids->size() != tokens.size())
    throw std::invalid_argument("priors_for_tokens: word_ids length mismatch");
  std::size_t hits = 0;
  if (!word_ids) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (const VadVector* p = lex.find(to_lower(strip_subword_marker(tokens[i])))) {
        out.priors[i] = *p;
        ++hits;
      }
    }
  } else {
    std::size_t i = 0;
    while (i < tokens.size()) {
      const int wid = (*word_ids)[i];
      std::size_t j = i + 1;
      if (wid >= 0)
        while (j < tokens.size() && (*word_ids)[j] == wid) ++j;
      std::string word;
      for (std::size_t k = i; k < j; ++k) word += strip_subword_marker(tokens[k]);
      if (const VadVector* p = lex.find(to_lower(word))) {
        for (std::size_t k = i; k < j; ++k) out.priors[k] = *p;
        hits += j - i;
      }
      i = j;
    }
  }
  out.coverage = static_cast<double>(hits) / static_cast<double>(tokens.size());
  return out;
}

}  // namespace inconvad::lexicon
