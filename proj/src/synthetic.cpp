#include "derivgen/synthetic.hpp"

#include <set>
#include <stdexcept>

#include "derivgen/random.hpp"

namespace derivgen::synthetic {

namespace {

constexpr std::string_view kVowels = "aeiou";
constexpr std::string_view kConsonants = "bcdfgklmnprstvz";
constexpr std::string_view kRareConsonants = "wxy";

bool is_vowel(char c) { return kVowels.find(c) != std::string_view::npos; }

bool is_consonant(char c) { return c >= 'a' && c <= 'z' && !is_vowel(c); }

bool vowel_initial(std::string_view suffix) { return !suffix.empty() && is_vowel(suffix[0]); }

bool cvc_ending(std::string_view w) {
  if (w.size() < 3) return false;
  const char last = w[w.size() - 1];
  return is_consonant(w[w.size() - 3]) && is_vowel(w[w.size() - 2]) && is_consonant(last) &&
         kRareConsonants.find(last) == std::string_view::npos;
}

char pick(Rng& rng, std::string_view from) { return from[rng.below(from.size())]; }

std::string make_word(Rng& rng) {
  std::string w;
  const auto syllables = 1 + rng.below(3);
  for (uint64_t s = 0; s < syllables; ++s) {
    w += rng.below(10) == 0 ? pick(rng, kRareConsonants) : pick(rng, kConsonants);
    w += pick(rng, kVowels);
    if (rng.below(2) == 0) w += pick(rng, kConsonants);
  }
  if (is_consonant(w.back()) && rng.below(4) == 0) w += 'e';
  return w;
}

}  // namespace

const std::vector<SuffixRule>& default_rules() {
  static const std::vector<SuffixRule> rules = {
      {"ADVERB", "ly", false, false},  {"NOMINAL", "ness", false, false},
      {"RESULT", "ment", false, false}, {"AGENT", "er", true, true},
      {"PATIENT", "ee", true, true},    {"ABILITY", "able", true, true},
  };
  return rules;
}

std::string apply_rule(const SuffixRule& rule, std::string_view base) {
  std::string stem(base);
  if (vowel_initial(rule.suffix)) {
    if (rule.e_deletion && stem.size() > 1 && stem.back() == 'e') {
      stem.pop_back();
    } else if (rule.doubling && cvc_ending(stem)) {
      stem.push_back(stem.back());
    }
  }
  return stem + rule.suffix;
}

bool is_concatenative(const Triple& t, const std::vector<SuffixRule>& rules) {
  for (const auto& r : rules) {
    if (r.tag == t.tag) return t.derived == t.base + r.suffix;
  }
  return false;
}

std::string random_base(uint64_t draw_seed) {
  Rng rng(draw_seed);
  return make_word(rng);
}

std::vector<Triple> generate(size_t n, uint64_t seed, const std::vector<SuffixRule>& rules) {
  if (rules.empty()) throw std::invalid_argument("no suffix rules");
  Rng rng(seed);
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<Triple> out;
  size_t attempts = 0;
  while (out.size() < n) {
    if (++attempts > 100 * n + 1000) throw std::runtime_error("cannot generate enough distinct triples");
    std::string base = make_word(rng);
    const auto& rule = rules[rng.below(rules.size())];
    if (!seen.emplace(base, rule.tag).second) continue;
    out.push_back({base, rule.tag, apply_rule(rule, base)});
  }
  return out;
}

}  // namespace derivgen::synthetic
