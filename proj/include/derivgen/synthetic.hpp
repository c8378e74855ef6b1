#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "derivgen/corpus.hpp"

namespace derivgen::synthetic {

/// A suffixation rule with optional English-style orthographic adjustments
/// applied before vowel-initial suffixes: silent-e deletion (bake -> bak-er)
/// and final-consonant doubling after a consonant-vowel-consonant ending
/// (run -> runn-er).
struct SuffixRule {
  std::string tag;
  std::string suffix;
  bool e_deletion = false;
  bool doubling = false;
};

/// Six rules: three plain concatenations (-ly, -ness, -ment) and three
/// vowel-initial suffixes (-er, -ee, -able) subject to both adjustments.
const std::vector<SuffixRule>& default_rules();

std::string apply_rule(const SuffixRule& rule, std::string_view base);

/// True when derived == base + suffix for the rule of t.tag.
bool is_concatenative(const Triple& t, const std::vector<SuffixRule>& rules = default_rules());

/// Random pseudo-word of 1-3 consonant-initial syllables, sometimes ending in silent e.
std::string random_base(uint64_t draw_seed);

/// `n` distinct (base, tag) triples. Deterministic in seed.
std::vector<Triple> generate(size_t n, uint64_t seed,
                             const std::vector<SuffixRule>& rules = default_rules());

}  // namespace derivgen::synthetic
