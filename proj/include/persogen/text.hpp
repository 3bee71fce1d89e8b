#pragma once
// Word tokenization and hashed bucketing shared by the text embedder, the
// policy tag features and the synthetic-catalog word planting.

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "persogen/rng.hpp"

namespace persogen {

// distinct salts keep the text-embedding space and the policy tag space independent
inline constexpr std::uint64_t kTextEmbedSalt = 0x544558;
inline constexpr std::uint64_t kTagFeatSalt = 0x544147;

// lowercase alphanumeric word split
inline std::vector<std::string> tokenize_words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(char(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::size_t word_bucket(std::string_view word, std::size_t buckets,
                               std::uint64_t salt) {
  return std::size_t(fnv1a64(word, salt) % buckets);
}

}  // namespace persogen
