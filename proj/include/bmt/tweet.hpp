#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bmt {

/// Class index used by every model head: genuine = 0, blackmarket = 1.
enum class Label : int { kGenuine = 0, kBlackmarket = 1 };

enum class Category { kPromotional, kEntertainment, kSpam, kNews, kPolitics, kOthers };

inline constexpr std::size_t kNumCategories = 6;

std::string_view label_name(Label l);
std::optional<Label> parse_label(std::string_view s);
std::string_view category_name(Category c);
std::optional<Category> parse_category(std::string_view s);
const std::vector<Category>& all_categories();

struct TweetRecord {
  std::string id;
  std::string text;
  std::optional<std::string> lang;
  bool is_reply = false;
  std::uint32_t media_count = 0;
  // Entity lists from source metadata. When present they take precedence
  // over counts parsed from the text.
  std::optional<std::vector<std::string>> mentions;
  std::optional<std::vector<std::string>> hashtags;
  std::optional<std::vector<std::string>> urls;
  // Externally supplied part-of-speech tags, one per word token.
  std::optional<std::vector<std::string>> pos_tags;
  std::uint64_t retweets_5d = 0;
  std::uint64_t likes_5d = 0;
  std::optional<Label> label;
  std::optional<Category> category;

  bool operator==(const TweetRecord&) const = default;
};

}  // namespace bmt
