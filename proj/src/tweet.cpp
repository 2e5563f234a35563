#include "bmt/tweet.hpp"

namespace bmt {

std::string_view label_name(Label l) {
  return l == Label::kBlackmarket ? "blackmarket" : "genuine";
}

std::optional<Label> parse_label(std::string_view s) {
  if (s == "blackmarket") return Label::kBlackmarket;
  if (s == "genuine") return Label::kGenuine;
  return std::nullopt;
}

std::string_view category_name(Category c) {
  switch (c) {
    case Category::kPromotional: return "Promotional";
    case Category::kEntertainment: return "Entertainment";
    case Category::kSpam: return "Spam";
    case Category::kNews: return "News";
    case Category::kPolitics: return "Politics";
    case Category::kOthers: return "Others";
  }
  return "Others";
}

std::optional<Category> parse_category(std::string_view s) {
  for (Category c : all_categories())
    if (category_name(c) == s) return c;
  return std::nullopt;
}

const std::vector<Category>& all_categories() {
  static const std::vector<Category> cats{Category::kPromotional, Category::kEntertainment,
                                          Category::kSpam,        Category::kNews,
                                          Category::kPolitics,    Category::kOthers};
  return cats;
}

}  // namespace bmt
