#include "bmt/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bmt/features.hpp"
#include "bmt/unicode.hpp"

namespace bmt {

using Json = nlohmann::ordered_json;

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string msg = "invalid dataset:";
  for (const auto& p : problems) msg += "\n  " + p;
  return msg;
}

class FieldError : public std::runtime_error {
 public:
  FieldError(const std::string& field, const std::string& what)
      : std::runtime_error(field + ": " + what) {}
};

const Json& require(const Json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) throw FieldError(field, "missing required field");
  return *it;
}

std::string as_string(const Json& v, const char* field) {
  if (!v.is_string()) throw FieldError(field, "expected a string");
  return v.get<std::string>();
}

std::uint64_t as_count(const Json& v, const char* field) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw FieldError(field, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

std::vector<std::string> as_string_list(const Json& v, const char* field) {
  if (!v.is_array()) throw FieldError(field, "expected an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw FieldError(field, "expected an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

const std::set<std::string, std::less<>>& known_fields() {
  static const std::set<std::string, std::less<>> f{
      "id",       "text",     "lang", "is_reply",    "media_count", "mentions", "hashtags",
      "urls",     "pos_tags", "retweets_5d", "likes_5d", "label", "category"};
  return f;
}

}  // namespace

DatasetError::DatasetError(std::size_t first_line, std::vector<std::string> problems)
    : ParseError(first_line, join_problems(problems)), problems_(std::move(problems)) {}

TweetRecord parse_record(std::string_view json_line) {
  Json obj;
  try {
    obj = Json::parse(json_line);
  } catch (const Json::parse_error& e) {
    throw FieldError("json", std::string("malformed line (") + e.what() + ")");
  }
  if (!obj.is_object()) throw FieldError("json", "line is not an object");
  for (const auto& [key, _] : obj.items())
    if (!known_fields().contains(key)) throw FieldError(key, "unknown field");

  TweetRecord r;
  r.id = as_string(require(obj, "id"), "id");
  if (r.id.empty()) throw FieldError("id", "must not be empty");
  r.text = as_string(require(obj, "text"), "text");
  if (auto it = obj.find("lang"); it != obj.end()) r.lang = as_string(*it, "lang");
  if (auto it = obj.find("is_reply"); it != obj.end()) {
    if (!it->is_boolean()) throw FieldError("is_reply", "expected true or false");
    r.is_reply = it->get<bool>();
  }
  if (auto it = obj.find("media_count"); it != obj.end()) {
    const auto n = as_count(*it, "media_count");
    if (n > 0xFFFFFFFFu) throw FieldError("media_count", "out of range");
    r.media_count = static_cast<std::uint32_t>(n);
  }
  if (auto it = obj.find("mentions"); it != obj.end()) r.mentions = as_string_list(*it, "mentions");
  if (auto it = obj.find("hashtags"); it != obj.end()) r.hashtags = as_string_list(*it, "hashtags");
  if (auto it = obj.find("urls"); it != obj.end()) r.urls = as_string_list(*it, "urls");
  if (auto it = obj.find("pos_tags"); it != obj.end()) {
    r.pos_tags = as_string_list(*it, "pos_tags");
    for (const auto& t : *r.pos_tags)
      if (!parse_pos_tag(t)) throw FieldError("pos_tags", "unknown tag '" + t + "'");
  }
  if (auto it = obj.find("retweets_5d"); it != obj.end()) r.retweets_5d = as_count(*it, "retweets_5d");
  if (auto it = obj.find("likes_5d"); it != obj.end()) r.likes_5d = as_count(*it, "likes_5d");
  if (auto it = obj.find("label"); it != obj.end()) {
    auto l = parse_label(as_string(*it, "label"));
    if (!l) throw FieldError("label", "expected \"blackmarket\" or \"genuine\"");
    r.label = *l;
  }
  if (auto it = obj.find("category"); it != obj.end()) {
    auto c = parse_category(as_string(*it, "category"));
    if (!c) throw FieldError("category", "unknown category '" + it->get<std::string>() + "'");
    r.category = *c;
  }
  return r;
}

std::string serialize_record(const TweetRecord& r) {
  Json obj;
  obj["id"] = r.id;
  obj["text"] = r.text;
  if (r.lang) obj["lang"] = *r.lang;
  obj["is_reply"] = r.is_reply;
  obj["media_count"] = r.media_count;
  if (r.mentions) obj["mentions"] = *r.mentions;
  if (r.hashtags) obj["hashtags"] = *r.hashtags;
  if (r.urls) obj["urls"] = *r.urls;
  if (r.pos_tags) obj["pos_tags"] = *r.pos_tags;
  obj["retweets_5d"] = r.retweets_5d;
  obj["likes_5d"] = r.likes_5d;
  if (r.label) obj["label"] = std::string(label_name(*r.label));
  if (r.category) obj["category"] = std::string(category_name(*r.category));
  return obj.dump(-1, ' ', false, Json::error_handler_t::strict);
}

Dataset parse_dataset(std::istream& in, std::string provenance) {
  Dataset d;
  d.provenance = std::move(provenance);
  std::vector<std::string> problems;
  std::size_t first_bad = 0;
  std::set<std::string, std::less<>> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      TweetRecord r = parse_record(line);
      if (!ids.insert(r.id).second) throw FieldError("id", "duplicate id '" + r.id + "'");
      d.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      if (problems.empty()) first_bad = lineno;
      problems.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!problems.empty()) throw DatasetError(first_bad, std::move(problems));
  return d;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  return parse_dataset(in, "file:" + path);
}

std::string serialize_dataset(const Dataset& d) {
  std::string out;
  for (const auto& r : d.records) {
    out += serialize_record(r);
    out += '\n';
  }
  return out;
}

void write_dataset(const std::string& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write dataset '" + path + "'");
  out << serialize_dataset(d);
  if (!out) throw DataError("failed writing dataset '" + path + "'");
}

// ---------------------------------------------------------------------------

std::string_view reject_reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::kTooShort: return "too_short";
    case RejectReason::kLanguageTag: return "language_tag";
    case RejectReason::kNonEnglish: return "non_english";
  }
  return "too_short";
}

FilterResult filter_dataset(const Dataset& d) {
  FilterResult res;
  res.dataset.provenance = d.provenance;
  for (const auto& r : d.records) {
    const std::u32string cps = unicode::decode(r.text);
    if (cps.size() < 2) {
      res.rejections.push_back({r.id, RejectReason::kTooShort,
                                std::to_string(cps.size()) + " code point(s)"});
      continue;
    }
    if (r.lang) {
      if (*r.lang != "en") {
        res.rejections.push_back({r.id, RejectReason::kLanguageTag, "lang=" + *r.lang});
        continue;
      }
    } else {
      std::size_t letters = 0, ascii = 0;
      for (char32_t c : cps) {
        if (!unicode::is_letter(c)) continue;
        ++letters;
        if (unicode::is_ascii_letter(c)) ++ascii;
      }
      const double ratio = letters == 0 ? 0.0 : static_cast<double>(ascii) / static_cast<double>(letters);
      if (ratio < kMinAsciiLetterRatio) {
        std::ostringstream os;
        os << "ascii letter ratio " << ascii << "/" << letters;
        res.rejections.push_back({r.id, RejectReason::kNonEnglish, os.str()});
        continue;
      }
    }
    res.dataset.records.push_back(r);
  }
  return res;
}

}  // namespace bmt
