#pragma once

// Line-delimited JSON tweet datasets. One object per line; field names match
// TweetRecord (see README for the schema). Blank lines are skipped.

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "bmt/errors.hpp"
#include "bmt/tweet.hpp"

namespace bmt {

struct Dataset {
  std::vector<TweetRecord> records;
  std::string provenance;  // source file, or generator seed and config

  bool operator==(const Dataset&) const = default;
};

/// Every rejected line, one "line N: field: problem" entry each. line()
/// reports the first offending line.
class DatasetError : public ParseError {
 public:
  DatasetError(std::size_t first_line, std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

TweetRecord parse_record(std::string_view json_line);
std::string serialize_record(const TweetRecord& r);

/// Throws DatasetError for malformed lines, missing or mistyped fields,
/// unknown fields and duplicate ids.
Dataset parse_dataset(std::istream& in, std::string provenance);
Dataset load_dataset(const std::string& path);

std::string serialize_dataset(const Dataset& d);
void write_dataset(const std::string& path, const Dataset& d);

enum class RejectReason { kTooShort, kLanguageTag, kNonEnglish };
std::string_view reject_reason_name(RejectReason r);

struct Rejection {
  std::string id;
  RejectReason reason;
  std::string detail;
};

struct FilterResult {
  Dataset dataset;
  std::vector<Rejection> rejections;
};

inline constexpr double kMinAsciiLetterRatio = 0.6;

/// Drops texts shorter than two code points. When `lang` is present only
/// "en" is kept; otherwise at least 60% of the alphabetic code points must
/// be ASCII letters (a text with no letters is dropped).
FilterResult filter_dataset(const Dataset& d);

}  // namespace bmt
