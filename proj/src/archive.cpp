#include "bmt/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "bmt/errors.hpp"

namespace bmt {

namespace {


void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw TruncatedError(std::string("checkpoint truncated while reading ") + what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(const char* what) {
    auto s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
    return v;
  }
  double f64() {
    auto s = take(8, "tensor data");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
    return std::bit_cast<double>(v);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Matrix* TensorArchive::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

std::string encode_archive(const TensorArchive& a) {
  std::string out = "MTLB";
  put_u32(out, a.version);
  put_u32(out, static_cast<std::uint32_t>(a.config_text.size()));
  out += a.config_text;
  put_u32(out, static_cast<std::uint32_t>(a.tensors.size()));
  for (const auto& t : a.tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.value.rows()));
    put_u32(out, static_cast<std::uint32_t>(t.value.cols()));
    for (Eigen::Index i = 0; i < t.value.size(); ++i) put_f64(out, t.value.data()[i]);
  }
  return out;
}

TensorArchive decode_archive(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "MTLB")
    throw BadMagicError("not a checkpoint: magic bytes do not read 'MTLB'");
  Reader r(bytes.substr(4));
  TensorArchive a;
  a.version = r.u32("version");
  if (a.version != kArchiveVersion)
    throw VersionError("unsupported checkpoint version " + std::to_string(a.version) +
                       " (this build reads version " + std::to_string(kArchiveVersion) + ")");
  const auto config_len = r.u32("config length");
  a.config_text = std::string(r.take(config_len, "config block"));
  const auto count = r.u32("tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    const auto name_len = r.u32("tensor name length");
    t.name = std::string(r.take(name_len, "tensor name"));
    const auto rows = r.u32("tensor rows");
    const auto cols = r.u32("tensor cols");
    const std::uint64_t n = static_cast<std::uint64_t>(rows) * cols;
    if (n > (bytes.size() / 8) + 1)
      throw TruncatedError("checkpoint truncated: tensor '" + t.name + "' claims " +
                           std::to_string(rows) + "x" + std::to_string(cols));
    t.value.resize(rows, cols);
    for (std::uint64_t i = 0; i < n; ++i) t.value.data()[i] = r.f64();
    a.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw CheckpointError("checkpoint has trailing bytes after the last tensor");
  return a;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

void write_archive(const std::string& path, const TensorArchive& archive) {
  write_file(path, encode_archive(archive));
}

TensorArchive read_archive(const std::string& path) { return decode_archive(read_file(path)); }

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected key=value, got '" + line + "'");
    kv.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return kv;
}

}  // namespace bmt
