#include "bmt/encoder.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "bmt/unicode.hpp"

namespace bmt {

namespace {

std::string escape_char(char32_t c) {
  if (c == U'\\') return "\\\\";
  if (c == U'\t') return "\\t";
  if (c == U'\n') return "\\n";
  if (c == U'\r') return "\\r";
  if (c < 0x20 || c == 0x7F || unicode::is_whitespace(c)) {
    char buf[16];
    auto res = std::to_chars(buf, buf + sizeof buf, static_cast<std::uint32_t>(c), 16);
    return "\\u{" + std::string(buf, res.ptr) + "}";
  }
  std::string out;
  unicode::append_utf8(out, c);
  return out;
}

char32_t unescape_char(std::string_view s, std::size_t lineno) {
  if (s == "\\\\") return U'\\';
  if (s == "\\t") return U'\t';
  if (s == "\\n") return U'\n';
  if (s == "\\r") return U'\r';
  if (s.starts_with("\\u{") && s.ends_with("}")) {
    std::uint32_t v = 0;
    auto hex = s.substr(3, s.size() - 4);
    auto [p, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), v, 16);
    if (ec != std::errc() || p != hex.data() + hex.size())
      throw ParseError(lineno, "bad escape '" + std::string(s) + "'");
    return static_cast<char32_t>(v);
  }
  const auto cps = unicode::decode(s);
  if (cps.size() != 1) throw ParseError(lineno, "expected one character, got '" + std::string(s) + "'");
  return cps[0];
}

/// Splits "index<TAB>entry" lines, checking that indices run 0, 1, 2, ...
std::vector<std::string> indexed_entries(std::string_view text) {
  std::vector<std::string> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(lineno, "expected 'index<TAB>entry'");
    std::size_t idx = 0;
    auto [p, ec] = std::from_chars(line.data(), line.data() + tab, idx);
    if (ec != std::errc() || p != line.data() + tab)
      throw ParseError(lineno, "bad index '" + line.substr(0, tab) + "'");
    if (idx != entries.size())
      throw ParseError(lineno, "index " + std::to_string(idx) + " out of order (expected " +
                                   std::to_string(entries.size()) + ")");
    entries.push_back(line.substr(tab + 1));
  }
  return entries;
}

bool is_word_char(char32_t c) { return c == U'_' || unicode::is_alnum(c); }

}  // namespace

// ---------------------------------------------------------------------------

CharVocab::CharVocab() : chars_{0, 0} {}

CharVocab CharVocab::from_chars(const std::vector<char32_t>& chars) {
  CharVocab v;
  for (char32_t c : chars) {
    if (v.index_.contains(c)) continue;
    v.index_[c] = static_cast<int>(v.chars_.size());
    v.chars_.push_back(c);
  }
  return v;
}

CharVocab CharVocab::build(const std::vector<std::string>& texts, std::size_t min_count) {
  std::map<char32_t, std::size_t> counts;
  for (const auto& t : texts)
    for (char32_t c : unicode::to_lower(unicode::decode(t))) ++counts[c];
  std::vector<char32_t> keep;
  for (const auto& [c, n] : counts)
    if (n >= min_count) keep.push_back(c);
  return from_chars(keep);
}

int CharVocab::index_of(char32_t c) const {
  auto it = index_.find(c);
  return it == index_.end() ? kUnkIndex : it->second;
}

std::string CharVocab::serialize() const {
  std::string out = "0\t<pad>\n1\t<unk>\n";
  for (std::size_t i = 2; i < chars_.size(); ++i)
    out += std::to_string(i) + "\t" + escape_char(chars_[i]) + "\n";
  return out;
}

CharVocab CharVocab::parse(std::string_view text) {
  const auto entries = indexed_entries(text);
  if (entries.size() < 2 || entries[0] != "<pad>" || entries[1] != "<unk>")
    throw ParseError(1, "character vocabulary must start with <pad> and <unk>");
  std::vector<char32_t> chars;
  for (std::size_t i = 2; i < entries.size(); ++i) chars.push_back(unescape_char(entries[i], i + 1));
  CharVocab v = from_chars(chars);
  if (v.size() != entries.size()) throw ParseError(1, "duplicate character in vocabulary");
  return v;
}

HashtagVocab HashtagVocab::from_tags(std::vector<std::string> tags) {
  HashtagVocab v;
  for (auto& t : tags) {
    if (v.index_.contains(t)) continue;
    v.index_[t] = static_cast<int>(v.tags_.size());
    v.tags_.push_back(std::move(t));
  }
  return v;
}

HashtagVocab HashtagVocab::build(const std::vector<std::vector<std::string>>& tag_sets,
                                 std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& set : tag_sets)
    for (const auto& t : set) ++counts[unicode::encode(unicode::to_lower(unicode::decode(t)))];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [t, n] : counts)
    if (n >= min_count) kept.emplace_back(t, n);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tags;
  for (auto& [t, n] : kept) tags.push_back(t);
  return from_tags(std::move(tags));
}

std::optional<int> HashtagVocab::index_of(std::string_view tag) const {
  auto it = index_.find(tag);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string HashtagVocab::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < tags_.size(); ++i) out += std::to_string(i) + "\t" + tags_[i] + "\n";
  return out;
}

HashtagVocab HashtagVocab::parse(std::string_view text) {
  auto entries = indexed_entries(text);
  const auto n = entries.size();
  HashtagVocab v = from_tags(std::move(entries));
  if (v.size() != n) throw ParseError(1, "duplicate hashtag in vocabulary");
  return v;
}

std::vector<int> char_encode(std::string_view text, const CharVocab& vocab) {
  std::u32string cps = unicode::to_lower(unicode::decode(text));
  if (cps.size() > kMaxTweetChars) cps.resize(kMaxTweetChars);
  std::vector<int> seq;
  seq.reserve(cps.size());
  for (char32_t c : cps) seq.push_back(vocab.index_of(c));
  return seq;
}

// ---------------------------------------------------------------------------

EncoderConfig EncoderParams::config() const {
  return {static_cast<int>(embedding.cols()), static_cast<int>(forward.hidden()),
          static_cast<int>(W_f.rows())};
}

EncoderParams EncoderParams::zeros(std::size_t vocab, const EncoderConfig& c) {
  EncoderParams p;
  p.embedding = Matrix::Zero(static_cast<Eigen::Index>(vocab), c.char_dim);
  p.forward = GruParams<double>::zeros(c.hidden, c.char_dim);
  p.backward = GruParams<double>::zeros(c.hidden, c.char_dim);
  p.W_f = Matrix::Zero(c.embed_dim, c.hidden);
  p.W_b = Matrix::Zero(c.embed_dim, c.hidden);
  p.b_c = Vector::Zero(c.embed_dim);
  return p;
}

EncoderParams EncoderParams::init(std::size_t vocab, const EncoderConfig& c, Rng& rng) {
  EncoderParams p = zeros(vocab, c);
  p.embedding = xavier_init(static_cast<Eigen::Index>(vocab), c.char_dim, rng);
  for (auto* g : {&p.forward, &p.backward}) {
    for (auto* w : {&g->W_z, &g->W_r, &g->W_h}) *w = xavier_init(c.hidden, c.char_dim, rng);
    for (auto* u : {&g->U_z, &g->U_r, &g->U_h}) *u = xavier_init(c.hidden, c.hidden, rng);
  }
  p.W_f = xavier_init(c.embed_dim, c.hidden, rng);
  p.W_b = xavier_init(c.embed_dim, c.hidden, rng);
  return p;
}

GruRun run_gru(const std::vector<Vector>& inputs, const GruParams<double>& p) {
  GruRun run;
  run.final_state = Vector::Zero(p.hidden());
  run.steps.reserve(inputs.size());
  for (const auto& x : inputs) {
    auto step = gru_cell_forward(x, run.final_state, p);
    run.final_state = std::move(step.h);
    run.steps.push_back(std::move(step.cache));
  }
  return run;
}

namespace {

std::vector<Vector> embed(std::span<const int> seq, const EncoderParams& p, bool reversed) {
  std::vector<Vector> xs;
  xs.reserve(seq.size());
  for (std::size_t k = 0; k < seq.size(); ++k) {
    const int idx = reversed ? seq[seq.size() - 1 - k] : seq[k];
    if (idx < 0 || idx >= p.vocab_size())
      throw std::out_of_range("encode_tweet: character index " + std::to_string(idx) +
                              " outside vocabulary of " + std::to_string(p.vocab_size()));
    xs.emplace_back(p.embedding.row(idx).transpose());
  }
  return xs;
}

}  // namespace

EncoderTrace encode_with_trace(std::span<const int> seq, const EncoderParams& p) {
  EncoderTrace t;
  t.seq.assign(seq.begin(), seq.end());
  t.fwd = run_gru(embed(seq, p, false), p.forward);
  t.bwd = run_gru(embed(seq, p, true), p.backward);
  t.embedding = p.W_f * t.fwd.final_state;
  t.embedding.noalias() += p.W_b * t.bwd.final_state;
  t.embedding += p.b_c;
  return t;
}

Vector encode_tweet(std::span<const int> seq, const EncoderParams& p) {
  return encode_with_trace(seq, p).embedding;
}

void encoder_backward(const Vector& d_emb, const EncoderTrace& t, const EncoderParams& p,
                      EncoderGrads& acc) {
  acc.W_f.noalias() += d_emb * t.fwd.final_state.transpose();
  acc.W_b.noalias() += d_emb * t.bwd.final_state.transpose();
  acc.b_c += d_emb;
  const std::size_t n = t.seq.size();

  Vector dh = p.W_f.transpose() * d_emb;
  for (std::size_t k = n; k-- > 0;) {
    auto g = gru_cell_backward(dh, t.fwd.steps[k], p.forward, acc.forward);
    acc.embedding.row(t.seq[k]) += g.dx.transpose();
    dh = std::move(g.dh_prev);
  }
  dh = p.W_b.transpose() * d_emb;
  for (std::size_t k = n; k-- > 0;) {
    auto g = gru_cell_backward(dh, t.bwd.steps[k], p.backward, acc.backward);
    acc.embedding.row(t.seq[n - 1 - k]) += g.dx.transpose();
    dh = std::move(g.dh_prev);
  }
}

Matrix encode_batch(const std::vector<std::string>& texts, const CharVocab& vocab,
                    const EncoderParams& p) {
  Matrix out(static_cast<Eigen::Index>(texts.size()), p.W_f.rows());
  for (std::size_t i = 0; i < texts.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) =
        encode_tweet(char_encode(texts[i], vocab), p).transpose();
  return out;
}

// ---------------------------------------------------------------------------

HashtagExample split_hashtags(std::string_view text) {
  HashtagExample ex;
  const std::u32string cps = unicode::decode(text);
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && unicode::is_whitespace(cps[i])) ++i;
    std::size_t j = i;
    while (j < cps.size() && !unicode::is_whitespace(cps[j])) ++j;
    if (j > i) {
      std::u32string_view piece(cps.data() + i, j - i);
      if (piece.size() > 1 && piece[0] == U'#' && is_word_char(piece[1])) {
        std::size_t end = 1;
        while (end < piece.size() && is_word_char(piece[end])) ++end;
        ex.hashtags.push_back(unicode::encode(unicode::to_lower(piece.substr(0, end))));
      } else {
        if (!ex.text.empty()) ex.text += ' ';
        ex.text += unicode::encode(piece);
      }
    }
    i = j;
  }
  return ex;
}

namespace {

std::vector<ParamView> views(EncoderParams& p, EncoderGrads& g, HashtagHead& head,
                             HashtagHead& head_grad) {
  std::vector<ParamView> v;
  EncoderParams::visit(p, [&](const std::string& name, auto& t) {
    v.push_back({name, t.data(), nullptr, t.size()});
  });
  std::size_t k = 0;
  EncoderParams::visit(g, [&](const std::string&, auto& t) { v[k++].grad = t.data(); });
  v.push_back(param_view("head.W", head.W, head_grad.W));
  v.push_back(param_view("head.b", head.b, head_grad.b));
  return v;
}

Vector head_logits(const HashtagHead& head, const Vector& emb) {
  return head.W * emb + head.b;
}

}  // namespace

PretrainResult pretrain_hashtag(const std::vector<HashtagExample>& corpus,
                                const PretrainConfig& config, Rng rng) {
  if (corpus.empty()) throw InsufficientCorpusError("pretrain_hashtag: empty corpus");
  if (config.batch_size < 1 || config.epochs < 0)
    throw ConfigError("pretrain_hashtag: batch size must be >= 1 and epochs >= 0");
  PretrainResult r;
  std::vector<std::vector<std::string>> tag_sets;
  std::vector<std::string> texts;
  for (const auto& ex : corpus) {
    tag_sets.push_back(ex.hashtags);
    texts.push_back(ex.text);
  }
  r.hashtags = HashtagVocab::build(tag_sets, config.hashtag_min_count);
  if (r.hashtags.size() < 2)
    throw InsufficientCorpusError("pretrain_hashtag: need at least 2 hashtag classes with >= " +
                                  std::to_string(config.hashtag_min_count) + " uses, found " +
                                  std::to_string(r.hashtags.size()));
  r.chars = CharVocab::build(texts, config.char_min_count);

  struct Pair {
    std::vector<int> seq;
    int cls;
  };
  std::vector<Pair> pairs;
  for (const auto& ex : corpus) {
    auto seq = char_encode(ex.text, r.chars);
    for (const auto& t : ex.hashtags) {
      auto cls = r.hashtags.index_of(unicode::encode(unicode::to_lower(unicode::decode(t))));
      if (cls) pairs.push_back({seq, *cls});
    }
  }

  Rng init_rng = rng.split("encoder_init");
  Rng head_rng = rng.split("head_init");
  Rng shuffle_rng = rng.split("shuffle");
  const auto& ec = config.encoder;
  r.params = EncoderParams::init(r.chars.size(), ec, init_rng);
  const auto classes = static_cast<Eigen::Index>(r.hashtags.size());
  r.head.W = xavier_init(classes, ec.embed_dim, head_rng);
  r.head.b = Vector::Zero(classes);

  EncoderGrads grads = EncoderParams::zeros(r.chars.size(), ec);
  HashtagHead head_grad{Matrix::Zero(classes, ec.embed_dim), Vector::Zero(classes)};
  auto params = views(r.params, grads, r.head, head_grad);
  Adam adam(config.adam);

  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      EncoderParams::visit(grads, [](const std::string&, auto& t) { t.setZero(); });
      head_grad.W.setZero();
      head_grad.b.setZero();
      for (std::size_t k = start; k < end; ++k) {
        const auto& pair = pairs[order[k]];
        const EncoderTrace trace = encode_with_trace(pair.seq, r.params);
        Matrix logits = head_logits(r.head, trace.embedding).transpose();
        const int label = pair.cls;
        auto ce = softmax_cross_entropy<double>(logits, std::span(&label, 1));
        loss_sum += ce.loss;
        Vector dlogits = ce.grad.row(0).transpose() * inv_batch;
        head_grad.W.noalias() += dlogits * trace.embedding.transpose();
        head_grad.b += dlogits;
        Vector d_emb = r.head.W.transpose() * dlogits;
        encoder_backward(d_emb, trace, r.params, grads);
      }
      adam.step(params);
    }
    r.epoch_loss.push_back(pairs.empty() ? 0.0 : loss_sum / static_cast<double>(pairs.size()));
  }
  return r;
}

int predict_hashtag(std::string_view text, const PretrainResult& model) {
  const Vector emb = encode_tweet(char_encode(text, model.chars), model.params);
  Eigen::Index best = 0;
  head_logits(model.head, emb).maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace bmt
