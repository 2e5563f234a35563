#pragma once

// Character-level bidirectional GRU tweet encoder. The forward GRU reads the
// character embeddings left to right, the backward GRU right to left, both
// from a zero state; the embedding is W_f h_fwd + W_b h_bwd + b_c.
// Pre-trained on hashtag prediction with a softmax head that is then dropped.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bmt/layers.hpp"
#include "bmt/optimizer.hpp"
#include "bmt/rng.hpp"
#include "bmt/tensor.hpp"

namespace bmt {

inline constexpr int kPadIndex = 0;
inline constexpr int kUnkIndex = 1;
inline constexpr std::size_t kMaxTweetChars = 150;

class CharVocab {
 public:
  CharVocab();  // just PAD and UNK

  /// Characters (after lowercasing) seen at least `min_count` times, in
  /// code-point order after the two reserved entries.
  static CharVocab build(const std::vector<std::string>& texts, std::size_t min_count = 2);
  static CharVocab from_chars(const std::vector<char32_t>& chars);

  int index_of(char32_t c) const;
  std::size_t size() const { return chars_.size(); }
  /// chars()[0] and chars()[1] are placeholders for PAD and UNK.
  const std::vector<char32_t>& chars() const { return chars_; }

  /// One "index<TAB>entry" line per index; see README for escaping.
  std::string serialize() const;
  static CharVocab parse(std::string_view text);

  bool operator==(const CharVocab& o) const { return chars_ == o.chars_; }

 private:
  std::vector<char32_t> chars_;
  std::unordered_map<char32_t, int> index_;
};

class HashtagVocab {
 public:
  /// Hashtags (lowercased, '#' included) with at least `min_count` uses,
  /// ordered by descending count, then lexicographically.
  static HashtagVocab build(const std::vector<std::vector<std::string>>& tag_sets,
                            std::size_t min_count = 5);
  static HashtagVocab from_tags(std::vector<std::string> tags);

  std::optional<int> index_of(std::string_view tag) const;
  std::size_t size() const { return tags_.size(); }
  const std::vector<std::string>& tags() const { return tags_; }

  std::string serialize() const;
  static HashtagVocab parse(std::string_view text);

  bool operator==(const HashtagVocab& o) const { return tags_ == o.tags_; }

 private:
  std::vector<std::string> tags_;
  std::map<std::string, int, std::less<>> index_;
};

/// Lowercase, map each Unicode scalar value, truncate to 150 characters.
std::vector<int> char_encode(std::string_view text, const CharVocab& vocab);

struct EncoderConfig {
  int char_dim = 16;     // E
  int hidden = 32;       // H
  int embed_dim = 32;    // D (500 reproduces the original encoder's width)
};

struct EncoderParams {
  Matrix embedding;  // vocab x E
  GruParams<double> forward;
  GruParams<double> backward;
  Matrix W_f;  // D x H
  Matrix W_b;  // D x H
  Vector b_c;  // D

  EncoderConfig config() const;
  Eigen::Index vocab_size() const { return embedding.rows(); }

  static EncoderParams zeros(std::size_t vocab, const EncoderConfig& c);
  static EncoderParams init(std::size_t vocab, const EncoderConfig& c, Rng& rng);

  /// Visits (name, tensor) for every parameter in checkpoint order.
  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("enc.embedding", self.embedding);
    GruParams<double>::visit(self.forward, [&](const char* n, auto& t) {
      f(std::string("enc.fwd.") + n, t);
    });
    GruParams<double>::visit(self.backward, [&](const char* n, auto& t) {
      f(std::string("enc.bwd.") + n, t);
    });
    f("enc.W_f", self.W_f);
    f("enc.W_b", self.W_b);
    f("enc.b_c", self.b_c);
  }
};

using EncoderGrads = EncoderParams;

/// Runs one GRU from a zero state over the given embedded steps.
struct GruRun {
  Vector final_state;
  std::vector<GruCache<double>> steps;
};
GruRun run_gru(const std::vector<Vector>& inputs, const GruParams<double>& p);

struct EncoderTrace {
  std::vector<int> seq;
  GruRun fwd;
  GruRun bwd;  // over the reversed sequence
  Vector embedding;
};

Vector encode_tweet(std::span<const int> seq, const EncoderParams& p);
EncoderTrace encode_with_trace(std::span<const int> seq, const EncoderParams& p);
/// Accumulates parameter gradients for dL/d(embedding) into `acc`.
void encoder_backward(const Vector& d_embedding, const EncoderTrace& trace,
                      const EncoderParams& p, EncoderGrads& acc);

Matrix encode_batch(const std::vector<std::string>& texts, const CharVocab& vocab,
                    const EncoderParams& p);

// ---------------------------------------------------------------------------
// Hashtag pre-training.

struct HashtagExample {
  std::string text;
  std::vector<std::string> hashtags;
};

/// Text with hashtag tokens removed plus the hashtags it carried.
HashtagExample split_hashtags(std::string_view text);

struct PretrainConfig {
  EncoderConfig encoder;
  int epochs = 10;
  int batch_size = 16;
  AdamConfig adam{.step_size = 5e-3};
  std::size_t hashtag_min_count = 5;
  std::size_t char_min_count = 2;
};

class InsufficientCorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HashtagHead {
  Matrix W;  // classes x D
  Vector b;
};

struct PretrainResult {
  EncoderParams params;
  CharVocab chars;
  HashtagVocab hashtags;
  std::vector<double> epoch_loss;
  // Kept for diagnostics (held-out accuracy); never written to checkpoints.
  HashtagHead head;
};

PretrainResult pretrain_hashtag(const std::vector<HashtagExample>& corpus,
                                const PretrainConfig& config, Rng rng);

/// Argmax hashtag class for a text under a pre-trained encoder and head.
int predict_hashtag(std::string_view text, const PretrainResult& model);

}  // namespace bmt
