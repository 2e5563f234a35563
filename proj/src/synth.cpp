#include "bmt/synth.hpp"

#include <charconv>
#include <cstdio>
#include <cmath>
#include <map>
#include <numeric>
#include <string_view>

#include "bmt/rng.hpp"

namespace bmt {

namespace {

using Pool = std::vector<std::string_view>;

template <typename T>
const T& pick(const std::vector<T>& pool, Rng& rng) {
  return pool[static_cast<std::size_t>(rng.uniform_int(pool.size()))];
}

// Slot fillers. Templates reference them as {name}.
const std::map<std::string_view, Pool>& slots() {
  static const std::map<std::string_view, Pool> s{
      {"brand", {"Appingine", "ShopKart", "GlowSkin", "FitGear", "TechNest", "UrbanWear",
                 "HomeChef", "TravelNow", "PixelWorks", "BrightSmile"}},
      {"product", {"smartwatch", "running shoes", "face serum", "phone case", "coffee maker",
                   "gaming headset", "yoga mat", "backpack", "wireless earbuds", "desk lamp"}},
      {"service", {"custom app development", "web design", "logo design", "SEO packages",
                   "social media marketing", "video editing", "home cleaning", "tutoring"}},
      {"occasion", {"Easter", "weekend", "summer", "festive season", "Black Friday", "new year"}},
      {"pct", {"20", "30", "40", "50", "60", "70"}},
      {"artist", {"DJ Nova", "The Lanterns", "Mira Kaye", "Rohit Beats", "Luna Park"}},
      {"show", {"Night Shift", "the cooking show", "Star Quest", "the finale", "Open Mic"}},
      {"content", {"vlogs", "comedy sketches", "music covers", "gaming videos", "recipes"}},
      {"amount", {"100", "250", "500", "1000"}},
      {"prize", {"iPhone", "gift card", "laptop", "holiday trip", "PS5"}},
      {"topic", {"fuel prices", "the budget", "the storm", "the election results",
                 "the new metro line", "the stock market"}},
      {"candidate", {"Ravi Menon", "Sarah Cole", "our party", "the youth wing"}},
      {"cause", {"clean rivers", "free education", "farmers rights", "animal welfare"}},
      {"place", {"Kerala", "the flood victims", "our soldiers", "everyone affected"}},
      {"activity", {"a long run", "my homework", "the laundry", "a great book", "work"}},
      {"mood", {"tired", "happy", "so relaxed", "sleepy", "proud of myself"}},
      {"food", {"pizza", "pasta", "biryani", "tacos", "noodles", "a sandwich"}},
      {"adj", {"amazing", "meh", "really good", "too spicy", "perfect"}},
      {"team", {"City", "the Lakers", "our school team", "India", "Madrid"}},
      {"friend", {"bro", "sis", "mate", "Anna", "Sam"}},
      {"day", {"Friday", "Monday again", "the end of the month", "December"}},
      {"thing", {"lovely gift", "kind words", "help yesterday", "advice", "birthday wishes"}},
      {"book", {"Dune", "Harry Potter", "my old notes", "that mystery novel"}},
      {"headline", {"Google vows to double podcast audience with new Android app",
                    "City council approves new bike lanes",
                    "Scientists spot a new comet this week",
                    "Local bakery wins national award"}},
      {"outlet", {"usatoday", "bbcnews", "reuters", "guardian"}},
  };
  return s;
}

struct TemplateSet {
  Pool bodies;
  Pool hashtags;
};

// Blackmarket pools, indexed by Category.
const std::array<TemplateSet, kNumCategories>& blackmarket_pools() {
  static const std::array<TemplateSet, kNumCategories> p{{
      {{"{brand} offers {service} at an amazing price.",
        "Get {pct}% off on {product} this {occasion}!",
        "Order your {product} from {brand} now and save big.",
        "Check out the new {product} collection by {brand}.",
        "This {occasion} give life to your idea with {brand}."},
       {"#sale", "#deal", "#offer", "#shopnow", "#appdev", "#webdev", "#discount", "#iosdev"}},
      {{"Watch the new video by {artist} now!",
        "Stream {artist}'s new single today.",
        "New episode of {show} is out now.",
        "Subscribe to my channel for daily {content}."},
       {"#music", "#newmusic", "#youtube", "#video", "#subscribe", "#trending"}},
      {{"Earn ${amount} per day from home!!",
        "Get {amount} free followers instantly.",
        "Win a free {prize}, just retweet and follow.",
        "Click here to claim your {prize} now!!"},
       {"#free", "#win", "#followback", "#giveaway", "#money", "#rt"}},
      {{"Breaking: {headline}.",
        "Read the full story on {topic}.",
        "Latest update on {topic}, share widely."},
       {"#breaking", "#news", "#update", "#headlines"}},
      {{"Vote for {candidate} in the coming election.",
        "Support {cause}, sign the petition today.",
        "Join the rally for {cause} this Sunday."},
       {"#vote", "#election", "#petition", "#support"}},
      {{"Good morning everyone, have a great day.",
        "Pray for {place}.",
        "Feeling blessed today, thank you all.",
        "Finally finished {activity}, please share."},
       {"#blessed", "#pray", "#love", "#goodmorning", "#life"}},
  }};
  return p;
}

const Pool& call_to_action() {
  static const Pool p{"Call now", "Visit", "Shop now", "Don't miss out!", "Limited offer!",
                      "Click the link", "Order today", "RT and share", "Follow us"};
  return p;
}

const TemplateSet& genuine_pool() {
  static const TemplateSet p{
      {"just finished {activity}, feeling {mood}",
       "anyone else watching {show} tonight?",
       "can't believe it's already {day}",
       "had {food} for lunch and it was {adj}",
       "{team} played so well last night",
       "happy birthday {friend}, have a good one",
       "thanks for the {thing}",
       "lol that's so true",
       "reading {book} again, still {adj}",
       "{headline}"},
      {"#mondaymotivation", "#coffee", "#weekend", "#tbt", "#football", "#books", "#foodie"}};
  return p;
}

const Pool& user_names() {
  static const Pool p{"alex_k", "priya", "jdoe", "newsdaily", "musicfan", "techguru", "sam99",
                      "cityfc", "bookclub", "mumbaimirror"};
  return p;
}

const Pool& shortener_hosts() {
  static const Pool p{"bit.ly", "t.co", "goo.gl", "ow.ly", "tinyurl.com"};
  return p;
}

std::string fill(std::string_view tmpl, Rng& rng) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      const auto name = tmpl.substr(i + 1, close - i - 1);
      out += pick(slots().at(name), rng);
      i = close + 1;
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

std::string short_url(Rng& rng) {
  static constexpr std::string_view kAlnum =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  std::string url = "https://";
  url += pick(shortener_hosts(), rng);
  url += '/';
  for (int i = 0; i < 7; ++i) url += kAlnum[rng.uniform_int(kAlnum.size())];
  return url;
}

std::string mention(Rng& rng) { return "@" + std::string(pick(user_names(), rng)); }

Category sample_category(const SynthConfig& c, Rng& rng) {
  const double total = std::accumulate(c.category_weights.begin(), c.category_weights.end(), 0.0);
  double u = rng.uniform01() * total;
  for (std::size_t i = 0; i < kNumCategories; ++i) {
    if (u < c.category_weights[i]) return static_cast<Category>(i);
    u -= c.category_weights[i];
  }
  return Category::kOthers;
}

struct Parts {
  std::string body;
  std::vector<std::string> mentions, hashtags, urls;
  bool reply = false;
};

std::string assemble(const Parts& p) {
  std::string text;
  auto add = [&](const std::string& piece) {
    if (piece.empty()) return;
    if (!text.empty()) text += ' ';
    text += piece;
  };
  if (p.reply) add(p.mentions.front());
  add(p.body);
  for (std::size_t i = p.reply ? 1 : 0; i < p.mentions.size(); ++i) add("via " + p.mentions[i]);
  for (const auto& u : p.urls) add(u);
  for (const auto& h : p.hashtags) add(h);
  return text;
}

void distinct_hashtags(const Pool& pool, std::size_t n, Rng& rng, std::vector<std::string>& out) {
  std::vector<std::string_view> avail(pool.begin(), pool.end());
  rng.shuffle(std::span(avail));
  for (std::size_t i = 0; i < n && i < avail.size(); ++i) out.emplace_back(avail[i]);
}

TweetRecord make_blackmarket(const SynthConfig& c, bool boundary, Rng& rng) {
  TweetRecord r;
  const Category cat = sample_category(c, rng);
  const auto& pool = blackmarket_pools()[static_cast<std::size_t>(cat)];
  Parts p;
  if (boundary) {
    // Conversational wording with a single link and hashtag.
    p.body = fill(pick(genuine_pool().bodies, rng), rng);
    p.urls.push_back(short_url(rng));
    distinct_hashtags(pool.hashtags, 1, rng, p.hashtags);
  } else {
    p.body = fill(pick(pool.bodies, rng), rng);
    if (cat != Category::kOthers) p.body += " " + std::string(pick(call_to_action(), rng));
    const auto n_urls = 1 + static_cast<std::size_t>(rng.bernoulli(0.3));
    for (std::size_t i = 0; i < n_urls; ++i) p.urls.push_back(short_url(rng));
    distinct_hashtags(pool.hashtags, 1 + static_cast<std::size_t>(rng.uniform_int(4)), rng,
                      p.hashtags);
  }
  if (rng.bernoulli(0.3)) p.mentions.push_back(mention(rng));
  p.reply = !p.mentions.empty() && rng.bernoulli(0.1);
  r.text = assemble(p);
  r.is_reply = p.reply;
  r.media_count = rng.bernoulli(0.6) ? 1u + static_cast<std::uint32_t>(rng.bernoulli(0.3)) : 0u;
  r.mentions = p.mentions;
  r.hashtags = p.hashtags;
  r.urls = p.urls;
  r.retweets_5d = rng.negative_binomial(c.blackmarket_retweet_mean, c.count_dispersion);
  r.likes_5d = rng.negative_binomial(c.blackmarket_like_mean, c.count_dispersion);
  r.label = Label::kBlackmarket;
  r.category = cat;
  return r;
}

TweetRecord make_genuine(const SynthConfig& c, bool boundary, Rng& rng) {
  TweetRecord r;
  Parts p;
  const auto& pool = genuine_pool();
  if (boundary) {
    // Promotional wording, no call to action, at most one link and hashtag.
    const auto cat = sample_category(c, rng);
    p.body = fill(pick(blackmarket_pools()[static_cast<std::size_t>(cat)].bodies, rng), rng);
    if (rng.bernoulli(0.5)) p.urls.push_back(short_url(rng));
    if (rng.bernoulli(0.5)) distinct_hashtags(pool.hashtags, 1, rng, p.hashtags);
  } else {
    p.body = fill(pick(pool.bodies, rng), rng);
    if (rng.bernoulli(c.genuine_url_prob)) p.urls.push_back(short_url(rng));
    if (rng.bernoulli(0.15)) distinct_hashtags(pool.hashtags, 1, rng, p.hashtags);
  }
  if (rng.bernoulli(0.4)) p.mentions.push_back(mention(rng));
  p.reply = !p.mentions.empty() && rng.bernoulli(0.75);
  r.text = assemble(p);
  r.is_reply = p.reply;
  r.media_count = rng.bernoulli(0.25) ? 1u : 0u;
  r.mentions = p.mentions;
  r.hashtags = p.hashtags;
  r.urls = p.urls;
  r.retweets_5d = rng.negative_binomial(c.genuine_retweet_mean, c.count_dispersion);
  r.likes_5d = rng.negative_binomial(c.genuine_like_mean, c.count_dispersion);
  r.label = Label::kGenuine;
  return r;
}

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void SynthConfig::validate() const {
  if (n_blackmarket < 1 || n_genuine < 1) throw ConfigError("class sizes must be >= 1");
  if (n_blackmarket > 10'000'000 || n_genuine > 10'000'000) throw ConfigError("class sizes too large");
  if (!(difficulty >= 0.0 && difficulty <= 1.0)) throw ConfigError("difficulty must lie in [0, 1]");
  if (!(genuine_url_prob >= 0.0 && genuine_url_prob <= 1.0))
    throw ConfigError("genuine_url_prob must lie in [0, 1]");
  for (double m : {blackmarket_retweet_mean, blackmarket_like_mean, genuine_retweet_mean,
                   genuine_like_mean})
    if (!(m > 0.0) || !std::isfinite(m)) throw ConfigError("engagement means must be positive");
  if (!(count_dispersion > 0.0)) throw ConfigError("count_dispersion must be positive");
  double total = 0.0;
  for (double w : category_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("category weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw ConfigError("category weights must not all be zero");
}

std::string SynthConfig::describe() const {
  std::map<std::string, std::string> kv;
  kv["version"] = std::to_string(kSynthVersion);
  kv["n_blackmarket"] = std::to_string(n_blackmarket);
  kv["n_genuine"] = std::to_string(n_genuine);
  kv["difficulty"] = fmt(difficulty);
  kv["genuine_url_prob"] = fmt(genuine_url_prob);
  kv["blackmarket_retweet_mean"] = fmt(blackmarket_retweet_mean);
  kv["blackmarket_like_mean"] = fmt(blackmarket_like_mean);
  kv["genuine_retweet_mean"] = fmt(genuine_retweet_mean);
  kv["genuine_like_mean"] = fmt(genuine_like_mean);
  kv["count_dispersion"] = fmt(count_dispersion);
  for (std::size_t i = 0; i < kNumCategories; ++i)
    kv["category_weight." + std::string(category_name(static_cast<Category>(i)))] =
        fmt(category_weights[i]);
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

Dataset synth_generate(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  const Rng root(seed);
  Rng bm_rng = root.split("blackmarket");
  Rng gen_rng = root.split("genuine");
  Dataset d;
  d.records.reserve(config.n_blackmarket + config.n_genuine);
  for (std::size_t i = 0; i < config.n_blackmarket; ++i)
    d.records.push_back(make_blackmarket(config, bm_rng.bernoulli(config.difficulty), bm_rng));
  for (std::size_t i = 0; i < config.n_genuine; ++i)
    d.records.push_back(make_genuine(config, gen_rng.bernoulli(config.difficulty), gen_rng));
  Rng order = root.split("order");
  order.shuffle(std::span(d.records));
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%06zu", i + 1);
    d.records[i].id = buf;
    d.records[i].lang = "en";
  }
  d.provenance = "synth seed=" + std::to_string(seed);
  return d;
}

std::vector<std::string> synth_hashtag_corpus(std::size_t per_topic, std::uint64_t seed) {
  static const std::array<Pool, 2> words{{
      {"goal", "match", "striker", "keeper", "league", "penalty", "coach", "stadium", "score",
       "derby", "kickoff", "referee"},
      {"recipe", "garlic", "oven", "butter", "spicy", "noodles", "bake", "flavour", "dinner",
       "kitchen", "sauce", "roast"},
  }};
  static const std::array<std::string_view, 2> tags{"#football", "#cooking"};
  Rng rng = Rng(seed).split("hashtag_corpus");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < 2 * per_topic; ++i) {
    const std::size_t topic = i % 2;
    std::string text;
    const auto n = 3 + rng.uniform_int(4);
    for (std::uint64_t w = 0; w < n; ++w) {
      if (!text.empty()) text += ' ';
      text += pick(words[topic], rng);
    }
    text += ' ';
    text += tags[topic];
    out.push_back(std::move(text));
  }
  return out;
}

}  // namespace bmt
