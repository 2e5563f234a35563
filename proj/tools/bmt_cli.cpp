// bmt: command-line front end for the blackmarket tweet detector.
//
// Exit codes: 0 success, 1 runtime or verification failure, 2 usage or
// schema error. Every written artifact gets a "<path>.provenance" sidecar
// holding the resolved configuration and digests of the inputs.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bmt/archive.hpp"
#include "bmt/dataset.hpp"
#include "bmt/encoder.hpp"
#include "bmt/evaluation.hpp"
#include "bmt/features.hpp"
#include "bmt/model.hpp"
#include "bmt/synth.hpp"
#include "bmt/verify/suite.hpp"

namespace {

using namespace bmt;
using Json = nlohmann::ordered_json;

constexpr const char* kToolVersion = "1.0.0";

/// Maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_digest(const std::string& path) {
  return "fnv1a64:" + hex64(Rng::fnv1a(read_file(path)));
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Provenance {
 public:
  Provenance(const CLI::App* sub) : sub_(sub) {}

  void input(const std::string& role, const std::string& path) {
    if (!path.empty()) inputs_ += "input." + role + "=" + path + " " + file_digest(path) + "\n";
  }
  void note(const std::string& key, const std::string& value) {
    notes_ += key + "=" + value + "\n";
  }
  void write_for(const std::string& artifact) const {
    std::string text = "# bmt " + std::string(kToolVersion) + " " + sub_->get_name() + "\n";
    text += "[resolved]\n" + sub_->config_to_str(true, false);
    if (!inputs_.empty()) text += "[inputs]\n" + inputs_;
    if (!notes_.empty()) text += "[notes]\n" + notes_;
    write_file(artifact + ".provenance", text);
  }

 private:
  const CLI::App* sub_;
  std::string inputs_;
  std::string notes_;
};

// ---------------------------------------------------------------------------
// Shared option groups.

struct LexiconOptions {
  std::string sentiment_path;
  std::string pos_path;

  void add(CLI::App* app) {
    app->add_option("--sentiment-lexicon", sentiment_path,
                    "token<TAB>polarity file (default: built-in demo lexicon)")
        ->check(CLI::ExistingFile);
    app->add_option("--pos-lexicon", pos_path,
                    "[words]/[suffixes] tagger file (default: built-in demo lexicon)")
        ->check(CLI::ExistingFile);
  }

  SentimentLexicon sentiment(Provenance& prov) const {
    if (sentiment_path.empty()) return builtin_sentiment_lexicon();
    prov.input("sentiment_lexicon", sentiment_path);
    auto load = load_sentiment_lexicon(sentiment_path);
    for (const auto& w : load.warnings) std::cerr << "warning: " << sentiment_path << ": " << w << "\n";
    return load.lexicon;
  }
  PosLexicon pos(Provenance& prov) const {
    if (pos_path.empty()) return builtin_pos_lexicon();
    prov.input("pos_lexicon", pos_path);
    auto load = load_pos_lexicon(pos_path);
    for (const auto& w : load.warnings) std::cerr << "warning: " << pos_path << ": " << w << "\n";
    return load.lexicon;
  }
};

struct ModelOptions {
  std::string architecture = "multitask";
  std::vector<int> hidden{128, 64};
  std::string stitch_init = "biased";
  double stitch_self = 0.9;
  double stitch_cross = 0.1;
  bool freeze_stitches = false;
  double dropout = 0.5;
  bool no_batch_norm = false;
  double lambda = 0.1;
  double learning_rate = 1e-3;
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 1;
  bool raw_targets = false;
  bool fine_tune_encoder = false;

  void add(CLI::App* app, bool with_architecture) {
    if (with_architecture)
      app->add_option("--architecture", architecture, "multitask, single_task or concat_mlp")
          ->check(CLI::IsMember({"multitask", "single_task", "concat_mlp"}));
    app->add_option("--hidden", hidden, "hidden widths, comma separated")->delimiter(',');
    app->add_option("--stitch-init", stitch_init, "identity or biased")
        ->check(CLI::IsMember({"identity", "biased"}));
    app->add_option("--stitch-self", stitch_self, "diagonal stitch weight for biased init");
    app->add_option("--stitch-cross", stitch_cross, "off-diagonal stitch weight for biased init");
    app->add_flag("--freeze-stitches", freeze_stitches, "keep stitch weights at their init");
    app->add_option("--dropout", dropout, "dropout rate in [0, 1)");
    app->add_flag("--no-batch-norm", no_batch_norm, "disable batch-norm");
    app->add_option("--lambda", lambda, "weight of the engagement regression loss");
    app->add_option("--learning-rate", learning_rate, "Adam step size");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--batch-size", batch_size, "mini-batch size");
    app->add_option("--seed", seed, "random seed");
    app->add_flag("--raw-targets", raw_targets, "regress raw counts instead of standardised log1p");
    if (with_architecture)
      app->add_flag("--fine-tune-encoder", fine_tune_encoder,
                    "back-propagate into the encoder (stored in the checkpoint)");
  }

  ModelConfig resolve(int embed_dim) const {
    ModelConfig c;
    c.architecture = *parse_architecture(architecture);
    c.embed_dim = embed_dim;
    c.hidden = hidden;
    c.stitch_init.mode = stitch_init == "identity" ? StitchInitMode::kIdentity : StitchInitMode::kBiased;
    c.stitch_init.self_weight = stitch_self;
    c.stitch_init.cross_weight = stitch_cross;
    c.freeze_stitches = freeze_stitches;
    c.dropout = dropout;
    c.batch_norm = !no_batch_norm;
    c.lambda = lambda;
    c.adam.step_size = learning_rate;
    c.epochs = epochs;
    c.batch_size = batch_size;
    c.seed = seed;
    c.encoder_frozen = !fine_tune_encoder;
    c.raw_targets = raw_targets;
    c.validate();
    return c;
  }
};

EncoderBundle load_encoder(const std::string& path, Provenance& prov) {
  prov.input("encoder", path);
  return encoder_from_archive(read_archive(path));
}

Dataset load_input(const std::string& path, Provenance& prov) {
  prov.input("data", path);
  return load_dataset(path);
}

// ---------------------------------------------------------------------------
// Subcommands.

struct SynthCmd {
  std::string out;
  std::uint64_t seed = 1;
  SynthConfig cfg;

  void add(CLI::App* app) {
    app->add_option("--out", out, "output dataset (JSON lines)")->required();
    app->add_option("--seed", seed, "generator seed");
    app->add_option("--n-blackmarket", cfg.n_blackmarket, "blackmarket tweets");
    app->add_option("--n-genuine", cfg.n_genuine, "genuine tweets");
    app->add_option("--difficulty", cfg.difficulty, "fraction of boundary examples per class");
    app->add_option("--genuine-url-prob", cfg.genuine_url_prob, "link probability for genuine tweets");
    app->add_option("--blackmarket-retweet-mean", cfg.blackmarket_retweet_mean);
    app->add_option("--blackmarket-like-mean", cfg.blackmarket_like_mean);
    app->add_option("--genuine-retweet-mean", cfg.genuine_retweet_mean);
    app->add_option("--genuine-like-mean", cfg.genuine_like_mean);
    app->add_option("--count-dispersion", cfg.count_dispersion, "negative-binomial shape");
  }

  int run(const CLI::App* sub) const {
    const Dataset d = synth_generate(cfg, seed);
    write_dataset(out, d);
    Provenance prov(sub);
    std::istringstream lines(cfg.describe());
    for (std::string l; std::getline(lines, l);) prov.note("generator." + l.substr(0, l.find('=')), l.substr(l.find('=') + 1));
    prov.write_for(out);
    std::cerr << "wrote " << d.records.size() << " records to " << out << "\n";
    return 0;
  }
};

struct FilterCmd {
  std::string in, out, rejections;

  void add(CLI::App* app) {
    app->add_option("--in", in, "input dataset")->required()->check(CLI::ExistingFile);
    app->add_option("--out", out, "filtered dataset")->required();
    app->add_option("--rejections", rejections, "rejection log (id<TAB>reason<TAB>detail)");
  }

  int run(const CLI::App* sub) const {
    Provenance prov(sub);
    const Dataset d = load_input(in, prov);
    const FilterResult r = filter_dataset(d);
    std::string log;
    for (const auto& rej : r.rejections)
      log += rej.id + "\t" + std::string(reject_reason_name(rej.reason)) + "\t" + rej.detail + "\n";
    if (rejections.empty()) {
      std::cerr << log;
    } else {
      write_file(rejections, log);
      prov.write_for(rejections);
    }
    write_dataset(out, r.dataset);
    prov.note("kept", std::to_string(r.dataset.records.size()));
    prov.note("rejected", std::to_string(r.rejections.size()));
    prov.write_for(out);
    std::cerr << "kept " << r.dataset.records.size() << ", rejected " << r.rejections.size() << "\n";
    return 0;
  }
};

struct PretrainCmd {
  std::string corpus, out;
  std::uint64_t seed = 1;
  PretrainConfig cfg;

  void add(CLI::App* app) {
    app->add_option("--corpus", corpus, "dataset whose texts carry hashtags")->required()->check(CLI::ExistingFile);
    app->add_option("--out", out, "encoder checkpoint")->required();
    app->add_option("--seed", seed, "random seed");
    app->add_option("--epochs", cfg.epochs, "pre-training epochs");
    app->add_option("--batch-size", cfg.batch_size, "mini-batch size");
    app->add_option("--learning-rate", cfg.adam.step_size, "Adam step size");
    app->add_option("--char-dim", cfg.encoder.char_dim, "character embedding width E");
    app->add_option("--gru-hidden", cfg.encoder.hidden, "GRU state width H");
    app->add_option("--embed-dim", cfg.encoder.embed_dim, "tweet embedding width D");
    app->add_option("--hashtag-min-count", cfg.hashtag_min_count, "minimum uses per hashtag class");
    app->add_option("--char-min-count", cfg.char_min_count, "minimum uses per character");
  }

  int run(const CLI::App* sub) const {
    if (cfg.encoder.char_dim < 1 || cfg.encoder.hidden < 1 || cfg.encoder.embed_dim < 1)
      throw ConfigError("encoder widths must be >= 1");
    Provenance prov(sub);
    const Dataset d = load_input(corpus, prov);
    std::vector<HashtagExample> examples;
    for (const auto& r : d.records) examples.push_back(split_hashtags(r.text));
    const PretrainResult res = pretrain_hashtag(examples, cfg, Rng(seed));
    write_archive(out, encoder_to_archive({res.chars, res.params}));
    prov.note("hashtag_classes", std::to_string(res.hashtags.size()));
    prov.note("char_vocab", std::to_string(res.chars.size()));
    std::string losses;
    for (double l : res.epoch_loss) losses += (losses.empty() ? "" : ",") + fmt_double(l);
    prov.note("epoch_loss", losses);
    prov.write_for(out);
    std::cerr << "pre-trained encoder on " << examples.size() << " texts, "
              << res.hashtags.size() << " hashtag classes\n";
    return 0;
  }
};

struct FeaturesCmd {
  std::string data, out;
  LexiconOptions lex;

  void add(CLI::App* app) {
    app->add_option("--data", data, "input dataset")->required()->check(CLI::ExistingFile);
    app->add_option("--out", out, "feature table (TSV)")->required();
    lex.add(app);
  }

  int run(const CLI::App* sub) const {
    Provenance prov(sub);
    const Dataset d = load_input(data, prov);
    const auto sl = lex.sentiment(prov);
    const auto pl = lex.pos(prov);
    std::string text = "id";
    for (auto n : feature_names()) text += "\t" + std::string(n);
    text += "\n";
    for (const auto& r : d.records) {
      text += r.id;
      for (double v : extract_features(r, sl, pl)) text += "\t" + fmt_double(v);
      text += "\n";
    }
    write_file(out, text);
    prov.write_for(out);
    return 0;
  }
};

std::string history_tsv(const std::vector<EpochStats>& h) {
  std::string out = "epoch\ttotal\tce\tmse\ttrain_macro_f1\n";
  for (std::size_t i = 0; i < h.size(); ++i)
    out += std::to_string(i + 1) + "\t" + fmt_double(h[i].total) + "\t" + fmt_double(h[i].ce) +
           "\t" + fmt_double(h[i].mse) + "\t" + fmt_double(h[i].train_f1) + "\n";
  return out;
}

struct TrainCmd {
  std::string data, encoder, out;
  ModelOptions model;
  LexiconOptions lex;

  void add(CLI::App* app) {
    app->add_option("--data", data, "labelled dataset")->required()->check(CLI::ExistingFile);
    app->add_option("--encoder", encoder, "encoder checkpoint")->required()->check(CLI::ExistingFile);
    app->add_option("--out", out, "model checkpoint")->required();
    model.add(app, true);
    lex.add(app);
  }

  int run(const CLI::App* sub) const {
    Provenance prov(sub);
    const Dataset d = load_input(data, prov);
    const EncoderBundle enc = load_encoder(encoder, prov);
    const ModelConfig cfg = model.resolve(static_cast<int>(enc.params.W_f.rows()));
    const Featurized f = featurize(d, enc, lex.sentiment(prov), lex.pos(prov));
    std::vector<std::size_t> all(d.records.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const TrainData td = select(f, all);
    std::optional<FineTuneInputs> ft;
    if (!cfg.encoder_frozen) ft = FineTuneInputs{enc.params, f.sequences};
    const TrainResult res = train(td, cfg, ft ? &*ft : nullptr);
    save_checkpoint(out, res.checkpoint);
    prov.write_for(out);
    const std::string hist = out + ".history.tsv";
    write_file(hist, history_tsv(res.history));
    prov.write_for(hist);
    if (!res.history.empty())
      std::cerr << "final epoch: loss " << res.history.back().total << ", train macro F1 "
                << res.history.back().train_f1 << "\n";
    return 0;
  }
};

struct EvalCmd {
  std::string data, encoder, out, model_path;
  std::size_t folds = 5;
  ModelOptions model;
  LexiconOptions lex;

  void add(CLI::App* app) {
    app->add_option("--data", data, "labelled dataset")->required()->check(CLI::ExistingFile);
    app->add_option("--encoder", encoder, "encoder checkpoint")->required()->check(CLI::ExistingFile);
    app->add_option("--out", out, "report (JSON)")->required();
    app->add_option("--model", model_path,
                    "evaluate this checkpoint on the data instead of cross-validating")
        ->check(CLI::ExistingFile);
    app->add_option("--folds", folds, "cross-validation folds");
    model.add(app, false);
    lex.add(app);
  }

  int run(const CLI::App* sub) const {
    Provenance prov(sub);
    const Dataset d = load_input(data, prov);
    const EncoderBundle enc = load_encoder(encoder, prov);
    const Featurized f = featurize(d, enc, lex.sentiment(prov), lex.pos(prov));
    std::string json, table;
    if (!model_path.empty()) {
      prov.input("model", model_path);
      const ModelCheckpoint cp = load_checkpoint(model_path);
      std::vector<std::size_t> all(d.records.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      const TrainData td = select(f, all);
      const Matrix emb = cp.encoder ? encode_all_sequences(*cp.encoder, f.sequences) : td.embeddings;
      const Prediction p = predict(cp, emb, td.features);
      ComparisonReport rep;
      rep.k = 1;
      ComparisonRow row;
      row.name = std::string(architecture_name(cp.config.architecture));
      row.config = cp.config;
      row.folds.push_back(compute_metrics(p.labels, td.labels));
      row.pooled = row.folds.back();
      row.fn_breakdown = fn_breakdown(p.labels, td.labels, f.categories);
      rep.rows.push_back(std::move(row));
      json = report_json(rep);
      table = report_table(rep);
    } else {
      ModelConfig base = model.resolve(static_cast<int>(enc.params.W_f.rows()));
      const ComparisonReport rep = run_comparison(f, comparison_configs(base), folds, model.seed);
      json = report_json(rep);
      table = report_table(rep);
    }
    write_file(out, json);
    prov.write_for(out);
    std::cout << table;
    return 0;
  }

  static Matrix encode_all_sequences(const EncoderParams& p, const std::vector<std::vector<int>>& seqs) {
    Matrix out(static_cast<Eigen::Index>(seqs.size()), p.W_f.rows());
    for (std::size_t i = 0; i < seqs.size(); ++i)
      out.row(static_cast<Eigen::Index>(i)) = encode_tweet(seqs[i], p).transpose();
    return out;
  }
};

struct PredictCmd {
  std::string model_path, encoder, data, text, out;
  LexiconOptions lex;

  void add(CLI::App* app) {
    app->add_option("--model", model_path, "model checkpoint")->required()->check(CLI::ExistingFile);
    app->add_option("--encoder", encoder, "encoder checkpoint (character vocabulary)")
        ->required()
        ->check(CLI::ExistingFile);
    auto* d = app->add_option("--data", data, "dataset to score")->check(CLI::ExistingFile);
    auto* t = app->add_option("--text", text, "score a single tweet text");
    d->excludes(t);
    app->add_option("--out", out, "predictions (JSON lines); standard output when omitted");
    lex.add(app);
  }

  int run(const CLI::App* sub) const {
    if (data.empty() && text.empty()) throw UsageError("predict needs --data or --text");
    Provenance prov(sub);
    Dataset d;
    if (!data.empty()) {
      d = load_input(data, prov);
    } else {
      TweetRecord r;
      r.id = "text";
      r.text = text;
      d.records.push_back(r);
    }
    prov.input("model", model_path);
    const ModelCheckpoint cp = load_checkpoint(model_path);
    EncoderBundle enc = load_encoder(encoder, prov);
    if (cp.encoder) enc.params = *cp.encoder;
    const Featurized f = featurize(d, enc, lex.sentiment(prov), lex.pos(prov));
    const Prediction p = predict(cp, f.embeddings, f.features);
    std::string lines;
    for (std::size_t i = 0; i < d.records.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      Json j;
      j["id"] = d.records[i].id;
      j["label"] = std::string(label_name(static_cast<Label>(p.labels[i])));
      j["probability_blackmarket"] = p.probabilities(row, 1);
      if (p.engagement.size() > 0) {
        j["retweets_5d"] = p.engagement(row, 0);
        j["likes_5d"] = p.engagement(row, 1);
      } else {
        j["retweets_5d"] = nullptr;
        j["likes_5d"] = nullptr;
      }
      lines += j.dump() + "\n";
    }
    if (out.empty()) {
      std::cout << lines;
    } else {
      write_file(out, lines);
      prov.write_for(out);
    }
    return 0;
  }
};

struct VerifyCmd {
  verify::SuiteOptions opt;

  void add(CLI::App* app) {
    app->add_option("--seed", opt.seed, "seed for the random configurations");
    app->add_option("--configs", opt.configs_per_case, "random configurations per gradient check");
    // Test fixture: corrupts one analytic gradient to prove the suite notices.
    app->add_option("--inject-gradient-fault", opt.fault_scale)->group("");
  }

  int run(const CLI::App*) const {
    bool ok = true;
    for (const auto& r : verify::run_all(opt)) {
      std::printf("%-4s  %-24s  measured %.3e  threshold %.0e  %s\n", r.passed ? "PASS" : "FAIL",
                  r.name.c_str(), r.measured, r.threshold, r.detail.c_str());
      ok = ok && r.passed;
    }
    std::fflush(stdout);
    return ok ? 0 : 1;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blackmarket tweet detection: data, training, evaluation and verification"};
  app.set_version_flag("--version", kToolVersion);
  app.set_config("--config", "",
                 "TOML/INI file with one [subcommand] section of defaults; flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  SynthCmd synth;
  FilterCmd filter;
  PretrainCmd pretrain;
  FeaturesCmd features;
  TrainCmd train_cmd;
  EvalCmd eval;
  PredictCmd predict_cmd;
  VerifyCmd verify_cmd;

  struct Entry {
    CLI::App* app;
    std::function<int(const CLI::App*)> run;
  };
  std::vector<Entry> entries;
  auto add = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.add(sub);
    entries.push_back({sub, [&cmd](const CLI::App* s) { return cmd.run(s); }});
  };
  add("synth", "generate a synthetic labelled dataset", synth);
  add("filter", "drop short and non-English tweets", filter);
  add("pretrain-encoder", "pre-train the character encoder on hashtag prediction", pretrain);
  add("features", "write the twelve content features per tweet", features);
  add("train", "train a model on a labelled dataset", train_cmd);
  add("eval", "cross-validate the three models, or score a checkpoint", eval);
  add("predict", "label tweets and estimate their engagement", predict_cmd);
  add("verify", "run gradient checks and oracle comparisons", verify_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (const auto& e : entries)
      if (e.app->parsed()) return e.run(e.app);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
