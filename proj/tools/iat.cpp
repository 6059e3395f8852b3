// Command-line driver: corpus generation, training, evaluation and inspection.

#include "iat/checkpoint.hpp"
#include "iat/corpus.hpp"
#include "iat/eval.hpp"
#include "iat/perturb.hpp"
#include "iat/train_config.hpp"
#include "iat/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace iat;

namespace {

using Scalar = float;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : ConfigError
{
  using ConfigError::ConfigError;
};

struct Corpus
{
  Vocabulary            vocab;
  PosLexicon            pos;
  std::vector<Dialogue> train, valid, test;
};

Corpus load_corpus(fs::path const &dir)
{
  for (auto name : {"train.jsonl", "valid.jsonl", "test.jsonl", "vocab.txt", "pos.txt"}) {
    if (!fs::exists(dir / name)) {
      throw UsageError("corpus directory " + dir.string() + " has no " + name);
    }
  }
  Corpus c;
  c.vocab = Vocabulary::load(dir / "vocab.txt");
  c.pos = PosLexicon::load(dir / "pos.txt", c.vocab);
  c.train = load_dialogues(dir / "train.jsonl", c.vocab);
  c.valid = load_dialogues(dir / "valid.jsonl", c.vocab);
  c.test = load_dialogues(dir / "test.jsonl", c.vocab);
  return c;
}

fs::path log_path_for(fs::path const &ckpt) { return fs::path(ckpt.string() + ".log.csv"); }

void print_epoch(EpochRecord const &e)
{
  std::cout << "epoch " << e.epoch << "  train_loss " << e.train_loss << "  valid_ppl " << e.valid_ppl;
  if (e.mean_reward != 0.0 || e.mean_penalty != 0.0) {
    std::cout << "  reward " << e.mean_reward << "  penalty " << e.mean_penalty;
  }
  std::cout << "  (" << e.seconds << " s)\n" << std::flush;
}

Model<Scalar> load_model_for(fs::path const &path, Vocabulary const &vocab, std::string_view what)
{
  if (!fs::exists(path)) {
    throw UsageError(std::string(what) + " checkpoint " + path.string() + " does not exist");
  }
  auto model = load_checkpoint<Scalar>(path);
  if (model.config.vocab_size != vocab.size()) {
    throw UsageError(std::string(what) + " checkpoint vocabulary size " + std::to_string(model.config.vocab_size) +
                     " does not match the corpus (" + std::to_string(vocab.size()) + ")");
  }
  return model;
}

Model<Scalar> fresh_model(TrainConfig const &cfg, std::size_t vocab_size, ModelRole role)
{
  ModelConfig mc{vocab_size, cfg.embed_dim, cfg.hidden_dim, cfg.max_decode_len, role};
  return Model<Scalar>::random(mc, derive_seed(cfg.seed, {0x1417}), cfg.init_scale);
}

std::vector<std::uint64_t> parse_seed_list(std::string const &s)
{
  std::vector<std::uint64_t> out;
  std::stringstream          ss(s);
  std::string                item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) {
      continue;
    }
    try {
      std::size_t pos = 0;
      out.push_back(std::stoull(item, &pos));
      if (pos != item.size()) {
        throw std::invalid_argument(item);
      }
    } catch (std::exception const &) {
      throw UsageError("bad seed '" + item + "' in --seeds");
    }
  }
  if (out.empty()) {
    throw UsageError("--seeds must name at least one seed");
  }
  return out;
}

// ---------------------------------------------------------------- gen-corpus

struct GenCorpusArgs
{
  std::string out;
  SynthConfig synth;
  std::size_t max_vocab = 300;
};

int run_gen_corpus(GenCorpusArgs const &a)
{
  a.synth.validate();
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec || !fs::is_directory(a.out)) {
    throw UsageError("cannot create output directory " + a.out);
  }
  auto corpus = gen_synthetic(a.synth);

  auto const n = corpus.dialogues.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(a.synth.seed, {0x5b117}));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[uniform_int<std::size_t>(rng, 0, i - 1)]);
  }
  std::size_t const n_train = n * 8 / 10;
  std::size_t const n_valid = n / 10;
  std::vector<SurfaceDialogue> train, valid, test;
  for (std::size_t i = 0; i < n; ++i) {
    auto &dst = i < n_train ? train : (i < n_train + n_valid ? valid : test);
    dst.push_back(corpus.dialogues[order[i]]);
  }
  fs::path const dir(a.out);
  try {
    save_dialogue_surfaces(dir / "train.jsonl", train);
    save_dialogue_surfaces(dir / "valid.jsonl", valid);
    save_dialogue_surfaces(dir / "test.jsonl", test);
    Vocabulary::build(train, a.max_vocab, 1).save(dir / "vocab.txt");
    PosLexicon::save(dir / "pos.txt", corpus.pos);
  } catch (Error const &e) {
    throw UsageError(e.what());
  }
  std::cout << "wrote " << train.size() << "/" << valid.size() << "/" << test.size()
            << " train/valid/test dialogues to " << a.out << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ training

struct TrainArgs
{
  std::string corpus, config, out, init, role;
  std::size_t threads = 1;
};

TrainConfig read_config(std::string const &path)
{
  if (path.empty()) {
    return TrainConfig{};
  }
  return load_train_config(path);
}

int run_pretrain(TrainArgs const &a)
{
  auto const cfg = read_config(a.config);
  auto const corpus = load_corpus(a.corpus);
  auto const train = make_examples(corpus.train, cfg.history_window);
  auto const valid = make_examples(corpus.valid, cfg.history_window);
  auto result = pretrain_mle(fresh_model(cfg, corpus.vocab.size(), ModelRole::Forward), train, valid, cfg,
                             TrainHooks{a.threads, print_epoch});
  save_checkpoint(result.model, a.out);
  result.log.write_csv(log_path_for(a.out));
  return kExitOk;
}

int run_train_aux(TrainArgs const &a)
{
  auto role = parse_role(a.role);
  if (!role || *role == ModelRole::Forward) {
    throw UsageError("--role must be backward or response-lm");
  }
  auto const cfg = read_config(a.config);
  auto const corpus = load_corpus(a.corpus);
  auto const train = make_examples(corpus.train, cfg.history_window);
  auto const valid = make_examples(corpus.valid, cfg.history_window);
  auto result = train_auxiliary(fresh_model(cfg, corpus.vocab.size(), *role), train, valid, cfg,
                                TrainHooks{a.threads, print_epoch});
  save_checkpoint(result.model, a.out);
  result.log.write_csv(log_path_for(a.out));
  return kExitOk;
}

int run_train_iat(TrainArgs const &a)
{
  auto const cfg = read_config(a.config);
  auto const corpus = load_corpus(a.corpus);
  auto       init = load_model_for(a.init, corpus.vocab, "--init");
  auto const train = make_examples(corpus.train, cfg.history_window);
  auto const valid = make_examples(corpus.valid, cfg.history_window);
  auto const pool = utterance_pool(corpus.train);
  auto result = train_iat(std::move(init), train, valid, pool, corpus.pos, cfg, TrainHooks{a.threads, print_epoch});
  save_checkpoint(result.model, a.out);
  result.log.write_csv(log_path_for(a.out));
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs
{
  std::string corpus, ckpt, mode = "greedy", aux_lm, aux_bwd, seeds = "1,2,3,4,5", report, split = "test";
  std::string stopwords = IAT_DEFAULT_STOPWORDS;
  double      lambda = 0.5;
  std::size_t nbest = 10, beam_width = 0, limit = 0, threads = 1, history_window = kDefaultHistoryWindow;
};

int run_evaluate(EvaluateArgs const &a)
{
  auto mode = parse_decode_mode(a.mode);
  if (!mode) {
    throw UsageError("--mode must be greedy, beam, mmi-anti or mmi-bidi");
  }
  if (*mode == DecodeMode::MmiAnti && a.aux_lm.empty()) {
    throw UsageError("--mode mmi-anti needs --aux-lm");
  }
  if (*mode == DecodeMode::MmiBidi && a.aux_bwd.empty()) {
    throw UsageError("--mode mmi-bidi needs --aux-bwd");
  }
  if (!(a.lambda >= 0.0)) {
    throw UsageError("--lambda must be non-negative");
  }
  EvalConfig ec;
  ec.mode = *mode;
  ec.n_best = a.nbest;
  ec.beam_width = a.beam_width ? a.beam_width : a.nbest;
  if (ec.n_best < 1 || ec.n_best > ec.beam_width) {
    throw UsageError("--nbest must lie in [1, beam width]");
  }
  ec.mmi_lambda = a.lambda;
  ec.seeds = parse_seed_list(a.seeds);
  ec.threads = a.threads;

  auto const corpus = load_corpus(a.corpus);
  auto const model = load_model_for(a.ckpt, corpus.vocab, "--ckpt");
  std::optional<Model<Scalar>> lm, bwd;
  if (!a.aux_lm.empty()) lm = load_model_for(a.aux_lm, corpus.vocab, "--aux-lm");
  if (!a.aux_bwd.empty()) bwd = load_model_for(a.aux_bwd, corpus.vocab, "--aux-bwd");
  if (lm && lm->config.role != ModelRole::ResponseLm) throw UsageError("--aux-lm is not a response_lm checkpoint");
  if (bwd && bwd->config.role != ModelRole::Backward) throw UsageError("--aux-bwd is not a backward checkpoint");

  std::vector<Dialogue> const *split = nullptr;
  if (a.split == "test") split = &corpus.test;
  else if (a.split == "valid") split = &corpus.valid;
  else if (a.split == "train") split = &corpus.train;
  else throw UsageError("--split must be train, valid or test");
  auto examples = make_examples(*split, a.history_window);
  if (a.limit > 0 && examples.size() > a.limit) {
    examples.resize(a.limit);
  }
  if (examples.empty()) {
    throw UsageError("the " + a.split + " split has no examples");
  }
  auto const pool = utterance_pool(corpus.train);
  PerturbResources const res{pool, &corpus.pos, corpus.vocab.size()};
  auto const stop = StopwordList::load(a.stopwords);
  AuxModels<Scalar> aux{lm ? &*lm : nullptr, bwd ? &*bwd : nullptr};

  auto report = full_report(model, std::span<Example const>(examples), ec, aux, res, stop, corpus.vocab);
  if (!a.report.empty()) {
    fs::path json_path(a.report);
    save_report(report, json_path);
    auto csv_path = json_path;
    csv_path.replace_extension(".csv");
    if (csv_path == json_path) {
      csv_path = fs::path(json_path.string() + ".csv");
    }
    save_report_csv(report, csv_path);
  }
  std::cout << report_summary(report);
  return kExitOk;
}

// ----------------------------------------------------------------- perturb

struct PerturbArgs
{
  std::string   in, op, pool, pos, out;
  std::uint64_t seed = 1;
};

int run_perturb(PerturbArgs const &a)
{
  auto kind = parse_perturbation(a.op);
  if (!kind) {
    throw UsageError("unknown --op '" + a.op + "'; valid: " + perturbation_names());
  }
  if (*kind == PerturbationKind::Repl && a.pool.empty()) {
    throw UsageError("--op repl needs --pool");
  }
  if ((*kind == PerturbationKind::NounDrop || *kind == PerturbationKind::VerbDrop) && a.pos.empty()) {
    throw UsageError("--op " + a.op + " needs --pos");
  }
  auto const input = load_dialogue_surfaces(a.in);
  LoadResult pool_surfaces;
  if (!a.pool.empty()) {
    pool_surfaces = load_dialogue_surfaces(a.pool);
  }
  std::vector<SurfaceDialogue> all = input.dialogues;
  all.insert(all.end(), pool_surfaces.dialogues.begin(), pool_surfaces.dialogues.end());
  auto const vocab = Vocabulary::build(all, std::numeric_limits<std::size_t>::max(), 1);
  PosLexicon lexicon(vocab.size());
  if (!a.pos.empty()) {
    lexicon = PosLexicon::load(a.pos, vocab);
  }
  std::vector<Dialogue> pool_dialogues;
  for (auto const &d : pool_surfaces.dialogues) {
    pool_dialogues.push_back(vocab.encode(d));
  }
  auto const pool = utterance_pool(pool_dialogues);

  std::vector<SurfaceDialogue> out;
  for (std::size_t i = 0; i < input.dialogues.size(); ++i) {
    auto             dialogue = vocab.encode(input.dialogues[i]);
    DialogueHistory  history(dialogue.begin(), dialogue.end() - 1);
    Rng              rng(derive_seed(a.seed, {i}));
    PerturbContext   ctx{rng, pool, &lexicon, vocab.size()};
    auto             perturbed = perturb_history(history, *kind, ctx);
    perturbed.push_back(dialogue.back());
    SurfaceDialogue surfaces;
    for (auto const &u : perturbed) {
      surfaces.push_back(vocab.decode(u));
    }
    out.push_back(std::move(surfaces));
  }
  save_dialogue_surfaces(a.out, out);
  return kExitOk;
}

// ------------------------------------------------------------------ decode

struct DecodeArgs
{
  std::string   ckpt, vocab, history, mode = "greedy";
  double        temperature = 1.0;
  std::uint64_t seed = 1;
  std::size_t   beam_width = 10;
};

int run_decode(DecodeArgs const &a)
{
  auto const vocab = Vocabulary::load(a.vocab);
  DialogueHistory history;
  std::string     rest = a.history;
  std::string const delim = "||";
  while (true) {
    auto pos = rest.find(delim);
    auto tokens = tokenize(rest.substr(0, pos));
    if (!tokens.empty()) {
      history.push_back(vocab.encode(tokens));
    }
    if (pos == std::string::npos) break;
    rest = rest.substr(pos + delim.size());
  }
  if (history.empty()) {
    throw UsageError("--history is empty");
  }
  auto const model = load_model_for(a.ckpt, vocab, "--ckpt");
  auto const src = decoder_source(model.config.role, history);
  auto const source = std::span<TokenId const>(src);
  Hypothesis hyp;
  if (a.mode == "greedy") {
    hyp = greedy_decode(model, source);
  } else if (a.mode == "sample") {
    if (!(a.temperature > 0.0)) {
      throw UsageError("--temperature must be positive");
    }
    Rng rng(a.seed);
    hyp = sample_decode(model, source, a.temperature, rng);
  } else if (a.mode == "beam") {
    hyp = beam_search(model, source, a.beam_width, 1).front();
  } else {
    throw UsageError("--mode must be greedy, sample or beam");
  }
  std::cout << join_surfaces(vocab.decode(without_eos(hyp.tokens))) << "\n";
  std::cout.precision(6);
  std::cout << "score " << std::fixed << hyp.score << "\n";
  return kExitOk;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Inverse adversarial training toolkit for dialogue response models"};
  app.require_subcommand(1);

  GenCorpusArgs gen;
  auto         *gen_cmd = app.add_subcommand("gen-corpus", "Write a synthetic dialogue corpus");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.synth.seed, "Random seed");
  gen_cmd->add_option("--dialogues", gen.synth.num_dialogues, "Number of dialogues");
  gen_cmd->add_option("--turns", gen.synth.turns_per_dialogue, "Turns per dialogue");
  gen_cmd->add_option("--entities", gen.synth.entity_count, "Number of entity nouns");
  gen_cmd->add_option("--generic-rate", gen.synth.generic_rate, "Probability of a generic answer")
    ->check(CLI::Range(0.0, 1.0));
  gen_cmd->add_option("--max-vocab", gen.max_vocab, "Vocabulary size cap")->check(CLI::Range(6, 1 << 30));

  TrainArgs pre, aux, iat;
  auto      add_train_flags = [](CLI::App *cmd, TrainArgs &t) {
    cmd->add_option("--corpus", t.corpus, "Corpus directory written by gen-corpus")->required();
    cmd->add_option("--config", t.config, "Training config JSON");
    cmd->add_option("--out", t.out, "Output checkpoint")->required();
    cmd->add_option("--threads", t.threads, "Worker threads")->check(CLI::PositiveNumber);
  };
  auto *pre_cmd = app.add_subcommand("pretrain", "MLE pretraining of the forward model");
  add_train_flags(pre_cmd, pre);
  auto *aux_cmd = app.add_subcommand("train-aux", "Train an MMI helper model");
  add_train_flags(aux_cmd, aux);
  aux_cmd->add_option("--role", aux.role, "backward or response-lm")->required();
  auto *iat_cmd = app.add_subcommand("train-iat", "Inverse adversarial fine-tuning");
  add_train_flags(iat_cmd, iat);
  iat_cmd->add_option("--init", iat.init, "Pretrained checkpoint")->required();

  EvaluateArgs ev;
  auto        *ev_cmd = app.add_subcommand("evaluate", "Compute the evaluation report");
  ev_cmd->add_option("--corpus", ev.corpus, "Corpus directory")->required();
  ev_cmd->add_option("--ckpt", ev.ckpt, "Forward checkpoint")->required();
  ev_cmd->add_option("--mode", ev.mode, "greedy, beam, mmi-anti or mmi-bidi");
  ev_cmd->add_option("--aux-lm", ev.aux_lm, "Response LM checkpoint (mmi-anti)");
  ev_cmd->add_option("--aux-bwd", ev.aux_bwd, "Backward checkpoint (mmi-bidi)");
  ev_cmd->add_option("--lambda", ev.lambda, "MMI weight");
  ev_cmd->add_option("--nbest", ev.nbest, "N-best list size");
  ev_cmd->add_option("--beam-width", ev.beam_width, "Beam width (default: --nbest)");
  ev_cmd->add_option("--seeds", ev.seeds, "Comma-separated perturbation seeds");
  ev_cmd->add_option("--report", ev.report, "Report JSON path (CSV written alongside)");
  ev_cmd->add_option("--split", ev.split, "train, valid or test");
  ev_cmd->add_option("--limit", ev.limit, "Evaluate at most this many examples");
  ev_cmd->add_option("--history-window", ev.history_window, "History utterances per example")->check(CLI::PositiveNumber);
  ev_cmd->add_option("--stopwords", ev.stopwords, "Stop-word list");
  ev_cmd->add_option("--threads", ev.threads, "Worker threads")->check(CLI::PositiveNumber);

  PerturbArgs pt;
  auto       *pt_cmd = app.add_subcommand("perturb", "Apply a history perturbation to a dialogue file");
  pt_cmd->add_option("--in", pt.in, "Input dialogue file")->required()->check(CLI::ExistingFile);
  pt_cmd->add_option("--op", pt.op, "Perturbation name")->required();
  pt_cmd->add_option("--seed", pt.seed, "Random seed");
  pt_cmd->add_option("--pool", pt.pool, "Dialogue file supplying replacement utterances")->check(CLI::ExistingFile);
  pt_cmd->add_option("--pos", pt.pos, "POS lexicon")->check(CLI::ExistingFile);
  pt_cmd->add_option("--out", pt.out, "Output dialogue file")->required();

  DecodeArgs dc;
  auto      *dc_cmd = app.add_subcommand("decode", "Generate a response for one history");
  dc_cmd->add_option("--ckpt", dc.ckpt, "Forward checkpoint")->required();
  dc_cmd->add_option("--vocab", dc.vocab, "Vocabulary file")->required()->check(CLI::ExistingFile);
  dc_cmd->add_option("--history", dc.history, "Utterances separated by ' || '")->required();
  dc_cmd->add_option("--mode", dc.mode, "greedy, sample or beam");
  dc_cmd->add_option("--temperature", dc.temperature, "Sampling temperature");
  dc_cmd->add_option("--seed", dc.seed, "Sampling seed");
  dc_cmd->add_option("--beam-width", dc.beam_width, "Beam width")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (CLI::Success const &e) {
    return app.exit(e);
  } catch (CLI::ParseError const &e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return run_gen_corpus(gen);
    if (pre_cmd->parsed()) return run_pretrain(pre);
    if (aux_cmd->parsed()) return run_train_aux(aux);
    if (iat_cmd->parsed()) return run_train_iat(iat);
    if (ev_cmd->parsed()) return run_evaluate(ev);
    if (pt_cmd->parsed()) return run_perturb(pt);
    if (dc_cmd->parsed()) return run_decode(dc);
  } catch (ConfigError const &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (CheckpointShapeError const &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (std::exception const &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
