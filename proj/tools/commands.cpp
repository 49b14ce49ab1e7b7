#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "manifest.hpp"
#include "polybert/checkpoint.hpp"
#include "polybert/config.hpp"
#include "polybert/corpus.hpp"
#include "polybert/harness.hpp"
#include "polybert/synthdata.hpp"
#include "polybert/tasks.hpp"
#include "polybert/tokenizer.hpp"
#include "polybert/trainer.hpp"

namespace polybert::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

corpus::TokenCounter make_token_counter(const std::string& tokenizer_arg) {
  if (tokenizer_arg.empty() || tokenizer_arg == "whitespace") {
    return corpus::whitespace_token_count;
  }
  auto tok = std::make_shared<tokenizer::Tokenizer>(
      tokenizer::Vocab::load(tokenizer_arg));
  return [tok](const std::string& text) {
    return static_cast<int>(tok->encode(text).size());
  };
}

corpus::LanguageRegistry registry_from_docs(
    const std::vector<corpus::Document>& docs) {
  corpus::LanguageRegistry langs;
  for (const auto& d : docs) langs.add(d.lang);
  return langs;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw std::runtime_error(what + " not found: " + path);
  }
}

trainer::TrainConfig load_train_config(const std::string& path,
                                       const std::vector<std::string>& overrides,
                                       std::optional<std::uint64_t> seed) {
  require_file(path, "config file");
  auto kv = config::KvConfig::load(path);
  for (const auto& o : overrides) kv.apply_override(o);
  if (seed) kv.set("seed", std::to_string(*seed));
  return trainer::TrainConfig::from_kv(kv);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---- filter-corpus ----------------------------------------------------------

int cmd_filter_corpus(const std::string& in_path, const std::string& out_path,
                      const std::string& report_path,
                      const std::string& tokenizer_arg) {
  require_file(in_path, "corpus file");
  const auto docs = corpus::read_jsonl(in_path);
  const auto langs = registry_from_docs(docs);
  const auto counter = make_token_counter(tokenizer_arg);
  const auto [kept, report] = corpus::filter_corpus(docs, langs, counter);
  corpus::write_jsonl(out_path, kept);
  {
    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report: " + report_path);
    out << report.to_json() << "\n";
  }
  RunManifest manifest;
  manifest.subcommand = "filter-corpus";
  manifest.resolved_config = {{"in", in_path},
                              {"out", out_path},
                              {"report", report_path},
                              {"tokenizer", tokenizer_arg.empty() ? "whitespace"
                                                                  : tokenizer_arg}};
  add_input_digest(manifest, in_path);
  write_manifest(manifest, out_path + ".manifest.json");
  std::cout << "filter-corpus: kept " << report.kept << " of " << docs.size()
            << " documents\n";
  return 0;
}

// ---- build-vocab ------------------------------------------------------------

int cmd_build_vocab(const std::string& in_path, int size,
                    const std::string& out_path) {
  require_file(in_path, "corpus file");
  const auto docs = corpus::read_jsonl(in_path);
  const auto vocab = tokenizer::build_vocab(docs, size);
  vocab.save(out_path);
  RunManifest manifest;
  manifest.subcommand = "build-vocab";
  manifest.resolved_config = {{"in", in_path},
                              {"size", std::to_string(size)},
                              {"out", out_path}};
  add_input_digest(manifest, in_path);
  write_manifest(manifest, out_path + ".manifest.json");
  std::cout << "build-vocab: " << vocab.size() << " tokens\n";
  return 0;
}

// ---- pretrain / pretrain-teacher ---------------------------------------------

int cmd_pretrain(bool teacher_mode, const std::string& config_path,
                 const std::string& corpus_path, const std::string& vocab_path,
                 const std::string& teacher_path, const std::string& out_dir,
                 const std::string& resume_path,
                 const std::vector<std::string>& overrides,
                 std::optional<std::uint64_t> seed) {
  const auto cfg = load_train_config(config_path, overrides, seed);
  require_file(corpus_path, "corpus file");
  require_file(vocab_path, "vocab file");
  const auto docs = corpus::read_jsonl(corpus_path);
  const auto langs = registry_from_docs(docs);
  tokenizer::Tokenizer tok(tokenizer::Vocab::load(vocab_path));

  std::optional<checkpoint::Checkpoint> teacher_ckpt;
  if (!teacher_path.empty()) {
    require_file(teacher_path, "teacher checkpoint");
    teacher_ckpt = checkpoint::load(teacher_path);
  }
  std::optional<checkpoint::Checkpoint> resume;
  if (!resume_path.empty()) {
    require_file(resume_path, "resume checkpoint");
    resume = checkpoint::load(resume_path);
  }

  const auto result =
      teacher_mode
          ? trainer::pretrain_teacher(docs, tok, langs, cfg, out_dir)
          : trainer::pretrain(docs, tok, langs, cfg, teacher_ckpt, out_dir, resume);

  RunManifest manifest;
  manifest.subcommand = teacher_mode ? "pretrain-teacher" : "pretrain";
  for (const auto& [k, v] : cfg.to_kv().entries()) manifest.resolved_config[k] = v;
  add_input_digest(manifest, corpus_path);
  add_input_digest(manifest, vocab_path);
  if (!teacher_path.empty()) add_input_digest(manifest, teacher_path);
  manifest.seed = cfg.seed;
  manifest.seed_set = true;
  write_manifest(manifest, out_dir + "/manifest.json");

  const auto& last = result.records.back();
  std::cout << manifest.subcommand << ": " << last.step
            << " steps, final l_total=" << last.losses.l_total
            << " (l_mlm=" << last.losses.l_mlm << ") wall_ms=" << last.wall_ms
            << "/step\n";
  return 0;
}

// ---- finetune ----------------------------------------------------------------

int cmd_finetune(const std::string& checkpoint_path, const std::string& vocab_path,
                 const std::string& task_path, const std::string& languages_csv,
                 const std::string& out_dir, std::uint64_t seed) {
  require_file(checkpoint_path, "checkpoint");
  require_file(vocab_path, "vocab file");
  require_file(task_path, "task spec");
  const auto ckpt = checkpoint::load(checkpoint_path);
  tokenizer::Tokenizer tok(tokenizer::Vocab::load(vocab_path));
  const auto encoder = checkpoint::restore_encoder(ckpt, tok.vocab().hash());
  const auto task = tasks::TaskSpec::load(task_path);
  std::vector<std::string> languages = split_csv(languages_csv);
  if (languages.empty()) {
    for (const auto& [lang, split] : task.languages) {
      if (!split.train_path.empty()) languages.push_back(lang);
    }
  }
  const auto model = harness::finetune(encoder, tok, task, languages, seed);
  fs::create_directories(out_dir);
  const std::string model_path = out_dir + "/model.ftckpt";
  model.save(model_path, tok.vocab().hash());

  RunManifest manifest;
  manifest.subcommand = "finetune";
  manifest.resolved_config = {{"checkpoint", checkpoint_path},
                              {"vocab", vocab_path},
                              {"task", task_path},
                              {"languages", languages_csv},
                              {"out", out_dir}};
  add_input_digest(manifest, checkpoint_path);
  add_input_digest(manifest, vocab_path);
  add_input_digest(manifest, task_path);
  manifest.seed = seed;
  manifest.seed_set = true;
  write_manifest(manifest, out_dir + "/manifest.json");
  std::cout << "finetune: wrote " << model_path << "\n";
  return 0;
}

// ---- evaluate ------------------------------------------------------------------

int cmd_evaluate(const std::string& model_path, const std::string& vocab_path,
                 const std::string& task_path, const std::string& languages_csv,
                 const std::string& out_dir) {
  require_file(model_path, "fine-tuned model");
  require_file(vocab_path, "vocab file");
  require_file(task_path, "task spec");
  tokenizer::Tokenizer tok(tokenizer::Vocab::load(vocab_path));
  const auto model = harness::FinetunedModel::load(model_path, tok.vocab().hash());
  const auto task = tasks::TaskSpec::load(task_path);
  std::vector<std::string> languages = split_csv(languages_csv);
  if (languages.empty()) languages = task.eval_languages();

  json scores;
  double sum = 0.0;
  for (const auto& lang : languages) {
    const double score = harness::evaluate(model, tok, task, lang);
    scores[lang] = score;
    sum += score;
  }
  json j;
  j["task"] = task.name;
  j["per_language"] = scores;
  j["average"] = sum / static_cast<double>(languages.size());
  fs::create_directories(out_dir);
  const std::string eval_path = out_dir + "/eval.json";
  {
    std::ofstream out(eval_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + eval_path);
    out << j.dump(2) << "\n";
  }
  RunManifest manifest;
  manifest.subcommand = "evaluate";
  manifest.resolved_config = {{"model", model_path},
                              {"vocab", vocab_path},
                              {"task", task_path},
                              {"languages", languages_csv},
                              {"out", out_dir}};
  add_input_digest(manifest, model_path);
  add_input_digest(manifest, vocab_path);
  add_input_digest(manifest, task_path);
  write_manifest(manifest, out_dir + "/manifest.json");
  std::cout << "evaluate: average " << j["average"] << " over "
            << languages.size() << " languages\n";
  return 0;
}

// ---- compare -------------------------------------------------------------------

int cmd_compare(const std::vector<std::string>& checkpoint_args,
                const std::string& vocab_path,
                const std::vector<std::string>& task_paths,
                const std::string& modes_csv, const std::string& baseline_csv,
                const std::string& report_dir, std::uint64_t seed) {
  require_file(vocab_path, "vocab file");
  tokenizer::Tokenizer tok(tokenizer::Vocab::load(vocab_path));
  std::vector<harness::ModelUnderTest> models;
  for (const auto& arg : checkpoint_args) {
    std::string id, path;
    const auto eq = arg.find('=');
    if (eq != std::string::npos) {
      id = arg.substr(0, eq);
      path = arg.substr(eq + 1);
    } else {
      path = arg;
      id = fs::path(path).stem().string();
    }
    require_file(path, "checkpoint");
    const auto ckpt = checkpoint::load(path);
    models.push_back({id, checkpoint::restore_encoder(ckpt, tok.vocab().hash())});
  }
  if (models.empty()) throw std::runtime_error("compare: no checkpoints given");
  std::vector<tasks::TaskSpec> task_list;
  for (const auto& p : task_paths) {
    require_file(p, "task spec");
    task_list.push_back(tasks::TaskSpec::load(p));
  }
  if (task_list.empty()) throw std::runtime_error("compare: no tasks given");
  const auto modes = split_csv(modes_csv);
  if (modes.empty()) throw std::runtime_error("compare: no modes given");

  const auto results = harness::run_protocol(models, tok, task_list, modes, seed);
  const auto report =
      harness::build_comparison(results, split_csv(baseline_csv));
  fs::create_directories(report_dir);
  harness::write_comparison_json(report, report_dir + "/comparison.json");

  RunManifest manifest;
  manifest.subcommand = "compare";
  manifest.resolved_config = {{"vocab", vocab_path},
                              {"modes", modes_csv},
                              {"baseline", baseline_csv},
                              {"report", report_dir}};
  add_input_digest(manifest, vocab_path);
  for (const auto& p : task_paths) add_input_digest(manifest, p);
  manifest.seed = seed;
  manifest.seed_set = true;
  write_manifest(manifest, report_dir + "/manifest.json");
  std::cout << "compare: " << report.entries.size()
            << " (model, task) pairs -> " << report_dir << "/comparison.json\n";
  if (report.group_test) {
    std::cout << "compare: group t-test t=" << report.group_test->t
              << " p=" << report.group_test->p << " df=" << report.group_test->df
              << "\n";
  }
  return 0;
}

// ---- report --------------------------------------------------------------------

int cmd_report(const std::string& comparison_path, const std::string& out_dir) {
  require_file(comparison_path, "comparison file");
  const auto report = harness::load_comparison_json(comparison_path);
  harness::emit_report(report, out_dir);
  RunManifest manifest;
  manifest.subcommand = "report";
  manifest.resolved_config = {{"comparison", comparison_path}, {"out", out_dir}};
  add_input_digest(manifest, comparison_path);
  write_manifest(manifest, out_dir + "/manifest.json");
  std::cout << "report: wrote " << out_dir << "/report.csv and report.svg\n";
  return 0;
}

}  // namespace

// ---- smoke ---------------------------------------------------------------------

int end_to_end_smoke(const std::string& workdir, std::uint64_t seed) {
  std::string stage = "setup";
  try {
    fs::create_directories(workdir);
    // bundled synthetic bilingual corpus, plus a handful of documents the
    // filter must drop
    stage = "generate";
    synthdata::GenOptions gen;
    gen.seed = seed;
    gen.docs_per_lang = 256;
    auto docs = synthdata::bilingual_corpus(gen);
    docs.push_back({"junk-url", "aa", "https://example.org/page"});
    docs.push_back({"junk-digits", "bb", "123456789 12345 9999999999 77"});
    docs.push_back({"junk-short", "aa", "ka ti"});
    docs.push_back({"junk-html", "bb", "<div>zu ge du be vu re zu ge</div>"});
    const std::string raw_path = workdir + "/corpus_raw.jsonl";
    corpus::write_jsonl(raw_path, docs);
    const std::string task_dir = workdir + "/token_task";
    const std::string task_path =
        synthdata::write_token_task(task_dir, 48, 24, seed + 11);

    stage = "filter-corpus";
    const std::string filtered_path = workdir + "/corpus.jsonl";
    cmd_filter_corpus(raw_path, filtered_path, workdir + "/filter_report.json",
                      "whitespace");

    stage = "build-vocab";
    const std::string vocab_path = workdir + "/vocab.txt";
    cmd_build_vocab(filtered_path, 256, vocab_path);

    stage = "pretrain-teacher";
    const std::string teacher_cfg = workdir + "/teacher.cfg";
    {
      trainer::TrainConfig cfg;
      cfg.model.n_layers = 2;
      cfg.model.hidden = 64;
      cfg.model.n_heads = 4;
      cfg.model.max_positions = 64;
      cfg.batch_size = 16;
      cfg.max_seq_len = 48;
      cfg.n_steps = 200;
      cfg.log_every = 20;
      cfg.checkpoint_every = 200;
      cfg.seed = seed;
      cfg.optim.total_steps = 200;
      cfg.optim.warmup_steps = 20;
      std::ofstream out(teacher_cfg, std::ios::binary);
      out << cfg.to_kv().serialize();
    }
    const std::string teacher_dir = workdir + "/teacher";
    cmd_pretrain(true, teacher_cfg, filtered_path, vocab_path, "", teacher_dir,
                 "", {}, seed);

    stage = "pretrain";
    const std::string student_cfg = workdir + "/student.cfg";
    {
      trainer::TrainConfig cfg;
      cfg.model.n_layers = 1;
      cfg.model.hidden = 32;
      cfg.model.n_heads = 2;
      cfg.model.max_positions = 64;
      cfg.batch_size = 16;
      cfg.max_seq_len = 48;
      cfg.n_steps = 500;
      cfg.log_every = 20;
      cfg.checkpoint_every = 250;
      cfg.seed = seed;
      cfg.weights = {0.5, 0.1, 0.4};
      cfg.optim.total_steps = 500;
      cfg.optim.warmup_steps = 50;
      std::ofstream out(student_cfg, std::ios::binary);
      out << cfg.to_kv().serialize();
    }
    const std::string student_dir = workdir + "/student";
    cmd_pretrain(false, student_cfg, filtered_path, vocab_path,
                 teacher_dir + "/checkpoint-final.pbckpt", student_dir, "", {},
                 seed);

    stage = "finetune";
    cmd_finetune(student_dir + "/checkpoint-final.pbckpt", vocab_path, task_path,
                 "", workdir + "/finetuned", seed);

    stage = "compare";
    cmd_compare({"student=" + student_dir + "/checkpoint-final.pbckpt"},
                vocab_path, {task_path}, "each,all", "", workdir + "/comparison",
                seed);

    stage = "report";
    cmd_report(workdir + "/comparison/comparison.json", workdir + "/report");
  } catch (const std::exception& e) {
    std::cerr << "smoke: stage '" << stage << "' failed: " << e.what() << "\n";
    return 2;
  }
  std::cout << "smoke: all stages completed in " << workdir << "\n";
  return 0;
}

// ---- dispatch ------------------------------------------------------------------

int dispatch(int argc, const char* const* argv) {
  CLI::App app{
      "polybert: compact multilingual encoder pre-training with masked "
      "language modeling, an adversarial language discriminator, and "
      "knowledge distillation"};
  app.require_subcommand(1);

  // filter-corpus
  std::string fc_in, fc_out, fc_report, fc_tokenizer = "whitespace";
  auto* fc = app.add_subcommand("filter-corpus",
                                "Clean and filter a JSONL corpus");
  fc->add_option("--in", fc_in, "input JSONL corpus")->required();
  fc->add_option("--out", fc_out, "output JSONL corpus")->required();
  fc->add_option("--report", fc_report, "filter report JSON")->required();
  fc->add_option("--tokenizer", fc_tokenizer,
                 "vocab file path, or 'whitespace'");

  // build-vocab
  std::string bv_in, bv_out;
  int bv_size = 0;
  auto* bv = app.add_subcommand("build-vocab",
                                "Learn a subword vocabulary from a corpus");
  bv->add_option("--in", bv_in, "input JSONL corpus")->required();
  bv->add_option("--size", bv_size, "target vocabulary size")->required();
  bv->add_option("--out", bv_out, "output vocab file")->required();

  // shared pretrain options
  struct PretrainArgs {
    std::string config, corpus, vocab, teacher, out, resume;
    std::vector<std::string> overrides;
    std::int64_t seed = -1;
  };
  PretrainArgs pt, ptt;
  auto add_pretrain_options = [](CLI::App* cmd, PretrainArgs& a, bool teacher) {
    cmd->add_option("--config", a.config, "flat key=value config file")->required();
    cmd->add_option("--corpus", a.corpus, "filtered JSONL corpus")->required();
    cmd->add_option("--vocab", a.vocab, "vocab file")->required();
    if (!teacher) {
      cmd->add_option("--teacher", a.teacher, "teacher checkpoint");
      cmd->add_option("--resume", a.resume, "checkpoint to resume from");
    }
    cmd->add_option("--out", a.out, "output directory")->required();
    cmd->add_option("--set", a.overrides, "config override key=value");
    cmd->add_option("--seed", a.seed, "RNG seed (overrides config)");
  };
  auto* ptc = app.add_subcommand("pretrain", "Pre-train the student model");
  add_pretrain_options(ptc, pt, false);
  auto* pttc = app.add_subcommand("pretrain-teacher",
                                  "MLM-only pre-training of the teacher");
  add_pretrain_options(pttc, ptt, true);

  // finetune
  std::string ft_ckpt, ft_vocab, ft_task, ft_langs, ft_out;
  std::int64_t ft_seed = 42;
  auto* ft = app.add_subcommand("finetune", "Fine-tune on a downstream task");
  ft->add_option("--checkpoint", ft_ckpt, "pre-trained checkpoint")->required();
  ft->add_option("--vocab", ft_vocab, "vocab file")->required();
  ft->add_option("--task", ft_task, "task spec file")->required();
  ft->add_option("--languages", ft_langs, "comma list (default: all train splits)");
  ft->add_option("--out", ft_out, "output directory")->required();
  ft->add_option("--seed", ft_seed, "RNG seed");

  // evaluate
  std::string ev_model, ev_vocab, ev_task, ev_langs, ev_out;
  auto* ev = app.add_subcommand("evaluate", "Score a fine-tuned model");
  ev->add_option("--model", ev_model, "fine-tuned model file")->required();
  ev->add_option("--vocab", ev_vocab, "vocab file")->required();
  ev->add_option("--task", ev_task, "task spec file")->required();
  ev->add_option("--languages", ev_langs, "comma list (default: eval splits)");
  ev->add_option("--out", ev_out, "output directory")->required();

  // compare
  std::vector<std::string> cp_ckpts, cp_tasks;
  std::string cp_vocab, cp_modes = "each,all", cp_baseline, cp_report;
  std::int64_t cp_seed = 42;
  auto* cp = app.add_subcommand(
      "compare", "Run the each/all/mono protocol over checkpoints");
  cp->add_option("--checkpoint", cp_ckpts, "id=path or path (repeatable)")
      ->required();
  cp->add_option("--vocab", cp_vocab, "vocab file")->required();
  cp->add_option("--task", cp_tasks, "task spec file (repeatable)")->required();
  cp->add_option("--modes", cp_modes, "comma list of each|all|mono");
  cp->add_option("--baseline", cp_baseline, "model ids forming the baseline group");
  cp->add_option("--report", cp_report, "output directory")->required();
  cp->add_option("--seed", cp_seed, "RNG seed");

  // report
  std::string rp_comparison, rp_out;
  auto* rp = app.add_subcommand("report",
                                "Render comparison CSV and SVG chart");
  rp->add_option("--comparison", rp_comparison, "comparison.json from compare")
      ->required();
  rp->add_option("--out", rp_out, "output directory")->required();

  // smoke
  std::string sm_workdir;
  std::int64_t sm_seed = 42;
  auto* sm = app.add_subcommand("smoke", "End-to-end pipeline on bundled data");
  sm->add_option("--workdir", sm_workdir, "working directory")->required();
  sm->add_option("--seed", sm_seed, "RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*fc) return cmd_filter_corpus(fc_in, fc_out, fc_report, fc_tokenizer);
    if (*bv) return cmd_build_vocab(bv_in, bv_size, bv_out);
    if (*ptc) {
      return cmd_pretrain(false, pt.config, pt.corpus, pt.vocab, pt.teacher,
                          pt.out, pt.resume, pt.overrides,
                          pt.seed >= 0 ? std::optional<std::uint64_t>(
                                             static_cast<std::uint64_t>(pt.seed))
                                       : std::nullopt);
    }
    if (*pttc) {
      return cmd_pretrain(true, ptt.config, ptt.corpus, ptt.vocab, "", ptt.out,
                          "", ptt.overrides,
                          ptt.seed >= 0 ? std::optional<std::uint64_t>(
                                              static_cast<std::uint64_t>(ptt.seed))
                                        : std::nullopt);
    }
    if (*ft) {
      return cmd_finetune(ft_ckpt, ft_vocab, ft_task, ft_langs, ft_out,
                          static_cast<std::uint64_t>(ft_seed));
    }
    if (*ev) return cmd_evaluate(ev_model, ev_vocab, ev_task, ev_langs, ev_out);
    if (*cp) {
      return cmd_compare(cp_ckpts, cp_vocab, cp_tasks, cp_modes, cp_baseline,
                         cp_report, static_cast<std::uint64_t>(cp_seed));
    }
    if (*rp) return cmd_report(rp_comparison, rp_out);
    if (*sm) {
      return end_to_end_smoke(sm_workdir, static_cast<std::uint64_t>(sm_seed));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int dispatch(const std::vector<std::string>& args) {
  std::vector<std::string> argv_storage;
  argv_storage.push_back("polybert");
  for (const auto& a : args) argv_storage.push_back(a);
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace polybert::cli
