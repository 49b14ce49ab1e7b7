#include "polybert/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "polybert/config.hpp"

namespace polybert::tasks {

using json = nlohmann::json;

std::string kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::token_classification: return "token_classification";
    case TaskKind::pair_classification: return "pair_classification";
    case TaskKind::span_extraction: return "span_extraction";
    case TaskKind::pair_regression: return "pair_regression";
  }
  throw std::logic_error("kind_name: bad enum");
}

TaskKind kind_from_name(const std::string& name) {
  if (name == "token_classification") return TaskKind::token_classification;
  if (name == "pair_classification") return TaskKind::pair_classification;
  if (name == "span_extraction") return TaskKind::span_extraction;
  if (name == "pair_regression") return TaskKind::pair_regression;
  throw std::runtime_error("unknown task kind: " + name);
}

std::vector<std::string> TaskSpec::eval_languages() const {
  std::vector<std::string> out;
  for (const auto& [lang, split] : languages) {
    if (lang.find('-') == std::string::npos && !split.eval_path.empty()) {
      out.push_back(lang);
    }
  }
  return out;
}

bool TaskSpec::cross_lingual() const {
  for (const auto& [lang, split] : languages) {
    if (lang.find('-') != std::string::npos) return true;
  }
  return false;
}

int TaskSpec::label_id(const std::string& label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) {
    throw std::runtime_error("task '" + name + "': unknown label '" + label + "'");
  }
  return static_cast<int>(it - labels.begin());
}

TaskSpec TaskSpec::load(const std::string& path) {
  const auto kv = config::KvConfig::load(path);
  TaskSpec spec;
  spec.name = kv.get_string("name", "task");
  spec.kind = kind_from_name(kv.get_string("kind", ""));
  const std::string labels = kv.get_string("labels", "");
  if (!labels.empty()) {
    std::istringstream in(labels);
    std::string item;
    while (std::getline(in, item, ',')) spec.labels.push_back(item);
  }
  spec.score_min = kv.get_double("score_min", spec.score_min);
  spec.score_max = kv.get_double("score_max", spec.score_max);
  spec.lr = kv.get_double("lr", spec.lr);
  spec.epochs = static_cast<int>(kv.get_int("epochs", spec.epochs));
  spec.batch_size = static_cast<int>(kv.get_int("batch_size", spec.batch_size));
  spec.max_seq_len = static_cast<int>(kv.get_int("max_seq_len", spec.max_seq_len));
  // data paths: lang.<code>.train / lang.<code>.eval, resolved relative to
  // the spec file's directory
  std::string base_dir;
  const auto slash = path.find_last_of('/');
  if (slash != std::string::npos) base_dir = path.substr(0, slash + 1);
  const auto resolve = [&base_dir](const std::string& p) {
    if (p.empty() || p.front() == '/') return p;
    return base_dir + p;
  };
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind("lang.", 0) != 0) continue;
    const auto rest = key.substr(5);
    const auto dot = rest.find('.');
    if (dot == std::string::npos) {
      throw std::runtime_error("task spec key '" + key +
                               "': expected lang.<code>.train|eval");
    }
    const std::string lang = rest.substr(0, dot);
    const std::string field = rest.substr(dot + 1);
    if (field == "train") {
      spec.languages[lang].train_path = resolve(value);
    } else if (field == "eval") {
      spec.languages[lang].eval_path = resolve(value);
    } else {
      throw std::runtime_error("task spec key '" + key + "': unknown field");
    }
  }
  if (spec.languages.empty()) {
    throw std::runtime_error("task spec '" + path + "' lists no languages");
  }
  if ((spec.kind == TaskKind::token_classification ||
       spec.kind == TaskKind::pair_classification) &&
      spec.labels.empty()) {
    throw std::runtime_error("task spec '" + path + "' needs labels");
  }
  return spec;
}

void TaskSpec::save(const std::string& path) const {
  config::KvConfig kv;
  kv.set("name", name);
  kv.set("kind", kind_name(kind));
  if (!labels.empty()) {
    std::string joined;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (i) joined += ',';
      joined += labels[i];
    }
    kv.set("labels", joined);
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", score_min);
  kv.set("score_min", buf);
  std::snprintf(buf, sizeof(buf), "%.17g", score_max);
  kv.set("score_max", buf);
  std::snprintf(buf, sizeof(buf), "%.17g", lr);
  kv.set("lr", buf);
  kv.set("epochs", std::to_string(epochs));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("max_seq_len", std::to_string(max_seq_len));
  for (const auto& [lang, split] : languages) {
    if (!split.train_path.empty()) kv.set("lang." + lang + ".train", split.train_path);
    if (!split.eval_path.empty()) kv.set("lang." + lang + ".eval", split.eval_path);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write task spec: " + path);
  out << kv.serialize();
}

std::vector<TokenExample> load_conll(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open CoNLL file: " + path);
  std::vector<TokenExample> out;
  TokenExample cur;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      if (!cur.words.empty()) {
        out.push_back(std::move(cur));
        cur = {};
      }
      continue;
    }
    std::istringstream ls(line);
    std::string word, tag;
    if (!(ls >> word >> tag)) {
      throw std::runtime_error("malformed CoNLL line in " + path + ": " + line);
    }
    cur.words.push_back(word);
    cur.tags.push_back(tag);
  }
  if (!cur.words.empty()) out.push_back(std::move(cur));
  return out;
}

void write_conll(const std::string& path, const std::vector<TokenExample>& ex) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write CoNLL file: " + path);
  for (const auto& sent : ex) {
    for (std::size_t i = 0; i < sent.words.size(); ++i) {
      out << sent.words[i] << " " << sent.tags[i] << "\n";
    }
    out << "\n";
  }
}

std::vector<PairExample> load_pair_tsv(const std::string& path, bool regression) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open TSV file: " + path);
  std::vector<PairExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected text_a \\t text_b \\t label");
    }
    PairExample ex;
    ex.text_a = line.substr(0, t1);
    ex.text_b = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string last = line.substr(t2 + 1);
    if (regression) {
      ex.score = std::stod(last);
    } else {
      ex.label = last;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void write_pair_tsv(const std::string& path, const std::vector<PairExample>& ex,
                    bool regression) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write TSV file: " + path);
  for (const auto& e : ex) {
    out << e.text_a << "\t" << e.text_b << "\t";
    if (regression) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.6g", e.score);
      out << buf;
    } else {
      out << e.label;
    }
    out << "\n";
  }
}

std::vector<SpanExample> load_span_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open span file: " + path);
  std::vector<SpanExample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    SpanExample ex;
    ex.context = j.at("context").get<std::string>();
    ex.question = j.at("question").get<std::string>();
    ex.answer_text = j.at("answer_text").get<std::string>();
    ex.answer_start = j.at("answer_start").get<int>();
    out.push_back(std::move(ex));
  }
  return out;
}

void write_span_jsonl(const std::string& path, const std::vector<SpanExample>& ex) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write span file: " + path);
  for (const auto& e : ex) {
    json j;
    j["context"] = e.context;
    j["question"] = e.question;
    j["answer_text"] = e.answer_text;
    j["answer_start"] = e.answer_start;
    out << j.dump() << "\n";
  }
}

}  // namespace polybert::tasks
