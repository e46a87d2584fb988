#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "evorag/analytics.hpp"
#include "evorag/datasets.hpp"
#include "evorag/error.hpp"
#include "evorag/evaluation.hpp"
#include "evorag/library.hpp"
#include "evorag/retrieval.hpp"
#include "evorag/runtime.hpp"
#include "evorag/text.hpp"

namespace fs = std::filesystem;
using namespace evorag;

namespace {

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

std::vector<Query> load_train(const runtime::RunConfig& config, const std::string& override_path) {
  const fs::path path = override_path.empty() ? config.train_path : fs::path(override_path);
  if (path.empty()) throw ConfigError("no training set given (config 'train' or --train)");
  return datasets::read_queries(path);
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("evorag"));
  CLI::App app{"Self-improving multi-agent retrieval-augmented question answering"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Errors only");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Build a corpus index or convert a dataset");
  ingest->require_subcommand(1);
  std::string corpus_in, index_out;
  auto* ingest_corpus = ingest->add_subcommand("corpus", "Index a passage JSONL file {id, title, text}");
  ingest_corpus->add_option("corpus", corpus_in, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  ingest_corpus->add_option("--out", index_out, "Index file to write")->required();
  std::string dataset_in, dataset_out, dataset_kind = "qa";
  auto* ingest_dataset = ingest->add_subcommand("dataset", "Convert a benchmark JSONL file into query JSONL");
  ingest_dataset->add_option("dataset", dataset_in, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  ingest_dataset->add_option("--kind", dataset_kind, "qa or claim")->check(CLI::IsMember({"qa", "claim"}));
  ingest_dataset->add_option("--out", dataset_out, "Query JSONL to write")->required();

  // annotate
  std::string config_path, annotate_in, annotate_out;
  std::size_t annotate_parallelism = 4;
  auto* annotate = app.add_subcommand("annotate", "Label reasoning type and complexity with the orchestrator model");
  annotate->add_option("--config", config_path, "Run config")->required()->check(CLI::ExistingFile);
  annotate->add_option("--in", annotate_in, "Query JSONL")->required()->check(CLI::ExistingFile);
  annotate->add_option("--out", annotate_out, "Annotated query JSONL")->required();
  annotate->add_option("--parallelism", annotate_parallelism, "Concurrent annotation calls");

  // sample
  std::string sample_in, sample_out;
  std::size_t sample_n = 0;
  std::uint64_t sample_seed = 0;
  auto* sample = app.add_subcommand("sample", "Stratified sample of a query set");
  sample->add_option("--in", sample_in, "Query JSONL")->required()->check(CLI::ExistingFile);
  sample->add_option("--n", sample_n, "Sample size")->required();
  sample->add_option("--seed", sample_seed, "Sampling seed");
  sample->add_option("--out", sample_out, "Output JSONL")->required();

  // evolve
  std::string train_override;
  std::optional<std::size_t> iterations_override;
  std::optional<std::uint64_t> seed_override;
  auto* evolve = app.add_subcommand("evolve", "Run or resume the learning loop");
  evolve->add_option("--config", config_path, "Run config")->required()->check(CLI::ExistingFile);
  evolve->add_option("--train", train_override, "Training query JSONL (overrides config)");
  evolve->add_option("--iterations", iterations_override, "Run up to this iteration");
  evolve->add_option("--seed", seed_override, "Run seed (overrides config)");

  // answer
  std::string question;
  std::uint64_t answer_seed = 0;
  auto* answer = app.add_subcommand("answer", "Answer one question with the learned state");
  answer->add_option("--config", config_path, "Run config")->required()->check(CLI::ExistingFile);
  answer->add_option("question", question, "Question text")->required();
  answer->add_option("--seed", answer_seed, "Sampling seed");

  // evaluate
  std::string eval_dataset, eval_name, eval_out;
  std::uint64_t eval_seed = 0;
  std::optional<double> eval_temperature;
  auto* evaluate = app.add_subcommand("evaluate", "Score a query set and write report.json and report.csv");
  evaluate->add_option("--config", config_path, "Run config")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--dataset", eval_dataset, "Query JSONL")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--name", eval_name, "Dataset name for the report");
  evaluate->add_option("--out", eval_out, "Report directory")->required();
  evaluate->add_option("--seed", eval_seed, "Sampling seed");
  evaluate->add_option("--temperature", eval_temperature, "Evaluation temperature (0.0 in-distribution, 0.3 OOD)");

  // analyze
  std::string log_path, analyze_out;
  analytics::AnalyzeOptions analyze_opts;
  bool conditional = false;
  auto* analyze = app.add_subcommand("analyze", "Topology and token metrics from a trajectory log");
  analyze->add_option("--log", log_path, "trajectories.jsonl")->required()->check(CLI::ExistingFile);
  analyze->add_option("--out", analyze_out, "Output directory")->required();
  analyze->add_option("--window", analyze_opts.window, "Entropy window width");
  analyze->add_option("--stride", analyze_opts.stride, "Entropy window stride");
  analyze->add_option("--frac", analyze_opts.frac, "LOWESS span");
  analyze->add_flag("--conditional", conditional, "Conditional transition entropy instead of joint");

  // library
  auto* library = app.add_subcommand("library", "Inspect or maintain the experience library");
  library->require_subcommand(1);
  library->add_option("--config", config_path, "Run config")->required()->check(CLI::ExistingFile);
  auto* library_show = library->add_subcommand("show", "Print active entries");
  auto* library_compact = library->add_subcommand("compact", "Drop pruned entries from the file");
  std::string export_out;
  auto* library_export = library->add_subcommand("export", "Write active entries as JSONL");
  library_export->add_option("--out", export_out, "Output file (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::err : spdlog::level::info);

  try {
    if (ingest_corpus->parsed()) {
      const auto index = retrieval::LexicalIndex::ingest(corpus_in);
      index.save(index_out);
      std::cout << Json{{"passages", index.size()}, {"terms", index.postings().size()}, {"index", index_out}}.dump() << "\n";
    } else if (ingest_dataset->parsed()) {
      const auto kind = *datasets::parse_schema_kind(dataset_kind);
      const auto queries = datasets::ingest_dataset(dataset_in, kind);
      datasets::write_queries(dataset_out, queries);
      datasets::DatasetManifest m{fs::path(dataset_in).stem().string(), "", dataset_out, queries.size(), kind};
      std::cout << to_json(m).dump() << "\n";
    } else if (annotate->parsed()) {
      const auto config = runtime::load_config(config_path);
      auto backend = runtime::make_backend(config.orchestrator_backend);
      llm::CallLog calls;
      const auto out = datasets::annotate(datasets::read_queries(annotate_in), llm::Channel(*backend, &calls),
                                          annotate_parallelism);
      datasets::write_queries(annotate_out, out);
      std::size_t unknown = 0;
      for (const auto& q : out) unknown += q.reasoning_type == ReasoningType::kUnknown;
      std::cout << Json{{"annotated", out.size()}, {"unknown", unknown}, {"tokens", calls.total_tokens()}}.dump() << "\n";
    } else if (sample->parsed()) {
      const auto out = datasets::stratified_sample(datasets::read_queries(sample_in), sample_n, sample_seed);
      datasets::write_queries(sample_out, out);
      std::cout << Json{{"sampled", out.size()}}.dump() << "\n";
    } else if (evolve->parsed()) {
      auto config = runtime::load_config(config_path);
      if (seed_override) config.seed = *seed_override;
      if (iterations_override) config.iterations = *iterations_override;
      const auto train = load_train(config, train_override);
      runtime::Runtime rt(config);
      std::cout << runtime::to_json(rt.evolve(train)).dump(2) << "\n";
    } else if (answer->parsed()) {
      runtime::Runtime rt(runtime::load_config(config_path));
      Query q;
      q.id = "q" + std::to_string(text::fnv1a64(question) % 100000000ULL);
      q.text = question;
      std::cout << runtime::to_json(rt.answer(q, answer_seed)).dump(2) << "\n";
    } else if (evaluate->parsed()) {
      auto config = runtime::load_config(config_path);
      if (eval_temperature) config.eval_temperature = *eval_temperature;
      runtime::check_config(config);
      runtime::Runtime rt(config);
      const std::string name = eval_name.empty() ? fs::path(eval_dataset).stem().string() : eval_name;
      const auto result = rt.evaluate(name, datasets::read_queries(eval_dataset), eval_seed);
      Json report = eval::to_json(result.report);
      report["queries"] = result.per_query;
      write_text(fs::path(eval_out) / "report.json", report.dump(2) + "\n");
      write_text(fs::path(eval_out) / "report.csv", eval::csv_header() + "\n" + eval::to_csv_row(result.report) + "\n");
      std::cout << eval::to_json(result.report).dump(2) << "\n";
    } else if (analyze->parsed()) {
      analyze_opts.form = conditional ? analytics::EntropyForm::kConditional : analytics::EntropyForm::kJoint;
      analytics::analyze_log(log_path, analyze_out, analyze_opts);
      std::cout << Json{{"out", analyze_out}}.dump() << "\n";
    } else if (library->parsed()) {
      const auto config = runtime::load_config(config_path);
      auto lib = ExperienceLibrary::load(config.library_path, config.library);
      if (library_show->parsed()) {
        std::cout << format_entries(lib.active()) << "\n";
        std::cout << lib.active_count() << " active of " << lib.entries().size() << " stored\n";
      } else if (library_compact->parsed()) {
        const std::size_t before = lib.entries().size();
        lib.compact();
        lib.save(config.library_path);
        std::cout << Json{{"removed", before - lib.entries().size()}, {"remaining", lib.entries().size()}}.dump() << "\n";
      } else if (library_export->parsed()) {
        std::string lines;
        for (const auto* e : lib.active())
          lines += Json{{"id", e->id}, {"profile", e->profile}, {"insight", e->insight}, {"uses", e->uses},
                        {"successes", e->successes}, {"utility", e->utility()}}
                       .dump() + "\n";
        if (export_out.empty()) {
          std::cout << lines;
        } else {
          write_text(export_out, lines);
        }
      }
    }
  } catch (const Error& ex) {
    spdlog::error("{}", ex.what());
    return 1;
  } catch (const std::exception& ex) {
    spdlog::error("unexpected failure: {}", ex.what());
    return 2;
  }
  return 0;
}
