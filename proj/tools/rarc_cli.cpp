// Command-line front end: index, simulate, run, report, abstain, select.

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rarc/harness.hpp"

namespace {

int cmd_index(const std::string& corpus_path, const std::string& out_path,
              const std::string& query, int k) {
  std::vector<rarc::Document> corpus = rarc::load_corpus_jsonl(corpus_path);
  rarc::CorpusIndex index = rarc::build_index(corpus);
  if (!out_path.empty()) {
    rarc::save_index_snapshot(out_path, index);
    std::cout << "indexed " << index.doc_count() << " docs -> " << out_path << "\n";
  }
  if (!query.empty()) {
    for (const rarc::Document& d : rarc::retrieve(index, query, k))
      std::cout << d.doc_id << "\t" << (d.score ? *d.score : 0.0) << "\t" << d.title << "\n";
  }
  return 0;
}

int cmd_simulate(const std::string& out_dir, int queries, const std::string& hops,
                 int corpus_size, double distractor_rate, double err_scale,
                 std::uint64_t seed) {
  rarc::WorldSpec spec;
  spec.n_queries = queries;
  if (hops == "1")
    spec.hops = 1;
  else if (hops == "2")
    spec.hops = 2;
  else if (hops == "mixed")
    spec.hops = 0;
  else
    throw rarc::ConfigError("--hops: expected 1, 2, or mixed");
  spec.corpus_size = corpus_size;
  spec.distractor_rate = distractor_rate;
  spec.err_scale = err_scale;
  spec.seed = seed;

  rarc::World world = rarc::build_world(spec);
  std::filesystem::create_directories(out_dir);
  rarc::save_world(out_dir + "/world.json", spec);
  rarc::save_corpus_jsonl(out_dir + "/corpus.jsonl", world.corpus);
  rarc::save_dataset_jsonl(out_dir + "/dataset.jsonl", world.dataset());
  std::cout << "world: " << world.queries.size() << " queries, " << world.corpus.size()
            << " docs -> " << out_dir << "\n";
  return 0;
}

int cmd_run(const std::string& config_path, const std::map<std::string, std::string>& overrides) {
  std::map<std::string, std::string> file_values;
  if (!config_path.empty()) file_values = rarc::parse_config_file(config_path);
  rarc::ConfigMap cfg = rarc::resolve_config(file_values, overrides);
  rarc::RunOutcome out = rarc::run_uq(cfg);
  std::cout << "run " << out.run_dir << ": " << out.completed << " completed, " << out.skipped
            << " skipped, " << out.failures << " failed\n";
  return out.failures > 0 ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uncertainty quantification for retrieval-augmented reasoning"};
  app.require_subcommand(1);

  // index
  auto* index_cmd = app.add_subcommand("index", "build a BM25 index snapshot");
  std::string index_corpus, index_out, index_query;
  int index_k = 3;
  index_cmd->add_option("--corpus", index_corpus, "corpus JSONL")->required();
  index_cmd->add_option("--out", index_out, "snapshot output path");
  index_cmd->add_option("--query", index_query, "print top-k docs for this query");
  index_cmd->add_option("--k", index_k, "results to print");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic world");
  std::string sim_out, sim_hops = "2";
  int sim_queries = 50, sim_corpus_size = 0;
  double sim_distractor_rate = 0.5, sim_err_scale = 0.6;
  std::uint64_t sim_seed = 1;
  sim_cmd->add_option("--out", sim_out, "output directory")->required();
  sim_cmd->add_option("--queries", sim_queries, "number of queries");
  sim_cmd->add_option("--hops", sim_hops, "1, 2, or mixed");
  sim_cmd->add_option("--corpus-size", sim_corpus_size, "target corpus size (0 = auto)");
  sim_cmd->add_option("--distractor-rate", sim_distractor_rate, "distractor fill rate");
  sim_cmd->add_option("--err-scale", sim_err_scale, "step error probability scale");
  sim_cmd->add_option("--seed", sim_seed, "world seed");

  // run
  auto* run_cmd = app.add_subcommand("run", "run uncertainty estimation over a dataset");
  std::string run_config;
  std::vector<std::string> run_sets;
  std::map<std::string, std::string> run_flag_values;
  run_cmd->add_option("--config", run_config, "config file");
  run_cmd->add_option("--set", run_sets, "override as key=value (repeatable)");
  for (const auto& [key, def] : rarc::config_defaults()) {
    run_cmd->add_option_function<std::string>(
        "--" + key, [&run_flag_values, key = key](const std::string& v) {
          run_flag_values[key] = v;
        },
        "override " + key + (def.empty() ? "" : " (default " + def + ")"));
  }

  // report
  auto* report_cmd = app.add_subcommand("report", "summarize a finished run");
  std::string report_run;
  bool report_plots = false;
  report_cmd->add_option("--run", report_run, "run directory")->required();
  report_cmd->add_flag("--plots", report_plots, "emit SVG figures");

  // abstain
  auto* abstain_cmd = app.add_subcommand("abstain", "abstention evaluation");
  std::string abstain_run, abstain_validation, abstain_metric = "abstain_f1";
  double abstain_tau = -1.0;
  bool have_tau = false;
  abstain_cmd->add_option("--run", abstain_run, "test run directory")->required();
  abstain_cmd->add_option("--tau", abstain_tau, "fixed threshold")
      ->check(CLI::Range(0.0, 1.0))
      ->each([&](const std::string&) { have_tau = true; });
  abstain_cmd->add_option("--validation", abstain_validation,
                          "validation run directory to calibrate on");
  abstain_cmd->add_option("--metric", abstain_metric,
                          "calibration target: abstain_accuracy or abstain_f1");

  // select
  auto* select_cmd = app.add_subcommand("select", "model selection across runs");
  std::vector<std::string> select_runs;
  std::string select_method = "R2C", select_aggregation = "sum", select_out;
  bool select_no_clustering = false;
  select_cmd->add_option("--run", select_runs, "run directory (repeat per system)")->required();
  select_cmd->add_option("--method", select_method, "method whose results to select over");
  select_cmd->add_option("--aggregation", select_aggregation, "sum or mean");
  select_cmd->add_flag("--no-clustering", select_no_clustering, "score responses individually");
  select_cmd->add_option("--out", select_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*index_cmd) return cmd_index(index_corpus, index_out, index_query, index_k);
    if (*sim_cmd)
      return cmd_simulate(sim_out, sim_queries, sim_hops, sim_corpus_size, sim_distractor_rate,
                          sim_err_scale, sim_seed);
    if (*run_cmd) {
      std::map<std::string, std::string> overrides;
      for (const std::string& kv : run_sets) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos)
          throw rarc::ConfigError("--set: expected key=value, got '" + kv + "'");
        overrides[rarc::trim(kv.substr(0, eq))] = rarc::trim(kv.substr(eq + 1));
      }
      for (const auto& [k, v] : run_flag_values) overrides[k] = v;
      return cmd_run(run_config, overrides);
    }
    if (*report_cmd) {
      std::cout << "report -> " << rarc::write_report(report_run, report_plots) << "\n";
      return 0;
    }
    if (*abstain_cmd) {
      std::optional<double> tau;
      if (have_tau) tau = abstain_tau;
      std::cout << "abstain -> "
                << rarc::run_abstain(abstain_run, tau, abstain_validation,
                                     rarc::abstain_metric_from_string(abstain_metric))
                << "\n";
      return 0;
    }
    if (*select_cmd) {
      std::cout << "select -> "
                << rarc::run_select(select_runs, select_method, !select_no_clustering,
                                    rarc::aggregation_from_string(select_aggregation),
                                    select_out)
                << "\n";
      return 0;
    }
  } catch (const rarc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const rarc::EvalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
