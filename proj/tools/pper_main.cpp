// pper: privacy-preserving entity resolution over a simulated SIMD HE backend.
//
// Subcommands: gen, prep, run, eval, bench. Configuration comes from an INI
// file (PPER_CONFIG or --config); flags override file values and the
// effective configuration is echoed into the stats JSON.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <unordered_map>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pper/blocking.hpp"
#include "pper/config.hpp"
#include "pper/metrics.hpp"
#include "pper/protocol.hpp"

namespace fs = std::filesystem;
using pper::config::AppConfig;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::string> variant, eeq_mode, backend;
  std::optional<int> chunk_size, workers;
  std::optional<double> threshold;
  std::optional<bool> parallel;
  std::optional<std::uint64_t> seed;
  bool unsafe_debug_fields = false;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  const char* env_config = std::getenv("PPER_CONFIG");
  if (env_config && flags.config_path.empty()) flags.config_path = env_config;
  cmd->add_option("--config", flags.config_path, "Config file (INI); default $PPER_CONFIG");
  cmd->add_option("--variant", flags.variant,
                  "Pipeline variant: cleartext|naive_he|amppere_base|optimized");
  cmd->add_option("--eeq-mode", flags.eeq_mode, "Equality mode: interactive|non_interactive");
  cmd->add_option("--backend", flags.backend, "HE backend: exact|leveled");
  cmd->add_option("--chunk-size", flags.chunk_size, "Records per chunk");
  cmd->add_option("--threshold", flags.threshold, "Match threshold in [0,1]");
  cmd->add_option("--workers", flags.workers, "Worker threads for the evaluator");
  cmd->add_option("--parallel", flags.parallel, "Enable programming-level parallelism");
  cmd->add_option("--seed", flags.seed, "Root seed for all randomness");
  cmd->add_flag("--unsafe-debug-fields", flags.unsafe_debug_fields,
                "Append cleartext identifier fields to the matches CSV");
}

AppConfig load_config(const CommonFlags& flags) {
  AppConfig cfg =
      flags.config_path.empty() ? AppConfig{} : AppConfig::load(flags.config_path);
  if (flags.variant) cfg.pipeline.variant = pper::protocol::variant_from_string(*flags.variant);
  if (flags.eeq_mode)
    cfg.pipeline.eeq_mode = pper::protocol::eeq_mode_from_string(*flags.eeq_mode);
  if (flags.backend) cfg.pipeline.backend = pper::he::backend_from_string(*flags.backend);
  if (flags.chunk_size) cfg.pipeline.chunk_size = *flags.chunk_size;
  if (flags.threshold) cfg.pipeline.threshold = *flags.threshold;
  if (flags.workers) cfg.pipeline.workers = *flags.workers;
  if (flags.parallel) cfg.pipeline.parallel = *flags.parallel;
  if (flags.seed) {
    cfg.pipeline.seed = *flags.seed;
    cfg.gen.seed = pper::SeedStream(*flags.seed).sub("gen").value();
  }
  return cfg;
}

void write_matches_csv(const std::string& path,
                       const std::vector<pper::matcher::MatchResult>& matches,
                       bool debug_fields, const std::vector<pper::dataio::Record>* d1,
                       const std::vector<pper::dataio::Record>* d2) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw pper::DataFault("cannot open for writing: " + path);
  f << "id1,id2,score";
  if (debug_fields) f << ",fn1,ln1,dob1,fn2,ln2,dob2";
  f << "\n";
  std::unordered_map<std::int64_t, const pper::dataio::Record*> m1, m2;
  if (debug_fields) {
    for (const auto& r : *d1) m1[r.local_id] = &r;
    for (const auto& r : *d2) m2[r.local_id] = &r;
  }
  char buf[64];
  for (const auto& m : matches) {
    std::snprintf(buf, sizeof(buf), "%.4f", m.score);
    f << m.id1 << ',' << m.id2 << ',' << buf;
    if (debug_fields) {
      const auto* r1 = m1.at(m.id1);
      const auto* r2 = m2.at(m.id2);
      f << ',' << r1->first_name << ',' << r1->last_name << ',' << r1->dob_norm << ','
        << r2->first_name << ',' << r2->last_name << ',' << r2->dob_norm;
    }
    f << "\n";
  }
}

int cmd_gen(const CommonFlags& flags, const std::string& out_dir) {
  AppConfig cfg = load_config(flags);
  cfg.gen.validate();
  const std::string dir = out_dir.empty() ? cfg.out_dir : out_dir;
  fs::create_directories(dir);
  pper::dataio::GenOutput out = pper::dataio::generate(cfg.gen);
  pper::dataio::write_raw_csv(dir + "/d1.csv", out.d1);
  pper::dataio::write_raw_csv(dir + "/d2.csv", out.d2);
  pper::dataio::write_truth_csv(dir + "/truth.csv", out.truth);
  std::cout << "wrote " << out.d1.size() << " + " << out.d2.size() << " records and "
            << out.truth.pairs.size() << " truth pairs to " << dir << "\n";
  return 0;
}

int cmd_prep(const std::string& in_path, const std::string& out_path) {
  auto raw = pper::dataio::read_raw_csv(in_path);
  auto records = pper::dataio::preprocess(raw);
  pper::dataio::write_records_csv(out_path, records);
  std::cout << "normalized " << raw.size() << " -> " << records.size() << " records into "
            << out_path << "\n";
  return 0;
}

int cmd_run(const CommonFlags& flags, const std::string& d1_path, const std::string& d2_path,
            const std::string& out_dir, bool emit_manifest) {
  AppConfig cfg = load_config(flags);
  if (!d1_path.empty()) cfg.d1_path = d1_path;
  if (!d2_path.empty()) cfg.d2_path = d2_path;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  cfg.validate();
  if (cfg.d1_path.empty() || cfg.d2_path.empty())
    throw pper::ConfigError("run requires --d1 and --d2 (or [paths] d1/d2 in the config)");

  auto d1 = pper::dataio::preprocess(pper::dataio::read_raw_csv(cfg.d1_path));
  auto d2 = pper::dataio::preprocess(pper::dataio::read_raw_csv(cfg.d2_path));

  fs::create_directories(cfg.out_dir);
  auto result =
      pper::protocol::run_pipeline(cfg.pipeline, cfg.he_params, cfg.comp_params, d1, d2);

  write_matches_csv(cfg.out_dir + "/matches.csv", result.matches, flags.unsafe_debug_fields,
                    &d1, &d2);
  std::ofstream stats(cfg.out_dir + "/stats.json", std::ios::binary);
  stats << result.stats.to_json().dump(2) << "\n";

  if (emit_manifest) {
    auto plans1 = pper::blocking::plan_chunks(d1, cfg.pipeline.chunk_size, pper::dataio::Side::A,
                                              cfg.he_params.batch_size);
    auto plans2 = pper::blocking::plan_chunks(d2, cfg.pipeline.chunk_size, pper::dataio::Side::B,
                                              cfg.he_params.batch_size);
    plans1.insert(plans1.end(), plans2.begin(), plans2.end());
    std::ofstream manifest(cfg.out_dir + "/chunks_manifest.json", std::ios::binary);
    manifest << pper::blocking::chunk_manifest_json(plans1) << "\n";
  }
  std::cout << "wrote " << result.matches.size() << " matches to " << cfg.out_dir
            << "/matches.csv (" << result.stats.total_seconds << " s)\n";
  return 0;
}

int cmd_eval(const std::string& matches_path, const std::string& truth_path, std::int64_t n1,
             std::int64_t n2, const std::string& d1_path, const std::string& d2_path,
             const std::string& out_dir) {
  fs::create_directories(out_dir);

  std::ifstream f(matches_path, std::ios::binary);
  if (!f) throw pper::DataFault("cannot open: " + matches_path);
  std::string line;
  if (!std::getline(f, line)) throw pper::DataFault("empty matches csv");
  std::vector<pper::matcher::MatchResult> matches;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    long long id1 = 0, id2 = 0;
    double score = 0;
    if (std::sscanf(line.c_str(), "%lld,%lld,%lf", &id1, &id2, &score) != 3)
      throw pper::DataFault("bad matches row: " + line);
    matches.push_back({id1, id2, score, 0});
  }

  auto truth = pper::dataio::read_truth_csv(truth_path);
  const std::uint64_t total = static_cast<std::uint64_t>(n1) * static_cast<std::uint64_t>(n2);
  auto roc = pper::metrics::er_metrics(matches, truth, total);
  pper::metrics::write_roc_csv(out_dir + "/roc.csv", roc);

  nlohmann::json report;
  if (!d1_path.empty() && !d2_path.empty()) {
    auto d1 = pper::dataio::read_records_csv(d1_path);
    auto d2 = pper::dataio::read_records_csv(d2_path);
    auto cands = pper::blocking::cleartext_candidates(d1, d2);
    report =
        pper::metrics::blocking_metrics(truth, cands.pairs, cands.total_comparisons).to_json();
  } else {
    report = {{"note", "blocking metrics need --d1/--d2 (prepped CSVs)"}};
  }
  std::ofstream rep(out_dir + "/blocking_report.json", std::ios::binary);
  rep << report.dump(2) << "\n";
  std::cout << "wrote " << out_dir << "/roc.csv and " << out_dir << "/blocking_report.json\n";
  return 0;
}

int cmd_bench(const CommonFlags& flags, const std::string& out_path) {
  AppConfig cfg = load_config(flags);
  cfg.validate();
  if (cfg.d1_path.empty() || cfg.d2_path.empty())
    throw pper::ConfigError("bench requires [paths] d1/d2 in the config");
  auto d1 = pper::dataio::preprocess(pper::dataio::read_raw_csv(cfg.d1_path));
  auto d2 = pper::dataio::preprocess(pper::dataio::read_raw_csv(cfg.d2_path));

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw pper::DataFault("cannot open for writing: " + out_path);
  out << "variant,eeq_mode,backend,chunk_size,parallel,workers,seed,total_seconds,"
         "per_chunk_pair_seconds,normalized_per_pair_seconds,peak_memory_bytes,"
         "chunk_storage_bytes_avg,key_bytes,messages,rounds,bytes,chunk_pairs,candidates,"
         "matches,vr_invocations,matrix_updates\n";

  // Grid cells run sequentially to avoid cross-cell timing interference.
  for (auto variant : cfg.bench_variants) {
    for (auto mode : cfg.bench_eeq_modes) {
      for (int chunk : cfg.bench_chunk_sizes) {
        for (bool par : cfg.bench_parallel) {
          pper::protocol::PipelineConfig pc = cfg.pipeline;
          pc.variant = variant;
          pc.eeq_mode = mode;
          pc.chunk_size = chunk;
          pc.parallel = par;
          pper::he::HEParams hp = cfg.he_params;
          if (mode == pper::protocol::EeqMode::non_interactive && !hp.bootstrapping_enabled) {
            hp = pper::he::HEParams::non_interactive_profile();
            hp.batch_size = cfg.he_params.batch_size;
            hp.noise_sigma = cfg.he_params.noise_sigma;
          }
          auto result = pper::protocol::run_pipeline(pc, hp, cfg.comp_params, d1, d2);
          const auto& st = result.stats;
          out << st.variant << ',' << st.eeq_mode << ',' << st.backend << ',' << st.chunk_size
              << ',' << (st.parallel ? "on" : "off") << ',' << st.workers << ',' << st.seed
              << ',' << st.total_seconds << ',' << st.per_chunk_pair_seconds << ','
              << st.normalized_per_pair_seconds << ',' << st.peak_memory_bytes << ','
              << st.chunk_storage_bytes_avg << ',' << st.key_bytes << ',' << st.messages << ','
              << st.rounds << ',' << st.bytes << ',' << st.chunk_pairs << ',' << st.candidates
              << ',' << st.matches << ',' << st.vr_invocations << ',' << st.matrix_updates
              << "\n";
          out.flush();
          std::cout << st.variant << " " << st.eeq_mode << " chunk=" << st.chunk_size
                    << " parallel=" << (st.parallel ? "on" : "off") << ": " << st.total_seconds
                    << " s\n";
        }
      }
    }
  }
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"privacy-preserving entity resolution pipeline"};
  app.require_subcommand(1);

  CommonFlags flags;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset pair + ground truth");
  std::string gen_out;
  add_common_flags(gen, flags);
  gen->add_option("--out-dir", gen_out, "Output directory");

  auto* prep = app.add_subcommand("prep", "Normalize and deduplicate a raw CSV");
  std::string prep_in, prep_out;
  prep->add_option("--in", prep_in, "Input raw CSV")->required();
  prep->add_option("--out", prep_out, "Output normalized CSV")->required();

  auto* run = app.add_subcommand("run", "Run a pipeline variant end to end");
  std::string run_d1, run_d2, run_out;
  bool run_manifest = false;
  add_common_flags(run, flags);
  run->add_option("--d1", run_d1, "Dataset 1 raw CSV");
  run->add_option("--d2", run_d2, "Dataset 2 raw CSV");
  run->add_option("--out-dir", run_out, "Output directory");
  run->add_flag("--chunk-manifest", run_manifest, "Also emit chunks_manifest.json");

  auto* eval = app.add_subcommand("eval", "Evaluate matches against ground truth");
  std::string ev_matches, ev_truth, ev_d1, ev_d2, ev_out = "out";
  std::int64_t ev_n1 = 0, ev_n2 = 0;
  eval->add_option("--matches", ev_matches, "matches.csv from run")->required();
  eval->add_option("--truth", ev_truth, "truth.csv")->required();
  eval->add_option("--n1", ev_n1, "Size of dataset 1")->required();
  eval->add_option("--n2", ev_n2, "Size of dataset 2")->required();
  eval->add_option("--d1", ev_d1, "Prepped dataset 1 (enables blocking metrics)");
  eval->add_option("--d2", ev_d2, "Prepped dataset 2 (enables blocking metrics)");
  eval->add_option("--out-dir", ev_out, "Output directory");

  auto* bench = app.add_subcommand("bench", "Run the benchmark grid from the config");
  std::string bench_out = "bench.csv";
  add_common_flags(bench, flags);
  bench->add_option("--out", bench_out, "Output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(flags, gen_out);
    if (prep->parsed()) return cmd_prep(prep_in, prep_out);
    if (run->parsed()) return cmd_run(flags, run_d1, run_d2, run_out, run_manifest);
    if (eval->parsed()) return cmd_eval(ev_matches, ev_truth, ev_n1, ev_n2, ev_d1, ev_d2, ev_out);
    if (bench->parsed()) return cmd_bench(flags, bench_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
