// Workload driver. Runs one benchmark configuration and emits a JSON report
// (stdout, and optionally a file) plus an optional residency CSV time series.
//
// Usage:
//   bench <workload> [--translation array|chained|open] [--threads N]
//         [--frames F] [--page-size B] [--scale S] [--prefetch on|off]
//         [--optimistic on|off] [--seed X]
//         [--store file:PATH|synthetic:SEED|memory|auto] [--direct-io]
//         [--provider os|instrumented] [--suffix-width W] [--zipf-theta T]
//         [--out report.json] [--residency-csv series.csv]

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "arraypool/arraypool.hpp"

using nlohmann::json;

static json reportToJson(const arraypool::BenchReport& r) {
  json j;
  j["workload"] = r.workload;
  j["translation"] = r.translation;
  j["threads"] = r.threads;
  j["scale"] = r.scale;
  j["frames"] = r.frames;
  j["seed"] = r.seed;
  j["prefetch"] = r.prefetch;
  j["optimistic"] = r.optimistic;
  j["operations"] = r.operations;
  j["wall_seconds"] = r.wallSeconds;
  j["ops_per_sec"] = r.opsPerSec;
  j["latency_us"] = {{"p50", r.p50Us}, {"p90", r.p90Us}, {"p99", r.p99Us}};
  j["result_checksum"] = r.resultChecksum;
  const auto& s = r.stats;
  j["pool_stats"] = {
      {"faults", s.faults},
      {"evictions", s.evictions},
      {"hole_punches", s.holePunches},
      {"io_reads", s.ioReads},
      {"io_writes", s.ioWrites},
      {"io_read_batches", s.ioReadBatches},
      {"path_cache_hits", s.pathCacheHits},
      {"path_cache_misses", s.pathCacheMisses},
      {"optimistic_retries", s.optimisticRetries},
      {"optimistic_fallbacks", s.optimisticFallbacks},
      {"resident_pages", s.residentPages},
      {"translation_resident_bytes", s.translationResidentBytes},
      {"translation_virtual_bytes", s.translationVirtualBytes},
      {"frame_arena_bytes", s.frameArenaBytes},
  };
  if (!r.residency.empty()) {
    j["translation_resident_peak_bytes"] = r.peakTranslationResident;
    j["translation_resident_final_bytes"] = r.finalTranslationResident;
    j["residency_samples"] = r.residency.size();
  }
  return j;
}

int main(int argc, char** argv) {
  CLI::App app{"buffer pool translation benchmark"};
  arraypool::BenchConfig cfg;
  std::string prefetch = "on", optimistic = "on";
  bool directIo = false;

  app.add_option("workload", cfg.workload,
                 "seqscan|randscan|pointlookup|graphbfs|ycsb-like")
      ->required();
  app.add_option("--translation", cfg.translation, "array|chained|open")
      ->capture_default_str();
  app.add_option("--threads", cfg.threads)->capture_default_str();
  app.add_option("--frames", cfg.frames, "pool frames (0 = workload default)");
  app.add_option("--page-size", cfg.pageBytes)->capture_default_str();
  app.add_option("--scale", cfg.scale,
                 "pages/keys/nodes (0 = workload default)");
  app.add_option("--prefetch", prefetch, "on|off")
      ->check(CLI::IsMember({"on", "off"}));
  app.add_option("--optimistic", optimistic, "on|off")
      ->check(CLI::IsMember({"on", "off"}));
  std::string hugeFrames = "on";
  app.add_option("--huge-frames", hugeFrames,
                 "advise huge pages for the frame arena: on|off")
      ->check(CLI::IsMember({"on", "off"}));
  app.add_option("--seed", cfg.seed)->capture_default_str();
  app.add_option("--store", cfg.store,
                 "auto|synthetic:SEED|memory|file:PATH")
      ->capture_default_str();
  app.add_flag("--direct-io", directIo, "use O_DIRECT on the file store");
  app.add_option("--provider", cfg.provider, "os|instrumented")
      ->capture_default_str();
  app.add_option("--suffix-width", cfg.suffixWidth,
                 "translation suffix bits (0 = workload default)");
  app.add_option("--zipf-theta", cfg.zipfTheta)->capture_default_str();
  app.add_option("--out", cfg.out, "write the JSON report here too");
  app.add_option("--residency-csv", cfg.residencyCsv,
                 "write residency time series CSV (ycsb-like)");
  CLI11_PARSE(app, argc, argv);

  cfg.prefetch = prefetch == "on";
  cfg.optimistic = optimistic == "on";
  cfg.hugeFrames = hugeFrames == "on";
  cfg.directIo = directIo;

  try {
    arraypool::BenchReport r = arraypool::runBench(cfg);
    json j = reportToJson(r);
    std::cout << j.dump(2) << "\n";
    if (!cfg.out.empty()) {
      std::ofstream f(cfg.out);
      if (!f) throw arraypool::ConfigError("cannot open --out " + cfg.out);
      f << j.dump(2) << "\n";
    }
    if (!cfg.residencyCsv.empty()) {
      std::ofstream f(cfg.residencyCsv);
      if (!f)
        throw arraypool::ConfigError("cannot open --residency-csv " +
                                     cfg.residencyCsv);
      f << "seconds,translation_resident_bytes,resident_pages\n";
      for (const auto& s : r.residency)
        f << s.seconds << "," << s.translationResidentBytes << ","
          << s.residentPages << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
