// chaffwin: consumer/provider command line for the chaff-and-winnow log pipeline.
//
// Exit codes: 0 success, 1 verification or equality failure, 2 format error,
// 3 configuration or I/O error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chaffwin/chaffwin.hpp"

namespace fs = std::filesystem;
using namespace chaffwin;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitMismatch = 1;
constexpr int kExitFormat = 2;
constexpr int kExitConfig = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::string{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.close();
  if (!out) throw IoError("write failed: " + path);
}

// Writes to `path`, or stdout when it is "-".
void emit_text(const std::string& path, std::string_view data) {
  if (path.empty() || path == "-") {
    std::cout << data;
    std::cout.flush();
  } else {
    write_file(path, data);
  }
}

PipelineConfig config_or_default(const std::string& path) {
  return path.empty() ? default_config() : load_config(path);
}

JobSpec job_from_flags(const std::string& name, std::int64_t gap, std::uint32_t top_k) {
  auto kind = JobSpec::parse_name(name);
  if (!kind) throw ConfigError("--job: unknown job '" + name + "'");
  JobSpec job{*kind, gap, top_k};
  job.validate();
  return job;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Line-set difference, enough to show which rows disagree.
std::string line_diff(const std::string& expected, const std::string& actual) {
  auto e = lines_of(expected), a = lines_of(actual);
  std::multiset<std::string> es(e.begin(), e.end()), as(a.begin(), a.end());
  std::string out;
  for (const auto& l : e) {
    if (as.count(l) == 0) out += "- " + l + '\n';
  }
  for (const auto& l : a) {
    if (es.count(l) == 0) out += "+ " + l + '\n';
  }
  return out;
}

struct Options {
  std::string config, out, stream, output, key, key_file, metrics, job = "page_hits", mode = "privacy", ratios = "0,1,2,4";
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::int64_t gap = 1800;
  std::uint32_t top_k = 10;
  std::uint64_t records = 10000, agents = 4, wheat_size = 50000;
  std::optional<std::size_t> corrupt_offset;
};

int cmd_keygen(const Options& o) {
  SecretKey key = SecretKey::generate();
  if (o.out.empty() || o.out == "-") {
    std::cout << key.hex() << '\n';
    return kExitOk;
  }
  write_file(o.out, key.hex() + "\n");
  std::error_code ec;
  fs::permissions(o.out, fs::perms::owner_read | fs::perms::owner_write, fs::perm_options::replace, ec);
  return kExitOk;
}

int cmd_config(const Options& o) {
  emit_text(o.out, format_config(default_config()));
  return kExitOk;
}

int cmd_emit(const Options& o) {
  PipelineConfig cfg = config_or_default(o.config);
  if (o.seed) cfg.shuffle_seed = *o.seed;
  emit_text(o.out, serialize_stream(build_stream(cfg)));
  return kExitOk;
}

// Provider side: no key flag exists on this command.
int cmd_run(const Options& o) {
  if (o.stream.empty()) throw ConfigError("--stream is required");
  JobSpec job = job_from_flags(o.job, o.gap, o.top_k);
  Stream stream = deserialize_stream(std::string_view(read_file(o.stream)));
  emit_text(o.out, serialize_output(run_job(job, stream, o.workers)));
  return kExitOk;
}

int cmd_winnow(const Options& o) {
  if (o.output.empty()) throw ConfigError("--output is required");
  if (o.key.empty() == o.key_file.empty()) throw ConfigError("exactly one of --key or --key-file is required");
  SecretKey key = o.key_file.empty() ? SecretKey::from_hex(o.key) : load_key_file(o.key_file);
  JobSpec params;
  params.top_k = o.top_k;
  params.session_gap = o.gap;
  JobOutput output = deserialize_output(std::string_view(read_file(o.output)), params);
  CleanOutput clean = winnow_results(key, output);

  ManifestInfo info;
  if (!o.config.empty()) info.kinds = kinds_of(load_config(o.config).agents);
  if (!o.stream.empty()) {
    info = ManifestInfo::from_stream(deserialize_stream(std::string_view(read_file(o.stream))), info.kinds);
  }
  MetricsReport metrics = report_metrics(clean, output, info);

  emit_text(o.out, serialize_clean(clean));
  if (!o.metrics.empty()) {
    emit_text(o.metrics, metrics.to_text());
  } else if (!o.out.empty() && o.out != "-") {
    std::cerr << metrics.to_text();
  }
  bool real_dropped = false;
  for (const auto& f : metrics.integrity_flags) real_dropped |= f.rfind("real-agent-dropped:", 0) == 0;
  if (clean.verified_agent_ids.empty()) {
    std::cerr << "winnow: no agent verified under the supplied key\n";
    return kExitMismatch;
  }
  return real_dropped ? kExitMismatch : kExitOk;
}

std::vector<double> parse_ratios(const std::string& text) {
  std::vector<double> out;
  for (std::string_view part : split(text, ',')) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc{} || ptr != part.data() + part.size()) throw ConfigError("--ratios: bad value '" + std::string(part) + "'");
    out.push_back(v);
  }
  return out;
}

int cmd_eval(const Options& o) {
  TrafficModel model = o.config.empty() ? TrafficModel::default_model() : load_config(o.config).traffic;
  const std::uint64_t seed = o.seed.value_or(1);
  std::string report;
  bool ok = true;
  if (o.mode == "privacy") {
    PrivacyExperiment exp = run_privacy_experiment(o.records, o.agents, seed, model);
    report += "mode=privacy\nrecords_per_side=" + std::to_string(o.records) + "\nseed=" + std::to_string(seed) + '\n';
    report += "mimicked_max_advantage=" + format_double(exp.mimicked.max_advantage()) + '\n';
    report += "mimicked_min_p_value=" + format_double(exp.mimicked.min_p_value()) + '\n';
    report += "null_min_p_value=" + format_double(exp.null_run.min_p_value()) + '\n';
    report += "control_payload_advantage=" + format_double(exp.broken_control.max_advantage(DistinguisherFamily::Payload)) + '\n';
    report += std::string("mimicry_holds=") + (exp.mimicry_holds() ? "1" : "0") + '\n';
    report += std::string("null_calibrated=") + (exp.null_calibrated() ? "1" : "0") + '\n';
    report += std::string("control_fires=") + (exp.control_fires() ? "1" : "0") + '\n';
    report += "\n# mimicked\n" + exp.mimicked.to_table();
    report += "\n# null\n" + exp.null_run.to_table();
    report += "\n# broken-control\n" + exp.broken_control.to_table();
    ok = exp.passed();
  } else if (o.mode == "overhead") {
    JobSpec job = job_from_flags(o.job, o.gap, o.top_k);
    OverheadReport rep = run_overhead(job, o.wheat_size, parse_ratios(o.ratios), o.workers, seed, model);
    report += "mode=overhead\njob=" + std::string(job.name()) + "\nwheat_size=" + std::to_string(o.wheat_size) +
              "\nworkers=" + std::to_string(o.workers) + '\n';
    const OverheadRow* base = rep.baseline();
    for (const OverheadRow& r : rep.rows) {
      bool identity = r.records_processed == r.total_records;
      ok &= identity;
      report += "processed_identity." + format_double(r.ratio) + '=' + (identity ? "1" : "0") + '\n';
      if (base && r.ratio > 0 && base->csp_seconds > 0) {
        double rel = r.csp_seconds / base->csp_seconds;
        bool in_band = rel >= 0.5 * (1 + r.ratio) && rel <= 1.5 * (1 + r.ratio);
        ok &= in_band;
        report += "linearity_band." + format_double(r.ratio) + '=' + (in_band ? "1" : "0") + '\n';
      }
    }
    report += '\n' + rep.to_table();
  } else {
    throw ConfigError("--mode: expected privacy or overhead");
  }
  emit_text(o.out, report);
  return ok ? kExitOk : kExitMismatch;
}

int cmd_e2e(const Options& o) {
  PipelineConfig cfg = config_or_default(o.config);
  if (o.seed) cfg.shuffle_seed = *o.seed;

  std::string wire = serialize_stream(build_stream(cfg));
  if (o.corrupt_offset) {
    if (*o.corrupt_offset >= wire.size()) throw ConfigError("--corrupt-offset beyond stream size");
    wire[*o.corrupt_offset] = static_cast<char>(wire[*o.corrupt_offset] ^ 0x01);
  }
  Stream stream = deserialize_stream(std::string_view(wire));
  Stream wheat = build_wheat_only_stream(cfg);

  std::string report;
  bool equal = true;
  for (const JobSpec& job : cfg.jobs) {
    JobOutput out = deserialize_output(std::string_view(serialize_output(run_job(job, stream, o.workers))), job);
    CleanOutput clean = winnow_results(cfg.shared_key, out);
    CleanOutput oracle = winnow_results(cfg.shared_key, run_job(job, wheat, o.workers));
    std::string got = serialize_clean(clean), want = serialize_clean(oracle);
    bool same = got == want;
    equal &= same;
    report += "job=" + std::string(job.name()) + " equal=" + (same ? "1" : "0") + " rows=" + std::to_string(clean.rows.size()) +
              " verified=" + std::to_string(clean.verified_agent_ids.size()) +
              " dropped=" + std::to_string(clean.dropped_agent_ids.size()) + '\n';
    if (!same) report += line_diff(want, got);
  }
  report += std::string("result=") + (equal ? "equal" : "differ") + '\n';
  emit_text(o.out, report);
  return equal ? kExitOk : kExitMismatch;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chaff-and-winnow log analytics pipeline"};
  app.require_subcommand(1);
  Options o;

  auto* keygen = app.add_subcommand("keygen", "Write a fresh 32-byte key as 64 hex digits");
  keygen->add_option("--out", o.out, "Key file (default: stdout)");

  auto* config = app.add_subcommand("config", "Print the built-in default configuration");
  config->add_option("--out", o.out, "Output path (default: stdout)");

  auto* emit = app.add_subcommand("emit", "Generate, tag, collect and serialize a stream");
  emit->add_option("--config", o.config, "Pipeline config (default: built-in)");
  emit->add_option("--seed", o.seed, "Override the shuffle seed");
  emit->add_option("--out", o.out, "Stream file (default: stdout)");

  auto* run = app.add_subcommand("run", "Run an analytics job over a stream (provider side, no key)");
  run->add_option("--stream", o.stream, "Stream file")->required();
  run->add_option("--job", o.job, "page_hits | session_stats | trending_terms");
  run->add_option("--gap", o.gap, "Session gap in seconds (session_stats)");
  run->add_option("--top-k", o.top_k, "Terms kept per agent (trending_terms)");
  run->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
  run->add_option("--out", o.out, "Output file (default: stdout)");

  auto* winnow = app.add_subcommand("winnow", "Verify agent tokens and merge real results");
  winnow->add_option("--key", o.key, "Shared key, 64 hex digits");
  winnow->add_option("--key-file", o.key_file, "File holding the shared key");
  winnow->add_option("--output", o.output, "Job output file")->required();
  winnow->add_option("--top-k", o.top_k, "Top-K re-applied after merging (trending_terms)");
  winnow->add_option("--gap", o.gap, "Session gap in seconds (session_stats)");
  winnow->add_option("--config", o.config, "Config with agent kinds, for metrics");
  winnow->add_option("--stream", o.stream, "Stream file, for per-agent record counts in metrics");
  winnow->add_option("--metrics", o.metrics, "Metrics report path");
  winnow->add_option("--out", o.out, "Clean output file (default: stdout)");

  auto* eval = app.add_subcommand("eval", "Privacy or overhead experiment");
  eval->add_option("--mode", o.mode, "privacy | overhead");
  eval->add_option("--config", o.config, "Config supplying the traffic model");
  eval->add_option("--seed", o.seed, "Experiment seed");
  eval->add_option("--records", o.records, "Records per side (privacy)");
  eval->add_option("--agents", o.agents, "Agents per side (privacy)");
  eval->add_option("--job", o.job, "Job to time (overhead)");
  eval->add_option("--wheat-size", o.wheat_size, "Real records (overhead)");
  eval->add_option("--ratios", o.ratios, "Comma-separated chaff ratios (overhead)");
  eval->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
  eval->add_option("--out", o.out, "Report path (default: stdout)");

  auto* e2e = app.add_subcommand("e2e", "Emit, run every job, winnow, and compare with a wheat-only run");
  e2e->add_option("--config", o.config, "Pipeline config (default: built-in)");
  e2e->add_option("--seed", o.seed, "Override the shuffle seed");
  e2e->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
  e2e->add_option("--corrupt-offset", o.corrupt_offset, "Flip one bit of the serialized stream at this byte");
  e2e->add_option("--out", o.out, "Report path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*keygen) return cmd_keygen(o);
    if (*config) return cmd_config(o);
    if (*emit) return cmd_emit(o);
    if (*run) return cmd_run(o);
    if (*winnow) return cmd_winnow(o);
    if (*eval) return cmd_eval(o);
    if (*e2e) return cmd_e2e(o);
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
