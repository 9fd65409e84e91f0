#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "embaudit/calibration.hpp"
#include "embaudit/cache.hpp"
#include "embaudit/corpus.hpp"
#include "embaudit/encoder.hpp"
#include "embaudit/metrics.hpp"
#include "embaudit/pipeline.hpp"
#include "embaudit/report.hpp"
#include "embaudit/stats.hpp"

namespace {

using namespace embaudit;

void emit_error(const std::string& type, const std::string& message) {
  nlohmann::json error{{"type", type}, {"error", message}};
  std::cerr << error.dump() << std::endl;
}

std::vector<double> parse_row(const std::string& csv) {
  std::vector<double> values;
  std::stringstream stream(csv);
  std::string item;
  while (std::getline(stream, item, ',')) {
    if (item.empty()) continue;
    values.push_back(std::stod(item));
  }
  if (values.empty()) throw Error("calibrate-demo: empty row");
  return values;
}

std::vector<int> parse_layer_selection(const std::string& spec, int layer_count) {
  std::vector<int> layers;
  if (spec == "all") {
    for (int l = 1; l <= layer_count; ++l) layers.push_back(l);
  } else if (spec == "last6") {
    for (int l = std::max(1, layer_count - 5); l <= layer_count; ++l)
      layers.push_back(l);
  } else if (auto dots = spec.find(".."); dots != std::string::npos) {
    const int first = std::stoi(spec.substr(0, dots));
    const int last = std::stoi(spec.substr(dots + 2));
    if (first < 1 || last < first || last > layer_count)
      throw Error("invalid layer range: " + spec);
    for (int l = first; l <= last; ++l) layers.push_back(l);
  } else {
    throw Error("layer selection must be 'last6', 'all', or 'A..B'");
  }
  return layers;
}

std::string instance_key(const SimilarityRecord& record) {
  return record.language_config_id + "-n" + std::to_string(record.n);
}

std::vector<LabeledFit> fit_all_groups(const std::vector<SimilarityRecord>& records) {
  std::map<std::tuple<std::string, std::string, std::string>,
           std::vector<SimilarityRecord>>
      groups;
  for (const auto& record : records)
    groups[{instance_key(record), record.calibration_id, to_string(record.kind)}]
        .push_back(record);
  std::vector<LabeledFit> fits;
  for (const auto& [key, subset] : groups)
    fits.push_back({std::get<0>(key), std::get<1>(key), fit_position_ols(subset)});
  return fits;
}

int cmd_gen_corpus(std::uint64_t seed, const std::vector<std::string>& languages,
                   int per_language, int min_tokens, int max_tokens,
                   const std::string& out_path) {
  const Corpus corpus = generate_synthetic_corpus(seed, languages, per_language,
                                                  {min_tokens, max_tokens});
  save_corpus(corpus, out_path);
  std::cout << "wrote " << corpus.size() << " segments to " << out_path << std::endl;
  return 0;
}

int cmd_audit(const std::string& manifest_path, const std::string& out_dir, int workers) {
  RunManifest manifest = load_manifest(manifest_path);
  if (workers > 0) manifest.workers = workers;
  AuditRun run(manifest, out_dir);
  const AuditOutputs outputs = run.execute();
  std::cout << "run '" << manifest.run_id << "': " << outputs.records.size()
            << " records, " << outputs.fits.size() << " fits, "
            << outputs.failures.size() << " quarantined sets -> " << out_dir
            << std::endl;
  return 0;
}

int cmd_calibrate_demo(const std::string& row_csv, int basket_size,
                       const std::string& mode) {
  const auto values = parse_row(row_csv);
  Vector row(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) row(i) = values[i];
  const double total = row.sum();
  if (std::abs(total - 1.0) > 1e-6)
    throw Error("calibrate-demo: row sums to " + std::to_string(total) +
                ", expected a probability distribution");
  const auto partition = partition_keys(static_cast<int>(row.size()), basket_size);
  const Vector calibrated = calibrate_row(row, partition, mass_mode_from_string(mode));
  for (int i = 0; i < calibrated.size(); ++i)
    std::printf("%s%.6f", i ? "," : "", calibrated(i));
  std::printf("\n");
  return 0;
}

int cmd_attention_profile(const std::string& doc_path, int basket_size,
                          const std::string& layer_spec, const std::string& out_svg,
                          EncoderConfig config, double bias_strength) {
  std::ifstream in(doc_path);
  if (!in) throw Error("attention-profile: cannot open '" + doc_path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error("attention-profile: malformed document JSON: " + std::string(e.what()));
  }
  std::vector<TextPiece> pieces;
  for (const auto& segment : doc.at("segments"))
    pieces.push_back({segment.at("text").get<std::string>(),
                      segment.at("language").get<std::string>()});

  if (bias_strength > 0.0)
    config.attention_bias = AttentionBias::front_loaded(bias_strength);
  const Encoder encoder(config);
  const EncodeOutput output = encoder.encode(tokenize(pieces, config.tokenizer));
  const auto partition = partition_keys(output.sequence_length(), basket_size);
  const auto layers = parse_layer_selection(layer_spec, config.layer_count);
  const AttentionProfile profile =
      basket_profile(output.start_attention, partition, layers);

  std::cout << "<s> " << profile.start_mass << '\n';
  for (std::size_t i = 0; i < profile.basket_mass.size(); ++i)
    std::cout << "basket" << i + 2 << " " << profile.basket_mass[i] << '\n';
  std::cout << "</s> " << profile.end_mass << std::endl;

  if (!out_svg.empty()) {
    SvgStyle style;
    style.title = "pooling-token attention by basket (B=" +
                  std::to_string(basket_size) + ")";
    std::ofstream svg(out_svg);
    if (!svg) throw Error("attention-profile: cannot open '" + out_svg + "'");
    svg << render_attention_svg(profile, style);
    std::cout << "wrote " << out_svg << std::endl;
  }
  return 0;
}

int cmd_fit_ols(const std::string& records_path, const std::string& out_path) {
  const auto records = read_records_csv(records_path);
  if (records.empty()) throw Error("fit-ols: no records in '" + records_path + "'");
  const auto fits = fit_all_groups(records);
  write_ols_csv(out_path, fits);
  std::cout << format_ols_table(fits);
  std::cout << "wrote " << fits.size() << " fits to " << out_path << std::endl;
  return 0;
}

int cmd_report(const std::string& run_dir, const std::string& out_dir) {
  const auto records = read_records_csv(std::filesystem::path(run_dir) / "records.csv");
  if (records.empty()) throw Error("report: no records in run dir");
  std::filesystem::create_directories(out_dir);

  std::map<std::pair<std::string, std::string>, std::vector<SimilarityRecord>> panels;
  for (const auto& record : records)
    panels[{instance_key(record), to_string(record.kind)}].push_back(record);

  int svg_count = 0;
  for (const auto& [key, subset] : panels) {
    const auto aggregates = aggregate_by_position(
        subset, [](const SimilarityRecord& r) { return r.calibration_id; });
    SvgStyle style;
    style.title = key.first + " / " + key.second;
    const std::string name = "profile-" + key.first + "-" + key.second + ".svg";
    std::ofstream svg(std::filesystem::path(out_dir) / name);
    if (!svg) throw Error("report: cannot write '" + name + "'");
    svg << render_profile_svg(aggregates, style);
    ++svg_count;
  }

  const auto fits = fit_all_groups(records);
  std::ofstream table(std::filesystem::path(out_dir) / "ols_tables.txt");
  if (!table) throw Error("report: cannot write ols_tables.txt");
  table << format_ols_table(fits);

  std::cout << "wrote " << svg_count << " profile charts and 1 table to " << out_dir
            << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embaudit: positional-bias audit and attention calibration for "
               "long-context embedding models"};
  app.require_subcommand(1);

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic comparable corpus");
  std::uint64_t gen_seed = 0;
  std::vector<std::string> gen_languages{"en", "zh", "de", "it", "ko", "hi"};
  int gen_per_lang = 16, gen_min = 24, gen_max = 48;
  std::string gen_out = "corpus.jsonl";
  gen->add_option("--seed", gen_seed, "Generation seed")->capture_default_str();
  gen->add_option("--languages", gen_languages, "Language tags")
      ->delimiter(',')->capture_default_str();
  gen->add_option("--per-lang", gen_per_lang, "Segments per language")
      ->capture_default_str();
  gen->add_option("--min-tokens", gen_min, "Minimum segment tokens")->capture_default_str();
  gen->add_option("--max-tokens", gen_max, "Maximum segment tokens")->capture_default_str();
  gen->add_option("--out", gen_out, "Output JSONL path")->capture_default_str();

  // audit
  auto* audit = app.add_subcommand("audit", "Run an audit manifest end-to-end");
  std::string audit_manifest, audit_out = "audit-out";
  int audit_workers = 0;
  audit->add_option("--manifest", audit_manifest, "Run manifest (JSON)")
      ->required()->check(CLI::ExistingFile);
  audit->add_option("--out", audit_out, "Output directory")->capture_default_str();
  audit->add_option("--workers", audit_workers,
                    "Document-level worker threads (default: manifest value, 1)");

  // attention-profile
  auto* attention = app.add_subcommand("attention-profile",
                                       "Basket profile of the pooling-token attention");
  std::string att_doc, att_layers = "last6", att_svg;
  int att_basket = 128;
  EncoderConfig att_config;
  double att_bias = 0.0;
  attention->add_option("--doc", att_doc, "Document JSON ({\"segments\":[{text,language}]})")
      ->required()->check(CLI::ExistingFile);
  attention->add_option("--basket-size", att_basket, "Basket size")->capture_default_str();
  attention->add_option("--layers", att_layers, "last6 | all | A..B")
      ->capture_default_str();
  attention->add_option("--out-svg", att_svg, "Write a bar chart here");
  attention->add_option("--enc-layers", att_config.layer_count, "Encoder layers")
      ->capture_default_str();
  attention->add_option("--enc-heads", att_config.head_count, "Attention heads")
      ->capture_default_str();
  attention->add_option("--enc-dim", att_config.model_dim, "Model dimension")
      ->capture_default_str();
  attention->add_option("--init-seed", att_config.init_seed, "Weight init seed")
      ->capture_default_str();
  attention->add_option("--bias-strength", att_bias,
                        "Injected front-loaded attention bias strength (0 = off)")
      ->capture_default_str();

  // calibrate-demo
  auto* demo = app.add_subcommand("calibrate-demo", "Calibrate one attention row");
  std::string demo_row, demo_mode = "uniform";
  int demo_basket = 2;
  demo->add_option("--row", demo_row, "Comma-separated attention row")->required();
  demo->add_option("--basket-size", demo_basket, "Basket size")->capture_default_str();
  demo->add_option("--mode", demo_mode, "uniform | proportional")->capture_default_str();

  // fit-ols
  auto* fit = app.add_subcommand("fit-ols", "Fit position OLS over a records CSV");
  std::string fit_records, fit_out = "ols.csv";
  fit->add_option("--records", fit_records, "Records CSV")
      ->required()->check(CLI::ExistingFile);
  fit->add_option("--out", fit_out, "Output OLS CSV")->capture_default_str();

  // report
  auto* report = app.add_subcommand("report", "Render charts and tables for a run");
  std::string report_run, report_out = "report-out";
  report->add_option("--run-dir", report_run, "Audit output directory")
      ->required()->check(CLI::ExistingDirectory);
  report->add_option("--out-dir", report_out, "Report output directory")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what());
    return 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen_corpus(gen_seed, gen_languages, gen_per_lang, gen_min, gen_max,
                            gen_out);
    if (audit->parsed()) return cmd_audit(audit_manifest, audit_out, audit_workers);
    if (attention->parsed())
      return cmd_attention_profile(att_doc, att_basket, att_layers, att_svg, att_config,
                                   att_bias);
    if (demo->parsed()) return cmd_calibrate_demo(demo_row, demo_basket, demo_mode);
    if (fit->parsed()) return cmd_fit_ols(fit_records, fit_out);
    if (report->parsed()) return cmd_report(report_run, report_out);
  } catch (const Error& e) {
    emit_error("data", e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error("data", e.what());
    return 1;
  }
  return 0;
}
