#include "embaudit/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace embaudit {

ControlMode control_mode_from_string(const std::string& name) {
  if (name == "off") return ControlMode::kOff;
  if (name == "doc_only") return ControlMode::kDocOnly;
  throw Error("unknown control mode: " + name);
}

std::string to_string(ControlMode mode) {
  return mode == ControlMode::kOff ? "off" : "doc_only";
}

void RunManifest::validate() const {
  if (instances.empty()) throw Error("manifest: no experiment instances");
  if (control_mode == ControlMode::kDocOnly && variants.empty())
    throw Error("manifest: doc_only control requires at least one calibration variant");
  if (workers < 1) throw Error("manifest: workers must be >= 1");
  if (max_doc_tokens < 3) throw Error("manifest: max_doc_tokens too small");
  encoder.validate();
  for (const auto& spec : instances) {
    spec.language_config.validate();
    if (spec.language_config.n() != spec.n)
      throw Error("manifest: instance n does not match its language config");
    if (spec.set_count < 1) throw Error("manifest: set_count must be >= 1");
  }
  for (const auto& variant : variants) {
    if (variant.basket_size < 1) throw Error("manifest: basket_size must be >= 1");
    for (int layer : variant.calibrated_layers)
      if (layer < 1 || layer > encoder.layer_count)
        throw Error("manifest: calibrated layer outside the encoder's layers");
  }
}

namespace {

std::string variant_label(const std::optional<CalibrationConfig>& variant,
                          ControlMode control_mode) {
  if (!variant) return "none";
  std::string label = variant->variant_id();
  if (control_mode == ControlMode::kDocOnly) label += "+doconly";
  return label;
}

std::string variant_cache_id(const std::optional<CalibrationConfig>& variant) {
  return variant ? variant->variant_id() : "none";
}

/// Canonical byte string of a piece sequence; document text alone would
/// not pin down segment boundaries or languages.
std::string pieces_fingerprint(std::span<const TextPiece> pieces) {
  std::string canonical;
  for (const auto& piece : pieces) {
    canonical += piece.language;
    canonical += '\x1f';
    canonical += piece.text;
    canonical += '\x1e';
  }
  return EmbeddingCache::content_hash(canonical);
}

struct DocumentEmbeddings {
  Vector pooled;
  std::vector<Vector> contextualized;  // per document position; mean pooling only
};

/// Pooled (and, for mean pooling, contextualized) vectors for one
/// document, via the cache; encodes at most once.
DocumentEmbeddings document_embeddings(const DocumentSpec& document,
                                       const SegmentSet& set, const Corpus& corpus,
                                       const Encoder& encoder, EmbeddingCache& cache,
                                       const std::optional<CalibrationConfig>& variant) {
  const auto pieces = document_pieces(document, set, corpus);
  const std::string fingerprint = pieces_fingerprint(pieces);
  const std::string model_id = encoder.model_id();
  const std::string calibration_id = variant_cache_id(variant);
  const bool want_contextualized = encoder.config().pooling == Pooling::kMean;
  const int n = document.n();

  DocumentEmbeddings result;
  const CacheKey pooled_key{fingerprint, model_id, calibration_id};
  auto pooled_hit = cache.find(pooled_key);
  bool complete = pooled_hit.has_value();
  if (complete && want_contextualized) {
    result.contextualized.resize(n);
    for (int i = 0; i < n && complete; ++i) {
      const CacheKey key{fingerprint + "#ctx" + std::to_string(i), model_id,
                         calibration_id};
      if (auto hit = cache.find(key)) {
        result.contextualized[i] = std::move(*hit);
      } else {
        complete = false;
      }
    }
  }
  if (complete) {
    result.pooled = std::move(*pooled_hit);
    return result;
  }

  const EncodeOutput out = encoder.encode(tokenize(pieces, encoder.config().tokenizer),
                                          variant);
  result.pooled = out.pooled;
  cache.put(pooled_key, result.pooled);
  if (want_contextualized) {
    result.contextualized.resize(n);
    for (int i = 0; i < n; ++i) {
      result.contextualized[i] = contextualized_segment_embedding(out, i);
      cache.put({fingerprint + "#ctx" + std::to_string(i), model_id, calibration_id},
                result.contextualized[i]);
    }
  }
  return result;
}

Vector standalone_embedding(const Segment& segment, const Encoder& encoder,
                            EmbeddingCache& cache,
                            const std::optional<CalibrationConfig>& variant) {
  const TextPiece piece{segment.text, segment.language};
  const CacheKey key{pieces_fingerprint(std::span<const TextPiece>(&piece, 1)),
                     encoder.model_id(), variant_cache_id(variant)};
  if (auto hit = cache.find(key)) return std::move(*hit);
  Vector pooled = encoder.embed_segment_standalone(segment, variant);
  cache.put(key, pooled);
  return pooled;
}

struct DocumentOutcome {
  std::vector<SimilarityRecord> records;
  std::optional<std::string> error;
};

}  // namespace

InstanceRun run_experiment_instance(const ExperimentInstance& instance,
                                    const Corpus& corpus, const Encoder& encoder,
                                    EmbeddingCache& cache,
                                    const std::optional<CalibrationConfig>& variant,
                                    ControlMode control_mode, int workers) {
  if (variant) {
    for (int layer : variant->calibrated_layers)
      if (layer < 1 || layer > encoder.config().layer_count)
        throw Error("run_experiment_instance: calibrated layer outside encoder layers");
  }
  const bool mean_pooled = encoder.config().pooling == Pooling::kMean;
  const std::string label = variant_label(variant, control_mode);
  const std::optional<CalibrationConfig> standalone_variant =
      (control_mode == ControlMode::kDocOnly) ? std::nullopt : variant;

  std::map<std::string, const SegmentSet*> sets_by_id;
  for (const auto& set : instance.sets) sets_by_id[set.id] = &set;

  InstanceRun out;
  std::set<std::string> failed_sets;

  // Standalone embeddings per set, canonical order. Computed up front so
  // parallel document workers only read.
  std::map<std::string, std::vector<Vector>> standalone_by_set;
  for (const auto& set : instance.sets) {
    try {
      std::vector<Vector> vectors;
      vectors.reserve(set.n());
      for (const auto& segment_id : set.segment_ids)
        vectors.push_back(standalone_embedding(corpus.by_id(segment_id), encoder, cache,
                                               standalone_variant));
      standalone_by_set[set.id] = std::move(vectors);
    } catch (const std::exception& e) {
      if (failed_sets.insert(set.id).second)
        out.failures.push_back({instance.id(), set.id, e.what()});
    }
  }

  const int document_count = static_cast<int>(instance.documents.size());
  std::vector<DocumentOutcome> outcomes(document_count);

  auto process = [&](int index) {
    const DocumentSpec& document = instance.documents[index];
    DocumentOutcome& outcome = outcomes[index];
    if (failed_sets.count(document.segment_set_id)) return;
    try {
      const SegmentSet& set = *sets_by_id.at(document.segment_set_id);
      const auto embeddings =
          document_embeddings(document, set, corpus, encoder, cache, variant);
      const auto& standalone_canonical = standalone_by_set.at(set.id);
      std::vector<Vector> standalone_by_position(document.n());
      for (int i = 0; i < document.n(); ++i)
        standalone_by_position[i] = standalone_canonical[document.permutation[i]];

      RecordMeta meta{document.segment_set_id, document.permutation_id, document.n(),
                      instance.language_config.id(), encoder.model_id(), label};
      outcome.records =
          positional_fairness_scores(embeddings.pooled, standalone_by_position, meta);
      if (mean_pooled) {
        auto retention = information_retention_scores(
            standalone_by_position, embeddings.contextualized, meta);
        outcome.records.insert(outcome.records.end(),
                               std::make_move_iterator(retention.begin()),
                               std::make_move_iterator(retention.end()));
      }
    } catch (const std::exception& e) {
      outcome.error = e.what();
    }
  };

  const int thread_count = std::max(1, std::min(workers, document_count));
  if (thread_count == 1) {
    for (int i = 0; i < document_count; ++i) process(i);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(thread_count);
    for (int t = 0; t < thread_count; ++t) {
      pool.emplace_back([&, t] {
        for (int i = t; i < document_count; i += thread_count) process(i);
      });
    }
    for (auto& thread : pool) thread.join();
  }

  // A failed document quarantines its whole segment set.
  for (int i = 0; i < document_count; ++i) {
    if (outcomes[i].error) {
      const std::string& set_id = instance.documents[i].segment_set_id;
      if (failed_sets.insert(set_id).second)
        out.failures.push_back({instance.id(), set_id, *outcomes[i].error});
    }
  }
  for (int i = 0; i < document_count; ++i) {
    if (failed_sets.count(instance.documents[i].segment_set_id)) continue;
    out.records.insert(out.records.end(),
                       std::make_move_iterator(outcomes[i].records.begin()),
                       std::make_move_iterator(outcomes[i].records.end()));
  }

  // One fit per kind, on the surviving records. An infeasible fit (e.g.
  // a single surviving cluster) is reported, not fatal: the records are
  // the primary artifact.
  for (const auto kind :
       {SimilarityRecord::Kind::kRepresentation, SimilarityRecord::Kind::kRetention}) {
    std::vector<SimilarityRecord> subset;
    std::copy_if(out.records.begin(), out.records.end(), std::back_inserter(subset),
                 [kind](const SimilarityRecord& r) { return r.kind == kind; });
    if (subset.empty()) continue;
    try {
      out.fits.push_back({instance.id(), label, fit_position_ols(subset)});
    } catch (const std::exception& e) {
      out.failures.push_back({instance.id(), "",
                              "fit (" + to_string(kind) + ", " + label + "): " + e.what()});
    }
  }
  return out;
}

std::vector<ComparisonRow> compare_calibrations(std::span<const LabeledFit> fits) {
  std::map<std::pair<std::string, std::string>, const LabeledFit*> baseline;
  for (const auto& labeled : fits)
    if (labeled.calibration_id == "none")
      baseline[{labeled.instance_id, to_string(labeled.fit.kind)}] = &labeled;

  bool compared_any = false;
  std::vector<ComparisonRow> rows;
  for (const auto& labeled : fits) {
    if (labeled.calibration_id == "none") continue;
    compared_any = true;
    auto it = baseline.find({labeled.instance_id, to_string(labeled.fit.kind)});
    if (it == baseline.end())
      throw Error("compare_calibrations: missing baseline fit for instance '" +
                  labeled.instance_id + "'");
    const OlsFit& base = it->second->fit;
    const OlsFit& cal = labeled.fit;
    if (base.n_positions != cal.n_positions)
      throw Error("compare_calibrations: position count mismatch");
    for (int p = 2; p <= cal.n_positions; ++p) {
      ComparisonRow row;
      row.instance_id = labeled.instance_id;
      row.kind = to_string(cal.kind);
      row.p = p;
      row.variant_id = labeled.calibration_id;
      row.beta_baseline = base.beta(p);
      row.beta_variant = cal.beta(p);
      if (base.beta(p) != 0.0)
        row.reduction_ratio = std::abs(cal.beta(p)) / std::abs(base.beta(p));
      rows.push_back(std::move(row));
    }
  }
  if (!compared_any) throw Error("compare_calibrations: need at least 2 variants");
  return rows;
}

void write_comparison_csv(const std::filesystem::path& path,
                          std::span<const ComparisonRow> rows) {
  std::ofstream out(path);
  if (!out) throw Error("write_comparison_csv: cannot open '" + path.string() + "'");
  out << "instance_id,kind,p,variant_id,beta_baseline,beta_variant,reduction_ratio\n";
  out.precision(12);
  for (const auto& row : rows) {
    out << csv_escape(row.instance_id) << ',' << row.kind << ',' << row.p << ','
        << csv_escape(row.variant_id) << ',' << row.beta_baseline << ','
        << row.beta_variant << ',';
    if (row.reduction_ratio) {
      out << *row.reduction_ratio;
    } else {
      out << "na";
    }
    out << '\n';
  }
}

namespace {

LanguageConfig language_config_from_json(const nlohmann::json& spec, int n) {
  if (spec.contains("language"))
    return LanguageConfig::monolingual(spec.at("language").get<std::string>(), n);
  if (spec.contains("lead") && spec.contains("later"))
    return LanguageConfig::mixed(spec.at("lead").get<std::string>(),
                                 spec.at("later").get<std::string>(), n);
  throw Error("manifest: instance needs either 'language' or 'lead'+'later'");
}

std::vector<int> layers_from_json(const nlohmann::json& value) {
  std::vector<int> layers;
  if (value.is_array()) {
    for (const auto& layer : value) layers.push_back(layer.get<int>());
  } else if (value.is_object()) {
    const int first = value.at("first").get<int>();
    const int last = value.at("last").get<int>();
    if (last < first) throw Error("manifest: variant layer range with last < first");
    for (int layer = first; layer <= last; ++layer) layers.push_back(layer);
  } else {
    throw Error("manifest: variant 'layers' must be an array or {first,last}");
  }
  return layers;
}

}  // namespace

RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_manifest: cannot open '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error("load_manifest: malformed JSON: " + std::string(e.what()));
  }

  RunManifest manifest;
  try {
    manifest.run_id = doc.value("run_id", std::string("run"));
    manifest.seed = doc.value("seed", std::uint64_t{0});
    manifest.max_doc_tokens = doc.value("max_doc_tokens", 8192);
    manifest.workers = doc.value("workers", 1);
    if (doc.contains("control_mode"))
      manifest.control_mode =
          control_mode_from_string(doc.at("control_mode").get<std::string>());
    if (doc.contains("cache_path"))
      manifest.cache_path = doc.at("cache_path").get<std::string>();

    if (doc.contains("encoder")) {
      const auto& enc = doc.at("encoder");
      manifest.encoder.layer_count = enc.value("layers", 12);
      manifest.encoder.head_count = enc.value("heads", 4);
      manifest.encoder.model_dim = enc.value("dim", 64);
      manifest.encoder.max_positions = enc.value("max_positions", 1024);
      manifest.encoder.init_seed = enc.value("init_seed", std::uint64_t{0});
      manifest.encoder.bag_of_tokens = enc.value("bag_of_tokens", false);
      if (enc.contains("pooling"))
        manifest.encoder.pooling = pooling_from_string(enc.at("pooling").get<std::string>());
      if (enc.contains("attention_bias")) {
        const auto& bias = enc.at("attention_bias");
        const std::string kind = bias.value("kind", std::string("none"));
        if (kind == "front_loaded") {
          manifest.encoder.attention_bias =
              AttentionBias::front_loaded(bias.value("strength", 0.0));
        } else if (kind != "none") {
          throw Error("manifest: unknown attention bias kind '" + kind + "'");
        }
      }
      if (enc.contains("vocab_size"))
        manifest.encoder.tokenizer.vocab_size = enc.at("vocab_size").get<int>();
    }

    if (doc.contains("corpus")) {
      const auto& corpus = doc.at("corpus");
      if (corpus.contains("path")) {
        manifest.corpus.generate = false;
        manifest.corpus.path = corpus.at("path").get<std::string>();
        if (corpus.contains("languages"))
          manifest.corpus.languages =
              corpus.at("languages").get<std::vector<std::string>>();
      } else if (corpus.contains("generate")) {
        const auto& gen = corpus.at("generate");
        manifest.corpus.generate = true;
        manifest.corpus.languages = gen.value("languages", manifest.corpus.languages);
        manifest.corpus.segments_per_language = gen.value("per_language", 16);
        manifest.corpus.length_band = {gen.value("min_tokens", 24),
                                       gen.value("max_tokens", 48)};
        manifest.corpus.seed = gen.value("seed", manifest.seed);
      } else {
        throw Error("manifest: corpus needs 'path' or 'generate'");
      }
    }
    // The tokenizer partitions content ids per language; align it with
    // the corpus languages.
    manifest.encoder.tokenizer.languages = manifest.corpus.languages;

    for (const auto& spec : doc.at("instances")) {
      InstanceSpec instance;
      instance.n = spec.at("n").get<int>();
      instance.language_config = language_config_from_json(spec, instance.n);
      instance.set_count = spec.at("set_count").get<int>();
      if (spec.contains("permutations")) {
        const auto& perms = spec.at("permutations");
        instance.permutations_per_set =
            perms.is_string() && perms.get<std::string>() == "all" ? kAllPermutations
                                                                   : perms.get<int>();
      }
      manifest.instances.push_back(std::move(instance));
    }

    if (doc.contains("variants")) {
      for (const auto& spec : doc.at("variants")) {
        CalibrationConfig variant;
        variant.basket_size = spec.at("basket_size").get<int>();
        variant.calibrated_layers = layers_from_json(spec.at("layers"));
        if (spec.contains("mode"))
          variant.mass_mode = mass_mode_from_string(spec.at("mode").get<std::string>());
        variant.id = spec.value("id", std::string());
        manifest.variants.push_back(std::move(variant));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("load_manifest: " + std::string(e.what()));
  }
  manifest.validate();
  return manifest;
}

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["run_id"] = manifest.run_id;
  doc["seed"] = manifest.seed;
  doc["max_doc_tokens"] = manifest.max_doc_tokens;
  doc["workers"] = manifest.workers;
  doc["control_mode"] = to_string(manifest.control_mode);
  if (!manifest.cache_path.empty()) doc["cache_path"] = manifest.cache_path.string();

  nlohmann::json enc{{"layers", manifest.encoder.layer_count},
                     {"heads", manifest.encoder.head_count},
                     {"dim", manifest.encoder.model_dim},
                     {"max_positions", manifest.encoder.max_positions},
                     {"init_seed", manifest.encoder.init_seed},
                     {"pooling", to_string(manifest.encoder.pooling)},
                     {"bag_of_tokens", manifest.encoder.bag_of_tokens},
                     {"vocab_size", manifest.encoder.tokenizer.vocab_size}};
  if (manifest.encoder.attention_bias.kind == AttentionBias::Kind::kFrontLoaded)
    enc["attention_bias"] = {{"kind", "front_loaded"},
                             {"strength", manifest.encoder.attention_bias.strength}};
  doc["encoder"] = std::move(enc);

  if (manifest.corpus.generate) {
    doc["corpus"] = {{"generate",
                      {{"languages", manifest.corpus.languages},
                       {"per_language", manifest.corpus.segments_per_language},
                       {"min_tokens", manifest.corpus.length_band.first},
                       {"max_tokens", manifest.corpus.length_band.second},
                       {"seed", manifest.corpus.seed}}}};
  } else {
    doc["corpus"] = {{"path", manifest.corpus.path.string()},
                     {"languages", manifest.corpus.languages}};
  }

  auto instances = nlohmann::json::array();
  for (const auto& spec : manifest.instances) {
    nlohmann::json instance{{"n", spec.n}, {"set_count", spec.set_count}};
    if (spec.language_config.kind == LanguageConfig::Kind::kMonolingual) {
      instance["language"] = spec.language_config.per_position.front();
    } else {
      instance["lead"] = spec.language_config.per_position.front();
      instance["later"] = spec.language_config.per_position[1];
    }
    if (spec.permutations_per_set == kAllPermutations) {
      instance["permutations"] = "all";
    } else {
      instance["permutations"] = spec.permutations_per_set;
    }
    instances.push_back(std::move(instance));
  }
  doc["instances"] = std::move(instances);

  auto variants = nlohmann::json::array();
  for (const auto& variant : manifest.variants) {
    nlohmann::json spec{{"basket_size", variant.basket_size},
                        {"layers", variant.calibrated_layers},
                        {"mode", to_string(variant.mass_mode)}};
    if (!variant.id.empty()) spec["id"] = variant.id;
    variants.push_back(std::move(spec));
  }
  doc["variants"] = std::move(variants);

  std::ofstream out(path);
  if (!out) throw Error("save_manifest: cannot open '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

AuditRun::AuditRun(RunManifest manifest, std::filesystem::path out_dir)
    : manifest_(std::move(manifest)), out_dir_(std::move(out_dir)) {
  manifest_.validate();
  std::filesystem::create_directories(out_dir_);

  if (manifest_.corpus.generate) {
    corpus_ = generate_synthetic_corpus(manifest_.corpus.seed, manifest_.corpus.languages,
                                        manifest_.corpus.segments_per_language,
                                        manifest_.corpus.length_band);
  } else {
    corpus_ = load_corpus(manifest_.corpus.path, manifest_.corpus.languages);
  }
  encoder_ = std::make_unique<Encoder>(manifest_.encoder);
  const auto cache_path = manifest_.cache_path.empty()
                              ? out_dir_ / "embedding_cache.jsonl"
                              : manifest_.cache_path;
  cache_ = std::make_unique<EmbeddingCache>(cache_path);

  // Materialize instances; a set whose documents cannot be built (e.g.
  // over the token limit) is quarantined here.
  for (std::size_t index = 0; index < manifest_.instances.size(); ++index) {
    const InstanceSpec& spec = manifest_.instances[index];
    ExperimentInstance instance;
    instance.n = spec.n;
    instance.language_config = spec.language_config;
    instance.seed = mix_seed(manifest_.seed, index);
    instance.sets = build_segment_sets(corpus_, spec.n, spec.language_config,
                                       spec.set_count, instance.seed);
    for (const auto& set : instance.sets) {
      try {
        auto documents = enumerate_documents(set, corpus_, spec.permutations_per_set,
                                             instance.seed, manifest_.max_doc_tokens);
        instance.documents.insert(instance.documents.end(),
                                  std::make_move_iterator(documents.begin()),
                                  std::make_move_iterator(documents.end()));
      } catch (const std::exception& e) {
        materialization_failures_.push_back({instance.id(), set.id, e.what()});
      }
    }
    instances_.push_back(std::move(instance));
  }
}

AuditOutputs AuditRun::execute() {
  AuditOutputs outputs;
  outputs.failures = materialization_failures_;

  std::vector<std::optional<CalibrationConfig>> variants;
  variants.emplace_back(std::nullopt);  // baseline always runs
  for (const auto& variant : manifest_.variants) variants.emplace_back(variant);

  for (const auto& instance : instances_) {
    // First pass: collect per-variant outcomes, pooling quarantined sets.
    std::vector<InstanceRun> runs;
    std::set<std::string> failed_sets;
    for (const auto& note : materialization_failures_)
      if (note.instance_id == instance.id()) failed_sets.insert(note.segment_set_id);
    for (const auto& variant : variants) {
      runs.push_back(run_experiment_instance(instance, corpus_, *encoder_, *cache_,
                                             variant, manifest_.control_mode,
                                             manifest_.workers));
      for (const auto& note : runs.back().failures) {
        if (note.segment_set_id.empty()) {
          outputs.failures.push_back(note);  // fit-level note, no quarantine
        } else if (failed_sets.insert(note.segment_set_id).second) {
          outputs.failures.push_back(note);
        }
      }
    }
    // Second pass: apply the union quarantine across variants, refit.
    for (std::size_t v = 0; v < runs.size(); ++v) {
      std::vector<SimilarityRecord> kept;
      for (auto& record : runs[v].records)
        if (!failed_sets.count(record.segment_set_id)) kept.push_back(std::move(record));
      const bool refit = kept.size() != runs[v].records.size();
      if (!refit) {
        for (auto& fit : runs[v].fits) outputs.fits.push_back(std::move(fit));
      } else {
        const std::string label = variant_label(variants[v], manifest_.control_mode);
        for (const auto kind : {SimilarityRecord::Kind::kRepresentation,
                                SimilarityRecord::Kind::kRetention}) {
          std::vector<SimilarityRecord> subset;
          std::copy_if(kept.begin(), kept.end(), std::back_inserter(subset),
                       [kind](const SimilarityRecord& r) { return r.kind == kind; });
          if (subset.empty()) continue;
          try {
            outputs.fits.push_back({instance.id(), label, fit_position_ols(subset)});
          } catch (const std::exception& e) {
            outputs.failures.push_back(
                {instance.id(), "",
                 "fit (" + to_string(kind) + ", " + label + "): " + e.what()});
          }
        }
      }
      outputs.records.insert(outputs.records.end(),
                             std::make_move_iterator(kept.begin()),
                             std::make_move_iterator(kept.end()));
    }
  }

  if (!manifest_.variants.empty()) {
    try {
      outputs.comparison = compare_calibrations(outputs.fits);
    } catch (const std::exception& e) {
      outputs.failures.push_back({"", "", std::string("comparison: ") + e.what()});
    }
  }

  write_records_csv(out_dir_ / "records.csv", outputs.records);
  write_ols_csv(out_dir_ / "ols.csv", outputs.fits);
  if (!outputs.comparison.empty())
    write_comparison_csv(out_dir_ / "comparison.csv", outputs.comparison);

  nlohmann::json metadata;
  metadata["run_id"] = manifest_.run_id;
  metadata["seed"] = manifest_.seed;
  metadata["model_id"] = encoder_->model_id();
  metadata["control_mode"] = to_string(manifest_.control_mode);
  auto variant_ids = nlohmann::json::array();
  variant_ids.push_back("none");
  for (const auto& variant : manifest_.variants) variant_ids.push_back(variant.variant_id());
  metadata["variants"] = std::move(variant_ids);
  metadata["conventions"] = {{"cluster_se", "CR1"},
                             {"test_reference", "t(G-1)"},
                             {"positions", "1-indexed"},
                             {"joiner", "single space"}};
  metadata["record_count"] = outputs.records.size();
  metadata["failure_count"] = outputs.failures.size();
  metadata["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
                              std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION);
  std::ofstream meta_out(out_dir_ / "run_metadata.json");
  if (!meta_out) throw Error("execute: cannot write run_metadata.json");
  meta_out << metadata.dump(2) << '\n';

  if (!outputs.failures.empty()) {
    auto failures = nlohmann::json::array();
    for (const auto& note : outputs.failures)
      failures.push_back({{"instance_id", note.instance_id},
                          {"segment_set_id", note.segment_set_id},
                          {"error", note.error}});
    std::ofstream failure_out(out_dir_ / "failures.json");
    failure_out << failures.dump(2) << '\n';
  }
  return outputs;
}

}  // namespace embaudit
