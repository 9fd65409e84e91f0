#include "embaudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace embaudit {

std::string to_string(SimilarityRecord::Kind kind) {
  return kind == SimilarityRecord::Kind::kRepresentation ? "representation" : "retention";
}

SimilarityRecord::Kind record_kind_from_string(const std::string& name) {
  if (name == "representation") return SimilarityRecord::Kind::kRepresentation;
  if (name == "retention") return SimilarityRecord::Kind::kRetention;
  throw Error("unknown record kind: " + name);
}

namespace {

SimilarityRecord make_record(const RecordMeta& meta, int position,
                             SimilarityRecord::Kind kind, double value) {
  SimilarityRecord record;
  record.segment_set_id = meta.segment_set_id;
  record.permutation_id = meta.permutation_id;
  record.position = position;
  record.kind = kind;
  record.value = value;
  record.n = meta.n;
  record.language_config_id = meta.language_config_id;
  record.model_id = meta.model_id;
  record.calibration_id = meta.calibration_id;
  return record;
}

}  // namespace

std::vector<SimilarityRecord> positional_fairness_scores(
    const Vector& doc_embedding, std::span<const Vector> standalone_by_position,
    const RecordMeta& meta) {
  if (static_cast<int>(standalone_by_position.size()) != meta.n)
    throw Error("positional_fairness_scores: expected " + std::to_string(meta.n) +
                " standalone embeddings, got " +
                std::to_string(standalone_by_position.size()));
  std::vector<SimilarityRecord> records;
  records.reserve(meta.n);
  for (int i = 0; i < meta.n; ++i)
    records.push_back(make_record(meta, i + 1, SimilarityRecord::Kind::kRepresentation,
                                  cosine(doc_embedding, standalone_by_position[i])));
  return records;
}

std::vector<SimilarityRecord> information_retention_scores(
    std::span<const Vector> standalone_by_position,
    std::span<const Vector> contextualized_by_position, const RecordMeta& meta) {
  if (standalone_by_position.size() != contextualized_by_position.size() ||
      static_cast<int>(standalone_by_position.size()) != meta.n)
    throw Error("information_retention_scores: count mismatch");
  std::vector<SimilarityRecord> records;
  records.reserve(meta.n);
  for (int i = 0; i < meta.n; ++i)
    records.push_back(
        make_record(meta, i + 1, SimilarityRecord::Kind::kRetention,
                    cosine(standalone_by_position[i], contextualized_by_position[i])));
  return records;
}

std::vector<PositionAggregate> aggregate_by_position(
    std::span<const SimilarityRecord> records, const GroupKeyFn& key) {
  if (records.empty()) throw Error("aggregate_by_position: empty record set");
  const GroupKeyFn group_key = key ? key : [](const SimilarityRecord& r) {
    return to_string(r.kind) + "/" + r.calibration_id;
  };

  struct Accumulator {
    double sum = 0.0, sum_sq = 0.0;
    int count = 0;
  };
  std::map<std::pair<std::string, int>, Accumulator> groups;
  for (const auto& record : records) {
    auto& acc = groups[{group_key(record), record.position}];
    acc.sum += record.value;
    acc.sum_sq += record.value * record.value;
    ++acc.count;
  }

  std::vector<PositionAggregate> out;
  out.reserve(groups.size());
  for (const auto& [key_pair, acc] : groups) {
    PositionAggregate aggregate;
    aggregate.group = key_pair.first;
    aggregate.position = key_pair.second;
    aggregate.count = acc.count;
    aggregate.mean = acc.sum / acc.count;
    const double variance =
        std::max(0.0, acc.sum_sq / acc.count - aggregate.mean * aggregate.mean);
    aggregate.stddev = std::sqrt(variance);
    out.push_back(std::move(aggregate));
  }
  return out;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (in_quotes) throw Error("csv: unterminated quoted field");
  fields.push_back(std::move(field));
  return fields;
}

static const char* kRecordsHeader =
    "segment_set_id,permutation_id,position,kind,value,n,language_config_id,"
    "model_id,calibration_id";

void write_records_csv(std::ostream& out, std::span<const SimilarityRecord> records) {
  out << kRecordsHeader << '\n';
  std::ostringstream value;
  value.precision(17);
  for (const auto& r : records) {
    value.str("");
    value << r.value;
    out << csv_escape(r.segment_set_id) << ',' << csv_escape(r.permutation_id) << ','
        << r.position << ',' << to_string(r.kind) << ',' << value.str() << ',' << r.n
        << ',' << csv_escape(r.language_config_id) << ',' << csv_escape(r.model_id)
        << ',' << csv_escape(r.calibration_id) << '\n';
  }
}

void write_records_csv(const std::filesystem::path& path,
                       std::span<const SimilarityRecord> records) {
  std::ofstream out(path);
  if (!out) throw Error("write_records_csv: cannot open '" + path.string() + "'");
  write_records_csv(out, records);
}

std::vector<SimilarityRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("read_records_csv: cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error("read_records_csv: empty file");
  if (parse_csv_line(line) != parse_csv_line(kRecordsHeader))
    throw Error("read_records_csv: unexpected header");

  std::vector<SimilarityRecord> records;
  int line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    const auto fields = parse_csv_line(line);
    if (fields.size() != 9)
      throw Error("read_records_csv: expected 9 fields at line " +
                  std::to_string(line_number));
    SimilarityRecord r;
    r.segment_set_id = fields[0];
    r.permutation_id = fields[1];
    r.position = std::stoi(fields[2]);
    r.kind = record_kind_from_string(fields[3]);
    r.value = std::stod(fields[4]);
    r.n = std::stoi(fields[5]);
    r.language_config_id = fields[6];
    r.model_id = fields[7];
    r.calibration_id = fields[8];
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace embaudit
