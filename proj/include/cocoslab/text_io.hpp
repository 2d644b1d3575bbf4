#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cocoslab/embedding.hpp"

namespace cocoslab {

/// Shortest decimal string that parses back to exactly `x`.
std::string format_double(double x);
double parse_double(const std::string& s);
/// Decimal digits only; no sign, no whitespace.
std::uint64_t parse_unsigned(const std::string& s);

/// One line of the embedding text format: `id modality group_id v_1 ... v_d`.
struct EmbeddingRecord {
  Id id = 0;
  Modality modality = Modality::image;
  Id group_id = 0;
  VectorXd values;
};

std::string format_record(const EmbeddingRecord& r);
EmbeddingRecord parse_record(const std::string& line);

void write_records(std::ostream& os, const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> read_records(std::istream& is);
void write_records(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> read_records(const std::filesystem::path& path);

/// Group id of an image is its own id; of a caption, its image's id.
std::vector<EmbeddingRecord> to_records(const RetrievalBatch<double>& batch);
RetrievalBatch<double> batch_from_records(const std::vector<EmbeddingRecord>& records, Layout layout);

/// Flat `key=value` text, one entry per line, order preserved.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

void write_key_values(std::ostream& os, const KeyValues& kv);
KeyValues read_key_values(std::istream& is);
void write_key_values(const std::filesystem::path& path, const KeyValues& kv);
KeyValues read_key_values(const std::filesystem::path& path);

/// Value for `key`; throws ConfigParse when absent.
const std::string& lookup(const KeyValues& kv, const std::string& key);
std::string lookup_or(const KeyValues& kv, const std::string& key, const std::string& fallback);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace cocoslab
