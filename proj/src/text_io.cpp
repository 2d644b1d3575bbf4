#include "cocoslab/text_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace cocoslab {

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw Error(Errc::invalid_argument, "cannot format double");
  return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw Error(Errc::config_parse, "not a number: '" + s + "'");
  return v;
}

std::uint64_t parse_unsigned(const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw Error(Errc::config_parse, "not a non-negative integer: '" + s + "'");
  return v;
}

namespace {

Id parse_id(const std::string& s) {
  Id v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw Error(Errc::config_parse, "not an integer: '" + s + "'");
  return v;
}

}  // namespace

std::string format_record(const EmbeddingRecord& r) {
  std::string line = std::to_string(r.id);
  line += ' ';
  line += to_string(r.modality);
  line += ' ';
  line += std::to_string(r.group_id);
  for (Eigen::Index i = 0; i < r.values.size(); ++i) {
    line += ' ';
    line += format_double(r.values[i]);
  }
  return line;
}

EmbeddingRecord parse_record(const std::string& line) {
  std::istringstream in(line);
  std::string id, modality, group;
  if (!(in >> id >> modality >> group)) throw Error(Errc::config_parse, "truncated record: '" + line + "'");
  EmbeddingRecord r;
  r.id = parse_id(id);
  try {
    r.modality = parse_modality(modality);
  } catch (const Error&) {
    throw Error(Errc::config_parse, "bad modality in record: '" + line + "'");
  }
  r.group_id = parse_id(group);
  std::vector<double> values;
  std::string tok;
  while (in >> tok) values.push_back(parse_double(tok));
  if (values.empty()) throw Error(Errc::config_parse, "record without values: '" + line + "'");
  r.values = Eigen::Map<const VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return r;
}

void write_records(std::ostream& os, const std::vector<EmbeddingRecord>& records) {
  for (const auto& r : records) os << format_record(r) << '\n';
}

std::vector<EmbeddingRecord> read_records(std::istream& is) {
  std::vector<EmbeddingRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(parse_record(line));
  }
  return out;
}

void write_records(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::io_failure, "cannot write " + path.string());
  write_records(os, records);
  if (!os) throw Error(Errc::io_failure, "write failed: " + path.string());
}

std::vector<EmbeddingRecord> read_records(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::io_failure, "cannot read " + path.string());
  return read_records(is);
}

std::vector<EmbeddingRecord> to_records(const RetrievalBatch<double>& batch) {
  std::vector<EmbeddingRecord> out;
  for (const auto& img : batch.images()) out.push_back({img.id(), Modality::image, img.id(), img.values()});
  for (const auto& cap : batch.captions())
    out.push_back({cap.id(), Modality::caption, batch.owner_of(cap.id()), cap.values()});
  return out;
}

RetrievalBatch<double> batch_from_records(const std::vector<EmbeddingRecord>& records, Layout layout) {
  std::vector<EmbeddingVector<double>> images;
  std::vector<EmbeddingVector<double>> captions;
  std::map<Id, std::vector<Id>> positives;
  for (const auto& r : records) {
    if (r.modality == Modality::image) {
      images.emplace_back(r.values, Modality::image, r.id);
      positives.try_emplace(r.id);
    } else {
      captions.emplace_back(r.values, Modality::caption, r.id);
      positives[r.group_id].push_back(r.id);
    }
  }
  return RetrievalBatch<double>(std::move(images), std::move(captions), std::move(positives), layout);
}

void write_key_values(std::ostream& os, const KeyValues& kv) {
  for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
}

KeyValues read_key_values(std::istream& is) {
  KeyValues kv;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(Errc::config_parse, "expected key=value: '" + line + "'");
    kv.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return kv;
}

void write_key_values(const std::filesystem::path& path, const KeyValues& kv) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::io_failure, "cannot write " + path.string());
  write_key_values(os, kv);
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::io_failure, "cannot read " + path.string());
  return read_key_values(is);
}

const std::string& lookup(const KeyValues& kv, const std::string& key) {
  for (const auto& [k, v] : kv)
    if (k == key) return v;
  throw Error(Errc::config_parse, "missing key '" + key + "'");
}

std::string lookup_or(const KeyValues& kv, const std::string& key, const std::string& fallback) {
  for (const auto& [k, v] : kv)
    if (k == key) return v;
  return fallback;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::io_failure, "cannot write " + path.string());
  os << text;
  if (!os) throw Error(Errc::io_failure, "write failed: " + path.string());
}

}  // namespace cocoslab
