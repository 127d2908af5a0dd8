#include "fatlab/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fatlab/errors.hpp"

namespace fatlab {

namespace {

constexpr int kDatasetVersion = 1;
constexpr const char* kConfigPrefix = "# config: ";

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

double parse_double(const std::string& tok, const std::string& path) {
  double v = 0.0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) throw IoError(path + ": bad number '" + tok + "'");
  return v;
}

long parse_int(const std::string& tok, const std::string& path) {
  long v = 0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) throw IoError(path + ": bad integer '" + tok + "'");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

void write_config_line(std::ostream& out, const nlohmann::json& config) {
  if (!config.is_null()) out << kConfigPrefix << config.dump() << '\n';
}

// Skips leading '#' lines and returns the first content line.
bool next_content_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    if (line.empty()) continue;
    return true;
  }
  return false;
}

Dataset load_csv(std::ifstream& in, const std::string& path) {
  std::string line;
  if (!next_content_line(in, line)) throw IoError(path + ": empty file");
  const auto header = split(line, ',');
  if (header.size() < 3 || header[0] != "id" || header[1] != "label") {
    throw IoError(path + ": header must start with id,label");
  }
  const bool has_clean = header[2] == "clean_label";
  const std::size_t first_feature = has_clean ? 3 : 2;
  const std::size_t d = header.size() - first_feature;
  if (d == 0) throw IoError(path + ": no feature columns");
  std::vector<std::vector<double>> rows;
  Dataset data;
  while (next_content_line(in, line)) {
    const auto tok = split(line, ',');
    if (tok.size() != header.size()) throw IoError(path + ": row has wrong column count");
    data.ids.push_back(static_cast<std::size_t>(parse_int(tok[0], path)));
    data.labels.push_back(static_cast<Label>(parse_int(tok[1], path)));
    if (has_clean) data.clean_labels.push_back(static_cast<Label>(parse_int(tok[2], path)));
    std::vector<double> row;
    for (std::size_t c = first_feature; c < tok.size(); ++c) row.push_back(parse_double(tok[c], path));
    rows.push_back(std::move(row));
  }
  data.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) data.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  Label max_label = -1;
  for (Label l : data.labels) max_label = std::max(max_label, l);
  for (Label l : data.clean_labels) max_label = std::max(max_label, l);
  data.num_classes = max_label + 1;
  return data;
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    if (i >= size()) throw InvalidArgumentError("subset index out of range");
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(i));
    out.labels.push_back(labels[i]);
    if (has_clean_labels()) out.clean_labels.push_back(clean_labels[i]);
    out.ids.push_back(ids[i]);
  }
  return out;
}

void Dataset::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size() || ids.size() != labels.size()) {
    throw InvalidArgumentError("dataset rows, labels and ids disagree in length");
  }
  if (has_clean_labels() && clean_labels.size() != labels.size()) {
    throw InvalidArgumentError("dataset clean-label column has the wrong length");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes ||
        (has_clean_labels() && (clean_labels[i] < 0 || clean_labels[i] >= num_classes))) {
      throw InvalidArgumentError("sample " + std::to_string(ids[i]) + " has a label outside [0, " +
                                 std::to_string(num_classes) + ")");
    }
  }
  if (!features.allFinite()) throw InvalidArgumentError("dataset has non-finite features");
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kClean: return "clean";
    case Provenance::kFlip: return "flip";
    case Provenance::kOutlier: return "outlier";
    case Provenance::kMixture: return "mixture";
  }
  return "clean";
}

Provenance parse_provenance(const std::string& tag) {
  if (tag == "clean") return Provenance::kClean;
  if (tag == "flip") return Provenance::kFlip;
  if (tag == "outlier") return Provenance::kOutlier;
  if (tag == "mixture") return Provenance::kMixture;
  throw IoError("unknown provenance tag '" + tag + "'");
}

HoldoutSplit split_holdout(const Dataset& data, int queries_per_identity) {
  if (queries_per_identity < 0) throw InvalidArgumentError("queries_per_identity must be >= 0");
  const auto& ref = data.reference_labels();
  std::map<Label, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.size(); ++i) groups[ref[i]].push_back(i);
  std::vector<char> is_query(data.size(), 0);
  const auto q = static_cast<std::size_t>(queries_per_identity);
  for (const auto& [label, idx] : groups) {
    if (idx.size() <= q) continue;
    for (std::size_t k = idx.size() - q; k < idx.size(); ++k) is_query[idx[k]] = 1;
  }
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> query_idx;
  for (std::size_t i = 0; i < data.size(); ++i) (is_query[i] ? query_idx : train_idx).push_back(i);
  return {data.subset(train_idx), data.subset(query_idx)};
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void save_dataset(const Dataset& data, const std::string& path, const nlohmann::json& config) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset '" + path + "'");
  write_config_line(out, config);
  out << "fatlab-dataset " << kDatasetVersion << '\n';
  out << data.size() << ' ' << data.input_dim() << ' ' << data.num_classes << ' '
      << (data.has_clean_labels() ? 1 : 0) << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.ids[i] << ' ' << data.labels[i];
    if (data.has_clean_labels()) out << ' ' << data.clean_labels[i];
    for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
      out << ' ' << format_double(data.features(static_cast<Eigen::Index>(i), c));
    }
    out << '\n';
  }
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read dataset '" + path + "'");
  Dataset data = ends_with(path, ".csv") ? load_csv(in, path) : [&] {
    std::string line;
    if (!next_content_line(in, line)) throw IoError(path + ": empty file");
    std::istringstream magic(line);
    std::string tag;
    int version = 0;
    magic >> tag >> version;
    if (tag != "fatlab-dataset") throw IoError(path + ": not a fatlab dataset");
    if (version != kDatasetVersion) throw IoError(path + ": unsupported dataset version");
    if (!next_content_line(in, line)) throw IoError(path + ": missing size header");
    std::istringstream hdr(line);
    std::size_t n = 0;
    int d = 0;
    int c = 0;
    int has_clean = 0;
    if (!(hdr >> n >> d >> c >> has_clean) || d <= 0) throw IoError(path + ": malformed size header");
    Dataset ds;
    ds.num_classes = c;
    ds.features.resize(static_cast<Eigen::Index>(n), d);
    for (std::size_t i = 0; i < n; ++i) {
      if (!next_content_line(in, line)) throw IoError(path + ": truncated, expected " + std::to_string(n) + " samples");
      std::istringstream rec(line);
      std::string tok;
      std::vector<std::string> toks;
      while (rec >> tok) toks.push_back(tok);
      const std::size_t expected = 2 + (has_clean ? 1 : 0) + static_cast<std::size_t>(d);
      if (toks.size() != expected) throw IoError(path + ": sample line " + std::to_string(i) + " has wrong field count");
      ds.ids.push_back(static_cast<std::size_t>(parse_int(toks[0], path)));
      ds.labels.push_back(static_cast<Label>(parse_int(toks[1], path)));
      std::size_t f = 2;
      if (has_clean) ds.clean_labels.push_back(static_cast<Label>(parse_int(toks[f++], path)));
      for (int k = 0; k < d; ++k) ds.features(static_cast<Eigen::Index>(i), k) = parse_double(toks[f++], path);
    }
    return ds;
  }();
  try {
    data.validate();
  } catch (const InvalidArgumentError& e) {
    throw IoError(path + ": " + e.what());
  }
  return data;
}

void save_provenance(std::span<const Provenance> mask, std::span<const std::size_t> ids,
                     const std::string& path, const nlohmann::json& config) {
  if (mask.size() != ids.size()) throw InvalidArgumentError("provenance mask and ids differ in length");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write provenance mask '" + path + "'");
  write_config_line(out, config);
  out << "id,provenance\n";
  for (std::size_t i = 0; i < mask.size(); ++i) out << ids[i] << ',' << to_string(mask[i]) << '\n';
}

std::vector<Provenance> load_provenance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read provenance mask '" + path + "'");
  std::string line;
  if (!next_content_line(in, line) || line != "id,provenance") throw IoError(path + ": bad header");
  std::vector<Provenance> out;
  while (next_content_line(in, line)) {
    const auto tok = split(line, ',');
    if (tok.size() != 2) throw IoError(path + ": malformed row");
    out.push_back(parse_provenance(tok[1]));
  }
  return out;
}

nlohmann::json read_embedded_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::string first;
  std::getline(in, first);
  const std::string prefix = kConfigPrefix;
  if (first.rfind(prefix, 0) == 0) return nlohmann::json::parse(first.substr(prefix.size()));
  if (!first.empty() && first[0] == '{') {
    in.seekg(0);
    nlohmann::json j;
    in >> j;
    if (j.contains("config")) return j.at("config");
  }
  return nullptr;
}

}  // namespace fatlab
