#include "ensprune/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include <json.hpp>

namespace ensprune {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::size_t parse_size(std::string_view s, std::size_t line, const char* what) {
  std::size_t v = 0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (s.empty() || r.ec != std::errc{} || r.ptr != end) {
    throw ParseError(std::string("expected a nonnegative integer for ") + what + ", got '" +
                         std::string(s) + "'",
                     line);
  }
  return v;
}

double parse_real(std::string_view s, std::size_t line, const char* what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (s.empty() || r.ec != std::errc{} || r.ptr != end) {
    throw ParseError(std::string("expected a number for ") + what + ", got '" + std::string(s) +
                         "'",
                     line);
  }
  return v;
}

// Iterates over lines, tracking 1-based line numbers.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    const auto nl = text_.find('\n', pos_);
    const auto end = nl == std::string_view::npos ? text_.size() : nl;
    line = text_.substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = end + 1;
    ++line_no_;
    return true;
  }
  std::size_t line_no() const { return line_no_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed on '" + path.string() + "'");
  return ss.str();
}

void write_text_atomic(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write failed on '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignore;
    fs::remove(tmp, ignore);
    throw IoError("cannot rename onto '" + path.string() + "': " + ec.message());
  }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::string format_index_list(const IndexList& idx) {
  std::string out;
  std::size_t k = 0;
  while (k < idx.size()) {
    std::size_t end = k;
    while (end + 1 < idx.size() && idx[end + 1] == idx[end] + 1) ++end;
    if (!out.empty()) out += ',';
    out += std::to_string(idx[k]);
    if (end > k) out += '-' + std::to_string(idx[end]);
    k = end + 1;
  }
  return out;
}

IndexList parse_index_list(std::string_view text, std::size_t line) {
  IndexList out;
  text = trim(text);
  if (text.empty()) return out;
  for (std::string_view item : split_fields(text, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string_view::npos) {
      out.push_back(parse_size(item, line, "index"));
      continue;
    }
    const std::size_t lo = parse_size(trim(item.substr(0, dash)), line, "range start");
    const std::size_t hi = parse_size(trim(item.substr(dash + 1)), line, "range end");
    if (hi < lo) throw ParseError("descending range '" + std::string(item) + "'", line);
    for (std::size_t v = lo; v <= hi; ++v) out.push_back(v);
  }
  return out;
}

Manifest parse_manifest(std::string_view text) {
  Manifest m;
  std::map<std::string, std::size_t, std::less<>> seen;
  LineReader reader(text);
  std::string_view raw;
  while (reader.next(raw)) {
    const std::size_t ln = reader.line_no();
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key=value", ln);
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (!seen.emplace(key, ln).second) throw ParseError("duplicate key '" + key + "'", ln);

    if (key == "format_version") {
      const std::size_t v = parse_size(value, ln, "format_version");
      if (v != static_cast<std::size_t>(kDataFormatVersion)) {
        throw VersionMismatch("data format version " + std::to_string(v) + " is not supported (expected " +
                              std::to_string(kDataFormatVersion) + ")");
      }
      m.format_version = static_cast<int>(v);
    } else if (key == "num_models") {
      m.num_models = parse_size(value, ln, key.c_str());
    } else if (key == "num_samples") {
      m.num_samples = parse_size(value, ln, key.c_str());
    } else if (key == "num_classes") {
      m.num_classes = parse_size(value, ln, key.c_str());
    } else if (key == "predictions") {
      m.predictions_file = std::string(value);
    } else if (key == "labels") {
      m.labels_file = std::string(value);
    } else if (key == "train") {
      m.split.train = parse_index_list(value, ln);
    } else if (key == "valid") {
      m.split.valid = parse_index_list(value, ln);
    } else if (key == "test") {
      m.split.test = parse_index_list(value, ln);
    } else if (key == "provenance") {
      m.provenance = std::string(value);
    } else {
      throw ParseError("unknown key '" + key + "'", ln);
    }
  }
  for (const char* required : {"format_version", "num_models", "num_samples", "num_classes"}) {
    if (!seen.count(required)) {
      throw ParseError(std::string("missing key '") + required + "'", reader.line_no());
    }
  }
  if (m.num_models == 0 || m.num_samples == 0 || m.num_classes == 0) {
    throw ParseError("num_models, num_samples and num_classes must be positive", seen["num_models"]);
  }
  return m;
}

std::string format_manifest(const Manifest& m) {
  std::string out;
  out += "format_version=" + std::to_string(m.format_version) + '\n';
  out += "num_models=" + std::to_string(m.num_models) + '\n';
  out += "num_samples=" + std::to_string(m.num_samples) + '\n';
  out += "num_classes=" + std::to_string(m.num_classes) + '\n';
  out += "predictions=" + m.predictions_file + '\n';
  out += "labels=" + m.labels_file + '\n';
  out += "train=" + format_index_list(m.split.train) + '\n';
  out += "valid=" + format_index_list(m.split.valid) + '\n';
  out += "test=" + format_index_list(m.split.test) + '\n';
  std::string prov = m.provenance;
  for (char& ch : prov) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  out += "provenance=" + prov + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Prediction tables
// ---------------------------------------------------------------------------

namespace {

PredictionTensor parse_prediction_table(std::string_view text, const Manifest& m) {
  const std::size_t c = m.num_classes;
  LineReader reader(text);
  std::string_view line;
  if (!reader.next(line)) throw ParseError("predictions table is empty", 1);
  std::string expected = "model_id,sample_id";
  for (std::size_t j = 0; j < c; ++j) expected += ",p_" + std::to_string(j);
  if (trim(line) != expected) {
    throw ParseError("predictions header does not match num_classes=" + std::to_string(c) +
                         " (expected '" + expected + "')",
                     reader.line_no());
  }

  PredictionTensor t(m.num_models, m.num_samples, c);
  std::vector<char> filled(m.num_models * m.num_samples, 0);
  std::size_t rows = 0;
  while (reader.next(line)) {
    const std::size_t ln = reader.line_no();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, ',');
    if (fields.size() != c + 2) {
      throw ParseError("expected " + std::to_string(c + 2) + " fields, got " +
                           std::to_string(fields.size()),
                       ln);
    }
    const std::size_t i = parse_size(fields[0], ln, "model_id");
    const std::size_t n = parse_size(fields[1], ln, "sample_id");
    if (i >= m.num_models || n >= m.num_samples) {
      throw ParseError("model_id or sample_id out of range", ln);
    }
    char& flag = filled[i * m.num_samples + n];
    if (flag) throw ParseError("duplicate row for model " + std::to_string(i) + ", sample " +
                                   std::to_string(n),
                               ln);
    flag = 1;
    auto row = t.row(i, n);
    for (std::size_t j = 0; j < c; ++j) row[j] = parse_real(fields[j + 2], ln, "probability");
    ++rows;
  }
  if (rows != filled.size()) {
    throw ParseError("predictions table has " + std::to_string(rows) + " rows, expected " +
                         std::to_string(filled.size()),
                     reader.line_no());
  }
  return t;
}

LabelVector parse_label_table(std::string_view text, const Manifest& m) {
  LineReader reader(text);
  std::string_view line;
  if (!reader.next(line)) throw ParseError("labels table is empty", 1);
  if (trim(line) != "sample_id,label") {
    throw ParseError("labels header must be 'sample_id,label'", reader.line_no());
  }
  std::vector<int> labels(m.num_samples, -1);
  std::size_t rows = 0;
  while (reader.next(line)) {
    const std::size_t ln = reader.line_no();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, ',');
    if (fields.size() != 2) throw ParseError("expected 2 fields", ln);
    const std::size_t n = parse_size(fields[0], ln, "sample_id");
    if (n >= m.num_samples) throw ParseError("sample_id out of range", ln);
    if (labels[n] != -1) throw ParseError("duplicate label for sample " + std::to_string(n), ln);
    const std::size_t label = parse_size(fields[1], ln, "label");
    if (label >= m.num_classes) throw ParseError("label out of range", ln);
    labels[n] = static_cast<int>(label);
    ++rows;
  }
  if (rows != m.num_samples) {
    throw ParseError("labels table has " + std::to_string(rows) + " rows, expected " +
                         std::to_string(m.num_samples),
                     reader.line_no());
  }
  return LabelVector(std::move(labels), m.num_classes);
}

fs::path resolve(const fs::path& base, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : base / p;
}

}  // namespace

EnsembleData read_predictions(const fs::path& path) {
  const fs::path manifest_path = fs::is_directory(path) ? path / kManifestName : path;
  const Manifest m = parse_manifest(read_text(manifest_path));
  const fs::path base = manifest_path.parent_path();

  EnsembleData d;
  d.predictions = parse_prediction_table(read_text(resolve(base, m.predictions_file)), m);
  d.labels = parse_label_table(read_text(resolve(base, m.labels_file)), m);
  d.split = m.split;
  normalize_rows(d.predictions);
  check_labels_match(d.predictions, d.labels);
  d.split.validate(m.num_samples);
  return d;
}

void write_predictions(const fs::path& dir, const EnsembleData& data,
                       const std::string& provenance) {
  const PredictionTensor& t = data.predictions;
  validate_tensor(t);
  check_labels_match(t, data.labels);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());

  Manifest m;
  m.num_models = t.num_models();
  m.num_samples = t.num_samples();
  m.num_classes = t.num_classes();
  m.split = data.split;
  m.provenance = provenance;

  std::string table = "model_id,sample_id";
  for (std::size_t j = 0; j < t.num_classes(); ++j) table += ",p_" + std::to_string(j);
  table += '\n';
  for (std::size_t i = 0; i < t.num_models(); ++i) {
    for (std::size_t n = 0; n < t.num_samples(); ++n) {
      table += std::to_string(i) + ',' + std::to_string(n);
      for (double v : t.row(i, n)) table += ',' + format_double(v);
      table += '\n';
    }
  }
  std::string labels = "sample_id,label\n";
  for (std::size_t n = 0; n < data.labels.size(); ++n) {
    labels += std::to_string(n) + ',' + std::to_string(data.labels[n]) + '\n';
  }

  write_text_atomic(dir / m.predictions_file, table);
  write_text_atomic(dir / m.labels_file, labels);
  write_text_atomic(dir / kManifestName, format_manifest(m));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

std::string to_string(ReportFormat f) {
  return f == ReportFormat::json_text ? "json-text" : "csv-summary";
}

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "json" || s == "json-text") return ReportFormat::json_text;
  if (s == "csv" || s == "csv-summary") return ReportFormat::csv_summary;
  throw InvalidSpec("unknown report format '" + s + "'");
}

ReportSummary summarize(const PruneReport& r) {
  return {r.full_accuracy, r.pruned_accuracy, r.num_models_full, r.num_models_pruned,
          r.threshold_used};
}

namespace {

json cell_to_json(const GridCell& c) {
  return json{{"alpha_index", c.alpha_index},
              {"lambda_index", c.lambda_index},
              {"alpha", c.alpha},
              {"lambda", c.lambda},
              {"lambda_effective", c.lambda_effective},
              {"ok", c.ok},
              {"status", c.status},
              {"valid_accuracy", c.valid_accuracy},
              {"threshold", c.threshold},
              {"num_selected", c.num_selected},
              {"l1_norm", c.l1_norm},
              {"weights", c.weights},
              {"selected", c.selected}};
}

GridCell cell_from_json(const json& j) {
  GridCell c;
  j.at("alpha_index").get_to(c.alpha_index);
  j.at("lambda_index").get_to(c.lambda_index);
  j.at("alpha").get_to(c.alpha);
  j.at("lambda").get_to(c.lambda);
  j.at("lambda_effective").get_to(c.lambda_effective);
  j.at("ok").get_to(c.ok);
  j.at("status").get_to(c.status);
  j.at("valid_accuracy").get_to(c.valid_accuracy);
  j.at("threshold").get_to(c.threshold);
  j.at("num_selected").get_to(c.num_selected);
  j.at("l1_norm").get_to(c.l1_norm);
  j.at("weights").get_to(c.weights);
  j.at("selected").get_to(c.selected);
  return c;
}

json cells_to_json(const std::vector<GridCell>& cells) {
  json arr = json::array();
  for (const GridCell& c : cells) arr.push_back(cell_to_json(c));
  return arr;
}

}  // namespace

std::string report_to_json(const PruneReport& r) {
  const json j{{"format_version", kReportFormatVersion},
               {"seed", r.seed},
               {"vote_mode", r.vote_mode},
               {"best_alpha", r.best_alpha},
               {"best_lambda", r.best_lambda},
               {"threshold_used", r.threshold_used},
               {"full_accuracy", r.full_accuracy},
               {"pruned_accuracy", r.pruned_accuracy},
               {"num_models_full", r.num_models_full},
               {"num_models_pruned", r.num_models_pruned},
               {"weights", r.weights},
               {"selected", r.selected},
               {"cells", cells_to_json(r.cells)}};
  return j.dump(2) + '\n';
}

PruneReport report_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed report: ") + e.what(), 0);
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kReportFormatVersion) {
      throw VersionMismatch("report format version " + std::to_string(version) +
                            " is not supported (expected " + std::to_string(kReportFormatVersion) + ")");
    }
    PruneReport r;
    j.at("seed").get_to(r.seed);
    j.at("vote_mode").get_to(r.vote_mode);
    j.at("best_alpha").get_to(r.best_alpha);
    j.at("best_lambda").get_to(r.best_lambda);
    j.at("threshold_used").get_to(r.threshold_used);
    j.at("full_accuracy").get_to(r.full_accuracy);
    j.at("pruned_accuracy").get_to(r.pruned_accuracy);
    j.at("num_models_full").get_to(r.num_models_full);
    j.at("num_models_pruned").get_to(r.num_models_pruned);
    j.at("weights").get_to(r.weights);
    j.at("selected").get_to(r.selected);
    for (const json& c : j.at("cells")) r.cells.push_back(cell_from_json(c));
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what(), 0);
  }
}

std::string report_to_csv(const PruneReport& r) {
  const ReportSummary s = summarize(r);
  return "accuracy_full,accuracy_pruned,models_full,models_pruned,threshold\n" +
         format_double(s.accuracy_full) + ',' + format_double(s.accuracy_pruned) + ',' +
         std::to_string(s.models_full) + ',' + std::to_string(s.models_pruned) + ',' +
         format_double(s.threshold) + '\n';
}

ReportSummary summary_from_csv(std::string_view text) {
  LineReader reader(text);
  std::string_view line;
  if (!reader.next(line) ||
      trim(line) != "accuracy_full,accuracy_pruned,models_full,models_pruned,threshold") {
    throw ParseError("unexpected summary header", reader.line_no());
  }
  if (!reader.next(line)) throw ParseError("missing summary row", reader.line_no() + 1);
  const std::size_t ln = reader.line_no();
  const auto f = split_fields(line, ',');
  if (f.size() != 5) throw ParseError("expected 5 fields", ln);
  ReportSummary s;
  s.accuracy_full = parse_real(f[0], ln, "accuracy_full");
  s.accuracy_pruned = parse_real(f[1], ln, "accuracy_pruned");
  s.models_full = parse_size(f[2], ln, "models_full");
  s.models_pruned = parse_size(f[3], ln, "models_pruned");
  s.threshold = parse_real(f[4], ln, "threshold");
  // An unterminated row may be a cut-off number.
  if (text.empty() || text.back() != '\n') throw ParseError("summary row is not newline-terminated", ln);
  return s;
}

void write_report(const PruneReport& r, const fs::path& path, ReportFormat format) {
  write_text_atomic(path, format == ReportFormat::json_text ? report_to_json(r) : report_to_csv(r));
}

PruneReport read_report(const fs::path& path) { return report_from_json(read_text(path)); }

ReportSummary read_summary(const fs::path& path) { return summary_from_csv(read_text(path)); }

std::string grid_cells_to_json(const std::vector<GridCell>& cells) {
  return cells_to_json(cells).dump(2) + '\n';
}

std::string cv_to_json(const CvResult& cv) {
  const json j{{"best_cell", cv.best_cell},
               {"best_alpha", cv.best_alpha},
               {"best_lambda", cv.best_lambda},
               {"cells", cells_to_json(cv.cells)}};
  return j.dump(2) + '\n';
}

std::string solution_to_json(const ConicSolution& sol) {
  const json j{{"status", to_string(sol.status)},
               {"iterations", sol.iterations},
               {"primal_objective", sol.primal_objective},
               {"dual_objective", sol.dual_objective},
               {"gap", sol.gap},
               {"primal_residual", sol.primal_residual},
               {"dual_residual", sol.dual_residual},
               {"x", sol.x},
               {"y", sol.y},
               {"s", sol.s}};
  return j.dump(2) + '\n';
}

}  // namespace ensprune
