#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "ensprune/conic.hpp"
#include "ensprune/core.hpp"
#include "ensprune/pipeline.hpp"

namespace ensprune {

inline constexpr int kDataFormatVersion = 1;
inline constexpr int kReportFormatVersion = 1;

/// Key-value description of an ensemble data set on disk:
///
///   # comment
///   format_version=1
///   num_models=2
///   num_samples=3
///   num_classes=2
///   predictions=predictions.csv
///   labels=labels.csv
///   train=0-1
///   valid=2
///   test=
///   provenance=free text
///
/// Index lists are comma-separated integers or inclusive ranges "a-b".
/// Relative table paths resolve against the manifest's directory.
struct Manifest {
  int format_version = kDataFormatVersion;
  std::size_t num_models = 0;
  std::size_t num_samples = 0;
  std::size_t num_classes = 0;
  std::string predictions_file = "predictions.csv";
  std::string labels_file = "labels.csv";
  SplitSpec split;
  std::string provenance;

  bool operator==(const Manifest&) const = default;
};

inline constexpr std::string_view kManifestName = "manifest.txt";

/// Throws ParseError (with the line number) or VersionMismatch.
Manifest parse_manifest(std::string_view text);
std::string format_manifest(const Manifest& m);

std::string format_index_list(const IndexList& idx);
/// Throws ParseError with `line`.
IndexList parse_index_list(std::string_view text, std::size_t line = 0);

/// Loads manifest + predictions table + labels table. `path` is the manifest
/// file or a directory containing manifest.txt. Rows within 1e-9 of summing
/// to one are renormalized; anything else fails validation.
///
/// Tables:
///   predictions: header `model_id,sample_id,p_0,...,p_{C-1}`, one line per
///                (model, sample) pair in any order
///   labels:      header `sample_id,label`, one line per sample
///
/// Throws ParseError, ValidationError, VersionMismatch, IoError.
EnsembleData read_predictions(const std::filesystem::path& path);

/// Writes manifest.txt, predictions.csv and labels.csv into `dir` (created if
/// missing). Throws IoError.
void write_predictions(const std::filesystem::path& dir, const EnsembleData& data,
                       const std::string& provenance = "");

enum class ReportFormat { json_text, csv_summary };

std::string to_string(ReportFormat f);
/// Accepts "json", "json-text", "csv", "csv-summary".
ReportFormat report_format_from_string(const std::string& s);

/// One row of the summary table.
struct ReportSummary {
  double accuracy_full = 0.0;
  double accuracy_pruned = 0.0;
  std::size_t models_full = 0;
  std::size_t models_pruned = 0;
  double threshold = 0.0;

  bool operator==(const ReportSummary&) const = default;
};

ReportSummary summarize(const PruneReport& r);

std::string report_to_json(const PruneReport& r);
/// Throws ParseError or VersionMismatch.
PruneReport report_from_json(std::string_view text);

/// Header `accuracy_full,accuracy_pruned,models_full,models_pruned,threshold`
/// plus one newline-terminated row.
std::string report_to_csv(const PruneReport& r);
ReportSummary summary_from_csv(std::string_view text);

/// Atomic write in the chosen format. Throws IoError.
void write_report(const PruneReport& r, const std::filesystem::path& path, ReportFormat format);
/// Reads a json-text report. Throws IoError, ParseError, VersionMismatch.
PruneReport read_report(const std::filesystem::path& path);
/// Reads a csv-summary report.
ReportSummary read_summary(const std::filesystem::path& path);

std::string grid_cells_to_json(const std::vector<GridCell>& cells);
std::string cv_to_json(const CvResult& cv);
std::string solution_to_json(const ConicSolution& sol);

/// Writes to a sibling temporary file, then renames over `path`.
/// Throws IoError.
void write_text_atomic(const std::filesystem::path& path, std::string_view content);
/// Throws IoError.
std::string read_text(const std::filesystem::path& path);

/// %.17g.
std::string format_double(double v);

}  // namespace ensprune
