#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <unistd.h>

#include "ensprune/io.hpp"
#include "support.hpp"

using namespace ensprune;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            ("ensprune_io_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

fs::path tiny_dir() { return source_dir() / "fixtures" / "tiny"; }

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Copy of the tiny fixture with one file replaced.
fs::path tiny_with(const fs::path& dir, const std::string& name, const std::string& text) {
  for (const char* f : {"manifest.txt", "predictions.csv", "labels.csv"}) {
    fs::copy_file(tiny_dir() / f, dir / f, fs::copy_options::overwrite_existing);
  }
  write_file(dir / name, text);
  return dir;
}

const std::string kTinyManifest =
    "format_version=1\nnum_models=2\nnum_samples=3\nnum_classes=2\n"
    "predictions=predictions.csv\nlabels=labels.csv\ntrain=0\nvalid=1\ntest=2\n";

PruneReport sample_report(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_models = 6;
  spec.num_samples = 300;
  spec.accuracy_low = 0.3;
  spec.accuracy_high = 0.7;
  spec.seed = seed;
  PruneConfig cfg;
  cfg.seed = seed;
  cfg.alpha_grid = {0.2, 0.4};
  cfg.lambda_grid = {0.1, 0.5};
  return run_pipeline(generate_synthetic_ensemble(spec), cfg);
}

}  // namespace

// ---------------------------------------------------------------------------
// Data sets
// ---------------------------------------------------------------------------

TEST(ReadPredictions, TinyFixtureExactValues) {
  const EnsembleData d = read_predictions(tiny_dir());
  ASSERT_EQ(d.predictions.num_models(), 2u);
  ASSERT_EQ(d.predictions.num_samples(), 3u);
  ASSERT_EQ(d.predictions.num_classes(), 2u);
  const std::vector<double> expected{0.9, 0.1, 0.25, 0.75, 0.5, 0.5, 0.2, 0.8, 0.6, 0.4, 1.0, 0.0};
  EXPECT_EQ(d.predictions.data(), expected);
  EXPECT_EQ(d.labels.labels(), (std::vector<int>{0, 1, 0}));
  EXPECT_EQ(d.split.train, (IndexList{0}));
  EXPECT_EQ(d.split.valid, (IndexList{1}));
  EXPECT_EQ(d.split.test, (IndexList{2}));
  // The manifest file itself works as the path too.
  EXPECT_EQ(read_predictions(tiny_dir() / "manifest.txt").predictions, d.predictions);
}

TEST(ReadPredictions, RowNotSummingToOne) {
  TempDir tmp;
  tiny_with(tmp.path(), "predictions.csv",
            "model_id,sample_id,p_0,p_1\n0,0,0.7,0.7\n0,1,0.25,0.75\n0,2,0.5,0.5\n"
            "1,0,0.2,0.8\n1,1,0.6,0.4\n1,2,1,0\n");
  EXPECT_THROW(read_predictions(tmp.path()), RowNotNormalized);
}

TEST(ReadPredictions, ClassCountDisagreesWithColumns) {
  TempDir tmp;
  std::string m = kTinyManifest;
  m.replace(m.find("num_classes=2"), 13, "num_classes=3");
  tiny_with(tmp.path(), "manifest.txt", m);
  EXPECT_THROW(read_predictions(tmp.path()), ParseError);
}

TEST(ReadPredictions, WrongVersion) {
  TempDir tmp;
  std::string m = kTinyManifest;
  m.replace(m.find("format_version=1"), 16, "format_version=2");
  tiny_with(tmp.path(), "manifest.txt", m);
  EXPECT_THROW(read_predictions(tmp.path()), VersionMismatch);
}

TEST(ReadPredictions, RowsInAnyOrder) {
  TempDir tmp;
  tiny_with(tmp.path(), "predictions.csv",
            "model_id,sample_id,p_0,p_1\n1,2,1,0\n0,1,0.25,0.75\n1,0,0.2,0.8\n"
            "0,2,0.5,0.5\n1,1,0.6,0.4\n0,0,0.9,0.1\n");
  EXPECT_EQ(read_predictions(tmp.path()).predictions, read_predictions(tiny_dir()).predictions);
}

TEST(ReadPredictions, TableProblems) {
  const std::string good_rows = "0,1,0.25,0.75\n0,2,0.5,0.5\n1,0,0.2,0.8\n1,1,0.6,0.4\n1,2,1,0\n";
  struct Case {
    const char* file;
    std::string text;
    std::size_t line;
  };
  const std::vector<Case> cases{
      {"predictions.csv", "model,sample,p_0,p_1\n0,0,0.9,0.1\n" + good_rows, 1},
      {"predictions.csv", "model_id,sample_id,p_0,p_1\n0,0,0.9\n" + good_rows, 2},
      {"predictions.csv", "model_id,sample_id,p_0,p_1\n0,0,0.9,abc\n" + good_rows, 2},
      {"predictions.csv", "model_id,sample_id,p_0,p_1\n0,1,0.9,0.1\n" + good_rows, 3},
      {"predictions.csv", "model_id,sample_id,p_0,p_1\n2,0,0.9,0.1\n" + good_rows, 2},
      {"predictions.csv", "model_id,sample_id,p_0,p_1\n" + good_rows, 0},
      {"labels.csv", "sample_id,label\n0,0\n1,1\n", 0},
      {"labels.csv", "sample_id,label\n0,0\n1,x\n2,0\n", 3},
      {"labels.csv", "id,label\n0,0\n1,1\n2,0\n", 1},
  };
  for (const Case& c : cases) {
    TempDir tmp;
    tiny_with(tmp.path(), c.file, c.text);
    try {
      read_predictions(tmp.path());
      ADD_FAILURE() << "no error for " << c.file << ":\n" << c.text;
    } catch (const ParseError& e) {
      if (c.line != 0) EXPECT_EQ(e.line, c.line) << e.what();
    }
  }
}

TEST(ReadPredictions, LabelOutsideTheClasses) {
  TempDir tmp;
  tiny_with(tmp.path(), "labels.csv", "sample_id,label\n0,0\n1,2\n2,0\n");
  EXPECT_THROW(read_predictions(tmp.path()), ValidationError);
}

TEST(ReadPredictions, MissingFiles) {
  TempDir tmp;
  EXPECT_THROW(read_predictions(tmp.path()), IoError);
  tiny_with(tmp.path(), "manifest.txt", kTinyManifest);
  fs::remove(tmp.path() / "labels.csv");
  EXPECT_THROW(read_predictions(tmp.path()), IoError);
}

TEST(Manifest, ParseAndFormatRoundTrip) {
  Manifest m;
  m.num_models = 4;
  m.num_samples = 12;
  m.num_classes = 3;
  m.split = SplitSpec{{0, 1, 2, 3, 4, 5, 9}, {6, 7}, {8, 10, 11}};
  m.provenance = "synthetic, seed 3";
  const Manifest back = parse_manifest(format_manifest(m));
  EXPECT_EQ(back, m);
  EXPECT_EQ(format_manifest(back), format_manifest(m));
}

TEST(Manifest, Errors) {
  EXPECT_THROW(parse_manifest(kTinyManifest + "colour=blue\n"), ParseError);
  EXPECT_THROW(parse_manifest(kTinyManifest + "num_models=3\n"), ParseError);
  EXPECT_THROW(parse_manifest("format_version=1\nnum_models=2\n"), ParseError);
  EXPECT_THROW(parse_manifest(kTinyManifest + "no equals sign\n"), ParseError);
  try {
    parse_manifest("# header\nformat_version=1\nnum_models=two\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 3u);
  }
  EXPECT_THROW(parse_manifest("format_version=7\n"), VersionMismatch);
}

TEST(IndexList, RangesAndLists) {
  EXPECT_EQ(parse_index_list("0-3,7,9-10"), (IndexList{0, 1, 2, 3, 7, 9, 10}));
  EXPECT_EQ(parse_index_list(""), IndexList{});
  EXPECT_EQ(format_index_list({0, 1, 2, 3, 7, 9, 10}), "0-3,7,9-10");
  EXPECT_THROW(parse_index_list("3-1"), ParseError);
  EXPECT_THROW(parse_index_list("1,,2"), ParseError);
  EXPECT_THROW(parse_index_list("a"), ParseError);
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    IndexList idx;
    std::size_t v = rng.below(3);
    for (std::size_t k = 0, n = rng.below(20); k < n; ++k) {
      idx.push_back(v);
      v += 1 + (rng.uniform() < 0.3 ? rng.below(5) : 0);
    }
    EXPECT_EQ(parse_index_list(format_index_list(idx)), idx);
  }
}

TEST(WritePredictions, RoundTripIsExact) {
  Rng rng(17);
  TempDir tmp;
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t m = 1 + rng.below(5), n = 3 + rng.below(30), c = 2 + rng.below(6);
    EnsembleData d{random_tensor(rng, m, n, c), random_labels(rng, n, c),
                   SplitSpec::contiguous(n, 0.5, 0.25)};
    normalize_rows(d.predictions);
    const fs::path dir = tmp.path() / std::to_string(trial);
    write_predictions(dir, d, "trial " + std::to_string(trial));
    const EnsembleData back = read_predictions(dir);
    ASSERT_EQ(back.predictions.data().size(), d.predictions.data().size());
    for (std::size_t k = 0; k < d.predictions.data().size(); ++k) {
      EXPECT_NEAR(back.predictions.data()[k], d.predictions.data()[k], 1e-12);
    }
    EXPECT_EQ(back.labels, d.labels);
    EXPECT_EQ(back.split, d.split);
  }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

TEST(Report, CsvSummaryHasTheFiveColumns) {
  const PruneReport r = sample_report(1);
  const std::string csv = report_to_csv(r);
  std::istringstream in(csv);
  std::string header, row, extra;
  ASSERT_TRUE(std::getline(in, header));
  ASSERT_TRUE(std::getline(in, row));
  EXPECT_FALSE(std::getline(in, extra) && !extra.empty());
  EXPECT_EQ(header, "accuracy_full,accuracy_pruned,models_full,models_pruned,threshold");
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 4);
}

TEST(Report, CsvRoundTrip) {
  for (std::uint64_t seed : {1u, 2u}) {
    const PruneReport r = sample_report(seed);
    const ReportSummary s = summary_from_csv(report_to_csv(r));
    const ReportSummary want = summarize(r);
    EXPECT_NEAR(s.accuracy_full, want.accuracy_full, 1e-12);
    EXPECT_NEAR(s.accuracy_pruned, want.accuracy_pruned, 1e-12);
    EXPECT_NEAR(s.threshold, want.threshold, 1e-12);
    EXPECT_EQ(s.models_full, want.models_full);
    EXPECT_EQ(s.models_pruned, want.models_pruned);
  }
}

TEST(Report, JsonRoundTrip) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const PruneReport r = sample_report(seed);
    const std::string text = report_to_json(r);
    const PruneReport back = report_from_json(text);
    EXPECT_EQ(back, r);
    EXPECT_EQ(report_to_json(back), text);
  }
}

TEST(Report, JsonErrors) {
  const std::string text = report_to_json(sample_report(1));
  std::string bumped = text;
  bumped.replace(bumped.find("\"format_version\": 1"), 19, "\"format_version\": 9");
  EXPECT_THROW(report_from_json(bumped), VersionMismatch);
  EXPECT_THROW(report_from_json("{\"format_version\": 1}"), ParseError);
  EXPECT_THROW(report_from_json("[1, 2"), ParseError);
}

TEST(Report, TruncatedFilesNeverParse) {
  const std::string json_text = report_to_json(sample_report(2));
  for (std::size_t cut = 0; cut + 2 < json_text.size(); cut += 7) {
    EXPECT_THROW(report_from_json(json_text.substr(0, cut)), ParseError) << "cut " << cut;
  }
  const std::string csv = report_to_csv(sample_report(2));
  for (std::size_t cut = 0; cut + 2 < csv.size(); ++cut) {
    EXPECT_THROW(summary_from_csv(csv.substr(0, cut)), ParseError) << "cut " << cut;
  }
}

TEST(Report, WriteAndReadBack) {
  TempDir tmp;
  const PruneReport r = sample_report(4);
  write_report(r, tmp.path() / "r.json", ReportFormat::json_text);
  write_report(r, tmp.path() / "r.csv", ReportFormat::csv_summary);
  EXPECT_EQ(read_report(tmp.path() / "r.json"), r);
  EXPECT_EQ(read_summary(tmp.path() / "r.csv"), summary_from_csv(report_to_csv(r)));
  EXPECT_EQ(read_text(tmp.path() / "r.json"), report_to_json(r));
  EXPECT_THROW(read_report(tmp.path() / "missing.json"), IoError);
  EXPECT_THROW(write_report(r, tmp.path() / "no" / "such" / "dir.json", ReportFormat::json_text), IoError);
}

TEST(Report, FormatNames) {
  EXPECT_EQ(report_format_from_string("json"), ReportFormat::json_text);
  EXPECT_EQ(report_format_from_string("json-text"), ReportFormat::json_text);
  EXPECT_EQ(report_format_from_string("csv"), ReportFormat::csv_summary);
  EXPECT_EQ(report_format_from_string("csv-summary"), ReportFormat::csv_summary);
  EXPECT_THROW(report_format_from_string("xml"), InvalidSpec);
  EXPECT_EQ(report_format_from_string(to_string(ReportFormat::csv_summary)), ReportFormat::csv_summary);
}

TEST(AtomicWrite, ReplacesWholeFileAndLeavesNoTemporaries) {
  TempDir tmp;
  const fs::path p = tmp.path() / "out.txt";
  write_text_atomic(p, std::string(10000, 'a'));
  write_text_atomic(p, "short\n");
  EXPECT_EQ(read_text(p), "short\n");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(tmp.path())) ++files;
  EXPECT_EQ(files, 1u);
}

TEST(FormatDouble, SeventeenDigitsRoundTrip) {
  Rng rng(8);
  for (int k = 0; k < 1000; ++k) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-300.0, 300.0));
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
}
