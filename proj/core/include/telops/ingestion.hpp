#pragma once

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "telops/common.hpp"

namespace telops {

// Ordered so that the underlying value is the severity rank.
enum class Severity { Warning = 0, Minor = 1, Major = 2, Critical = 3 };

inline constexpr int kMaxSeverityRank = 3;

std::string_view to_string(Severity s);
Severity parse_severity(std::string_view text);

struct AlarmRecord {
  RecordId record_id = 0;
  std::optional<Timestamp> timestamp;
  std::optional<DeviceId> device_id;
  std::string alarm_name;
  Severity severity = Severity::Warning;
  std::vector<std::string> extras;

  friend bool operator==(const AlarmRecord&, const AlarmRecord&) = default;
};

// Records sorted by (timestamp, record_id) with unique record ids.
class AlarmLog {
 public:
  AlarmLog() = default;
  explicit AlarmLog(std::vector<AlarmRecord> records);

  const std::vector<AlarmRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const AlarmRecord* find(RecordId id) const;

  friend bool operator==(const AlarmLog& x, const AlarmLog& y) { return x.records_ == y.records_; }

 private:
  std::vector<AlarmRecord> records_;
  std::unordered_map<RecordId, std::size_t> index_;
};

struct EpisodeLabel {
  RecordId root_record = 0;
  CauseId cause = 0;

  friend bool operator==(const EpisodeLabel&, const EpisodeLabel&) = default;
};

struct DiagnosisSample {
  std::vector<AlarmRecord> records;
  RecordId root_record = 0;
  Timestamp root_time = 0;
  std::optional<CauseId> label;
};

inline constexpr Timestamp kDefaultWindowSeconds = 300;
inline constexpr std::size_t kDefaultExtraColumns = 16;

// Column layout of a log file. The five core columns must each appear once;
// every other column is an extra, kept in declared order.
struct LogSchema {
  std::vector<std::string> columns;
  std::set<std::string> key_fields;
  char delimiter = '\t';
  bool header = false;

  static LogSchema standard(std::size_t extra_columns = kDefaultExtraColumns);
  std::size_t extra_count() const;
  std::vector<std::string> extra_names() const;
};

std::string schema_to_json(const LogSchema& schema);
LogSchema schema_from_json(std::string_view text);

struct ParseResult {
  AlarmLog log;
  std::size_t skipped = 0;
};

// Malformed lines are skipped and counted; throws FormatError when more than
// half of the non-blank lines are malformed or the stream is unreadable.
ParseResult parse_log(std::istream& source, const LogSchema& schema);
void write_log(std::ostream& out, const AlarmLog& log, const LogSchema& schema);

// Resolved key-field selection for clean().
struct KeyFields {
  bool timestamp = true;
  bool device_id = true;
  bool alarm_name = true;
  std::vector<std::size_t> extras;

  static KeyFields from_schema(const LogSchema& schema);
};

AlarmLog clean(const AlarmLog& log, const KeyFields& keys = {});

DiagnosisSample extract_sample(const AlarmLog& log, RecordId root,
                               Timestamp window_seconds = kDefaultWindowSeconds);

// Samples grouped by the hour of their root record: [0,18) OffPeak,
// [18,24) Peak, AllDay is the union. All three keys are always present.
std::map<Scenario, std::vector<DiagnosisSample>> split_by_scenario(
    const AlarmLog& log, const std::vector<EpisodeLabel>& labels,
    Timestamp window_seconds = kDefaultWindowSeconds);

Scenario scenario_of(Timestamp root_time);

// Labels file: one "record_id cause_id" pair per line.
void write_labels(std::ostream& out, const std::vector<EpisodeLabel>& labels);
std::vector<EpisodeLabel> read_labels(std::istream& in);

}  // namespace telops
