#include "telops/ingestion.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "json.hpp"

namespace telops {

using nlohmann::json;

namespace {

constexpr std::string_view kCoreColumns[] = {"record_id", "timestamp", "device_id", "alarm_name",
                                             "severity"};

bool is_core_column(std::string_view name) {
  return std::find(std::begin(kCoreColumns), std::end(kCoreColumns), name) !=
         std::end(kCoreColumns);
}

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view text) {
  Int v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

struct ColumnPlan {
  std::size_t record_id, timestamp, device_id, alarm_name, severity;
  std::vector<std::size_t> extras;  // column index of each extra
};

ColumnPlan plan_columns(const LogSchema& schema) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < schema.columns.size(); ++i) {
    if (!pos.emplace(schema.columns[i], i).second) {
      throw InvalidArgument("schema repeats column '" + schema.columns[i] + "'");
    }
  }
  auto need = [&](std::string_view name) {
    auto it = pos.find(std::string(name));
    if (it == pos.end()) throw InvalidArgument("schema lacks column '" + std::string(name) + "'");
    return it->second;
  };
  ColumnPlan plan{need("record_id"), need("timestamp"), need("device_id"), need("alarm_name"),
                  need("severity"), {}};
  for (std::size_t i = 0; i < schema.columns.size(); ++i) {
    if (!is_core_column(schema.columns[i])) plan.extras.push_back(i);
  }
  return plan;
}

std::optional<AlarmRecord> parse_line(std::string_view line, const LogSchema& schema,
                                      const ColumnPlan& plan) {
  auto cells = split(line, schema.delimiter);
  if (cells.size() != schema.columns.size()) return std::nullopt;
  AlarmRecord rec;
  auto id = parse_int<RecordId>(cells[plan.record_id]);
  if (!id) return std::nullopt;
  rec.record_id = *id;
  if (!cells[plan.timestamp].empty()) {
    auto t = parse_int<Timestamp>(cells[plan.timestamp]);
    if (!t || *t < 0) return std::nullopt;
    rec.timestamp = *t;
  }
  if (!cells[plan.device_id].empty()) {
    auto d = parse_int<DeviceId>(cells[plan.device_id]);
    if (!d) return std::nullopt;
    rec.device_id = *d;
  }
  rec.alarm_name = std::string(cells[plan.alarm_name]);
  try {
    rec.severity = parse_severity(cells[plan.severity]);
  } catch (const FormatError&) {
    return std::nullopt;
  }
  rec.extras.reserve(plan.extras.size());
  for (std::size_t col : plan.extras) rec.extras.emplace_back(cells[col]);
  return rec;
}

bool record_less(const AlarmRecord& x, const AlarmRecord& y) {
  if (x.timestamp != y.timestamp) return x.timestamp < y.timestamp;
  return x.record_id < y.record_id;
}

}  // namespace

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::Warning: return "Warning";
    case Severity::Minor: return "Minor";
    case Severity::Major: return "Major";
    case Severity::Critical: return "Critical";
  }
  return "?";
}

Severity parse_severity(std::string_view text) {
  if (text == "Warning") return Severity::Warning;
  if (text == "Minor") return Severity::Minor;
  if (text == "Major") return Severity::Major;
  if (text == "Critical") return Severity::Critical;
  throw FormatError("unknown severity '" + std::string(text) + "'");
}

AlarmLog::AlarmLog(std::vector<AlarmRecord> records) : records_(std::move(records)) {
  std::sort(records_.begin(), records_.end(), record_less);
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.timestamp && *r.timestamp < 0) {
      throw InvalidArgument("record " + std::to_string(r.record_id) + " has negative timestamp");
    }
    if (!index_.emplace(r.record_id, i).second) {
      throw InvalidArgument("duplicate record id " + std::to_string(r.record_id));
    }
  }
}

const AlarmRecord* AlarmLog::find(RecordId id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &records_[it->second];
}

LogSchema LogSchema::standard(std::size_t extra_columns) {
  LogSchema s;
  for (auto c : kCoreColumns) s.columns.emplace_back(c);
  for (std::size_t i = 0; i < extra_columns; ++i) s.columns.push_back("extra_" + std::to_string(i));
  s.key_fields = {"alarm_name", "device_id", "timestamp"};
  return s;
}

std::size_t LogSchema::extra_count() const { return extra_names().size(); }

std::vector<std::string> LogSchema::extra_names() const {
  std::vector<std::string> out;
  for (const auto& c : columns) {
    if (!is_core_column(c)) out.push_back(c);
  }
  return out;
}

std::string schema_to_json(const LogSchema& schema) {
  json cols = json::array();
  for (const auto& c : schema.columns) {
    cols.push_back({{"name", c}, {"key", schema.key_fields.contains(c)}});
  }
  json doc;
  doc["columns"] = std::move(cols);
  doc["delimiter"] = std::string(1, schema.delimiter);
  doc["header"] = schema.header;
  return doc.dump(2) + "\n";
}

LogSchema schema_from_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    LogSchema s;
    for (const auto& c : doc.at("columns")) {
      auto name = c.at("name").get<std::string>();
      if (c.value("key", false)) s.key_fields.insert(name);
      s.columns.push_back(std::move(name));
    }
    auto delim = doc.value("delimiter", std::string("\t"));
    if (delim.size() != 1) throw FormatError("schema delimiter must be one character");
    s.delimiter = delim[0];
    s.header = doc.value("header", false);
    plan_columns(s);
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("schema file: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("schema file: ") + e.what());
  }
}

ParseResult parse_log(std::istream& source, const LogSchema& schema) {
  if (!source) throw FormatError("log source is unreadable");
  const ColumnPlan plan = plan_columns(schema);
  std::vector<AlarmRecord> records;
  std::set<RecordId> ids;
  std::size_t lines = 0;
  std::size_t malformed = 0;
  std::string line;
  bool first = true;
  while (std::getline(source, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first && schema.header) {
      first = false;
      continue;
    }
    first = false;
    if (line.empty()) continue;
    ++lines;
    auto rec = parse_line(line, schema, plan);
    if (!rec || !ids.insert(rec->record_id).second) {
      ++malformed;
      continue;
    }
    records.push_back(std::move(*rec));
  }
  if (source.bad()) throw FormatError("error while reading log source");
  if (malformed * 2 > lines) {
    throw FormatError("schema mismatch: " + std::to_string(malformed) + " of " +
                      std::to_string(lines) + " lines malformed");
  }
  return {AlarmLog(std::move(records)), malformed};
}

void write_log(std::ostream& out, const AlarmLog& log, const LogSchema& schema) {
  const ColumnPlan plan = plan_columns(schema);
  const char d = schema.delimiter;
  auto check = [d](std::string_view cell) {
    if (cell.find(d) != std::string_view::npos || cell.find('\n') != std::string_view::npos) {
      throw InvalidArgument("cell contains the delimiter or a newline: '" + std::string(cell) + "'");
    }
    return cell;
  };
  if (schema.header) {
    for (std::size_t i = 0; i < schema.columns.size(); ++i) {
      if (i) out << d;
      out << schema.columns[i];
    }
    out << '\n';
  }
  std::vector<std::string> cells(schema.columns.size());
  for (const auto& r : log.records()) {
    if (r.extras.size() > plan.extras.size()) {
      throw InvalidArgument("record " + std::to_string(r.record_id) +
                            " has more extras than the schema declares");
    }
    cells[plan.record_id] = std::to_string(r.record_id);
    cells[plan.timestamp] = r.timestamp ? std::to_string(*r.timestamp) : std::string();
    cells[plan.device_id] = r.device_id ? std::to_string(*r.device_id) : std::string();
    cells[plan.alarm_name] = check(r.alarm_name);
    cells[plan.severity] = to_string(r.severity);
    for (std::size_t i = 0; i < plan.extras.size(); ++i) {
      cells[plan.extras[i]] = i < r.extras.size() ? std::string(check(r.extras[i])) : std::string();
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << d;
      out << cells[i];
    }
    out << '\n';
  }
}

KeyFields KeyFields::from_schema(const LogSchema& schema) {
  KeyFields k{false, false, false, {}};
  const auto extras = schema.extra_names();
  for (const auto& name : schema.key_fields) {
    if (name == "timestamp") k.timestamp = true;
    else if (name == "device_id") k.device_id = true;
    else if (name == "alarm_name") k.alarm_name = true;
    else if (name == "record_id" || name == "severity") continue;  // always present
    else {
      auto it = std::find(extras.begin(), extras.end(), name);
      if (it == extras.end()) throw InvalidArgument("key field '" + name + "' is not a column");
      k.extras.push_back(static_cast<std::size_t>(it - extras.begin()));
    }
  }
  return k;
}

AlarmLog clean(const AlarmLog& log, const KeyFields& keys) {
  std::vector<AlarmRecord> kept;
  kept.reserve(log.size());
  for (const auto& r : log.records()) {
    if (keys.timestamp && !r.timestamp) continue;
    if (keys.device_id && !r.device_id) continue;
    if (keys.alarm_name && r.alarm_name.empty()) continue;
    bool ok = true;
    for (std::size_t e : keys.extras) {
      if (e >= r.extras.size() || r.extras[e].empty()) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(r);
  }
  return AlarmLog(std::move(kept));
}

DiagnosisSample extract_sample(const AlarmLog& log, RecordId root, Timestamp window_seconds) {
  if (window_seconds < 0) throw InvalidArgument("window must be non-negative");
  const AlarmRecord* r = log.find(root);
  if (!r) throw InvalidArgument("root record " + std::to_string(root) + " not in log");
  if (!r->timestamp) throw InvalidArgument("root record has no timestamp");
  const Timestamp t = *r->timestamp;
  const auto& recs = log.records();
  std::optional<Timestamp> lo = t - window_seconds;
  auto first = std::lower_bound(recs.begin(), recs.end(), lo,
                                [](const AlarmRecord& a, const std::optional<Timestamp>& v) {
                                  return a.timestamp < v;
                                });
  DiagnosisSample s;
  s.root_record = root;
  s.root_time = t;
  for (auto it = first; it != recs.end() && it->timestamp && *it->timestamp <= t + window_seconds;
       ++it) {
    s.records.push_back(*it);
  }
  return s;
}

Scenario scenario_of(Timestamp root_time) {
  return hour_of_day(root_time) < 18 ? Scenario::OffPeak : Scenario::Peak;
}

std::map<Scenario, std::vector<DiagnosisSample>> split_by_scenario(
    const AlarmLog& log, const std::vector<EpisodeLabel>& labels, Timestamp window_seconds) {
  std::map<Scenario, std::vector<DiagnosisSample>> out{
      {Scenario::AllDay, {}}, {Scenario::OffPeak, {}}, {Scenario::Peak, {}}};
  for (const auto& l : labels) {
    if (!log.find(l.root_record)) {
      throw InvalidArgument("label references missing record " + std::to_string(l.root_record));
    }
    DiagnosisSample s = extract_sample(log, l.root_record, window_seconds);
    s.label = l.cause;
    out[scenario_of(s.root_time)].push_back(s);
    out[Scenario::AllDay].push_back(std::move(s));
  }
  return out;
}

void write_labels(std::ostream& out, const std::vector<EpisodeLabel>& labels) {
  for (const auto& l : labels) out << l.root_record << ' ' << l.cause << '\n';
}

std::vector<EpisodeLabel> read_labels(std::istream& in) {
  std::vector<EpisodeLabel> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    EpisodeLabel l;
    std::string rest;
    if (!(ss >> l.root_record >> l.cause) || (ss >> rest)) {
      throw FormatError("labels line " + std::to_string(lineno) + " is malformed");
    }
    out.push_back(l);
  }
  return out;
}

}  // namespace telops
