#include "uma/mot_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "uma/errors.hpp"

namespace uma {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

double parse_number(const std::string& field, const char* what, int line, const std::string& source) {
  const std::string t = trim(field);
  double value = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(value)) {
    throw ParseError(source + ": field " + what + " is not numeric ('" + t + "')", line);
  }
  return value;
}

long parse_integer(const std::string& field, const char* what, int line, const std::string& source) {
  const double v = parse_number(field, what, line, source);
  if (v != std::floor(v)) throw ParseError(source + ": field " + what + " is not an integer", line);
  return static_cast<long>(v);
}

}  // namespace

std::vector<DetectionRow> parse_det_text(const std::string& text, const std::string& source) {
  std::vector<DetectionRow> rows;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() < 6) throw ParseError(source + ": expected at least 6 comma-separated fields", line_no);
    DetectionRow row;
    const long frame = parse_integer(fields[0], "frame", line_no, source);
    if (frame < 1) throw ParseError(source + ": frame must be >= 1", line_no);
    row.frame = static_cast<int>(frame);
    row.id = parse_integer(fields[1], "id", line_no, source);
    row.bbox.x = parse_number(fields[2], "x", line_no, source) - 1.0;
    row.bbox.y = parse_number(fields[3], "y", line_no, source) - 1.0;
    row.bbox.w = parse_number(fields[4], "w", line_no, source);
    row.bbox.h = parse_number(fields[5], "h", line_no, source);
    if (!(row.bbox.w > 0) || !(row.bbox.h > 0)) {
      throw ParseError(source + ": box width and height must be positive", line_no);
    }
    if (fields.size() > 6) row.confidence = parse_number(fields[6], "conf", line_no, source);
    for (std::size_t i = 7; i < fields.size(); ++i) row.extra.push_back(trim(fields[i]));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<DetectionRow> parse_det_file(const std::filesystem::path& path) {
  return parse_det_text(read_text(path), path.string());
}

std::string format_fixed2(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), std::abs(value), std::chars_format::fixed);
  if (ec != std::errc()) throw ContractError("format_fixed2: value not representable");
  std::string s(buf, end);
  auto dot = s.find('.');
  if (dot == std::string::npos) {
    s += ".";
    dot = s.size() - 1;
  }
  s.append(3, '0');
  // Digits as integers: everything up to the second decimal, rounded by the third.
  std::string digits = s.substr(0, dot) + s.substr(dot + 1, 2);
  const bool round_up = s[dot + 3] >= '5';
  if (round_up) {
    int i = static_cast<int>(digits.size()) - 1;
    while (i >= 0 && digits[static_cast<std::size_t>(i)] == '9') digits[static_cast<std::size_t>(i--)] = '0';
    if (i < 0) {
      digits.insert(digits.begin(), '1');
    } else {
      ++digits[static_cast<std::size_t>(i)];
    }
  }
  std::string out = digits.substr(0, digits.size() - 2) + "." + digits.substr(digits.size() - 2);
  const bool zero = std::all_of(digits.begin(), digits.end(), [](char c) { return c == '0'; });
  if (value < 0 && !zero) out.insert(out.begin(), '-');
  return out;
}

std::string format_row(const DetectionRow& row) {
  std::ostringstream out;
  out << row.frame << ',' << row.id << ',' << format_fixed2(row.bbox.x + 1.0) << ','
      << format_fixed2(row.bbox.y + 1.0) << ',' << format_fixed2(row.bbox.w) << ',' << format_fixed2(row.bbox.h)
      << ',' << format_fixed2(row.confidence) << ",-1,-1,-1";
  return out.str();
}

std::string rows_to_text(std::vector<DetectionRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const DetectionRow& a, const DetectionRow& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.id < b.id;
  });
  std::string text;
  for (const auto& r : rows) text += format_row(r) + "\n";
  return text;
}

void write_rows(std::vector<DetectionRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << rows_to_text(std::move(rows));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_results(const TrackingOutput& rows, const std::filesystem::path& path) {
  std::map<long, int> last_frame;
  for (const auto& r : rows) {
    if (r.id < 1) throw ContractError("write_results: result ids must be >= 1, got " + std::to_string(r.id));
    auto [it, inserted] = last_frame.emplace(r.id, r.frame);
    if (!inserted) {
      if (r.frame <= it->second) {
        throw ContractError("write_results: frames for id " + std::to_string(r.id) + " are not increasing (" +
                            std::to_string(it->second) + " then " + std::to_string(r.frame) + ")");
      }
      it->second = r.frame;
    }
  }
  write_rows(rows, path);
}

SequenceMeta parse_seqinfo_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  bool in_sequence = false;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == ';' || line[0] == '#') continue;
    if (line.front() == '[') {
      in_sequence = (line == "[Sequence]");
      continue;
    }
    if (!in_sequence) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto require = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(std::string("seqinfo: missing required key ") + key);
    return it->second;
  };
  auto positive_int = [&](const char* key) {
    const double v = parse_number(require(key), key, 0, "seqinfo");
    if (v <= 0 || v != std::floor(v)) throw ParseError(std::string("seqinfo: ") + key + " must be a positive integer");
    return static_cast<int>(v);
  };
  SequenceMeta meta;
  meta.width = positive_int("imWidth");
  meta.height = positive_int("imHeight");
  meta.length = positive_int("seqLength");
  meta.frame_rate = parse_number(require("frameRate"), "frameRate", 0, "seqinfo");
  if (!(meta.frame_rate > 0)) throw ParseError("seqinfo: frameRate must be positive");
  if (auto it = kv.find("name"); it != kv.end()) meta.name = it->second;
  if (auto it = kv.find("imDir"); it != kv.end()) meta.image_dir = it->second;
  if (auto it = kv.find("imExt"); it != kv.end()) meta.image_ext = it->second;
  return meta;
}

SequenceMeta parse_seqinfo(const std::filesystem::path& path) { return parse_seqinfo_text(read_text(path)); }

void write_seqinfo(const SequenceMeta& meta, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "[Sequence]\n"
      << "name=" << meta.name << "\n"
      << "imDir=" << meta.image_dir << "\n"
      << "frameRate=" << meta.frame_rate << "\n"
      << "seqLength=" << meta.length << "\n"
      << "imWidth=" << meta.width << "\n"
      << "imHeight=" << meta.height << "\n"
      << "imExt=" << meta.image_ext << "\n";
}

std::filesystem::path frame_path(const std::filesystem::path& dir, const SequenceMeta& meta, int frame) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06d", frame);
  return dir / meta.image_dir / (std::string(name) + meta.image_ext);
}

void write_sequence(const SequenceData& seq, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / seq.meta.image_dir);
  std::filesystem::create_directories(dir / "gt");
  std::filesystem::create_directories(dir / "det");
  write_seqinfo(seq.meta, dir / "seqinfo.ini");
  for (std::size_t k = 0; k < seq.frames.size(); ++k) {
    write_ppm(frame_path(dir, seq.meta, static_cast<int>(k + 1)), seq.frames[k]);
  }
  write_rows(seq.gt, dir / "gt" / "gt.txt");
  write_rows(seq.det, dir / "det" / "det.txt");
}

SequenceData load_sequence(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ParseError("sequence directory not found: " + dir.string());
  SequenceData seq;
  seq.meta = parse_seqinfo(dir / "seqinfo.ini");
  if (seq.meta.name.empty()) seq.meta.name = dir.filename().string();
  if (seq.meta.image_ext != ".ppm") throw ParseError(dir.string() + ": only .ppm frames are supported");
  for (int f = 1; f <= seq.meta.length; ++f) seq.frames.push_back(read_ppm(frame_path(dir, seq.meta, f)));
  if (std::filesystem::exists(dir / "gt" / "gt.txt")) seq.gt = parse_det_file(dir / "gt" / "gt.txt");
  if (std::filesystem::exists(dir / "det" / "det.txt")) seq.det = parse_det_file(dir / "det" / "det.txt");
  return seq;
}

}  // namespace uma
