#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "uma/bbox.hpp"
#include "uma/image.hpp"

namespace uma {

/// One line of a MOT Challenge det/gt/result file.
///
/// Files store 1-based pixel coordinates; `bbox` holds them converted to the
/// 0-based convention used everywhere else.
struct DetectionRow {
  int frame = 1;
  long id = -1;
  BBox bbox;
  double confidence = 1.0;
  /// Fields after the confidence, kept verbatim.
  std::vector<std::string> extra;
};

using TrackingOutput = std::vector<DetectionRow>;

struct SequenceMeta {
  std::string name;
  int width = 0;
  int height = 0;
  int length = 0;
  double frame_rate = 0;
  std::string image_dir = "img1";
  std::string image_ext = ".ppm";
};

/// Parses `frame,id,x,y,w,h[,conf[,...]]` lines. Blank lines are skipped.
/// Throws ParseError with the line number for malformed lines, non-positive
/// sizes or frame < 1.
std::vector<DetectionRow> parse_det_text(const std::string& text, const std::string& source = "<text>");
std::vector<DetectionRow> parse_det_file(const std::filesystem::path& path);

/// Fixed two-decimal rendering, rounding half away from zero on the shortest
/// decimal form of the value (10.255 -> "10.26").
std::string format_fixed2(double value);

/// `frame,id,x,y,w,h,conf,-1,-1,-1`, coordinates converted back to 1-based.
std::string format_row(const DetectionRow& row);

/// Writes rows sorted by (frame, id). Any id is accepted; used for det/gt files.
void write_rows(std::vector<DetectionRow> rows, const std::filesystem::path& path);
std::string rows_to_text(std::vector<DetectionRow> rows);

/// Tracking results: every id must be >= 1 and appear at most once per frame.
/// Throws ContractError otherwise.
void write_results(const TrackingOutput& rows, const std::filesystem::path& path);

/// Reads the [Sequence] section of a seqinfo.ini. imWidth, imHeight,
/// seqLength and frameRate are required; unknown keys are ignored.
SequenceMeta parse_seqinfo_text(const std::string& text);
SequenceMeta parse_seqinfo(const std::filesystem::path& path);
void write_seqinfo(const SequenceMeta& meta, const std::filesystem::path& path);

/// A sequence directory in MOT layout: seqinfo.ini, img1/%06d.ppm, gt/gt.txt, det/det.txt.
struct SequenceData {
  SequenceMeta meta;
  std::vector<Image> frames;  // frames[k] is frame k + 1
  std::vector<DetectionRow> gt;
  std::vector<DetectionRow> det;
};

std::filesystem::path frame_path(const std::filesystem::path& dir, const SequenceMeta& meta, int frame);
void write_sequence(const SequenceData& seq, const std::filesystem::path& dir);
/// Loads meta, frames and whichever of gt/det exist.
SequenceData load_sequence(const std::filesystem::path& dir);

}  // namespace uma
