#pragma once

// Detection JSON-lines and evaluation report serialization.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "acsloc/data.hpp"
#include "acsloc/evaluation.hpp"
#include "acsloc/training.hpp"

namespace acsloc {

/// One `{"video_id","class","t_start","t_end","score"}` object per line.
inline std::string detections_to_jsonl(const std::vector<VideoDetection>& dets) {
  std::string out;
  for (const auto& d : dets) {
    nlohmann::ordered_json j;
    j["video_id"] = d.video_id;
    j["class"] = d.det.cls;
    j["t_start"] = d.det.start;
    j["t_end"] = d.det.end;
    j["score"] = d.det.score;
    out += j.dump() + "\n";
  }
  return out;
}

inline std::vector<VideoDetection> detections_from_jsonl(const std::string& text,
                                                         const std::string& origin = "detections") {
  std::vector<VideoDetection> out;
  std::size_t pos = 0, lineno = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      VideoDetection d;
      d.video_id = j.at("video_id").get<std::string>();
      d.det.cls = j.at("class").get<int>();
      d.det.start = j.at("t_start").get<std::size_t>();
      d.det.end = j.at("t_end").get<std::size_t>();
      d.det.score = j.at("score").get<double>();
      if (d.det.end <= d.det.start) throw SchemaError("empty span");
      out.push_back(std::move(d));
    } catch (const std::exception& e) {
      throw SchemaError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_detections(const fs::path& path, const std::vector<VideoDetection>& dets) {
  detail::write_file(path, detections_to_jsonl(dets));
}

inline std::vector<VideoDetection> read_detections(const fs::path& path) {
  if (!fs::exists(path)) throw MissingFileError("missing detections " + path.string());
  return detections_from_jsonl(detail::read_file(path), path.string());
}

namespace detail {

inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline std::optional<double> optional_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace detail

/// Absent values are written as null.
inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["grid"] = r.grid;
  auto map = nlohmann::ordered_json::array();
  for (const auto& v : r.map) map.push_back(detail::optional_json(v));
  j["map"] = map;
  j["average_map"] = detail::optional_json(r.average_map);
  nlohmann::ordered_json classes = nlohmann::ordered_json::object();
  for (const auto& [c, row] : r.class_ap) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& v : row) arr.push_back(detail::optional_json(v));
    classes[std::to_string(c)] = arr;
  }
  j["class_ap"] = classes;
  nlohmann::ordered_json diag = nlohmann::ordered_json::object();
  for (const auto& [name, d] : r.diagnostics) {
    nlohmann::ordered_json e;
    e["top1"] = detail::optional_json(d.top1);
    e["proportion"] = detail::optional_json(d.proportion);
    e["average_map"] = detail::optional_json(d.average_map);
    diag[name] = e;
  }
  j["diagnostics"] = diag;
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.grid = j.at("grid").get<std::vector<double>>();
    for (const auto& v : j.at("map")) r.map.push_back(detail::optional_from_json(v));
    r.average_map = detail::optional_from_json(j.at("average_map"));
    for (const auto& [key, row] : j.at("class_ap").items()) {
      auto& out = r.class_ap[std::stoi(key)];
      for (const auto& v : row) out.push_back(detail::optional_from_json(v));
    }
    for (const auto& [name, d] : j.at("diagnostics").items()) {
      r.diagnostics[name] = {detail::optional_from_json(d.at("top1")),
                             detail::optional_from_json(d.at("proportion")),
                             detail::optional_from_json(d.at("average_map"))};
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("eval report: ") + e.what());
  }
}

/// Flat table, one row per class and threshold; NA marks undefined AP.
inline std::string report_to_csv(const EvalReport& r) {
  std::string out = "class,threshold,ap\n";
  for (const auto& [c, row] : r.class_ap) {
    for (std::size_t k = 0; k < r.grid.size(); ++k) {
      out += std::to_string(c) + "," + format_double(r.grid[k]) + "," +
             (row[k] ? format_double(*row[k]) : std::string("NA")) + "\n";
    }
  }
  return out;
}

inline void write_report(const fs::path& json_path, const EvalReport& r) {
  detail::write_file(json_path, report_to_json(r).dump(2) + "\n");
  auto csv_path = json_path;
  csv_path.replace_extension(".csv");
  detail::write_file(csv_path, report_to_csv(r));
}

inline EvalReport read_report(const fs::path& path) {
  if (!fs::exists(path)) throw MissingFileError("missing report " + path.string());
  try {
    return report_from_json(nlohmann::json::parse(detail::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace acsloc
