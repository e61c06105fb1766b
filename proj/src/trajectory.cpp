#include "kinetrack/trajectory.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "kinetrack/errors.hpp"

namespace kinetrack {

Eigen::MatrixXd Window::as_matrix() const {
  Eigen::MatrixXd out(points.size(), 2);
  for (std::size_t i = 0; i < points.size(); ++i) out.row(i) = points[i].transpose();
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_long(const std::string& s, long& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtol(s.c_str(), &end, 10);
  return end && *end == '\0';
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end && *end == '\0';
}

}  // namespace

std::vector<TrackingSeries> parse_tracking_csv(std::istream& in, const FieldSpec& field,
                                               double dt, double slack_cm) {
  if (dt <= 0.0) throw DataError("parse_tracking_csv: dt must be positive");
  std::string line;
  if (!std::getline(in, line)) throw DataError("parse_tracking_csv: empty input");
  {
    auto fields = split_fields(line);
    if (fields != std::vector<std::string>{"frame", "entity_id", "x_cm", "y_cm"})
      throw DataError("parse_tracking_csv: expected header frame,entity_id,x_cm,y_cm, line 1");
  }

  std::map<int, std::map<long, Eigen::Vector2d>> rows;  // entity -> frame -> point
  long max_frame = -1;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_fields(line);
    long frame = 0, entity = 0;
    double x = 0, y = 0;
    if (fields.size() != 4 || !parse_long(fields[0], frame) || !parse_long(fields[1], entity) ||
        !parse_double(fields[2], x) || !parse_double(fields[3], y))
      throw DataError("parse_tracking_csv: malformed row, line " + std::to_string(line_no));
    if (frame < 0)
      throw DataError("parse_tracking_csv: negative frame, line " + std::to_string(line_no));
    if (!field.contains({x, y}, slack_cm))
      throw DataError("parse_tracking_csv: out of bounds, line " + std::to_string(line_no));
    auto& per_entity = rows[static_cast<int>(entity)];
    if (per_entity.count(frame))
      throw DataError("parse_tracking_csv: duplicate (entity, frame), line " +
                      std::to_string(line_no));
    if (!per_entity.empty() && frame < per_entity.rbegin()->first)
      throw DataError("parse_tracking_csv: non-monotone frames, line " + std::to_string(line_no));
    per_entity.emplace(frame, Eigen::Vector2d(x, y));
    max_frame = std::max(max_frame, frame);
  }

  std::vector<TrackingSeries> out;
  for (const auto& [entity, frames] : rows) {
    TrackingSeries s;
    s.entity_id = entity;
    s.dt = dt;
    s.samples.assign(static_cast<std::size_t>(max_frame + 1), std::nullopt);
    for (const auto& [frame, point] : frames) s.samples[static_cast<std::size_t>(frame)] = point;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<TrackingSeries> parse_tracking_csv(const std::string& text, const FieldSpec& field,
                                               double dt, double slack_cm) {
  std::istringstream in(text);
  return parse_tracking_csv(in, field, dt, slack_cm);
}

std::string serialize_tracking_csv(const std::vector<TrackingSeries>& series) {
  std::string out = "frame,entity_id,x_cm,y_cm\n";
  std::size_t max_len = 0;
  for (const auto& s : series) max_len = std::max(max_len, s.size());
  char buf[128];
  for (std::size_t i = 0; i < max_len; ++i) {
    for (const auto& s : series) {
      if (i >= s.size() || !s.samples[i]) continue;
      std::snprintf(buf, sizeof(buf), "%zu,%d,%.17g,%.17g\n", i, s.entity_id, s.samples[i]->x(),
                    s.samples[i]->y());
      out += buf;
    }
  }
  return out;
}

std::vector<Window> sliding_windows(const TrackingSeries& series, int length) {
  if (length < 2) throw DataError("sliding_windows: length must be >= 2");
  std::vector<Window> out;
  const std::size_t n = series.size();
  std::size_t run_start = 0;
  while (run_start < n) {
    if (!series.samples[run_start]) {
      ++run_start;
      continue;
    }
    std::size_t run_end = run_start;
    while (run_end < n && series.samples[run_end]) ++run_end;
    // run is [run_start, run_end)
    const std::size_t run_len = run_end - run_start;
    if (run_len >= static_cast<std::size_t>(length)) {
      for (std::size_t s = run_start; s + length <= run_end; ++s) {
        Window w;
        w.start_index = static_cast<int>(s);
        w.points.reserve(length);
        for (int j = 0; j < length; ++j) w.points.push_back(*series.samples[s + j]);
        out.push_back(std::move(w));
      }
    }
    run_start = run_end;
  }
  return out;
}

Eigen::Vector2d normalize_point(const Eigen::Vector2d& p, const FieldSpec& field) {
  return {(p.x() - field.x_min) / field.width(), (p.y() - field.y_min) / field.height()};
}

Eigen::Vector2d denormalize_point(const Eigen::Vector2d& p, const FieldSpec& field) {
  return {field.x_min + p.x() * field.width(), field.y_min + p.y() * field.height()};
}

TrackingSeries normalize_unit(const TrackingSeries& series, const FieldSpec& field) {
  TrackingSeries out = series;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    if (!out.samples[i]) continue;
    if (!field.contains(*out.samples[i]))
      throw DataError("normalize_unit: point outside field at sample " + std::to_string(i));
    out.samples[i] = normalize_point(*out.samples[i], field);
  }
  return out;
}

TrackingSeries denormalize_unit(const TrackingSeries& series, const FieldSpec& field) {
  TrackingSeries out = series;
  for (auto& s : out.samples)
    if (s) s = denormalize_point(*s, field);
  return out;
}

}  // namespace kinetrack
