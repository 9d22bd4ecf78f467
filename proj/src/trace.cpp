#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

#include "gkt/orchestrator.hpp"

namespace gkt {

std::string to_string(TraceStage stage) {
  switch (stage) {
    case TraceStage::TeacherGuidance:
      return "teacher_guidance";
    case TraceStage::StudentCompletion:
      return "student_completion";
    case TraceStage::LinkTransfer:
      return "link_transfer";
  }
  return "teacher_guidance";
}

std::vector<TraceSpan> TraceTimeline::sorted() const {
  auto out = spans;
  std::stable_sort(out.begin(), out.end(), [](const TraceSpan &a, const TraceSpan &b) {
    if (a.start_s != b.start_s) return a.start_s < b.start_s;
    if (a.stage != b.stage) return a.stage < b.stage;
    return a.label < b.label;
  });
  return out;
}

double TraceTimeline::end_time() const {
  double end = 0.0;
  for (const auto &s : spans) end = std::max(end, s.end_s);
  return end;
}

Json to_json(const TraceTimeline &timeline) {
  Json spans = Json::array();
  for (const auto &s : timeline.sorted())
    spans.push_back({{"label", s.label}, {"stage", to_string(s.stage)}, {"start_s", s.start_s}, {"end_s", s.end_s}});
  return {{"spans", spans}, {"end_s", timeline.end_time()}};
}

namespace {

std::string xml_escape(const std::string &s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out.push_back(c);
    }
  }
  return out;
}

const char *stage_colour(TraceStage stage) {
  switch (stage) {
    case TraceStage::TeacherGuidance:
      return "#4e79a7";
    case TraceStage::StudentCompletion:
      return "#f28e2b";
    case TraceStage::LinkTransfer:
      return "#59a14f";
  }
  return "#888888";
}

const char *stage_title(TraceStage stage) {
  switch (stage) {
    case TraceStage::TeacherGuidance:
      return "Teacher guidance";
    case TraceStage::StudentCompletion:
      return "Student completion";
    case TraceStage::LinkTransfer:
      return "Link transfer";
  }
  return "";
}

// 1, 2 or 5 times a power of ten, giving roughly `target` ticks.
double tick_step(double range, int target) {
  if (range <= 0) return 1.0;
  const double raw = range / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) return m * mag;
  return 10.0 * mag;
}

}  // namespace

std::string render_trace_svg(const TraceTimeline &timeline) {
  const auto spans = timeline.sorted();
  const TraceStage order[] = {TraceStage::TeacherGuidance, TraceStage::LinkTransfer, TraceStage::StudentCompletion};
  std::vector<TraceStage> lanes;
  for (auto st : order)
    if (std::any_of(spans.begin(), spans.end(), [&](const TraceSpan &s) { return s.stage == st; }))
      lanes.push_back(st);

  const double left = 150, right = 30, top = 30, lane_h = 46, bar_h = 28, axis_h = 40;
  const double plot_w = 800;
  const double width = left + plot_w + right;
  const double height = top + lane_h * static_cast<double>(lanes.size()) + axis_h;
  const double end = std::max(timeline.end_time(), 1e-9);
  auto x_of = [&](double t) { return left + plot_w * t / end; };

  std::string svg;
  svg += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "viewBox=\"0 0 {:.0f} {:.0f}\" font-family=\"sans-serif\" font-size=\"12\">\n",
      width, height, width, height);
  svg += fmt::format("<rect width=\"{:.0f}\" height=\"{:.0f}\" fill=\"white\"/>\n", width, height);

  for (std::size_t lane = 0; lane < lanes.size(); ++lane) {
    const double y = top + lane_h * static_cast<double>(lane);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", left - 8,
                       y + lane_h / 2 + 4, stage_title(lanes[lane]));
    for (const auto &s : spans) {
      if (s.stage != lanes[lane]) continue;
      const double x0 = x_of(s.start_s);
      const double w = std::max(0.5, x_of(s.end_s) - x0);
      svg += fmt::format(
          "<rect x=\"{:.2f}\" y=\"{:.1f}\" width=\"{:.2f}\" height=\"{:.1f}\" fill=\"{}\" fill-opacity=\"0.85\" "
          "stroke=\"white\" stroke-width=\"0.5\"><title>{} [{:.2f} s, {:.2f} s]</title></rect>\n",
          x0, y + (lane_h - bar_h) / 2, w, bar_h, stage_colour(s.stage), xml_escape(s.label), s.start_s, s.end_s);
      if (w > 60)
        svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.1f}\" fill=\"white\">{} ({:.2f} s)</text>\n", x0 + 4,
                           y + lane_h / 2 + 4, xml_escape(s.label), s.end_s - s.start_s);
    }
  }

  const double axis_y = top + lane_h * static_cast<double>(lanes.size()) + 4;
  svg += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"black\"/>\n", left, axis_y,
                     left + plot_w, axis_y);
  const double step = tick_step(end, 8);
  for (double t = 0; t <= end * (1 + 1e-9); t += step) {
    const double x = x_of(t);
    svg += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.1f}\" x2=\"{:.2f}\" y2=\"{:.1f}\" stroke=\"black\"/>\n", x, axis_y,
                       x, axis_y + 5);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:g}</text>\n", x, axis_y + 18, t);
  }
  svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">runtime (s)</text>\n",
                     left + plot_w / 2, axis_y + 34);
  svg += "</svg>\n";
  return svg;
}

std::string emit_trace(const TraceTimeline &timeline, const std::string &json_path) {
  if (timeline.spans.empty()) throw std::invalid_argument("trace timeline is empty");
  for (const auto &s : timeline.spans)
    if (s.end_s < s.start_s) throw std::invalid_argument("trace span '" + s.label + "' ends before it starts");
  namespace fs = std::filesystem;
  auto svg_path = fs::path(json_path).replace_extension(".svg").string();
  auto write = [](const std::string &path, const std::string &content) {
    std::error_code ec;
    auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent, ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << content;
    if (!out) throw IoError("write failed for " + path);
  };
  write(json_path, to_json(timeline).dump(2) + "\n");
  write(svg_path, render_trace_svg(timeline));
  return svg_path;
}

}  // namespace gkt
