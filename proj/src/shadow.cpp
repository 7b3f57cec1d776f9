#include "utk/shadow.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "utk/parallel.hpp"

namespace utk::shadow {

using geo::Vec3;
using namespace std::chrono;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double wrap360(double a) {
  a = std::fmod(a, 360.0);
  return a < 0 ? a + 360.0 : a;
}

[[noreturn]] void bad_time(std::string_view text) {
  throw Error(ErrorCode::SyntaxError, "invalid ISO-8601 time '" + std::string(text) + "'");
}

int read_int(std::string_view text, std::size_t& pos, std::size_t digits, std::string_view whole) {
  if (pos + digits > text.size()) bad_time(whole);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + digits, v);
  if (ec != std::errc{} || ptr != text.data() + pos + digits) bad_time(whole);
  pos += digits;
  return v;
}

void expect(std::string_view text, std::size_t& pos, char c, std::string_view whole) {
  if (pos >= text.size() || text[pos] != c) bad_time(whole);
  ++pos;
}

}  // namespace

TimePoint parse_iso_time(std::string_view text) {
  std::size_t pos = 0;
  const int y = read_int(text, pos, 4, text);
  expect(text, pos, '-', text);
  const int mo = read_int(text, pos, 2, text);
  expect(text, pos, '-', text);
  const int d = read_int(text, pos, 2, text);
  if (pos >= text.size() || (text[pos] != 'T' && text[pos] != ' ')) bad_time(text);
  ++pos;
  const int h = read_int(text, pos, 2, text);
  expect(text, pos, ':', text);
  const int mi = read_int(text, pos, 2, text);
  int s = 0;
  if (pos < text.size() && text[pos] == ':') {
    ++pos;
    s = read_int(text, pos, 2, text);
  }
  int offset_min = 0;
  if (pos < text.size()) {
    const char c = text[pos++];
    if (c == 'Z') {
    } else if (c == '+' || c == '-') {
      const int oh = read_int(text, pos, 2, text);
      if (pos < text.size() && text[pos] == ':') ++pos;
      const int om = read_int(text, pos, 2, text);
      offset_min = (c == '-' ? -1 : 1) * (oh * 60 + om);
    } else {
      bad_time(text);
    }
  }
  if (pos != text.size()) bad_time(text);
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) bad_time(text);
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s} - minutes{offset_min};
}

std::string format_iso_time(TimePoint t) {
  const auto day_start = floor<days>(t);
  const year_month_day ymd{day_start};
  const hh_mm_ss hms{t - day_start};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf;
}

seconds parse_step(std::string_view text) {
  if (text.empty()) throw Error(ErrorCode::SyntaxError, "empty time step");
  long scale = 60;
  std::string_view digits = text;
  switch (text.back()) {
    case 's': scale = 1; digits.remove_suffix(1); break;
    case 'm': scale = 60; digits.remove_suffix(1); break;
    case 'h': scale = 3600; digits.remove_suffix(1); break;
    default: break;
  }
  long v = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || v <= 0)
    throw Error(ErrorCode::SyntaxError, "invalid time step '" + std::string(text) + "'");
  return seconds{v * scale};
}

SunAngles sun_position(double lat, double lon, TimePoint t) {
  // Days from J2000.0 (2000-01-01 12:00 UT).
  constexpr auto j2000 = sys_days{year{2000} / January / 1} + hours{12};
  const double n = duration<double, days::period>(t - j2000).count();

  const double mean_lon = wrap360(280.460 + 0.9856474 * n);
  const double anomaly = wrap360(357.528 + 0.9856003 * n) * kDeg;
  const double ecl_lon = (mean_lon + 1.915 * std::sin(anomaly) + 0.020 * std::sin(2 * anomaly)) * kDeg;
  const double obliquity = (23.439 - 0.0000004 * n) * kDeg;

  const double ra = wrap360(std::atan2(std::cos(obliquity) * std::sin(ecl_lon), std::cos(ecl_lon)) / kDeg);
  const double declination = std::asin(std::sin(obliquity) * std::sin(ecl_lon));
  double eot_deg = mean_lon - ra;  // equation of time, degrees
  if (eot_deg > 180) eot_deg -= 360;
  if (eot_deg < -180) eot_deg += 360;

  const double utc_minutes = duration<double, minutes::period>(t - floor<days>(t)).count();
  const double solar_minutes = utc_minutes + 4.0 * lon + 4.0 * eot_deg;
  const double hour_angle = (solar_minutes / 4.0 - 180.0) * kDeg;

  const double phi = lat * kDeg;
  const double sin_el =
      std::sin(phi) * std::sin(declination) + std::cos(phi) * std::cos(declination) * std::cos(hour_angle);
  const double elevation = std::asin(std::clamp(sin_el, -1.0, 1.0));
  const double azimuth = std::atan2(-std::sin(hour_angle), std::tan(declination) * std::cos(phi) -
                                                              std::sin(phi) * std::cos(hour_angle));
  return {wrap360(azimuth / kDeg), elevation / kDeg};
}

Vec3 sun_direction(const SunAngles& a) {
  const double az = a.azimuth * kDeg, el = a.elevation * kDeg;
  return {std::sin(az) * std::cos(el), std::cos(az) * std::cos(el), std::sin(el)};
}

SunPath make_sun_path(double lat, double lon, TimePoint from, TimePoint to, seconds step) {
  if (step <= seconds{0}) throw Error(ErrorCode::EmptyPath, "time step must be positive");
  if (to <= from)
    throw Error(ErrorCode::EmptyPath, "empty time window " + format_iso_time(from) + " .. " + format_iso_time(to));
  SunPath path{lat, lon, step, {}};
  for (auto t = from; t < to; t += step) path.instants.push_back({t, sun_position(lat, lon, t)});
  return path;
}

void Box3::expand(Vec3 p) {
  lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
  hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
}

void Box3::expand(const Box3& b) {
  expand(b.lo);
  expand(b.hi);
}

bool Box3::contains(const Box3& b) const {
  return lo.x <= b.lo.x && lo.y <= b.lo.y && lo.z <= b.lo.z && hi.x >= b.hi.x && hi.y >= b.hi.y && hi.z >= b.hi.z;
}

bool ray_hits_triangle(Vec3 origin, Vec3 dir, const Triangle& tri, double tmax) {
  const Vec3 e1 = tri[1] - tri[0], e2 = tri[2] - tri[0];
  const Vec3 p = geo::cross(dir, e2);
  const double det = geo::dot(e1, p);
  if (std::abs(det) < 1e-14) return false;
  const double inv = 1.0 / det;
  const Vec3 s = origin - tri[0];
  const double u = geo::dot(s, p) * inv;
  if (u < 0 || u > 1) return false;
  const Vec3 q = geo::cross(s, e1);
  const double v = geo::dot(dir, q) * inv;
  if (v < 0 || u + v > 1) return false;
  const double t = geo::dot(e2, q) * inv;
  return t > 1e-9 && t <= tmax;
}

namespace {

bool ray_hits_box(Vec3 origin, Vec3 inv_dir, const Box3& b, double tmax) {
  double t0 = 0, t1 = tmax;
  const double o[3] = {origin.x, origin.y, origin.z};
  const double inv[3] = {inv_dir.x, inv_dir.y, inv_dir.z};
  const double lo[3] = {b.lo.x, b.lo.y, b.lo.z};
  const double hi[3] = {b.hi.x, b.hi.y, b.hi.z};
  for (int a = 0; a < 3; ++a) {
    double tn = (lo[a] - o[a]) * inv[a];
    double tf = (hi[a] - o[a]) * inv[a];
    if (std::isnan(tn) || std::isnan(tf)) {
      // Ray parallel to this slab and starting on its boundary plane.
      if (o[a] < lo[a] || o[a] > hi[a]) return false;
      continue;
    }
    if (tn > tf) std::swap(tn, tf);
    t0 = std::max(t0, tn);
    t1 = std::min(t1, tf * (1 + 4e-16));
    if (t0 > t1) return false;
  }
  return true;
}

Vec3 centroid(const Triangle& t) { return (t[0] + t[1] + t[2]) * (1.0 / 3.0); }

double axis(Vec3 v, int a) { return a == 0 ? v.x : a == 1 ? v.y : v.z; }

}  // namespace

Bvh::Bvh(std::vector<Triangle> triangles, std::uint32_t leaf_size) : triangles_(std::move(triangles)) {
  if (triangles_.empty()) throw Error(ErrorCode::EmptyScene, "the shadow scene has no triangles");
  order_.resize(triangles_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(2 * triangles_.size() / std::max(1u, leaf_size) + 1);
  build(0, static_cast<std::uint32_t>(triangles_.size()), std::max(1u, leaf_size));
}

std::uint32_t Bvh::build(std::uint32_t first, std::uint32_t count, std::uint32_t leaf_size) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  Box3 box, centers;
  for (std::uint32_t i = first; i < first + count; ++i) {
    const auto& t = triangles_[order_[i]];
    for (const auto& p : t) box.expand(p);
    centers.expand(centroid(t));
  }
  nodes_[id].box = box;
  if (count <= leaf_size) {
    nodes_[id].first = first;
    nodes_[id].count = count;
    return id;
  }
  const Vec3 extent = centers.hi - centers.lo;
  const int a = extent.x >= extent.y && extent.x >= extent.z ? 0 : extent.y >= extent.z ? 1 : 2;
  const std::uint32_t mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                   [&](std::uint32_t l, std::uint32_t r) {
                     return axis(centroid(triangles_[l]), a) < axis(centroid(triangles_[r]), a);
                   });
  const auto left = build(first, mid - first, leaf_size);
  const auto right = build(mid, first + count - mid, leaf_size);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

bool Bvh::any_hit(Vec3 origin, Vec3 dir, double tmax) const {
  const Vec3 inv{1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z};
  std::uint32_t stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const auto& node = nodes_[stack[--top]];
    if (!ray_hits_box(origin, inv, node.box, tmax)) continue;
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i)
        if (ray_hits_triangle(origin, dir, triangles_[order_[i]], tmax)) return true;
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return false;
}

std::size_t Bvh::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.count > 0; }));
}

bool linear_any_hit(std::span<const Triangle> triangles, Vec3 origin, Vec3 dir, double tmax) {
  return std::any_of(triangles.begin(), triangles.end(),
                     [&](const Triangle& t) { return ray_hits_triangle(origin, dir, t, tmax); });
}

std::vector<Triangle> scene_triangles(std::span<const layers::PhysicalLayer* const> meshes) {
  std::vector<Triangle> out;
  for (const auto* layer : meshes) {
    if (layer->kind != layers::PhysicalKind::mesh3d) continue;
    for (const auto& o : layer->objects)
      for (std::size_t t = 0; t + 2 < o.indices.size(); t += 3)
        out.push_back({o.local[o.indices[t]], o.local[o.indices[t + 1]], o.local[o.indices[t + 2]]});
  }
  return out;
}

layers::ThematicLayer accumulate_shadow(std::span<const ingest::SurfaceSample> samples, const Bvh* scene,
                                        const SunPath& path, const ShadowOptions& options, WarningLog* log) {
  if (path.instants.empty()) throw Error(ErrorCode::EmptyPath, "the sun path has no instants");
  std::vector<Vec3> sun;
  for (const auto& i : path.instants)
    if (i.sun.elevation > 0) sun.push_back(sun_direction(i.sun));
  const auto step_minutes = duration<double, minutes::period>(path.step).count();

  std::vector<std::uint32_t> shadowed(samples.size(), 0);
  parallel_for(samples.size(), [&](std::size_t s) {
    const auto& sample = samples[s];
    const Vec3 origin = sample.position + sample.normal * kRayOffset;
    std::uint32_t n = 0;
    for (const auto& d : sun)
      if (geo::dot(d, sample.normal) <= 0 || (scene && scene->any_hit(origin, d))) ++n;
    shadowed[s] = n;
  });

  layers::ThematicLayer out;
  out.name = options.name;
  out.crs_origin = options.frame;
  out.color_scale.domain = std::array<double, 2>{0.0, 1.0};
  out.points.reserve(samples.size());
  if (sun.empty()) warn(log, "the sun stays below the horizon for the whole window; fractions are null");
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto g = options.frame.unproject(samples[s].position);
    if (sun.empty()) out.add(g.lat, g.lon, g.height, Scalar::null());
    else out.add(g.lat, g.lon, g.height, Scalar(static_cast<double>(shadowed[s]) / static_cast<double>(sun.size())));
  }
  out.metadata = {{"accumulation_minutes", static_cast<double>(sun.size()) * step_minutes},
                  {"instants", path.instants.size()},
                  {"step_minutes", step_minutes},
                  {"from", format_iso_time(path.instants.front().time)},
                  {"to", format_iso_time(path.instants.back().time + path.step)},
                  {"latitude", path.lat},
                  {"longitude", path.lon}};
  return out;
}

std::vector<ingest::SurfaceSample> ground_samples(const geo::Box2& box, double cell, double z) {
  std::vector<ingest::SurfaceSample> out;
  if (box.empty() || cell <= 0) return out;
  const auto nx = static_cast<std::size_t>(std::max(1.0, std::ceil((box.max_x - box.min_x) / cell - 1e-9)));
  const auto ny = static_cast<std::size_t>(std::max(1.0, std::ceil((box.max_y - box.min_y) / cell - 1e-9)));
  out.reserve(nx * ny);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i)
      out.push_back({{box.min_x + (static_cast<double>(i) + 0.5) * cell, box.min_y + (static_cast<double>(j) + 0.5) * cell, z},
                     {0, 0, 1},
                     0});
  return out;
}

}  // namespace utk::shadow
