#include "evdm/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "evdm/error.hpp"
#include "evdm/evaluation.hpp"

namespace evdm {

std::string_view to_string(DeformationFamily f) {
  switch (f) {
    case DeformationFamily::Translate: return "translate";
    case DeformationFamily::Rotate: return "rotate";
    case DeformationFamily::AffineStretch: return "affine_stretch";
    case DeformationFamily::SinusoidalBend: return "sinusoidal_bend";
    case DeformationFamily::RadialSqueeze: return "radial_squeeze";
  }
  return "translate";
}

DeformationFamily parse_family(std::string_view s) {
  for (auto f : {DeformationFamily::Translate, DeformationFamily::Rotate, DeformationFamily::AffineStretch,
                 DeformationFamily::SinusoidalBend, DeformationFamily::RadialSqueeze}) {
    if (to_string(f) == s) return f;
  }
  throw Error(ErrorKind::InvalidConfig, "unknown deformation family '" + std::string(s) + "'");
}

void SceneSpec::validate() {
  if (width < 8 || height < 8) throw Error(ErrorKind::InvalidConfig, "image must be at least 8x8");
  if (!(threshold > 0.0)) throw Error(ErrorKind::InvalidConfig, "threshold must be > 0");
  if (!(frame_rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "frame_rate must be > 0");
  if (!(amplitude >= 0.0)) throw Error(ErrorKind::InvalidConfig, "amplitude must be >= 0");
  if (!(duration > 0.0)) throw Error(ErrorKind::InvalidConfig, "duration must be > 0");
  if (fine_factor < 20) throw Error(ErrorKind::InvalidConfig, "fine_factor must be >= 20");
  if (!(speckle_density > 0.0) || !(speckle_radius > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "speckle density and radius must be > 0");
  }
  if (refractory < 0.0 || noise_rate < 0.0) {
    throw Error(ErrorKind::InvalidConfig, "refractory and noise_rate must be >= 0");
  }
  const double intervals = duration * frame_rate;
  if (std::abs(intervals - std::round(intervals)) > 1e-9) {
    throw Error(ErrorKind::InvalidConfig, "duration * frame_rate must be an integer");
  }
  if (roi.width() <= 0.0 || roi.height() <= 0.0) {
    roi = {0.25 * width, 0.25 * height, 0.75 * width, 0.75 * height};
  }
  if (roi.x0 < 0 || roi.y0 < 0 || roi.x1 > width - 1 || roi.y1 > height - 1) {
    throw Error(ErrorKind::InvalidConfig, "roi must lie inside the image");
  }
  if (!(gt_spacing > 0.0)) throw Error(ErrorKind::InvalidConfig, "gt_spacing must be > 0");
}

int SceneSpec::num_frames() const { return static_cast<int>(std::lround(duration * frame_rate)) + 1; }
double SceneSpec::frame_time(int i) const { return i / frame_rate; }

namespace {

double get(const FlatConfig& cfg, const char* key, double def) {
  const auto it = cfg.find(key);
  return it == cfg.end() ? def : parse_double(it->second, key);
}

}  // namespace

SceneSpec scene_from_config(const FlatConfig& cfg) {
  static const char* known[] = {"width", "height", "speckle_density", "speckle_radius", "family", "amplitude",
                                "direction_deg", "rotation_deg", "drift_x", "drift_y", "duration", "frame_rate",
                                "threshold", "refractory", "noise_rate", "fine_factor", "seed", "roi_x0", "roi_y0",
                                "roi_x1", "roi_y1", "gt_spacing"};
  for (const auto& [k, v] : cfg) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* s) { return k == s; }) == std::end(known)) {
      throw Error(ErrorKind::InvalidConfig, "unknown scene key '" + k + "'");
    }
  }
  SceneSpec s;
  s.width = static_cast<int>(get(cfg, "width", s.width));
  s.height = static_cast<int>(get(cfg, "height", s.height));
  s.speckle_density = get(cfg, "speckle_density", s.speckle_density);
  s.speckle_radius = get(cfg, "speckle_radius", s.speckle_radius);
  if (const auto it = cfg.find("family"); it != cfg.end()) s.family = parse_family(it->second);
  s.amplitude = get(cfg, "amplitude", s.amplitude);
  s.direction_deg = get(cfg, "direction_deg", s.direction_deg);
  s.rotation_deg = get(cfg, "rotation_deg", s.rotation_deg);
  s.drift_x = get(cfg, "drift_x", s.drift_x);
  s.drift_y = get(cfg, "drift_y", s.drift_y);
  s.duration = get(cfg, "duration", s.duration);
  s.frame_rate = get(cfg, "frame_rate", s.frame_rate);
  s.threshold = get(cfg, "threshold", s.threshold);
  s.refractory = get(cfg, "refractory", s.refractory);
  s.noise_rate = get(cfg, "noise_rate", s.noise_rate);
  s.fine_factor = static_cast<int>(get(cfg, "fine_factor", s.fine_factor));
  if (const auto it = cfg.find("seed"); it != cfg.end()) s.seed = static_cast<std::uint64_t>(parse_int(it->second, "seed"));
  s.roi = {get(cfg, "roi_x0", 0.0), get(cfg, "roi_y0", 0.0), get(cfg, "roi_x1", 0.0), get(cfg, "roi_y1", 0.0)};
  s.gt_spacing = get(cfg, "gt_spacing", s.gt_spacing);
  s.validate();
  return s;
}

FlatConfig scene_to_config(const SceneSpec& s) {
  return {{"width", std::to_string(s.width)},
          {"height", std::to_string(s.height)},
          {"speckle_density", format_double(s.speckle_density)},
          {"speckle_radius", format_double(s.speckle_radius)},
          {"family", std::string(to_string(s.family))},
          {"amplitude", format_double(s.amplitude)},
          {"direction_deg", format_double(s.direction_deg)},
          {"rotation_deg", format_double(s.rotation_deg)},
          {"drift_x", format_double(s.drift_x)},
          {"drift_y", format_double(s.drift_y)},
          {"duration", format_double(s.duration)},
          {"frame_rate", format_double(s.frame_rate)},
          {"threshold", format_double(s.threshold)},
          {"refractory", format_double(s.refractory)},
          {"noise_rate", format_double(s.noise_rate)},
          {"fine_factor", std::to_string(s.fine_factor)},
          {"seed", std::to_string(s.seed)},
          {"roi_x0", format_double(s.roi.x0)},
          {"roi_y0", format_double(s.roi.y0)},
          {"roi_x1", format_double(s.roi.x1)},
          {"roi_y1", format_double(s.roi.y1)},
          {"gt_spacing", format_double(s.gt_spacing)}};
}

SpeckleTexture::SpeckleTexture(const SceneSpec& spec) : width_(spec.width), height_(spec.height) {
  tw_ = width_ * over_ + 1;
  th_ = height_ * over_ + 1;
  std::vector<double> sum(static_cast<std::size_t>(tw_) * th_, 0.0);
  const double r = spec.speckle_radius;
  const double reach = 3.0 * r;
  const double area = (width_ + 2 * reach) * (height_ + 2 * reach);
  const auto blobs = static_cast<std::size_t>(std::lround(spec.speckle_density * area));
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> ux(-reach, width_ + reach), uy(-reach, height_ + reach);
  const double inv = 1.0 / (2.0 * r * r);
  for (std::size_t b = 0; b < blobs; ++b) {
    const double cx = ux(rng), cy = uy(rng);
    const int i0 = std::max(0, static_cast<int>(std::ceil((cx - reach) * over_)));
    const int i1 = std::min(tw_ - 1, static_cast<int>(std::floor((cx + reach) * over_)));
    const int j0 = std::max(0, static_cast<int>(std::ceil((cy - reach) * over_)));
    const int j1 = std::min(th_ - 1, static_cast<int>(std::floor((cy + reach) * over_)));
    for (int j = j0; j <= j1; ++j) {
      const double dy = j / static_cast<double>(over_) - cy;
      for (int i = i0; i <= i1; ++i) {
        const double dx = i / static_cast<double>(over_) - cx;
        sum[static_cast<std::size_t>(j) * tw_ + i] += std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
  }
  texels_.resize(sum.size());
  for (std::size_t i = 0; i < sum.size(); ++i) texels_[i] = 0.1 + 0.8 * (1.0 - std::exp(-sum[i]));
}

double SpeckleTexture::sample(Point2 X) const {
  const double u = X.x * over_, v = X.y * over_;
  if (!(u >= 0.0 && v >= 0.0 && u <= tw_ - 1 && v <= th_ - 1)) return 0.5;
  const int i = std::min(static_cast<int>(u), tw_ - 2);
  const int j = std::min(static_cast<int>(v), th_ - 2);
  const double fx = u - i, fy = v - j;
  const double* row = &texels_[static_cast<std::size_t>(j) * tw_ + i];
  const double top = row[0] + fx * (row[1] - row[0]);
  const double bot = row[tw_] + fx * (row[tw_ + 1] - row[tw_]);
  return top + fy * (bot - top);
}

namespace {

double ramp(const SceneSpec& s, double t) { return std::clamp(t / s.duration, 0.0, 1.0); }
double half_width(const SceneSpec& s) { return 0.5 * s.roi.width(); }
double squeeze_radius(const SceneSpec& s) { return 0.5 * std::min(s.roi.width(), s.roi.height()); }

}  // namespace

Point2 gt_displacement(const SceneSpec& s, Point2 X, double t) {
  const double a = ramp(s, t);
  const Point2 c = s.roi.center();
  const Point2 drift{a * s.drift_x, a * s.drift_y};
  switch (s.family) {
    case DeformationFamily::Translate: {
      const double phi = s.direction_deg * std::numbers::pi / 180.0;
      return Point2{a * s.amplitude * std::cos(phi), a * s.amplitude * std::sin(phi)} + drift;
    }
    case DeformationFamily::Rotate: {
      const double th = a * s.rotation_deg * std::numbers::pi / 180.0;
      const Point2 d = X - c;
      const Point2 r{std::cos(th) * d.x - std::sin(th) * d.y, std::sin(th) * d.x + std::cos(th) * d.y};
      return r - d + drift;
    }
    case DeformationFamily::AffineStretch:
      return Point2{a * s.amplitude / half_width(s) * (X.x - c.x), 0.0} + drift;
    case DeformationFamily::SinusoidalBend:
      return Point2{0.0, a * s.amplitude * std::sin(std::numbers::pi * (X.x - s.roi.x0) / s.roi.width())} + drift;
    case DeformationFamily::RadialSqueeze: {
      const Point2 d = X - c;
      const double r = norm(d);
      const double R = squeeze_radius(s);
      if (r == 0.0) return drift;
      const double g = r < R ? (r / R) * (r / R) : 1.0;
      return (-a * s.amplitude * g / r) * d + drift;
    }
  }
  return drift;
}

Point2 gt_inverse(const SceneSpec& s, Point2 x, double t) {
  const double a = ramp(s, t);
  const Point2 c = s.roi.center();
  const Point2 y = x - Point2{a * s.drift_x, a * s.drift_y};
  switch (s.family) {
    case DeformationFamily::Translate:
      return x - gt_displacement(s, x, t);
    case DeformationFamily::Rotate: {
      const double th = -a * s.rotation_deg * std::numbers::pi / 180.0;
      const Point2 d = y - c;
      return c + Point2{std::cos(th) * d.x - std::sin(th) * d.y, std::sin(th) * d.x + std::cos(th) * d.y};
    }
    case DeformationFamily::AffineStretch:
      return {c.x + (y.x - c.x) / (1.0 + a * s.amplitude / half_width(s)), y.y};
    case DeformationFamily::SinusoidalBend:
      return {y.x, y.y - a * s.amplitude * std::sin(std::numbers::pi * (y.x - s.roi.x0) / s.roi.width())};
    case DeformationFamily::RadialSqueeze: {
      Point2 X = x;
      for (int it = 0; it < 100; ++it) {
        const Point2 next = x - gt_displacement(s, X, t);
        const bool done = norm(next - X) < 1e-13;
        X = next;
        if (done) break;
      }
      return X;
    }
  }
  return x;
}

Frame render_frame(const SceneSpec& spec, const SpeckleTexture& texture, double t) {
  Frame f{spec.width, spec.height, std::vector<double>(static_cast<std::size_t>(spec.width) * spec.height), t};
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const Point2 X = gt_inverse(spec, {static_cast<double>(x), static_cast<double>(y)}, t);
      f.pixels[static_cast<std::size_t>(y) * spec.width + x] = texture.sample(X);
    }
  }
  return f;
}

Frame render_frame(const SceneSpec& spec, double t) { return render_frame(spec, SpeckleTexture(spec), t); }

std::vector<Event> generate_events(const SceneSpec& spec, const SpeckleTexture& texture) {
  const int W = spec.width, H = spec.height;
  const std::size_t n_px = static_cast<std::size_t>(W) * H;
  const long steps = std::lround(spec.duration * spec.frame_rate) * spec.fine_factor;
  const double dt = spec.duration / static_cast<double>(steps);
  auto log_image = [&](double t) {
    const Frame f = render_frame(spec, texture, t);
    std::vector<double> l(n_px);
    for (std::size_t i = 0; i < n_px; ++i) l[i] = std::log(f.pixels[i] + 0.01);
    return l;
  };
  std::vector<double> prev = log_image(0.0);
  std::vector<double> ref = prev;
  std::vector<double> last(n_px, -1e300);
  std::vector<Event> events;
  const double c = spec.threshold;
  for (long k = 1; k <= steps; ++k) {
    const double t0 = (k - 1) * dt;
    const std::vector<double> cur = log_image(k * dt);
    for (std::size_t i = 0; i < n_px; ++i) {
      const double l0 = prev[i], l1 = cur[i];
      if (l1 == l0) continue;
      const int pol = l1 > l0 ? 1 : -1;
      while (pol * (l1 - ref[i]) >= c) {
        const double level = ref[i] + pol * c;
        const double frac = std::clamp((level - l0) / (l1 - l0), 0.0, 1.0);
        const double te = t0 + frac * dt;
        ref[i] = level;
        if (te - last[i] < spec.refractory) continue;
        last[i] = te;
        events.push_back({static_cast<double>(i % W), static_cast<double>(i / W), te, pol});
      }
    }
    prev = cur;
  }
  if (spec.noise_rate > 0.0) {
    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
    std::poisson_distribution<long> count(spec.noise_rate * static_cast<double>(n_px) * spec.duration);
    std::uniform_int_distribution<int> px(0, W - 1), py(0, H - 1), pol(0, 1);
    std::uniform_real_distribution<double> pt(0.0, spec.duration);
    const long n = count(rng);
    for (long i = 0; i < n; ++i) {
      const double x = px(rng), y = py(rng), t = pt(rng);
      events.push_back({x, y, t, pol(rng) ? 1 : -1});
    }
  }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.p < b.p;
  });
  return events;
}

std::vector<Event> generate_events(const SceneSpec& spec) { return generate_events(spec, SpeckleTexture(spec)); }

std::vector<Point2> gt_query_points(const SceneSpec& spec) { return grid_points(spec.roi, spec.gt_spacing); }

SequencePaths make_sequence(SceneSpec spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "frames", ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + (out_dir / "frames").string() + ": " + ec.message());
  SequencePaths p{out_dir / "frames.csv", out_dir / "events.csv", out_dir / "gt.csv", out_dir / "spec.cfg",
                  out_dir / "tracker.cfg"};
  const SpeckleTexture texture(spec);
  const auto query = gt_query_points(spec);
  DisplacementTable gt;
  {
    auto manifest = open_for_write(p.manifest);
    manifest << kManifestHeader << '\n';
    for (int i = 0; i < spec.num_frames(); ++i) {
      const double t = spec.frame_time(i);
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%04d.pgm", i);
      save_frame_pgm(out_dir / "frames" / name, render_frame(spec, texture, t));
      manifest << i << ',' << format_double(t) << ",frames/" << name << '\n';
      for (std::size_t q = 0; q < query.size(); ++q) {
        const Point2 u = gt_displacement(spec, query[q], t);
        gt.push_back({i, t, static_cast<int>(q), query[q].x, query[q].y, u.x, u.y});
      }
    }
  }
  write_events_csv(p.events, generate_events(spec, texture));
  write_displacements(p.ground_truth, gt);
  {
    auto os = open_for_write(p.spec);
    write_flat_config(os, scene_to_config(spec));
  }
  {
    auto os = open_for_write(p.tracker_config);
    write_flat_config(os, {{"roi_x0", format_double(spec.roi.x0)},
                           {"roi_y0", format_double(spec.roi.y0)},
                           {"roi_x1", format_double(spec.roi.x1)},
                           {"roi_y1", format_double(spec.roi.y1)}});
  }
  return p;
}

}  // namespace evdm
