#include "evdm/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <map>
#include <ostream>

#include "evdm/error.hpp"
#include "evdm/evaluation.hpp"
#include "evdm/optimizer.hpp"
#include "evdm/simulator.hpp"
#include "evdm/strain.hpp"

namespace evdm {

namespace fs = std::filesystem;

namespace {

struct TrackOutputs {
  TrackerConfig cfg;
  SimplicialMesh mesh;
  std::map<int, TrajectoryField> windows;  // only windows on the final mesh
  int skipped = 0;
};

SimplicialMesh read_mesh(const fs::path& dir) {
  SimplicialMesh mesh;
  for (const auto& r : read_csv(dir / "mesh_anchors.csv", "anchor,x,y,level")) {
    mesh.anchors.push_back({parse_double(r[1], "anchor x"), parse_double(r[2], "anchor y")});
    mesh.anchor_level.push_back(static_cast<int>(parse_int(r[3], "anchor level")));
    mesh.anchor_parents.push_back({-1, -1});
    mesh.level = std::max(mesh.level, mesh.anchor_level.back());
  }
  for (const auto& r : read_csv(dir / "mesh_triangles.csv", "triangle,a,b,c")) {
    Triangle t;
    for (int k = 0; k < 3; ++k) {
      const long v = parse_int(r[k + 1], "triangle vertex");
      if (v < 0 || static_cast<std::size_t>(v) >= mesh.anchors.size()) {
        throw Error(ErrorKind::Io, (dir / "mesh_triangles.csv").string() + ": vertex index out of range");
      }
      t.v[k] = static_cast<int>(v);
    }
    mesh.triangles.push_back(t);
    mesh.parent_map.push_back(-1);
  }
  return mesh;
}

TrackOutputs read_track_outputs(const fs::path& dir) {
  TrackOutputs o;
  o.cfg = tracker_config_from(read_flat_config(dir / "run.cfg"));
  o.mesh = read_mesh(dir);
  struct Rows {
    std::map<int, double> knot_t;
    std::map<std::pair<int, int>, Point2> pos;
    int anchors = 0;
  };
  std::map<int, Rows> rows;
  for (const auto& r : read_csv(dir / "trajectories.csv", kTrajectoryHeader)) {
    const int w = static_cast<int>(parse_int(r[0], "window"));
    const int a = static_cast<int>(parse_int(r[1], "anchor"));
    const int k = static_cast<int>(parse_int(r[2], "knot"));
    auto& rw = rows[w];
    rw.knot_t[k] = parse_double(r[3], "t");
    rw.pos[{a, k}] = {parse_double(r[4], "x"), parse_double(r[5], "y")};
    rw.anchors = std::max(rw.anchors, a + 1);
  }
  for (auto& [w, rw] : rows) {
    if (static_cast<std::size_t>(rw.anchors) != o.mesh.num_anchors()) {
      ++o.skipped;
      continue;
    }
    std::vector<double> knots;
    for (const auto& [k, t] : rw.knot_t) knots.push_back(t);
    std::vector<Point2> pos(o.mesh.num_anchors() * knots.size());
    for (const auto& [ak, p] : rw.pos) pos[ak.first * knots.size() + ak.second] = p;
    o.windows.emplace(w, TrajectoryField(o.mesh, TimeGrid(knots), std::move(pos)));
  }
  return o;
}

std::string numbered(const char* stem, int w) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.pgm", stem, w);
  return buf;
}

// Convergence map: each triangle filled with its P_j at the window end.
std::vector<double> rasterize_p(const TrajectoryField& tf, const std::vector<double>& P, int width, int height) {
  std::vector<double> img(static_cast<std::size_t>(width) * height, 0.0);
  const double t = tf.grid().back();
  const auto pos = tf.anchor_positions_at(t);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto a = locate(tf.mesh(), pos, {static_cast<double>(x), static_cast<double>(y)});
      if (a && static_cast<std::size_t>(a->triangle) < P.size()) {
        img[static_cast<std::size_t>(y) * width + x] = P[a->triangle];
      }
    }
  }
  return img;
}

void render_iwe(const fs::path& in_dir, const fs::path& out_dir, std::ostream& out) {
  const auto inputs = read_flat_config(in_dir / "inputs.cfg");
  const auto ev_it = inputs.find("events");
  const auto fr_it = inputs.find("frames");
  if (ev_it == inputs.end() || fr_it == inputs.end()) {
    throw Error(ErrorKind::Io, (in_dir / "inputs.cfg").string() + ": needs 'events' and 'frames'");
  }
  const auto seq = load_sequence(ev_it->second, fr_it->second);
  const auto track = read_track_outputs(in_dir);
  const SensorSize sensor{seq.frames.front().width, seq.frames.front().height};
  std::map<int, std::vector<double>> pmap;
  for (const auto& r : read_csv(in_dir / "convergence.csv", "window,triangle,P,converged,no_texture")) {
    auto& v = pmap[static_cast<int>(parse_int(r[0], "window"))];
    const auto j = static_cast<std::size_t>(parse_int(r[1], "triangle"));
    if (v.size() <= j) v.resize(j + 1, 0.0);
    v[j] = parse_double(r[2], "P");
  }
  int written = 0;
  for (const auto& [w, tf] : track.windows) {
    const double t0 = tf.grid().front(), t1 = tf.grid().back();
    auto ev = events_between(seq.events, t0, t1);
    if (t1 < seq.frames.back().t) {
      while (!ev.empty() && ev.back().t >= t1) ev.pop_back();
    }
    if (ev.size() < static_cast<std::size_t>(track.cfg.M)) continue;
    const auto window = partition_bins(std::move(ev), t0, t1, track.cfg.M);
    TrajectoryField identity(tf.mesh(), tf.grid());
    for (std::size_t a = 0; a < tf.num_anchors(); ++a) {
      for (std::size_t k = 0; k < tf.num_knots(); ++k) identity.at(a, k) = tf.at(a, 0);
    }
    const BinRange all{0, window.num_bins()};
    for (const auto& [stem, field] : {std::pair{"iwe", &tf}, std::pair{"iwe_identity", static_cast<const TrajectoryField*>(&identity)}}) {
      try {
        const Iwe iwe = build_iwe(window, *field, sensor, t1, all);
        write_pgm(out_dir / numbered(stem, w), to_gray8(iwe.density, sensor.width, sensor.height));
        ++written;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NoAssociatedEvents) throw;
      }
    }
    if (const auto it = pmap.find(w); it != pmap.end()) {
      auto img = rasterize_p(tf, it->second, sensor.width, sensor.height);
      Gray8 g{sensor.width, sensor.height, std::vector<std::uint8_t>(img.size())};
      for (std::size_t i = 0; i < img.size(); ++i) {
        g.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(img[i], 0.0, 1.0)));
      }
      write_pgm(out_dir / numbered("pmap", w), g);
      ++written;
    }
  }
  out << "wrote " << written << " images to " << out_dir.string() << '\n';
}

void render_strain(const fs::path& in_dir, const fs::path& out_dir, std::ostream& out) {
  const auto track = read_track_outputs(in_dir);
  const auto inputs = read_flat_config(in_dir / "inputs.cfg");
  const auto fr_it = inputs.find("frames");
  if (fr_it == inputs.end()) throw Error(ErrorKind::Io, (in_dir / "inputs.cfg").string() + ": needs 'frames'");
  const auto manifest = read_manifest(fr_it->second);
  const auto first = read_pgm(manifest.front().path);
  int written = 0;
  for (const auto& [w, tf] : track.windows) {
    const auto field = anchor_strain(tf, tf.grid().back());
    const auto img = rasterize_strain(tf, field, first.width, first.height);
    write_pgm(out_dir / numbered("strain", w), to_gray8(img, first.width, first.height));
    ++written;
  }
  out << "wrote " << written << " images to " << out_dir.string() << '\n';
}

fs::path csv_sibling(const fs::path& report) {
  fs::path p = report;
  p += ".csv";
  return p;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dense deformation tracking from events and frames"};
  app.require_subcommand(1);

  std::string spec_path, sim_out;
  auto* simulate = app.add_subcommand("simulate", "Render a synthetic speckle sequence with ground truth");
  simulate->add_option("--spec", spec_path, "Scene config (key = value)")->required();
  simulate->add_option("--out", sim_out, "Output directory")->required();

  std::string events_path, frames_path, config_path, track_out, query_path;
  auto* track = app.add_subcommand("track", "Track a sequence");
  track->add_option("--events", events_path, "Events CSV (t,x,y,p)")->required();
  track->add_option("--frames", frames_path, "Frame manifest CSV")->required();
  track->add_option("--config", config_path, "Tracker config (key = value)")->required();
  track->add_option("--out", track_out, "Output directory")->required();
  track->add_option("--query", query_path, "Displacement CSV whose first frame gives the query points");

  std::string pred_path, gt_path, report_path;
  auto* eval = app.add_subcommand("eval", "Score predicted displacements against ground truth");
  eval->add_option("--pred", pred_path, "Predicted displacement CSV")->required();
  eval->add_option("--gt", gt_path, "Ground-truth displacement CSV")->required();
  eval->add_option("--report", report_path, "Text report path; per-frame CSV goes to <report>.csv")->required();

  bool iwe = false, strain = false;
  std::string render_in, render_out;
  auto* render = app.add_subcommand("render", "Write PGM visualizations of a tracking run");
  auto* iwe_flag = render->add_flag("--iwe", iwe, "Images of warped events and convergence maps");
  auto* strain_flag = render->add_flag("--strain", strain, "Von Mises strain heat maps");
  iwe_flag->excludes(strain_flag);
  render->add_option("--in", render_in, "Tracking output directory")->required();
  render->add_option("--out", render_out, "Image output directory")->required();

  try {
    app.parse(argc, argv);
    if (render->parsed() && !iwe && !strain) throw CLI::RequiredError("--iwe or --strain");
  } catch (const CLI::Success&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) {
      const auto spec = scene_from_config(read_flat_config(spec_path));
      make_sequence(spec, sim_out);
      out << "wrote " << spec.num_frames() << " frames, events and ground truth to " << sim_out << '\n';
    } else if (track->parsed()) {
      SequenceInput input = load_sequence(events_path, frames_path);
      const auto cfg = tracker_config_from(read_flat_config(config_path));
      if (!query_path.empty()) {
        const auto table = read_displacements(query_path);
        std::vector<Point2> q;
        for (const auto& r : table) {
          if (r.frame != table.front().frame) break;
          q.push_back({r.x0, r.y0});
        }
        input.query = std::move(q);
      }
      const auto result = track_sequence(input, cfg);
      write_sequence_outputs(track_out, input, result, cfg);
      {
        auto os = open_for_write(fs::path(track_out) / "inputs.cfg");
        write_flat_config(os, {{"events", fs::absolute(events_path).string()},
                               {"frames", fs::absolute(frames_path).string()}});
      }
      int failed = 0;
      for (const auto& w : result.windows) {
        if (!w.failure.empty()) {
          ++failed;
          err << "window at t=" << format_double(w.field.grid().front()) << ": " << w.failure << '\n';
        }
      }
      out << "tracked " << result.windows.size() << " windows (" << failed << " flagged) into " << track_out
          << '\n';
    } else if (eval->parsed()) {
      const auto report = evaluate(read_displacements(pred_path), read_displacements(gt_path));
      {
        auto os = open_for_write(report_path);
        write_report_text(os, report);
      }
      {
        auto os = open_for_write(csv_sibling(report_path));
        write_report_csv(os, report);
      }
      write_report_text(out, report);
    } else if (render->parsed()) {
      std::error_code ec;
      fs::create_directories(render_out, ec);
      if (ec) throw Error(ErrorKind::Io, "cannot create " + render_out + ": " + ec.message());
      if (iwe) {
        render_iwe(render_in, render_out, out);
      } else {
        render_strain(render_in, render_out, out);
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace evdm
