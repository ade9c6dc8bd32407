#pragma once

// Run configuration, store building, training sessions and their reports.
//
// Per-iteration CSV columns, in order:
//   iter, stage_in_bytes, evict_bytes, ssd_read_bytes, ssd_write_bytes,
//   cache_hits, cache_misses, evictions, readmissions, cold_restart_updates,
//   total_updates, wait_ms, compute_ms, wall_ms, loss,
//   resident_blocks, admissions, completed_streak_iters
//
// ssd_read_bytes counts host-cache misses and ssd_write_bytes counts dirty
// payloads handed to the flush path, both in block payload bytes, so they do
// not depend on flush timing.

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tidal/blocking.hpp"
#include "tidal/host_cache.hpp"
#include "tidal/log_store.hpp"
#include "tidal/pipeline.hpp"
#include "tidal/scene.hpp"
#include "tidal/trainer.hpp"
#include "tidal/view_order.hpp"

namespace tidal {

struct RunConfig {
  std::filesystem::path scene_dir = "scene";  // scene.tdsc, views.txt, targets.tdtg
  std::filesystem::path store_dir = "store";
  std::filesystem::path report_prefix = "run";  // <prefix>.csv and <prefix>.json

  std::uint32_t block_size = 16;
  bool morton = true;

  std::size_t capacity_blocks = 64;          // arena C
  std::uint64_t cache_bytes = 64ull << 20;   // host cache
  double lambda = 0.7;
  double gamma = 0.9;
  double beta = 0.5;

  OrderMode order = OrderMode::trajectory;
  bool overlap = true;
  bool tide = true;
  std::uint32_t read_latency_us = 0;
  std::uint32_t write_latency_us = 0;

  std::uint64_t seed = 1;
  std::uint64_t iterations = 500;
  std::size_t batch = 1;  // views per iteration
  double lr = 1e-2;
  bool compute_vpi = false;  // gradient variation on the initial parameters

  void validate() const {
    if (block_size == 0) throw ConfigError("block_size must be >= 1");
    if (capacity_blocks == 0) throw ConfigError("capacity_blocks must be >= 1");
    if (batch == 0) throw ConfigError("batch must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    SchedulerConfig{capacity_blocks, lambda, gamma, beta}.validate();
  }

  nlohmann::json to_json() const {
    return {{"scene_dir", scene_dir.string()},
            {"store_dir", store_dir.string()},
            {"report_prefix", report_prefix.string()},
            {"block_size", block_size},
            {"morton", morton},
            {"capacity_blocks", capacity_blocks},
            {"cache_bytes", cache_bytes},
            {"lambda", lambda},
            {"gamma", gamma},
            {"beta", beta},
            {"order", to_string(order)},
            {"overlap", overlap},
            {"tide", tide},
            {"read_latency_us", read_latency_us},
            {"write_latency_us", write_latency_us},
            {"seed", seed},
            {"iterations", iterations},
            {"batch", batch},
            {"lr", lr}};
  }
};

inline std::filesystem::path csv_path(const RunConfig& c) { return c.report_prefix.string() + ".csv"; }
inline std::filesystem::path json_path(const RunConfig& c) { return c.report_prefix.string() + ".json"; }

// ---------------------------------------------------------------------------
// Build

struct BuildReport {
  TableConfig table;
  double build_ms = 0.0;
  double mean_block_radius = 0.0;
  std::uint64_t base_bytes = 0;
  std::vector<std::uint64_t> permutation;  // block-order position -> scene row
};

// Rows of `scene` rearranged into block order.
inline std::vector<float> permute_rows(const SceneTable& scene, const std::vector<std::uint64_t>& perm) {
  std::vector<float> out(scene.values.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    std::copy_n(scene.row(perm[i]), scene.dim, out.begin() + static_cast<std::ptrdiff_t>(i * scene.dim));
  return out;
}

inline Layout layout_for(const SceneTable& scene, const TableConfig& cfg, bool morton, std::uint64_t seed) {
  const RowLayout rows = RowLayout::toy2d();
  if (scene.dim < rows.min_dim()) throw ConfigError("scene rows are too narrow for the toy layout");
  std::vector<Vec3> centers;
  std::vector<double> extents;
  centers.reserve(scene.n());
  extents.reserve(scene.n());
  for (std::uint64_t i = 0; i < scene.n(); ++i) {
    centers.push_back(rows.center(scene.row(i)));
    extents.push_back(rows.extent(scene.row(i)));
  }
  return build_layout(centers, extents, cfg, rows.dims, morton ? BlockOrder::morton : BlockOrder::random, seed);
}

inline BuildReport build_store(const SceneTable& scene, const RunConfig& rc) {
  const auto t0 = std::chrono::steady_clock::now();
  BuildReport rep;
  rep.table = TableConfig::make(scene.n(), scene.dim, rc.block_size);
  const Layout layout = layout_for(scene, rep.table, rc.morton, rc.seed);
  std::filesystem::create_directories(rc.store_dir);
  const std::vector<BlockPayload> blocks = split_into_blocks(permute_rows(scene, layout.permutation), rep.table);
  write_base(rc.store_dir, rep.table, blocks);
  write_bounds(rc.store_dir / "bounds.tdgb", layout.bounds);

  for (const BlockBound& b : layout.bounds) rep.mean_block_radius += b.radius;
  rep.mean_block_radius /= static_cast<double>(layout.bounds.size());
  rep.base_bytes = std::filesystem::file_size(base_path(rc.store_dir));
  rep.permutation = layout.permutation;
  rep.build_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::json j{{"n_primitives", rep.table.n_primitives}, {"dim", rep.table.dim},
                   {"block_size", rep.table.block_size}, {"k_blocks", rep.table.k_blocks()},
                   {"order", rc.morton ? "morton" : "random"}, {"seed", rc.seed},
                   {"mean_block_radius", rep.mean_block_radius}, {"base_bytes", rep.base_bytes},
                   {"permutation", rep.permutation}};
  std::ofstream f(rc.store_dir / "layout.json");
  if (!f) throw StoreError((rc.store_dir / "layout.json").string() + ": cannot write");
  f << j.dump() << '\n';
  return rep;
}

// Reads every block through the store and returns the dense table in block
// order (rows beyond n are dropped).
inline std::vector<float> read_table(LogStore& store) {
  const TableConfig& cfg = store.config();
  std::vector<float> out;
  out.reserve(cfg.n_primitives * cfg.dim);
  for (BlockId k = 0; k < cfg.k_blocks(); ++k) {
    const BlockPayload p = store.read_block(k);
    out.insert(out.end(), p.values.begin(),
               p.values.begin() + static_cast<std::ptrdiff_t>(cfg.rows_in_block(k)) * cfg.dim);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct Summary {
  std::uint64_t iterations = 0;
  double mean_wall_ms = 0.0;
  double mean_compute_ms = 0.0;
  double mean_wait_ms = 0.0;
  double bytes_per_iter = 0.0;  // stage_in + evict
  double stage_in_bytes_per_iter = 0.0;
  double cache_hit_rate = 0.0;
  double eviction_rate = 0.0;
  double readmission_rate = 0.0;
  double cold_restart_ratio = 0.0;
  double mean_resident_streak = 0.0;
  double mean_resident_blocks = 0.0;
  double exposed_wait_fraction = 0.0;  // 1 - wait/wall
  double final_loss = 0.0;

  nlohmann::json to_json() const {
    return {{"iterations", iterations},
            {"mean_wall_ms", mean_wall_ms},
            {"mean_compute_ms", mean_compute_ms},
            {"mean_wait_ms", mean_wait_ms},
            {"bytes_per_iter", bytes_per_iter},
            {"stage_in_bytes_per_iter", stage_in_bytes_per_iter},
            {"cache_hit_rate", cache_hit_rate},
            {"eviction_rate", eviction_rate},
            {"readmission_rate", readmission_rate},
            {"cold_restart_ratio", cold_restart_ratio},
            {"mean_resident_streak", mean_resident_streak},
            {"mean_resident_blocks", mean_resident_blocks},
            {"exposed_wait_fraction", exposed_wait_fraction},
            {"final_loss", final_loss}};
  }

  static Summary from_json(const nlohmann::json& j) {
    Summary s;
    s.iterations = j.at("iterations").get<std::uint64_t>();
    s.mean_wall_ms = j.at("mean_wall_ms").get<double>();
    s.mean_compute_ms = j.at("mean_compute_ms").get<double>();
    s.mean_wait_ms = j.at("mean_wait_ms").get<double>();
    s.bytes_per_iter = j.at("bytes_per_iter").get<double>();
    s.stage_in_bytes_per_iter = j.at("stage_in_bytes_per_iter").get<double>();
    s.cache_hit_rate = j.at("cache_hit_rate").get<double>();
    s.eviction_rate = j.at("eviction_rate").get<double>();
    s.readmission_rate = j.at("readmission_rate").get<double>();
    s.cold_restart_ratio = j.at("cold_restart_ratio").get<double>();
    s.mean_resident_streak = j.at("mean_resident_streak").get<double>();
    s.mean_resident_blocks = j.at("mean_resident_blocks").get<double>();
    s.exposed_wait_fraction = j.at("exposed_wait_fraction").get<double>();
    s.final_loss = j.at("final_loss").get<double>();
    return s;
  }

  // Largest absolute difference over all fields.
  double max_abs_diff(const Summary& o) const {
    const nlohmann::json a = to_json(), b = o.to_json();
    double worst = 0.0;
    for (auto it = a.begin(); it != a.end(); ++it)
      worst = std::max(worst, std::abs(it.value().get<double>() - b.at(it.key()).get<double>()));
    return worst;
  }
};

inline double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

inline Summary summarize(const std::vector<IterationStats>& rows) {
  Summary s;
  s.iterations = rows.size();
  if (rows.empty()) return s;
  double wall = 0, compute = 0, wait = 0, bytes = 0, stage = 0, hits = 0, misses = 0, evict = 0, readm = 0,
         cold = 0, updates = 0, resident = 0, streak_iters = 0;
  for (const IterationStats& r : rows) {
    wall += r.wall_ms;
    compute += r.compute_ms;
    wait += r.wait_ms;
    bytes += static_cast<double>(r.stage_in_bytes + r.evict_bytes);
    stage += static_cast<double>(r.stage_in_bytes);
    hits += static_cast<double>(r.cache_hits);
    misses += static_cast<double>(r.cache_misses);
    evict += static_cast<double>(r.evictions);
    readm += static_cast<double>(r.readmissions);
    cold += static_cast<double>(r.cold_restart_updates);
    updates += static_cast<double>(r.total_updates);
    resident += static_cast<double>(r.resident_blocks);
    streak_iters += static_cast<double>(r.completed_streak_iters);
  }
  const double n = static_cast<double>(rows.size());
  s.mean_wall_ms = wall / n;
  s.mean_compute_ms = compute / n;
  s.mean_wait_ms = wait / n;
  s.bytes_per_iter = bytes / n;
  s.stage_in_bytes_per_iter = stage / n;
  s.cache_hit_rate = ratio(hits, hits + misses);
  s.eviction_rate = ratio(evict, resident);
  s.readmission_rate = ratio(readm, resident);
  s.cold_restart_ratio = ratio(cold, updates);
  s.mean_resident_streak = ratio(streak_iters, evict);
  s.mean_resident_blocks = resident / n;
  s.exposed_wait_fraction = wall > 0.0 ? 1.0 - wait / wall : 0.0;
  s.final_loss = rows.back().loss;
  return s;
}

inline constexpr const char* kCsvHeader =
    "iter,stage_in_bytes,evict_bytes,ssd_read_bytes,ssd_write_bytes,cache_hits,cache_misses,evictions,"
    "readmissions,cold_restart_updates,total_updates,wait_ms,compute_ms,wall_ms,loss,resident_blocks,admissions,"
    "completed_streak_iters";

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_csv(const std::filesystem::path& p, const std::vector<IterationStats>& rows) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error(p.string() + ": cannot write");
  f << kCsvHeader << '\n';
  for (const IterationStats& r : rows) {
    f << r.iter << ',' << r.stage_in_bytes << ',' << r.evict_bytes << ',' << r.ssd_read_bytes << ','
      << r.ssd_write_bytes << ',' << r.cache_hits << ',' << r.cache_misses << ',' << r.evictions << ','
      << r.readmissions << ',' << r.cold_restart_updates << ',' << r.total_updates << ',' << format_double(r.wait_ms)
      << ',' << format_double(r.compute_ms) << ',' << format_double(r.wall_ms) << ',' << format_double(r.loss) << ','
      << r.resident_blocks << ',' << r.admissions << ',' << r.completed_streak_iters << '\n';
  }
  if (!f) throw std::runtime_error(p.string() + ": write failed");
}

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::vector<IterationStats> read_csv(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw CsvError(p.string() + ": cannot open");
  std::string line;
  if (!std::getline(f, line) || line != kCsvHeader) throw CsvError(p.string() + ":1: unexpected header");
  std::vector<IterationStats> rows;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 18)
      throw CsvError(p.string() + ":" + std::to_string(lineno) + ": expected 18 columns, got " +
                     std::to_string(cells.size()));
    std::size_t c = 0;
    auto u = [&](std::uint64_t& out) {
      const std::string& s = cells[c++];
      const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
      if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        throw CsvError(p.string() + ":" + std::to_string(lineno) + ": bad integer '" + s + "'");
    };
    auto d = [&](double& out) {
      const std::string& s = cells[c++];
      const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
      if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        throw CsvError(p.string() + ":" + std::to_string(lineno) + ": bad number '" + s + "'");
    };
    IterationStats r;
    u(r.iter);
    u(r.stage_in_bytes);
    u(r.evict_bytes);
    u(r.ssd_read_bytes);
    u(r.ssd_write_bytes);
    u(r.cache_hits);
    u(r.cache_misses);
    u(r.evictions);
    u(r.readmissions);
    u(r.cold_restart_updates);
    u(r.total_updates);
    d(r.wait_ms);
    d(r.compute_ms);
    d(r.wall_ms);
    d(r.loss);
    u(r.resident_blocks);
    u(r.admissions);
    u(r.completed_streak_iters);
    rows.push_back(r);
  }
  return rows;
}

struct StatsCheck {
  Summary recomputed;
  double max_abs_diff = 0.0;
  bool consistent = false;
};

// Recomputes the summary from the CSV and compares it with the JSON report.
inline StatsCheck check_report(const std::filesystem::path& csv, const std::filesystem::path& json,
                               double tol = 1e-9) {
  StatsCheck out;
  out.recomputed = summarize(read_csv(csv));
  std::ifstream f(json);
  if (!f) throw std::runtime_error(json.string() + ": cannot open");
  const nlohmann::json j = nlohmann::json::parse(f);
  out.max_abs_diff = out.recomputed.max_abs_diff(Summary::from_json(j.at("summary")));
  out.consistent = out.max_abs_diff <= tol;
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct SceneData {
  std::vector<WindowCamera> views;
  std::vector<Image> targets;
};

inline SceneData load_scene_data(const std::filesystem::path& dir) {
  SceneData d;
  d.views = read_views(dir / "views.txt");
  d.targets = read_targets(dir / "targets.tdtg");
  if (d.views.size() != d.targets.size())
    throw SceneError((dir / "targets.tdtg").string() + ": " + std::to_string(d.targets.size()) +
                     " targets for " + std::to_string(d.views.size()) + " views");
  return d;
}

struct RunReport {
  std::vector<IterationStats> rows;
  Summary summary;
  ChurnCounters churn;
  double final_psnr = 0.0;
  double initial_psnr = 0.0;
  double vpi = -1.0;  // negative when not computed
  std::vector<float> final_table;  // block order
};

// Camera batch of iteration t under a view schedule.
inline std::vector<std::size_t> batch_views(ViewSchedule& schedule, std::uint64_t t, std::size_t batch) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < batch; ++j) out.push_back(schedule.view_at(t * batch + j));
  return out;
}

inline double gradient_variation_for(const TableConfig& cfg, const std::vector<float>& table, const SceneData& data,
                                     OrderMode mode, std::uint64_t seed) {
  const ViewOrder order = order_views(camera_positions(data.views), mode, seed);
  auto theta = [&](std::size_t) -> const std::vector<float>& { return table; };
  auto grad = [&](std::size_t v, const std::vector<float>& th) {
    return view_gradient(cfg, th, TrainView{data.views[v], &data.targets[v]});
  };
  return gradient_variation(order, theta, grad);
}

// Trains against an already built store. The store is checkpointed at the
// end; the final table is read back through it.
inline RunReport train(const RunConfig& rc, const SceneData& data, const std::filesystem::path& manifest = {}) {
  rc.validate();
  StoreOptions opts;
  opts.read_latency = std::chrono::microseconds(rc.read_latency_us);
  opts.write_latency = std::chrono::microseconds(rc.write_latency_us);
  LogStore store(rc.store_dir, opts);
  const TableConfig cfg = store.config();
  if (cfg.dim != kToyDim) throw ConfigError("store rows are not the 9-wide toy layout");
  std::vector<BlockBound> bounds = read_bounds(rc.store_dir / "bounds.tdgb");
  if (bounds.size() != cfg.k_blocks()) throw SceneError("bounds sidecar does not match the store");

  RunReport rep;
  const std::vector<float> initial = read_table(store);
  rep.initial_psnr = mean_psnr(cfg, initial, data.views, data.targets);
  if (rc.compute_vpi) rep.vpi = gradient_variation_for(cfg, initial, data, rc.order, rc.seed);

  HostCache cache(store, rc.cache_bytes);
  PipelineConfig pc;
  pc.scheduler = SchedulerConfig{rc.capacity_blocks, rc.lambda, rc.gamma, rc.beta};
  pc.overlap = rc.overlap;
  pc.tide = rc.tide;

  ViewSchedule schedule(camera_positions(data.views), rc.order, rc.seed);
  const AdamHyper hyper{rc.lr};
  std::vector<std::vector<std::size_t>> batches;  // by tag
  auto compute = [&](ResidentArena& arena, const VisibleBlocks& vis, std::size_t tag,
                     std::vector<BlockBound>& b) -> ComputeOutcome {
    std::vector<TrainView> views;
    for (std::size_t v : batches[tag]) views.push_back({data.views[v], &data.targets[v]});
    const ComputeResult r = toy_compute(arena, vis, views, b, hyper);
    return {r.loss, r.adam};
  };
  {
    Pipeline pipe(store, cache, std::move(bounds), pc, compute);
    auto input = [&](std::uint64_t t) {
      IterationInput in;
      in.tag = static_cast<std::size_t>(t);
      if (batches.size() <= t) batches.push_back(batch_views(schedule, t, rc.batch));
      for (std::size_t v : batches[t]) in.frusta.push_back(frustum_from_camera(data.views[v]));
      return in;
    };
    for (std::uint64_t t = 0; t < rc.iterations; ++t) {
      const IterationInput cur = input(t);
      const IterationInput next = input(t + 1);
      rep.rows.push_back(pipe.run_iteration(cur, next));
    }
    rep.churn = pipe.churn();
    const std::filesystem::path mpath = manifest.empty() ? rc.store_dir / "manifest.json" : manifest;
    pipe.checkpoint(mpath, rc.to_json());
    write_bounds(rc.store_dir / "bounds.tdgb", pipe.bounds());
  }
  rep.summary = summarize(rep.rows);
  rep.final_table = read_table(store);
  rep.final_psnr = mean_psnr(cfg, rep.final_table, data.views, data.targets);
  return rep;
}

inline void write_report(const RunConfig& rc, const RunReport& rep) {
  if (rc.report_prefix.has_parent_path()) std::filesystem::create_directories(rc.report_prefix.parent_path());
  write_csv(csv_path(rc), rep.rows);
  nlohmann::json j;
  j["config"] = rc.to_json();
  j["summary"] = rep.summary.to_json();
  j["quality"] = {{"initial_psnr", rep.initial_psnr}, {"final_psnr", rep.final_psnr}};
  if (rep.vpi >= 0.0) j["quality"]["gradient_variation"] = rep.vpi;
  std::ofstream f(json_path(rc));
  if (!f) throw std::runtime_error(json_path(rc).string() + ": cannot write");
  f << std::setprecision(17) << j.dump(2) << '\n';
}

}  // namespace tidal
