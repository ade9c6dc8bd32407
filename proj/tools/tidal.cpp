// Command-line front end: synth, build, train, compact, stats.
//
// Every option can also come from a TOML/INI file passed with --config;
// subcommand options go in a section named after the subcommand, e.g.
//
//   [train]
//   capacity = 48
//   tide = false

#include <cstdlib>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "tidal/log_store.hpp"
#include "tidal/scene.hpp"
#include "tidal/session.hpp"

namespace {

void add_store_options(CLI::App& cmd, tidal::RunConfig& rc) {
  cmd.add_option("--scene", rc.scene_dir, "Scene directory (scene.tdsc, views.txt, targets.tdtg)");
  cmd.add_option("--store", rc.store_dir, "Store directory");
  cmd.add_option("--seed", rc.seed, "Seed for random blocking and view shuffling");
}

void add_train_options(CLI::App& cmd, tidal::RunConfig& rc) {
  const std::map<std::string, tidal::OrderMode> orders{{"trajectory", tidal::OrderMode::trajectory},
                                                      {"shuffle", tidal::OrderMode::shuffle}};
  cmd.add_option("--report", rc.report_prefix, "Report prefix; writes <prefix>.csv and <prefix>.json");
  cmd.add_option("--capacity", rc.capacity_blocks, "Resident arena capacity in blocks")->check(CLI::PositiveNumber);
  cmd.add_option("--cache-bytes", rc.cache_bytes, "Host cache capacity in bytes");
  cmd.add_option("--lambda", rc.lambda, "Weight of next-batch usefulness in the residency score")
      ->check(CLI::Range(0.0, 1.0));
  cmd.add_option("--gamma", rc.gamma, "Recency decay")->check(CLI::Range(0.0, 1.0));
  cmd.add_option("--beta", rc.beta, "Share of capacity reserved for per-camera quotas")->check(CLI::Range(0.0, 1.0));
  cmd.add_option("--order", rc.order, "View order")->transform(CLI::CheckedTransformer(orders, CLI::ignore_case));
  cmd.add_option("--overlap", rc.overlap, "Overlap staging and flushing with compute");
  cmd.add_option("--tide", rc.tide, "Differential streaming (false restages every visible block)");
  cmd.add_option("--read-latency-us", rc.read_latency_us, "Injected latency per block read");
  cmd.add_option("--write-latency-us", rc.write_latency_us, "Injected latency per record append");
  cmd.add_option("--iterations", rc.iterations, "Training iterations");
  cmd.add_option("--batch", rc.batch, "Views per iteration")->check(CLI::PositiveNumber);
  cmd.add_option("--lr", rc.lr, "Adam learning rate");
  cmd.add_option("--vpi", rc.compute_vpi, "Also report the gradient variation of the view order");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Out-of-core block-streaming trainer"};
  app.set_config("--config", "", "TOML/INI configuration file");
  app.require_subcommand(1);

  tidal::RunConfig rc;
  tidal::SynthConfig sc;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic toy scene");
  std::filesystem::path synth_out = "scene";
  synth->add_option("--out", synth_out, "Output scene directory");
  synth->add_option("--primitives", sc.n_primitives, "Number of primitives")->check(CLI::PositiveNumber);
  synth->add_option("--views", sc.n_views, "Number of cameras")->check(CLI::PositiveNumber);
  synth->add_option("--world", sc.world, "World side length");
  synth->add_option("--window", sc.window, "Camera window side length");
  synth->add_option("--width", sc.image.width, "Image width")->check(CLI::PositiveNumber);
  synth->add_option("--height", sc.image.height, "Image height")->check(CLI::PositiveNumber);
  synth->add_option("--seed", sc.seed, "Seed");

  CLI::App* build = app.add_subcommand("build", "Sort, block and write the base segment");
  add_store_options(*build, rc);
  build->add_option("--block-size", rc.block_size, "Primitives per block")->check(CLI::PositiveNumber);
  build->add_option("--morton", rc.morton, "Morton blocking (false: random permutation)");

  CLI::App* train = app.add_subcommand("train", "Run the training pipeline");
  add_store_options(*train, rc);
  add_train_options(*train, rc);

  CLI::App* compact = app.add_subcommand("compact", "Fold patch segments into the base segment");
  compact->add_option("--store", rc.store_dir, "Store directory");

  CLI::App* stats = app.add_subcommand("stats", "Recompute a report summary from its CSV");
  stats->add_option("--report", rc.report_prefix, "Report prefix");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const tidal::SynthScene s = tidal::synthesize(sc);
      std::filesystem::create_directories(synth_out);
      tidal::write_scene(synth_out / "scene.tdsc", s.init);
      tidal::write_scene(synth_out / "truth.tdsc", s.truth);
      tidal::write_views(synth_out / "views.txt", s.views);
      tidal::write_targets(synth_out / "targets.tdtg", s.targets);
      std::cout << "wrote " << sc.n_primitives << " primitives and " << sc.n_views << " views to " << synth_out
                << '\n';
    } else if (*build) {
      rc.validate();
      const tidal::SceneTable scene = tidal::read_scene(rc.scene_dir / "scene.tdsc");
      const tidal::BuildReport r = tidal::build_store(scene, rc);
      std::cout << "blocks " << r.table.k_blocks() << " (N=" << r.table.n_primitives << " D=" << r.table.dim
                << " B=" << r.table.block_size << ")\n"
                << "base bytes " << r.base_bytes << "\n"
                << "mean block radius " << r.mean_block_radius << "\n"
                << "build ms " << r.build_ms << '\n';
    } else if (*train) {
      const tidal::SceneData data = tidal::load_scene_data(rc.scene_dir);
      const tidal::RunReport rep = tidal::train(rc, data);
      tidal::write_report(rc, rep);
      const tidal::Summary& s = rep.summary;
      std::cout << "iterations " << s.iterations << "\n"
                << "final loss " << s.final_loss << "\n"
                << "psnr " << rep.initial_psnr << " -> " << rep.final_psnr << " dB\n"
                << "bytes/iter " << s.bytes_per_iter << "\n"
                << "cache hit rate " << s.cache_hit_rate << "\n"
                << "mean iter ms " << s.mean_wall_ms << "\n"
                << "report " << tidal::csv_path(rc) << ", " << tidal::json_path(rc) << '\n';
    } else if (*compact) {
      tidal::LogStore store(rc.store_dir);
      const std::int64_t reclaimed = store.compact();
      std::cout << reclaimed << " bytes reclaimed\n";
    } else if (*stats) {
      const tidal::StatsCheck c = tidal::check_report(tidal::csv_path(rc), tidal::json_path(rc));
      std::cout << std::setw(2) << c.recomputed.to_json().dump(2) << '\n'
                << "max |json - csv| = " << c.max_abs_diff << '\n';
      if (!c.consistent) {
        std::cerr << "error: JSON summary disagrees with the CSV\n";
        return 2;
      }
    }
  } catch (const tidal::WorkingSetExceedsCapacity& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
