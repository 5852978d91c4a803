// gimbal: batch command-line front end. Every subcommand reads files, calls
// one library operation, and writes files or a JSON report to stdout.
// Exit codes: 0 ok, 1 I/O, 2 bad flags or config, 3 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "gimbal/flow.hpp"
#include "gimbal/io/png.hpp"
#include "gimbal/leveling.hpp"
#include "gimbal/metrics.hpp"
#include "gimbal/sampler.hpp"
#include "gimbal/topo/denoiser.hpp"
#include "gimbal/topo/objectives.hpp"
#include "gimbal/topo/toy_corpus.hpp"

using namespace gimbal;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// JSON config files: top-level keys set main-app flags, nested objects keyed
// by subcommand name set that subcommand's flags. Command-line flags win.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

  static void collect(const json& obj, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (it->is_object()) {
        auto p = parents;
        p.push_back(it.key());
        collect(*it, p, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it->is_array()) {
        for (const json& v : *it) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(*it));
      }
      out.push_back(std::move(item));
    }
  }
};

struct PoseFlags {
  double yaw_deg = 0, pitch_deg = 0, roll_deg = 0;
  CameraPose pose() const { return {deg_to_rad(yaw_deg), deg_to_rad(pitch_deg), deg_to_rad(roll_deg)}; }
};

void add_pose(CLI::App* sub, PoseFlags& p) {
  sub->add_option("--yaw-deg,--yaw", p.yaw_deg, "Camera yaw in degrees");
  sub->add_option("--pitch-deg,--pitch", p.pitch_deg, "Camera pitch in degrees (positive looks up)");
  sub->add_option("--roll-deg,--roll", p.roll_deg, "Camera roll in degrees");
}

struct IntrFlags {
  double vfov_deg = 60.0;
  double aspect = 0.0;  // 0: width / height
  int width = 0;
  int height = 0;

  CameraIntrinsics make(int default_w = 0, int default_h = 0) const {
    const int h = height > 0 ? height : default_h;
    if (h < 1) throw ConfigError("crop height is required");
    double a = aspect;
    int w = width > 0 ? width : default_w;
    if (a <= 0.0) {
      if (w < 1) throw ConfigError("either --aspect or --width is required");
      a = double(w) / h;
    }
    if (w < 1) w = std::max(1, int(std::lround(h * a)));
    return intrinsics_from_fov(deg_to_rad(vfov_deg), a, w, h);
  }
};

void add_intr(CLI::App* sub, IntrFlags& f, bool with_size) {
  sub->add_option("--vfov-deg,--vfov", f.vfov_deg, "Vertical field of view in degrees")->capture_default_str();
  sub->add_option("--aspect", f.aspect, "Width / height; defaults to the pixel aspect");
  if (with_size) {
    sub->add_option("--width", f.width, "Crop width in pixels");
    sub->add_option("--height", f.height, "Crop height in pixels");
  }
}

void add_bit_depth(CLI::App* sub, int& depth) {
  sub->add_option("--bit-depth", depth, "PNG bit depth")->check(CLI::IsMember({8, 16}))->capture_default_str();
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

void write_text(const fs::path& path, const std::string& s) { detail::write_file_bytes(path.string(), s); }

// Toy latents live in [-1, 1]; PNG previews map them to [0, 1].
ErpImage latent_preview(const LatentTensor& z) {
  ErpImage img = z.as<ErpTag>();
  for (double& v : img.data()) v = 0.5 * (v + 1.0);
  return img;
}

CandidateGrid grid_from(double half_deg, int count) {
  CandidateGrid g;
  g.pitch = {deg_to_rad(-half_deg), deg_to_rad(half_deg), count};
  g.roll = g.pitch;
  return g;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Panorama leveling, projection and equivariant toy diffusion tools"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with flag defaults (command-line flags override it)");

  // project
  std::string in_path, out_path, out_mask, flow_path;
  PoseFlags pose;
  IntrFlags intr;
  int erp_width = 1024, bit_depth = 8, supersample = 1;
  auto* project = app.add_subcommand("project", "Place a perspective image on an ERP canvas");
  project->add_option("--in", in_path, "Perspective PNG")->required();
  add_intr(project, intr, false);
  add_pose(project, pose);
  project->add_option("--erp-width", erp_width, "ERP width (height is half)")->capture_default_str();
  project->add_option("--out-erp", out_path, "ERP PNG")->required();
  project->add_option("--out-mask", out_mask, "Mask PNG")->required();
  add_bit_depth(project, bit_depth);

  // render
  auto* render = app.add_subcommand("render", "Render a perspective crop from an ERP");
  render->add_option("--in", in_path, "ERP PNG")->required();
  add_intr(render, intr, true);
  add_pose(render, pose);
  render->add_option("--supersample", supersample, "Samples per pixel side")->capture_default_str();
  render->add_option("--out", out_path, "Perspective PNG")->required();
  add_bit_depth(render, bit_depth);

  // canonicalize
  auto* canon = app.add_subcommand("canonicalize", "Level an ERP captured by a rig with known pitch and roll");
  canon->add_option("--in", in_path, "ERP PNG")->required();
  add_pose(canon, pose);
  canon->add_option("--out", out_path, "ERP PNG")->required();
  add_bit_depth(canon, bit_depth);

  // roll
  long long columns = 0;
  auto* roll = app.add_subcommand("roll", "Circularly shift ERP columns: out[x] = in[x - columns]");
  roll->add_option("--in", in_path, "ERP PNG")->required();
  roll->add_option("--columns", columns, "Column shift")->required();
  roll->add_option("--out", out_path, "ERP PNG")->required();
  add_bit_depth(roll, bit_depth);

  // gt-flow
  auto* gtflow = app.add_subcommand("gt-flow", "Ground-truth leveling flow for a camera");
  add_intr(gtflow, intr, true);
  add_pose(gtflow, pose);
  gtflow->add_option("--out", out_path, "GFLW file")->required();

  // level
  double grid_half_deg = 45.0, temperature = 0.5, shrink = 0.2;
  int grid_count = 9, stages = 3;
  std::optional<double> gt_pitch_deg, gt_roll_deg;
  auto add_solver = [&](CLI::App* sub) {
    sub->add_option("--grid-half-deg", grid_half_deg, "Half-width of the first pitch/roll grid")->capture_default_str();
    sub->add_option("--grid-count", grid_count, "Nodes per axis")->capture_default_str();
    sub->add_option("--temperature", temperature, "Soft-argmin temperature (px^2)")->capture_default_str();
    sub->add_option("--stages", stages, "Refinement stages")->capture_default_str();
    sub->add_option("--shrink", shrink, "Grid shrink per stage")->capture_default_str();
  };
  auto* level = app.add_subcommand("level", "Estimate pitch and roll from a leveling flow");
  level->add_option("--flow", flow_path, "GFLW file")->required();
  add_intr(level, intr, false);
  add_solver(level);
  level->add_option("--gt-pitch-deg", gt_pitch_deg, "Reference pitch for the error report");
  level->add_option("--gt-roll-deg", gt_roll_deg, "Reference roll for the error report");
  level->add_option("--out", out_path, "JSON report (default stdout)");

  // warp-canonical
  auto* warp = app.add_subcommand("warp-canonical", "Rotate an ERP into the canonical frame");
  warp->add_option("--in", in_path, "ERP PNG (image or mask)")->required();
  warp->add_option("--flow", flow_path, "Estimate the pose from this GFLW instead of --pitch/--roll");
  add_intr(warp, intr, false);
  add_solver(warp);
  add_pose(warp, pose);
  warp->add_option("--out", out_path, "ERP PNG")->required();
  add_bit_depth(warp, bit_depth);

  // sample-dataset
  std::vector<std::string> sources;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  int per_source = 3, crop_height = 64, jobs = 1;
  auto* dataset = app.add_subcommand("sample-dataset", "Generate perspective training records from panoramas");
  dataset->add_option("--in", sources, "Canonical ERP PNGs")->required();
  dataset->add_option("--out-dir", out_dir, "Output directory")->required();
  dataset->add_option("--seed", seed, "Master seed")->required();
  dataset->add_option("--per-source", per_source, "Records per panorama")->capture_default_str();
  dataset->add_option("--crop-height", crop_height, "Crop height in pixels")->capture_default_str();
  dataset->add_option("--supersample", supersample, "Samples per pixel side")->capture_default_str();
  dataset->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  add_bit_depth(dataset, bit_depth);

  // train-toy
  topo::TrainConfig tcfg;
  topo::ToyCorpusConfig ccfg;
  topo::DenoiserSpec dspec;
  std::string padding = "circular", log_path;
  std::optional<std::uint64_t> corpus_seed;
  auto add_net = [&](CLI::App* sub) {
    sub->add_option("--padding", padding, "Horizontal padding")->check(CLI::IsMember({"circular", "zero"}))
        ->capture_default_str();
    sub->add_flag("--position-channel", dspec.position_channel, "Add a learned absolute-position ramp to the output layer");
    sub->add_option("--hidden", dspec.hidden, "Hidden channels")->capture_default_str();
    sub->add_option("--depth", dspec.depth, "Convolution layers")->capture_default_str();
  };
  auto add_corpus = [&](CLI::App* sub) {
    sub->add_option("--corpus-count", ccfg.count, "Toy panoramas")->capture_default_str();
    sub->add_option("--latent-height", ccfg.height, "Latent height (width is twice)")->capture_default_str();
    sub->add_option("--corpus-seed", corpus_seed, "Corpus seed (defaults to --seed)");
  };
  auto* train = app.add_subcommand("train-toy", "Train the toy denoiser with plain SGD");
  train->add_option("--seed", seed, "Seed for init, batches and noise")->required();
  add_net(train);
  add_corpus(train);
  train->add_option("--steps", tcfg.steps, "SGD steps")->capture_default_str();
  train->add_option("--lambda-shift", tcfg.lambda_shift, "Shift loss weight")->capture_default_str();
  train->add_option("--lambda-flow", tcfg.lambda_flow, "Flow loss weight")->capture_default_str();
  train->add_option("--lr", tcfg.learning_rate, "Learning rate")->capture_default_str();
  train->add_option("--batch", tcfg.batch_size, "Batch size")->capture_default_str();
  train->add_option("--out", out_path, "GTOY checkpoint")->required();
  train->add_option("--log", log_path, "Loss log (TSV)");

  // sample-toy
  std::string net_path, rolling = "none";
  int count = 4;
  auto* sample = app.add_subcommand("sample-toy", "Sample latents from a toy checkpoint");
  sample->add_option("--net", net_path, "GTOY checkpoint")->required();
  sample->add_option("--seed", seed, "Sampling seed")->required();
  add_corpus(sample);
  sample->add_option("--count", count, "Samples (conditioning from the first corpus records)")->capture_default_str();
  sample->add_option("--rolling", rolling, "Per-step rolling")->check(CLI::IsMember({"none", "random"}))
      ->capture_default_str();
  sample->add_option("--out-dir", out_dir, "Directory for 16-bit PNG previews");

  // check-equivariance
  int probes = 4, latent_width = 64;
  auto* equi = app.add_subcommand("check-equivariance", "Maximum roll-equivariance violation over all shifts");
  equi->add_option("--net", net_path, "GTOY checkpoint (default: a freshly initialized net)");
  equi->add_option("--seed", seed, "Seed for init and probes")->required();
  add_net(equi);
  equi->add_option("--probes", probes, "Random probe inputs")->capture_default_str();
  equi->add_option("--latent-width", latent_width, "Probe width (height is half)")->capture_default_str();

  // metrics
  std::string seam_path, flow_pred, flow_gt, psnr_a, psnr_b;
  std::optional<double> est_pitch, est_roll;
  auto* metrics = app.add_subcommand("metrics", "Seam, PSNR, flow EPE and rotation error reports");
  metrics->add_option("--seam", seam_path, "PNG to score across the wrap boundary");
  metrics->add_option("--flow-pred", flow_pred, "Predicted GFLW");
  metrics->add_option("--flow-gt", flow_gt, "Reference GFLW");
  metrics->add_option("--psnr-a", psnr_a, "First PNG");
  metrics->add_option("--psnr-b", psnr_b, "Second PNG");
  metrics->add_option("--est-pitch-deg", est_pitch, "Estimated pitch");
  metrics->add_option("--est-roll-deg", est_roll, "Estimated roll");
  metrics->add_option("--gt-pitch-deg", gt_pitch_deg, "Reference pitch");
  metrics->add_option("--gt-roll-deg", gt_roll_deg, "Reference roll");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::config);
  }

  try {
    SoftArgminConfig scfg{temperature, stages, shrink};
    auto solve = [&](const DenseFlowField& flow) {
      const CameraIntrinsics in = intr.make(flow.width(), flow.height());
      return soft_argmin_solve(flow, in, grid_from(grid_half_deg, grid_count), scfg);
    };

    if (*project) {
      const PerspectiveImage img = io::read_png<PerspectiveTag>(in_path);
      const CameraIntrinsics in = intr.make(img.width(), img.height());
      const ErpProjection proj = project_perspective_to_erp(img, in, pose.pose(), erp_width, erp_width / 2);
      io::write_png(out_path, proj.image, bit_depth);
      io::write_png(out_mask, proj.mask, bit_depth);
    } else if (*render) {
      const ErpImage erp = io::read_png<ErpTag>(in_path);
      io::write_png(out_path, render_perspective_from_erp(erp, intr.make(), pose.pose(), supersample), bit_depth);
    } else if (*canon) {
      io::write_png(out_path, canonicalize_panorama(io::read_png<ErpTag>(in_path), pose.pose()), bit_depth);
    } else if (*roll) {
      io::write_png(out_path, roll_erp(io::read_png<ErpTag>(in_path), columns), bit_depth);
    } else if (*gtflow) {
      write_gflw(out_path, gt_leveling_flow(intr.make(), pose.pose()));
    } else if (*level) {
      const DenseFlowField flow = read_gflw(flow_path);
      const RigidEstimate est = solve(flow);
      json j{{"pitch_deg", rad_to_deg(est.pose.pitch)},
             {"roll_deg", rad_to_deg(est.pose.roll)},
             {"yaw_deg", rad_to_deg(est.pose.yaw)},
             {"final_error_px2", est.final_error}};
      if (gt_pitch_deg || gt_roll_deg) {
        const CameraPose gt{0.0, deg_to_rad(gt_pitch_deg.value_or(0.0)), deg_to_rad(gt_roll_deg.value_or(0.0))};
        j["rotation_error_deg"] = rotation_error_deg(est.pose, gt);
      }
      if (out_path.empty()) {
        print_json(j);
      } else {
        write_text(out_path, j.dump(2) + "\n");
      }
    } else if (*warp) {
      const ErpImage erp = io::read_png<ErpTag>(in_path);
      RigidEstimate est;
      if (!flow_path.empty()) {
        est = solve(read_gflw(flow_path));
      } else {
        est.pose = pose.pose();
      }
      io::write_png(out_path, warp_to_canonical(erp, est), bit_depth);
    } else if (*dataset) {
      PoseSamplerConfig pcfg;
      pcfg.crop_height = crop_height;
      pcfg.supersample = supersample;
      pcfg.validate();
      std::vector<ErpImage> panos;
      for (const std::string& s : sources) {
        panos.push_back(io::read_png<ErpTag>(s));
        require_erp_shape(panos.back().height(), panos.back().width());
      }
      fs::create_directories(out_dir);
      const std::size_t total = sources.size() * std::size_t(per_source);
      std::vector<json> lines(total);
      std::atomic<std::size_t> next{0};
      std::mutex err_mu;
      std::exception_ptr failure;
      auto worker = [&] {
        for (std::size_t i; (i = next++) < total;) {
          try {
            const std::size_t src = i / per_source;
            const std::uint64_t rs = record_seed(*seed, i);
            SamplerRng rng(rs);
            const SampleRecord rec = make_training_sample(panos[src], rng, pcfg);
            char stem[32];
            std::snprintf(stem, sizeof stem, "%06zu", i);
            const std::string base = std::string(stem);
            io::write_png((fs::path(out_dir) / (base + "_crop.png")).string(), rec.crop, bit_depth);
            io::write_png((fs::path(out_dir) / (base + "_mask.png")).string(), rec.mask, bit_depth);
            io::write_png((fs::path(out_dir) / (base + "_erp.png")).string(), rec.erp, bit_depth);
            write_gflw((fs::path(out_dir) / (base + "_flow.gflw")).string(), rec.flow);
            lines[i] = json{{"source_id", fs::path(sources[src]).stem().string()},
                            {"seed", rs},
                            {"yaw_deg", rad_to_deg(rec.pose.yaw)},
                            {"pitch_deg", rad_to_deg(rec.pose.pitch)},
                            {"roll_deg", rad_to_deg(rec.pose.roll)},
                            {"vfov_deg", rad_to_deg(rec.intr.vfov)},
                            {"aspect", rec.intr.aspect},
                            {"crop_path", base + "_crop.png"},
                            {"mask_path", base + "_mask.png"},
                            {"flow_path", base + "_flow.gflw"},
                            {"erp_path", base + "_erp.png"}};
          } catch (...) {
            std::lock_guard<std::mutex> lock(err_mu);
            if (!failure) failure = std::current_exception();
            next = total;
          }
        }
      };
      std::vector<std::thread> pool;
      for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
      worker();
      for (auto& t : pool) t.join();
      if (failure) std::rethrow_exception(failure);
      std::string manifest;
      for (const json& l : lines) manifest += l.dump() + "\n";
      write_text(fs::path(out_dir) / "manifest.jsonl", manifest);
    } else if (*train) {
      dspec.padding = topo::parse_padding(padding);
      dspec.seed = *seed;
      tcfg.seed = *seed;
      ccfg.width = 2 * ccfg.height;
      ccfg.seed = corpus_seed.value_or(*seed);
      const auto corpus = topo::make_toy_corpus(ccfg);
      std::ofstream log;
      if (!log_path.empty()) {
        log.open(log_path, std::ios::binary);
        if (!log) throw IoError("cannot write " + log_path);
      }
      const topo::TrainResult r =
          topo::train_toy(corpus, tcfg, topo::make_toy_denoiser(dspec), topo::ddpm_schedule(), log_path.empty() ? nullptr : &log);
      topo::save_checkpoint(out_path, r.net);
      print_json({{"steps", tcfg.steps},
                  {"final_ldm", r.log.empty() ? 0.0 : r.log.back().ldm},
                  {"final_shift", r.log.empty() ? 0.0 : r.log.back().shift}});
    } else if (*sample) {
      const topo::ToyDenoiser net = topo::load_checkpoint(net_path);
      ccfg.width = 2 * ccfg.height;
      ccfg.seed = corpus_seed.value_or(*seed);
      ccfg.count = std::max(ccfg.count, count);
      const auto corpus = topo::make_toy_corpus(ccfg);
      const auto sched = topo::ddpm_schedule();
      if (!out_dir.empty()) fs::create_directories(out_dir);
      json samples = json::array();
      double mean = 0.0;
      for (int i = 0; i < count; ++i) {
        topo::Rng rng(record_seed(*seed, i));
        const topo::RollingOptions opts{rolling == "random" ? topo::RollMode::random : topo::RollMode::none, {}};
        const LatentTensor z = topo::sample_with_rolling(net, sched, corpus[i].mask, corpus[i].cond, rng, opts);
        const SeamReport s = seam_score(z);
        mean += s.seam_ratio / count;
        json entry = to_json(s);
        entry["index"] = i;
        if (!out_dir.empty()) {
          char name[32];
          std::snprintf(name, sizeof name, "sample_%03d.png", i);
          io::write_png((fs::path(out_dir) / name).string(), latent_preview(z), 16);
          entry["path"] = name;
        }
        samples.push_back(entry);
      }
      print_json({{"samples", samples}, {"mean_seam_ratio", mean}});
    } else if (*equi) {
      if (latent_width < 2 || latent_width % 2) throw ConfigError("--latent-width must be even and >= 2");
      dspec.padding = topo::parse_padding(padding);
      dspec.seed = *seed;
      const topo::ToyDenoiser net = net_path.empty() ? topo::make_toy_denoiser(dspec) : topo::load_checkpoint(net_path);
      topo::Rng rng(record_seed(*seed, 0));
      std::uniform_int_distribution<int> tdist(1, 100);
      std::vector<EquivarianceProbe> ps;
      for (int i = 0; i < probes; ++i) {
        const int t = tdist(rng);
        ps.push_back({topo::gaussian_latent(net.input_channels(), latent_width / 2, latent_width, rng), t});
      }
      print_json({{"residual", equivariance_residual(net, ps, all_nonzero_shifts(latent_width))},
                  {"probes", probes},
                  {"shifts", latent_width - 1}});
    } else if (*metrics) {
      json j = json::object();
      if (!seam_path.empty()) j["seam"] = to_json(seam_score(io::read_png<ErpTag>(seam_path)));
      if (!flow_pred.empty() || !flow_gt.empty()) {
        if (flow_pred.empty() || flow_gt.empty()) throw ConfigError("--flow-pred and --flow-gt go together");
        j["flow_epe_px"] = flow_epe(read_gflw(flow_pred), read_gflw(flow_gt));
      }
      if (!psnr_a.empty() || !psnr_b.empty()) {
        if (psnr_a.empty() || psnr_b.empty()) throw ConfigError("--psnr-a and --psnr-b go together");
        const double p = psnr(io::read_png<ErpTag>(psnr_a), io::read_png<ErpTag>(psnr_b));
        j["psnr_db"] = std::isfinite(p) ? json(p) : json("inf");
      }
      if (est_pitch || est_roll || gt_pitch_deg || gt_roll_deg) {
        const CameraPose est{0, deg_to_rad(est_pitch.value_or(0)), deg_to_rad(est_roll.value_or(0))};
        const CameraPose gt{0, deg_to_rad(gt_pitch_deg.value_or(0)), deg_to_rad(gt_roll_deg.value_or(0))};
        j["rotation_error_deg"] = rotation_error_deg(est, gt);
      }
      if (j.empty()) throw ConfigError("metrics needs at least one of --seam, --flow-*, --psnr-*, --est-*/--gt-*");
      print_json(j);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::io);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::numeric);
  }
  return 0;
}
