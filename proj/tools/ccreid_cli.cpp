#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ccreid/ccn.hpp"
#include "ccreid/config.hpp"
#include "ccreid/trainer.hpp"

using namespace ccreid;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", path, "run config file (key = value lines)");
    cmd->add_option("-s,--set", overrides, "override a config key, e.g. --set train.epochs=10");
  }

  RunConfig load() const {
    std::string text;
    if (!path.empty()) {
      std::ifstream is(path);
      if (!is) throw ConfigError("", 0, "cannot open config file " + path);
      std::stringstream ss;
      ss << is.rdbuf();
      text = ss.str();
      if (!text.empty() && text.back() != '\n') text += '\n';
    }
    for (const auto& o : overrides) text += o + "\n";
    return parse_config(text);
  }
};

std::string cmc_csv_path(const std::string& report) { return report + ".cmc.csv"; }

void write_pgm(const std::string& path, const Tensor<float>& map, std::size_t channel) {
  const std::size_t h = map.dim(1), w = map.dim(2);
  float lo = map.at(channel, 0, 0), hi = lo;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      lo = std::min(lo, map.at(channel, y, x));
      hi = std::max(hi, map.at(channel, y, x));
    }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << "P5\n" << w << " " << h << "\n255\n";
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const float t = hi > lo ? (map.at(channel, y, x) - lo) / (hi - lo) : 0.f;
      os.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.f))));
    }
}

void write_grid_csv(const std::string& path, const Tensor<float>& map) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << "channel,row,col,value\n";
  os.precision(9);
  for (std::size_t c = 0; c < map.dim(0); ++c)
    for (std::size_t y = 0; y < map.dim(1); ++y)
      for (std::size_t x = 0; x < map.dim(2); ++x)
        os << c << "," << y << "," << x << "," << map.at(c, y, x) << "\n";
}

std::unique_ptr<CrossModalNet<float>> model_from(const RunConfig& config, const std::string& checkpoint) {
  auto net = std::make_unique<CrossModalNet<float>>(config.model_config());
  if (checkpoint.empty()) {
    net->initialize(config.train_seed);
  } else {
    restore_checkpoint<float>(read_checkpoint(checkpoint), net->params(), nullptr);
  }
  return net;
}

void print_origins(const char* label, std::size_t h_f, std::size_t w_f, const SamplingConfig& cfg) {
  const auto origins = kernel_origins(h_f, w_f, cfg);
  std::cout << label << ": " << origins.size() << " kernels\n ";
  for (const auto& o : origins) std::cout << " (" << o.row << "," << o.col << ")";
  std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Cross-modality (RGB/IR) person re-identification with a dual-path common space and "
      "contrastive correlation.\n"
      "Reference setting (desk scale): N=32 identities and r=3 negatives per batch, "
      "lambda=0.1, 60 epochs at lr 0.1 dropping x0.1 for the last 30."};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (1 guarantees bit-identical runs)")
      ->check(CLI::NonNegativeNumber);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "render a synthetic RGB/IR identity dataset");
  DatasetSpec spec;
  std::string gen_out;
  gen->add_option("--ids", spec.ids, "number of identities")->capture_default_str();
  gen->add_option("--per-modality", spec.per_modality, "images per identity and modality")->capture_default_str();
  gen->add_option("--seed", spec.seed, "global dataset seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output dataset file")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  ConfigArgs train_cfg;
  train_cfg.attach(tr);
  std::string log_csv;
  tr->add_option("--log", log_csv, "write the per-epoch log as CSV");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the held-out identities");
  ConfigArgs eval_cfg;
  eval_cfg.attach(ev);
  std::string eval_ckpt, eval_mode, eval_report;
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint (default: paths.checkpoint)");
  ev->add_option("--mode", eval_mode, "simplified or full (default: eval.mode)");
  ev->add_option("--report", eval_report, "report file (default: paths.report)");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the total loss on a tiny model");
  int precision = 64;
  double gc_eps = 0;
  std::uint64_t gc_seed = 3;
  gc->add_option("--precision", precision, "float width, 32 or 64")->check(CLI::IsMember({32, 64}))->capture_default_str();
  gc->add_option("--eps", gc_eps, "central difference step (default 1e-6)");
  gc->add_option("--seed", gc_seed, "initialisation seed")->capture_default_str();

  // inspect-kernels
  auto* ik = app.add_subcommand("inspect-kernels", "list personalised kernel origins under both sampling variants");
  std::size_t h_f = 8, w_f = 4;
  SamplingConfig ik_cfg;
  ik->add_option("--h-f", h_f, "feature map height")->capture_default_str();
  ik->add_option("--w-f", w_f, "feature map width")->capture_default_str();
  ik->add_option("--h-k", ik_cfg.h_k, "kernel height")->capture_default_str();
  ik->add_option("--w-k", ik_cfg.w_k, "kernel width")->capture_default_str();
  ik->add_option("--stride-v", ik_cfg.stride_v, "vertical stride")->capture_default_str();
  ik->add_option("--stride-h", ik_cfg.stride_h, "horizontal stride")->capture_default_str();

  // dump-contrast
  auto* dc = app.add_subcommand("dump-contrast", "write contrastive feature maps of one held-out RGB/IR pair");
  ConfigArgs dump_cfg;
  dump_cfg.attach(dc);
  std::string dump_ckpt, dump_dir = "contrast";
  std::size_t rgb_index = 0, ir_index = 0;
  dc->add_option("--checkpoint", dump_ckpt, "checkpoint (default: freshly initialised model)");
  dc->add_option("--rgb-index", rgb_index, "index among held-out RGB images")->capture_default_str();
  dc->add_option("--ir-index", ir_index, "index among held-out IR images")->capture_default_str();
  dc->add_option("--out", dump_dir, "output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif

  try {
    if (*gen) {
      const auto samples = generate_dataset(spec);
      write_dataset(gen_out, samples);
      std::cout << "wrote " << samples.size() << " images of " << spec.ids << " identities to "
                << gen_out << "\n";
    } else if (*tr) {
      const RunConfig config = train_cfg.load();
      auto splits = split_dataset(config, load_or_generate(config));
      CrossModalNet<float> net(config.model_config());
      net.initialize(config.train_seed);
      SgdState<float> sgd;
      std::ofstream csv;
      if (!log_csv.empty()) {
        csv.open(log_csv);
        csv << "epoch,lr,pbce,id,total,seconds\n";
      }
      TrainHooks hooks;
      hooks.on_epoch = [&](const EpochLog& e) {
        std::printf("epoch %3zu  lr %.4g  pbce %.5f  id %.5f  total %.5f  (%.1fs)\n", e.epoch, e.lr,
                    e.pbce, e.id, e.total, e.seconds);
        std::fflush(stdout);
        if (csv.is_open()) {
          csv << e.epoch << "," << e.lr << "," << e.pbce << "," << e.id << "," << e.total << ","
              << e.seconds << "\n";
        }
      };
      train(config, net, sgd, splits.train, hooks);
      std::cout << "checkpoint: " << config.checkpoint_path << "\n";
    } else if (*ev) {
      RunConfig config = eval_cfg.load();
      if (!eval_mode.empty()) config.eval_mode = parse_eval_mode(eval_mode);
      if (!eval_report.empty()) config.report_path = eval_report;
      const auto ckpt = eval_ckpt.empty() ? config.checkpoint_path : eval_ckpt;
      auto splits = split_dataset(config, load_or_generate(config));
      const auto net = model_from(config, ckpt);
      const auto [queries, gallery] = query_gallery(splits.test);
      const auto result = evaluate<float>(*net, queries, gallery, config.eval_mode);
      auto at = [&](std::size_t k) { return result.cmc[std::min(k, result.cmc.size()) - 1]; };
      std::ostringstream report;
      report << "mode " << to_string(config.eval_mode) << "\n"
             << "queries " << queries.size() << " (ir)\n"
             << "gallery " << gallery.size() << " (rgb)\n"
             << "cmc-1 " << at(1) << "\n"
             << "cmc-5 " << at(5) << "\n"
             << "cmc-10 " << at(10) << "\n"
             << "mAP " << result.map << "\n"
             << "backbone_evals " << result.cost.backbone_evals << "\n"
             << "ccn_evals " << result.cost.ccn_evals << "\n";
      std::cout << report.str();
      if (!config.report_path.empty()) {
        std::ofstream(config.report_path) << report.str();
        std::ofstream csv(cmc_csv_path(config.report_path));
        csv << "rank,cmc\n";
        for (std::size_t k = 0; k < result.cmc.size(); ++k) csv << k + 1 << "," << result.cmc[k] << "\n";
      }
    } else if (*gc) {
      const double limit = precision == 64 ? 1e-6 : 1e-3;
      TotalLossGradCheck checks;
      if (precision == 64) {
        checks = check_total_loss_gradients<double, long double>(tiny_model_config(), 3, 1, gc_seed,
                                                                 gc_eps > 0 ? gc_eps : 1e-6);
      } else {
        checks = check_total_loss_gradients<float, long double>(tiny_model_config(), 3, 1, gc_seed,
                                                                gc_eps > 0 ? gc_eps : 1e-6);
      }
      double worst = 0;
      for (const auto& c : checks.params) {
        std::printf("%-28s %6zu elems  max rel err %.3e\n", c.name.c_str(), c.result.checked,
                    c.result.max_rel_error);
        worst = std::max(worst, c.result.max_rel_error);
      }
      std::printf("kink margin %.3e\n", checks.kink_margin);
      std::printf("worst %.3e (limit %.0e, %d-bit): %s\n", worst, limit, precision,
                  worst < limit ? "ok" : "FAILED");
      if (!(worst < limit)) return kNumeric;
    } else if (*ik) {
      print_origins("as printed", h_f, w_f, ik_cfg);
      SamplingConfig snapped = ik_cfg;
      snapped.edge_snap = true;
      print_origins("edge snap ", h_f, w_f, snapped);
    } else if (*dc) {
      const RunConfig config = dump_cfg.load();
      auto splits = split_dataset(config, load_or_generate(config));
      const auto net = model_from(config, dump_ckpt);
      const auto [irs, rgbs] = query_gallery(splits.test);
      if (rgb_index >= rgbs.size() || ir_index >= irs.size()) {
        throw DataError("dump-contrast: index out of range (" + std::to_string(rgbs.size()) +
                        " RGB, " + std::to_string(irs.size()) + " IR held-out images)");
      }
      Tape<float> tape(false);
      const auto fr = net->embed(tape, rgbs[rgb_index].image, Modality::RGB);
      const auto fi = net->embed(tape, irs[ir_index].image, Modality::IR);
      const auto& cfg = config.sampling;
      const auto kc = contrastive_kernels(tape, sample_kernels(tape, fr, cfg), sample_kernels(tape, fi, cfg));
      const auto f_r_i = contrastive_correlate(tape, kc, fr);
      const auto f_i_r = contrastive_correlate(tape, kc, fi);
      const auto score = difference_scores(tape, f_r_i, f_i_r, net->head());
      std::filesystem::create_directories(dump_dir);
      for (const auto& [name, f] : {std::pair{"f_r_given_i", f_r_i}, std::pair{"f_i_given_r", f_i_r}}) {
        const auto& map = f.map.value();
        write_grid_csv(dump_dir + "/" + name + ".csv", map);
        for (std::size_t c = 0; c < map.dim(0); ++c) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "/%s_k%02zu.pgm", name, c);
          write_pgm(dump_dir + buf, map, c);
        }
      }
      std::printf("rgb identity %u, ir identity %u: D_r|i %.6f  D_i|r %.6f  D_pair %.6f\n",
                  rgbs[rgb_index].identity, irs[ir_index].identity,
                  static_cast<double>(score.d_r_given_i.value().item()),
                  static_cast<double>(score.d_i_given_r.value().item()),
                  static_cast<double>(score.d_pair.value().item()));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const FormatError& e) {
    std::cerr << to_string(e.kind()) << ": " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
