#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "ferkd/calibrator.hpp"
#include "ferkd/ensembler.hpp"
#include "ferkd/error.hpp"
#include "ferkd/parallel.hpp"
#include "ferkd/region_sampler.hpp"
#include "ferkd/selfmix.hpp"
#include "ferkd/server.hpp"
#include "ferkd/store_io.hpp"
#include "ferkd/synth_bench.hpp"

namespace ferkd::cli {

namespace {

namespace fs = std::filesystem;

// Input problems the operator can fix from the command line.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LogLevel { debug, info, warn, error, off };

LogLevel log_level_from_env() {
  const char* v = std::getenv("FERKD_LOG");
  if (v == nullptr) return LogLevel::warn;
  const std::string s(v);
  if (s == "debug") return LogLevel::debug;
  if (s == "info") return LogLevel::info;
  if (s == "error") return LogLevel::error;
  if (s == "off") return LogLevel::off;
  return LogLevel::warn;
}

class Log {
 public:
  explicit Log(std::ostream& err) : err_(err), level_(log_level_from_env()) {}

  void info(const std::string& msg) const { write(LogLevel::info, "info", msg); }
  void debug(const std::string& msg) const { write(LogLevel::debug, "debug", msg); }
  void warn(const std::string& msg) const { write(LogLevel::warn, "warn", msg); }

 private:
  void write(LogLevel lvl, const char* tag, const std::string& msg) const {
    if (lvl >= level_ && level_ != LogLevel::off) err_ << "[" << tag << "] " << msg << '\n';
  }

  std::ostream& err_;
  LogLevel level_;
};

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw UsageError("input file not found: " + path);
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const auto lo = std::stoull(text.substr(0, dots));
    const auto hi = std::stoull(text.substr(dots + 2));
    if (hi < lo) throw Error(ErrorKind::parameter, "seed range must be ascending: " + text);
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) seeds.push_back(std::stoull(item));
  if (seeds.empty()) throw Error(ErrorKind::parameter, "no seeds given");
  return seeds;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) items.push_back(item);
  return items;
}

std::vector<std::pair<double, double>> parse_windows(const std::string& text) {
  std::vector<std::pair<double, double>> windows;
  for (const auto& item : split_list(text)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw Error(ErrorKind::parameter, "sweep windows are min:max, got " + item);
    windows.emplace_back(std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
  }
  return windows;
}

struct CalibrationFlags {
  CalibrationConfig cfg;

  void add(CLI::App* app) {
    app->add_option("--t-low", cfg.t_low, "max-prob below this is uninformative")->capture_default_str();
    app->add_option("--t-mid", cfg.t_mid, "upper edge of the hard range")->capture_default_str();
    app->add_option("--t-top", cfg.t_top, "max-prob above this is too easy")->capture_default_str();
    app->add_option("--epsilon", cfg.epsilon, "label smoothing for hard regions")->capture_default_str();
  }
};

void print_bins(std::ostream& out, const BinStats& bins) {
  out << "bin            count      ratio%     agg%\n";
  for (std::size_t i = 0; i < bins.counts.size(); ++i) {
    std::string name = "[" + fixed(bins.bin_edges[i], 2) + "," + fixed(bins.bin_edges[i + 1], 2) +
                       (i + 1 == bins.counts.size() ? "]" : ")");
    name.resize(14, ' ');
    std::string count = std::to_string(bins.counts[i]);
    count.resize(10, ' ');
    std::string ratio = fixed(100.0 * bins.bin_ratio[i], 3);
    ratio.resize(10, ' ');
    out << name << ' ' << count << ' ' << ratio << ' ' << fixed(100.0 * bins.agg_ratio[i], 3) << '\n';
  }
  out << "total " << bins.total << '\n';
}

std::atomic<bool> stop_requested{false};

extern "C" void on_signal(int) { stop_requested = true; }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const Log log(err);
  CLI::App app{"ferkd: soft-label store tooling and synthetic benchmark", "ferkd"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  app.add_option("--seed", seed, "seed for every random choice")->capture_default_str();
  app.add_option("--workers", workers, "thread cap")->capture_default_str()->check(CLI::PositiveNumber);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "quantize a teacher prediction dump into a store");
  std::string in_path, out_path;
  IngestMeta meta;
  std::size_t top_k = default_top_k;
  unsigned bits = default_bits;
  ingest->add_option("--input", in_path, "dump: image_id x y w h flip gt class:prob ...")->required();
  ingest->add_option("--output", out_path, "store to write")->required();
  ingest->add_option("--classes", meta.num_classes, "number of classes C")->required();
  ingest->add_option("--top-k", top_k, "classes kept per crop")->capture_default_str();
  ingest->add_option("--bits", bits, "bits per stored probability")->capture_default_str();

  // sample
  auto* sample = app.add_subcommand("sample", "draw crop boxes for a set of images");
  SamplerConfig sampler;
  std::size_t images = 1, crops = 1;
  int width = 224, height = 224;
  std::string prefix = "img-";
  sample->add_option("--images", images, "number of images")->capture_default_str();
  sample->add_option("--crops", crops, "crops per image")->capture_default_str();
  sample->add_option("--width", width, "image width in pixels")->capture_default_str();
  sample->add_option("--height", height, "image height in pixels")->capture_default_str();
  sample->add_option("--scale-min", sampler.scale_min)->capture_default_str();
  sample->add_option("--scale-max", sampler.scale_max)->capture_default_str();
  sample->add_option("--ratio-min", sampler.ratio_min)->capture_default_str();
  sample->add_option("--ratio-max", sampler.ratio_max)->capture_default_str();
  sample->add_option("--hflip", sampler.hflip_prob, "flip probability")->capture_default_str();
  sample->add_option("--prefix", prefix, "image id prefix")->capture_default_str();
  sample->add_option("--output", out_path, "write here instead of stdout");

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "assign UR/HR/IR and calibrated labels");
  CalibrationFlags cal_flags;
  std::string store_path;
  calibrate->add_option("--store", store_path, "input store")->required();
  calibrate->add_option("--output", out_path, "calibrated store to write")->required();
  cal_flags.add(calibrate);

  // ensemble
  auto* ensemble = app.add_subcommand("ensemble", "combine aligned teacher stores");
  std::vector<std::string> teachers;
  std::string vote = "majority";
  std::optional<std::size_t> ens_top_k;
  std::optional<unsigned> ens_bits;
  CalibrationFlags ens_flags;
  ensemble->add_option("--teacher", teachers, "teacher store (repeat or comma-separate)")
      ->required()
      ->delimiter(',');
  ensemble->add_option("--output", out_path, "ensembled store to write")->required();
  ensemble->add_option("--vote", vote, "UR discard vote: any, majority, all")->capture_default_str();
  ensemble->add_option("--top-k", ens_top_k, "override K of the output");
  ensemble->add_option("--bits", ens_bits, "override bits of the output");
  ens_flags.add(ensemble);

  // stats
  auto* stats = app.add_subcommand("stats", "max-probability bins and status counts");
  stats->add_option("--store", store_path, "store to summarize")->required();

  // selfmix-preview
  auto* preview = app.add_subcommand("selfmix-preview", "show the SelfMix pairs one pass would use");
  double beta_alpha = 1.0;
  std::size_t limit = 20;
  preview->add_option("--store", store_path, "store to plan over")->required();
  preview->add_option("--beta-alpha", beta_alpha, "Beta(a, a) for lambda")->capture_default_str();
  preview->add_option("--limit", limit, "plans to print (0 = all)")->capture_default_str();

  // bench
  auto* bench = app.add_subcommand("bench", "train the synthetic student under several modes");
  std::string modes = "fkd_random,ferkd_surgical,curriculum_e2h,curriculum_h2e,vkd";
  std::string seeds = "0..4";
  std::string sweep;
  std::optional<std::size_t> steps, eval_every;
  SynthTaskConfig task_cfg;
  bench->add_option("--modes", modes, "comma-separated training modes")->capture_default_str();
  bench->add_option("--seeds", seeds, "a..b or comma list")->capture_default_str();
  bench->add_option("--steps", steps, "optimizer steps per run");
  bench->add_option("--eval-every", eval_every, "steps between evaluations");
  bench->add_option("--train-images", task_cfg.train_images)->capture_default_str();
  bench->add_option("--val-images", task_cfg.val_images)->capture_default_str();
  bench->add_option("--sweep", sweep, "min:max windows for a max-prob filter sweep on the first mode");
  bench->add_option("--output", out_path, "metrics file (JSON lines); stdout if absent");

  // serve
  auto* serve = app.add_subcommand("serve", "serve batches of a calibrated store over TCP");
  std::string listen = "127.0.0.1:0";
  std::string order = "surgical";
  double duration = 0.0;
  serve->add_option("--store", store_path, "calibrated store")->required();
  serve->add_option("--listen", listen, "host:port (port 0 picks one)")->capture_default_str();
  serve->add_option("--order", order, "random, easy_to_hard, hard_to_easy, surgical")->capture_default_str();
  serve->add_option("--duration", duration, "seconds before shutting down (0 = until SIGINT)")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return exit_ok;
    }
    nlohmann::ordered_json j{{"error", "usage"}, {"message", e.what()}};
    err << j.dump() << '\n';
    return exit_usage;
  }

  try {
    if (ingest->parsed()) {
      require_file(in_path);
      meta.top_k = top_k;
      meta.bits = bits;
      std::ifstream dump(in_path);
      const auto store = ingest_predictions(dump, meta);
      const auto bytes = write_store(store, out_path);
      out << "ingested " << store.record_count() << " crops over " << store.images.size() << " images, " << bytes
          << " bytes\n";
    } else if (sample->parsed()) {
      sampler.seed = seed;
      sampler.validate();
      std::ofstream file;
      if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw Error(ErrorKind::io, "cannot write " + out_path);
      }
      std::ostream& dst = out_path.empty() ? out : file;
      dst.precision(9);
      for (std::size_t i = 0; i < images; ++i) {
        auto rng = image_stream(sampler, i);
        for (const auto& c : sample_crops_per_image(crops, width, height, sampler, rng))
          dst << prefix << i << ' ' << c.box.x << ' ' << c.box.y << ' ' << c.box.w << ' ' << c.box.h << ' '
              << (c.hflip ? 1 : 0) << '\n';
      }
    } else if (calibrate->parsed()) {
      require_file(store_path);
      cal_flags.cfg.validate();
      const auto input = read_store(store_path);
      log.info("calibrating " + std::to_string(input.record_count()) + " crops");
      const auto result = calibrate_store(input, cal_flags.cfg, workers);
      const auto bytes = write_store(result.store, out_path);
      out << "UR " << result.report.ur << " HR " << result.report.hr << " IR " << result.report.ir << " discard "
          << fixed(result.report.discard_fraction(), 6) << " bytes " << bytes << '\n';
    } else if (ensemble->parsed()) {
      ens_flags.cfg.validate();
      TeacherSet ts;
      for (const auto& t : teachers) {
        require_file(t);
        ts.teacher_ids.push_back(fs::path(t).stem().string());
        ts.stores.push_back(read_store(t));
      }
      EnsembleOptions opts;
      opts.vote = parse_vote(vote);
      opts.top_k = ens_top_k;
      opts.bits = ens_bits;
      opts.workers = workers;
      const auto store = ensemble_stores(ts, ens_flags.cfg, opts);
      const auto report = summarize(store);
      const auto bytes = write_store(store, out_path);
      out << "teachers " << ts.stores.size() << " UR " << report.ur << " HR " << report.hr << " IR " << report.ir
          << " bytes " << bytes << '\n';
    } else if (stats->parsed()) {
      require_file(store_path);
      const auto store = read_store(store_path);
      std::vector<double> mp;
      mp.reserve(store.record_count());
      for (const auto& img : store.images)
        for (const auto& rec : img.crops) mp.push_back(teacher_max_prob(rec));
      const auto edges = crop_statistics_edges();
      out << "classes " << store.header.num_classes << " top_k " << store.header.top_k << " bits "
          << static_cast<int>(store.header.bits) << " images " << store.images.size() << " crops "
          << store.record_count() << '\n';
      print_bins(out, bin_statistics_of_values(mp, edges));
      if (store.header.calibration) {
        const auto r = summarize(store);
        out << "UR " << r.ur << " HR " << r.hr << " IR " << r.ir << " discard " << fixed(r.discard_fraction(), 6)
            << '\n';
      }
    } else if (preview->parsed()) {
      require_file(store_path);
      const auto store = read_store(store_path);
      std::vector<CropRecord> flat;
      for (const auto& img : store.images) flat.insert(flat.end(), img.crops.begin(), img.crops.end());
      CounterRng rng(seed, 0x73656c66ULL);
      const auto plans = plan_selfmix(flat, rng, beta_alpha);
      out << "plans " << plans.size() << '\n';
      std::size_t shown = 0;
      for (const auto& p : plans) {
        if (limit != 0 && shown++ == limit) break;
        out << p.crop_a.image_id << ' ' << p.crop_a.index << ' ' << p.crop_b.index << " lambda "
            << fixed(p.lambda_drawn, 4) << " eff " << fixed(p.lambda_eff, 4) << " box " << fixed(p.paste_box.x, 4)
            << ' ' << fixed(p.paste_box.y, 4) << ' ' << fixed(p.paste_box.w, 4) << ' ' << fixed(p.paste_box.h, 4)
            << '\n';
      }
    } else if (bench->parsed()) {
      std::vector<TrainMode> mode_list;
      for (const auto& m : split_list(modes)) mode_list.push_back(parse_train_mode(m));
      if (mode_list.empty()) throw Error(ErrorKind::parameter, "no modes given");
      const auto seed_list = parse_seeds(seeds);
      task_cfg.validate();

      std::vector<BenchInputs> inputs(seed_list.size());
      parallel_for(seed_list.size(), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) inputs[i] = prepare_bench(seed_list[i], task_cfg);
      });
      log.info("prepared " + std::to_string(seed_list.size()) + " tasks");

      auto config_for = [&](TrainMode mode, std::uint64_t s) {
        auto cfg = bench_config(mode, s);
        if (steps) cfg.steps = *steps;
        if (eval_every) cfg.eval_every = *eval_every;
        return cfg;
      };

      if (!sweep.empty()) {
        const auto windows = parse_windows(sweep);
        out << "seed min max retained discard accuracy\n";
        for (std::size_t i = 0; i < seed_list.size(); ++i) {
          const auto rows = min_max_filter_sweep(config_for(mode_list.front(), seed_list[i]), windows,
                                                 inputs[i].task, inputs[i].store);
          for (const auto& r : rows)
            out << seed_list[i] << ' ' << fixed(r.min_prob, 3) << ' ' << fixed(r.max_prob, 3) << ' ' << r.retained
                << ' ' << fixed(r.discard_fraction, 6) << ' ' << fixed(r.final_accuracy, 4) << '\n';
        }
        return exit_ok;
      }

      const std::size_t jobs = mode_list.size() * seed_list.size();
      std::vector<RunMetrics> results(jobs);
      parallel_for(jobs, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
          const std::size_t m = j / seed_list.size(), s = j % seed_list.size();
          results[j] = run_experiment(config_for(mode_list[m], seed_list[s]), inputs[s].task, inputs[s].store);
        }
      });
      for (const auto& r : results)
        if (r.diverged_at)
          throw Error(ErrorKind::numeric, std::string(to_string(r.mode)) + " seed " + std::to_string(r.seed) +
                                              " diverged at step " + std::to_string(*r.diverged_at));

      std::ofstream file;
      if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw Error(ErrorKind::io, "cannot write " + out_path);
      }
      std::ostream& dst = out_path.empty() ? out : file;
      for (const auto& r : results) write_metrics_jsonl(dst, r);
      if (!out_path.empty()) {
        for (std::size_t m = 0; m < mode_list.size(); ++m) {
          double sum = 0.0;
          for (std::size_t s = 0; s < seed_list.size(); ++s) sum += results[m * seed_list.size() + s].final_accuracy();
          out << to_string(mode_list[m]) << " mean final accuracy "
              << fixed(sum / static_cast<double>(seed_list.size()), 4) << '\n';
        }
      }
    } else if (serve->parsed()) {
      require_file(store_path);
      OrderPolicy policy;
      policy.mode = parse_order_mode(order);
      BatchServer server(read_store(store_path), policy, Endpoint::parse(listen));
      server.start();
      out << "listening " << Endpoint::parse(listen).host << ':' << server.port() << std::endl;
      stop_requested = false;
      auto* prev_int = std::signal(SIGINT, on_signal);
      auto* prev_term = std::signal(SIGTERM, on_signal);
      const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(duration);
      while (!stop_requested && (duration <= 0.0 || std::chrono::steady_clock::now() < deadline))
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      std::signal(SIGINT, prev_int);
      std::signal(SIGTERM, prev_term);
      server.stop();
      log.info("server stopped");
    }
  } catch (const UsageError& e) {
    nlohmann::ordered_json j{{"error", "usage"}, {"message", e.what()}};
    err << j.dump() << '\n';
    return exit_usage;
  } catch (const Error& e) {
    nlohmann::ordered_json j{{"error", to_string(e.kind())}, {"message", e.what()}};
    if (e.offset()) j["offset"] = *e.offset();
    if (e.line()) j["line"] = *e.line();
    err << j.dump() << '\n';
    return e.kind() == ErrorKind::parameter ? exit_usage : exit_data_error;
  } catch (const std::exception& e) {
    nlohmann::ordered_json j{{"error", "internal"}, {"message", e.what()}};
    err << j.dump() << '\n';
    return exit_data_error;
  }
  return exit_ok;
}

}  // namespace ferkd::cli
