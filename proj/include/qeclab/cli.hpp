#pragma once

// Command-line front end. Exit codes: 0 success, 1 runtime/I-O failure,
// 2 usage or validation error.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qeclab/dataset.hpp"
#include "qeclab/eval.hpp"
#include "qeclab/explain.hpp"
#include "qeclab/hld.hpp"
#include "qeclab/http_server.hpp"
#include "qeclab/model_io.hpp"
#include "qeclab/service.hpp"

namespace qeclab::cli {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("empty number list");
  return out;
}

inline std::vector<std::uint64_t> parse_counts(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (double v : parse_doubles(text)) {
    if (v < 0 || v != std::floor(v)) throw UsageError("counts must be non-negative integers");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

inline void print_histogram(std::ostream& os, const std::array<std::uint64_t, 4>& h) {
  os << "labels I=" << h[0] << " X=" << h[1] << " Z=" << h[2] << " Y=" << h[3];
}

struct NoiseFlags {
  int distance = 5;
  std::string noise = "depolarizing";
  double p = 0.1;
  double q = -1.0;
  int cycles = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--distance,-d", distance, "Code distance (odd, 3..25)")->capture_default_str();
    cmd->add_option("--noise", noise, "depolarizing | phenomenological")->capture_default_str();
    cmd->add_option("--q", q, "Measurement flip probability (phenomenological)");
    cmd->add_option("--cycles", cycles, "Noisy measurement cycles (phenomenological)");
  }

  NoiseConfig resolve(bool need_q) const {
    NoiseConfig cfg;
    cfg.kind = noise_kind_from_string(noise);
    cfg.p = p;
    if (cfg.kind == NoiseKind::Phenomenological) {
      if (need_q && q < 0) throw UsageError("phenomenological noise requires --q");
      if (cycles < 1) throw UsageError("phenomenological noise requires --cycles >= 1");
      cfg.q = q < 0 ? p : q;
      cfg.cycles = cycles;
    }
    return cfg;
  }
};

inline std::string history_csv(const std::vector<std::vector<nn::EpochStats>>& stages) {
  std::ostringstream os;
  os << "stage,epoch,train_loss,train_accuracy,eval_loss,eval_accuracy\n" << std::setprecision(10);
  for (std::size_t s = 0; s < stages.size(); ++s) {
    for (const auto& e : stages[s]) {
      os << s << "," << e.epoch << "," << e.train_loss << "," << e.train_accuracy << ",";
      if (e.has_eval) {
        os << e.eval_loss << "," << e.eval_accuracy;
      } else {
        os << ",";
      }
      os << "\n";
    }
  }
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path);
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"qeclab: surface-code decoding laboratory"};
  app.set_config("--config", "", "Read options from a key=value (TOML-style) file");
  app.require_subcommand(1);
  int threads = default_threads();
  app.add_option("--threads", threads, "Worker threads for generation and evaluation")->check(CLI::PositiveNumber);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a labelled dataset");
  NoiseFlags gen_noise;
  gen_noise.add(gen);
  gen->add_option("--p", gen_noise.p, "Depolarizing probability")->capture_default_str();
  std::uint64_t gen_count = 0;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  gen->add_option("--count", gen_count, "Number of records")->required();
  gen->add_option("--seed", gen_seed, "Master seed")->capture_default_str();
  gen->add_option("--out,-o", gen_out, "Output dataset file")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train a high-level decoder on a dataset");
  std::string tr_dataset;
  std::string tr_arch = "cnn";
  std::string tr_widths = "512,512,256";
  std::string tr_init;
  std::string tr_out;
  std::string tr_history;
  nn::TrainConfig tr_cfg;
  double tr_eval_fraction = 0.1;
  tr->add_option("--dataset", tr_dataset, "Training dataset file")->required();
  tr->add_option("--arch", tr_arch, "cnn | cnn-dilated | ffnn")->capture_default_str();
  tr->add_option("--ffnn-widths", tr_widths, "Three hidden widths for --arch ffnn")->capture_default_str();
  tr->add_option("--init-weights", tr_init, "Warm start from this model file");
  tr->add_option("--epochs", tr_cfg.epochs, "Epochs")->capture_default_str();
  tr->add_option("--batch", tr_cfg.batch_size, "Mini-batch size")->capture_default_str();
  tr->add_option("--lr", tr_cfg.adam.learning_rate, "Adam learning rate")->capture_default_str();
  tr->add_option("--seed", tr_cfg.seed, "Initialization and shuffling seed")->capture_default_str();
  tr->add_option("--eval-fraction", tr_eval_fraction, "Held-out evaluation fraction (0 disables)")
      ->capture_default_str();
  tr->add_option("--out,-o", tr_out, "Output model file")->required();
  tr->add_option("--history", tr_history, "Per-epoch history CSV (default: <out>.history.csv)");

  // eval
  auto* ev = app.add_subcommand("eval", "Estimate logical error rates");
  NoiseFlags ev_noise;
  ev_noise.add(ev);
  std::string ev_model;
  std::string ev_decoders = "mwpm";
  std::string ev_plist = "0.1";
  std::uint64_t ev_n = 10000;
  std::uint64_t ev_seed = 1;
  std::string ev_out;
  ev->add_option("--model", ev_model, "Model file (required for hld)");
  ev->add_option("--decoder", ev_decoders, "Comma list of simple, mwpm, hld, always-i")->capture_default_str();
  ev->add_option("--p-list", ev_plist, "Comma list of error probabilities")->capture_default_str();
  ev->add_option("--n", ev_n, "Samples per point")->capture_default_str();
  ev->add_option("--seed", ev_seed, "Master seed (shared by all decoders)")->capture_default_str();
  ev->add_option("--out,-o", ev_out, "Output CSV (default: stdout)");

  // augment
  auto* aug = app.add_subcommand("augment", "Build an enhanced training set with injected chains");
  int aug_d = 5;
  AugmentationSpec aug_spec;
  std::string aug_counts = "20000,100000,20000";
  EnhancedCounts aug_cfg;
  std::uint64_t aug_seed = 1;
  std::string aug_out;
  aug->add_option("--distance,-d", aug_d, "Code distance")->capture_default_str();
  aug->add_option("--chain-length", aug_spec.chain_length, "Injected chain length")->capture_default_str();
  aug->add_option("--counts", aug_counts, "chains,base,hard record counts")->capture_default_str();
  aug->add_option("--p1", aug_cfg.base_p, "Base error probability")->capture_default_str();
  aug->add_option("--p2", aug_cfg.hard_p, "Hard error probability")->capture_default_str();
  aug->add_option("--seed", aug_seed, "Master seed")->capture_default_str();
  aug->add_option("--out,-o", aug_out, "Output dataset file")->required();

  // saliency
  auto* sal = app.add_subcommand("saliency", "Occlusion saliency map for one input");
  std::string sal_model;
  std::string sal_input;
  bool sal_sample = false;
  double sal_p = 0.1;
  double sal_q = -1.0;
  std::uint64_t sal_seed = 1;
  std::uint64_t sal_index = 0;
  OcclusionConfig sal_cfg;
  bool sal_true = false;
  int sal_scale = 16;
  std::string sal_out;
  sal->add_option("--model", sal_model, "Model file")->required();
  sal->add_option("--input-json", sal_input, "JSON file with placed_errors or syndromes");
  sal->add_flag("--sample", sal_sample, "Draw the input from the model's noise model");
  sal->add_option("--p", sal_p, "Error probability for --sample")->capture_default_str();
  sal->add_option("--q", sal_q, "Measurement flip probability for --sample (default: p)");
  sal->add_option("--seed", sal_seed, "Seed for --sample")->capture_default_str();
  sal->add_option("--index", sal_index, "Record index for --sample")->capture_default_str();
  sal->add_option("--patch", sal_cfg.patch_h, "Square patch size")->capture_default_str();
  sal->add_option("--stride", sal_cfg.stride, "Patch stride")->capture_default_str();
  sal->add_flag("--true-label", sal_true, "Use the true label as loss reference (--sample only)");
  sal->add_option("--pgm-scale", sal_scale, "Pixel scale of the graymap")->capture_default_str();
  sal->add_option("--out,-o", sal_out, "Output prefix (.csv, .pgm, .json)")->required();

  // serve
  auto* srv = app.add_subcommand("serve", "Serve the HTTP API");
  std::string srv_host = "127.0.0.1";
  int srv_port = 8080;
  const char* env_dir = std::getenv("QECLAB_MODELS_DIR");
  std::string srv_models = env_dir ? env_dir : "models";
  srv->add_option("--host", srv_host, "Bind address")->capture_default_str();
  srv->add_option("--port", srv_port, "Port")->capture_default_str();
  srv->add_option("--models-dir", srv_models, "Models directory (default: $QECLAB_MODELS_DIR)")->capture_default_str();

  // inspect
  auto* ins = app.add_subcommand("inspect", "Describe a dataset, a model, or a built-in architecture");
  std::string ins_dataset;
  std::string ins_model;
  std::string ins_arch;
  auto* ins_ds_opt = ins->add_option("--dataset", ins_dataset, "Dataset file");
  auto* ins_model_opt = ins->add_option("--model", ins_model, "Model file");
  auto* ins_arch_opt = ins->add_option("--arch", ins_arch, "Built-in architecture as d,noise[,dilated] or 'table'");
  ins_ds_opt->excludes(ins_model_opt)->excludes(ins_arch_opt);
  ins_model_opt->excludes(ins_arch_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (*gen) {
      const CodeLayout layout(gen_noise.distance);
      const NoiseConfig noise = gen_noise.resolve(true);
      const Dataset ds = generate_dataset(layout, noise, gen_count, gen_seed, threads);
      save_dataset(gen_out, ds);
      out << "wrote " << ds.size() << " records to " << gen_out << " (d=" << layout.distance() << ", "
          << to_string(noise.kind) << ", channels=" << ds.header().channels << "); ";
      print_histogram(out, ds.label_histogram());
      out << "\n";
    } else if (*tr) {
      if (tr_arch != "cnn" && tr_arch != "cnn-dilated" && tr_arch != "ffnn") throw UsageError("unknown --arch " + tr_arch);
      if (tr_eval_fraction < 0 || tr_eval_fraction >= 1) throw UsageError("--eval-fraction must be in [0, 1)");
      const Dataset ds = load_dataset(tr_dataset);
      const auto& h = ds.header();
      nn::ModelSpec spec;
      if (tr_arch == "ffnn") {
        const auto w = parse_counts(tr_widths);
        if (w.size() != 3) throw UsageError("--ffnn-widths needs three values");
        spec = build_ffnn(h.distance, {static_cast<int>(w[0]), static_cast<int>(w[1]), static_cast<int>(w[2])},
                          h.channels);
      } else {
        spec = build_cnn(h.distance, h.noise, tr_arch == "cnn-dilated", h.cycles);
      }
      ModelFile init;
      if (!tr_init.empty()) {
        init = load_model(tr_init);
        if (nn::parameter_shapes(init.spec) != nn::parameter_shapes(spec) || !(init.spec.input == spec.input)) {
          throw UsageError("--init-weights architecture does not match --arch for this dataset");
        }
        tr_cfg.init_parameters = &init.params;
      }
      std::unique_ptr<DatasetSource> train_src;
      std::unique_ptr<DatasetSource> eval_src;
      if (tr_eval_fraction > 0) {
        const Split split = split_eval(ds.size(), tr_eval_fraction, tr_cfg.seed);
        train_src = std::make_unique<DatasetSource>(ds, split.train);
        eval_src = std::make_unique<DatasetSource>(ds, split.eval);
      } else {
        train_src = std::make_unique<DatasetSource>(ds);
      }
      const nn::TrainResult r = nn::train(spec, *train_src, tr_cfg, eval_src.get(), [&](const nn::EpochStats& e) {
        err << "epoch " << e.epoch << " loss " << e.train_loss << " acc " << e.train_accuracy;
        if (e.has_eval) err << " eval_loss " << e.eval_loss << " eval_acc " << e.eval_accuracy;
        err << "\n";
      });
      ModelFile model{spec, r.params, {}};
      model.meta["arch"] = tr_arch;
      model.meta["distance"] = std::to_string(h.distance);
      model.meta["noise"] = std::string(to_string(h.noise));
      model.meta["dataset_seed"] = std::to_string(h.master_seed);
      model.meta["dataset_records"] = std::to_string(h.record_count);
      model.meta["dataset_p"] = format_double(h.p);
      model.meta["epochs"] = std::to_string(tr_cfg.epochs);
      model.meta["batch"] = std::to_string(tr_cfg.batch_size);
      model.meta["lr"] = format_double(tr_cfg.adam.learning_rate);
      model.meta["seed"] = std::to_string(tr_cfg.seed);
      model.meta["warm_start"] = tr_init.empty() ? "none" : tr_init;
      save_model(tr_out, model);
      write_text(tr_history.empty() ? tr_out + ".history.csv" : tr_history, history_csv({r.history}));
      out << "wrote " << tr_out << " (" << nn::param_count(spec) << " parameters)\n";
    } else if (*ev) {
      const CodeLayout layout(ev_noise.distance);
      NoiseConfig base = ev_noise.resolve(false);
      std::vector<DecoderKind> decoders;
      std::stringstream ss(ev_decoders);
      for (std::string item; std::getline(ss, item, ',');) decoders.push_back(decoder_from_string(item));
      ModelFile model;
      bool has_model = false;
      for (DecoderKind k : decoders) {
        if (k == DecoderKind::Hld && ev_model.empty()) throw UsageError("--decoder hld requires --model");
      }
      if (!ev_model.empty()) {
        model = load_model(ev_model);
        has_model = true;
      }
      std::optional<double> q_fixed;
      if (base.kind == NoiseKind::Phenomenological && ev_noise.q >= 0) q_fixed = ev_noise.q;
      const auto rows = sweep_curve(decoders, layout, base, parse_doubles(ev_plist), ev_n, ev_seed, threads,
                                    has_model ? &model : nullptr, q_fixed);
      if (ev_out.empty()) {
        write_eval_csv(out, rows);
      } else {
        std::ofstream os(ev_out, std::ios::binary);
        if (!os) throw std::runtime_error("cannot open " + ev_out + " for writing");
        write_eval_csv(os, rows);
        out << "wrote " << rows.size() << " rows to " << ev_out << "\n";
      }
    } else if (*aug) {
      const CodeLayout layout(aug_d);
      const auto counts = parse_counts(aug_counts);
      if (counts.size() != 3) throw UsageError("--counts needs three values");
      aug_cfg.chains = counts[0];
      aug_cfg.base = counts[1];
      aug_cfg.hard = counts[2];
      const Dataset ds = build_enhanced_set(layout, aug_spec, aug_cfg, aug_seed, threads);
      save_dataset(aug_out, ds);
      out << "wrote " << ds.size() << " records to " << aug_out << "; ";
      print_histogram(out, ds.label_histogram());
      out << "\n";
    } else if (*sal) {
      if (sal_sample == !sal_input.empty()) throw UsageError("give exactly one of --input-json or --sample");
      if (sal_true && !sal_sample) throw UsageError("--true-label needs --sample");
      const ModelFile model = load_model(sal_model);
      const int d = (model.spec.input.height + 1) / 2;
      const CodeLayout layout(d);
      std::vector<Syndrome> stack;
      std::optional<LogicalClass> truth;
      if (sal_sample) {
        NoiseConfig noise;
        if (model.spec.input.channels > 1) {
          noise = {NoiseKind::Phenomenological, sal_p, sal_q < 0 ? sal_p : sal_q, model.spec.input.channels - 1};
        } else {
          noise = {NoiseKind::Depolarizing, sal_p};
        }
        const Sample s = draw_sample(layout, noise, SeedSpec{sal_seed}, sal_index);
        stack = s.syndromes;
        truth = s.label;
      } else {
        std::ifstream is(sal_input);
        if (!is) throw std::runtime_error("cannot open " + sal_input);
        const auto body = service::json::parse(is);
        stack = service::detail::parse_decode_input(body, layout, model.spec.input.channels).syndromes;
      }
      sal_cfg.patch_w = sal_cfg.patch_h;
      if (sal_true) {
        sal_cfg.reference = SaliencyReference::True;
        sal_cfg.true_label = truth;
      }
      const SaliencyMap map = occlusion_saliency(model, encode_input(stack, layout), sal_cfg);
      {
        std::ofstream os(sal_out + ".csv", std::ios::binary);
        write_csv(os, map.full);
      }
      {
        std::ofstream os(sal_out + ".pgm", std::ios::binary);
        write_pgm(os, map.full, sal_scale);
      }
      write_text(sal_out + ".json", saliency_to_json(map).dump(2) + "\n");
      out << "predicted " << to_string(map.predicted) << ", max saliency " << map.coarse.max() << " at patch ("
          << map.coarse.argmax().first << "," << map.coarse.argmax().second << "); wrote " << sal_out
          << ".{csv,pgm,json}\n";
    } else if (*srv) {
      service::ModelRegistry registry(srv_models);
      httplib::Server server;
      service::install_routes(server, registry);
      out << "serving on http://" << srv_host << ":" << srv_port << " (models: " << srv_models << ")" << std::endl;
      if (!server.listen(srv_host, srv_port)) throw std::runtime_error("cannot listen on port " + std::to_string(srv_port));
    } else if (*ins) {
      if (!ins_dataset.empty()) {
        const Dataset ds = load_dataset(ins_dataset);
        const auto& h = ds.header();
        out << "dataset " << ins_dataset << "\n  version " << h.version << "\n  distance " << h.distance
            << "\n  channels " << h.channels << "\n  cycles " << h.cycles << "\n  noise " << to_string(h.noise)
            << "\n  p " << h.p << "\n  q " << h.q << "\n  records " << h.record_count << "\n  seed "
            << h.master_seed << "\n  ";
        print_histogram(out, ds.label_histogram());
        out << "\n";
      } else if (!ins_model.empty()) {
        const ModelFile m = load_model(ins_model);
        out << "model " << ins_model << "\n  input " << m.spec.input.channels << "x" << m.spec.input.height << "x"
            << m.spec.input.width << "\n";
        for (const auto& l : m.spec.layers) out << "  " << qeclab::detail::layer_to_string(l) << "\n";
        for (const auto& [k, v] : m.meta) out << "  meta " << k << " = " << v << "\n";
        out << "  param_count " << nn::param_count(m.spec) << "\n";
      } else if (!ins_arch.empty()) {
        if (ins_arch == "table") {
          out << architecture_manifest();
        } else {
          std::stringstream ss(ins_arch);
          std::string d_text;
          std::string noise_text;
          std::string flag;
          std::getline(ss, d_text, ',');
          std::getline(ss, noise_text, ',');
          std::getline(ss, flag, ',');
          int d = 0;
          try {
            d = std::stoi(d_text);
          } catch (const std::exception&) {
            throw UsageError("--arch expects d,noise[,dilated]");
          }
          const auto spec = build_cnn(d, noise_kind_from_string(noise_text.empty() ? "depolarizing" : noise_text),
                                      flag == "dilated");
          for (const auto& l : spec.layers) out << qeclab::detail::layer_to_string(l) << "\n";
          out << "param_count " << nn::param_count(spec) << "\n";
        }
      } else {
        throw UsageError("inspect needs --dataset, --model or --arch");
      }
    }
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace qeclab::cli
