#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "sinet/bench.hpp"
#include "sinet/datagen.hpp"
#include "sinet/image_io.hpp"
#include "sinet/trainer.hpp"
#include "sinet/weights_io.hpp"

using json = nlohmann::json;
using namespace sinet;

namespace {

struct SummarizeArgs {
  std::string preset = "portrait";
  std::string table_path;
  std::string input;
  std::string convention = "mac";
  std::string format = "text";
  std::string decoder = "IB";
  int classes = 0;
};

std::pair<long, long> parse_hw(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw ConfigError("expected HxW, got '" + s + "'");
  return {std::stol(s.substr(0, x)), std::stol(s.substr(x + 1))};
}

void print_summary(const ModelSummary& s, const std::string& format,
                   const std::string& convention) {
  const double mac_flops = s.flops(FlopConvention::MAC);
  const double two_flops = s.flops(FlopConvention::TwoMAC);
  const double headline = convention == "2mac" ? two_flops : mac_flops;
  if (format == "csv") {
    std::cout << "layer,params,macs\n";
    for (const auto& r : s.rows) {
      std::cout << r.name << "," << r.params << "," << r.macs << "\n";
    }
    std::cout << "total," << s.total_params << "," << s.total_macs << "\n";
  } else if (format == "json-lines") {
    for (const auto& r : s.rows) {
      json j{{"layer", r.name}, {"params", r.params}, {"macs", r.macs}};
      std::cout << j.dump() << "\n";
    }
    json t{{"layer", "total"},
           {"params", s.total_params},
           {"macs", s.total_macs},
           {"input", std::to_string(s.input_h) + "x" + std::to_string(s.input_w)},
           {"flops_mac", mac_flops},
           {"flops_2mac", two_flops},
           {"flops", headline},
           {"convention", convention}};
    std::cout << t.dump() << "\n";
  } else {
    std::printf("%-28s %10s %14s\n", "layer", "params", "macs");
    for (const auto& r : s.rows) {
      std::printf("%-28s %10ld %14ld\n", r.name.c_str(), r.params, r.macs);
    }
    std::printf("%-28s %10ld %14ld\n", "total", s.total_params, s.total_macs);
    std::printf("input %ldx%ld  params %.4f M  flops %.4f G (mac) / %.4f G (2mac)  [%s]\n",
                s.input_h, s.input_w, s.total_params / 1e6, mac_flops / 1e9,
                two_flops / 1e9, convention.c_str());
  }
}

int run_summarize(const SummarizeArgs& args) {
  ArchTable table =
      args.table_path.empty() ? arch_preset(args.preset) : load_arch_table(args.table_path);
  const int classes =
      args.classes > 0 ? args.classes : preset_default_classes(table.name);
  Model model = build_sinet(table, classes, decoder_kind_from_name(args.decoder));
  std::vector<std::pair<long, long>> sizes;
  if (!args.input.empty()) {
    sizes.push_back(parse_hw(args.input));
  } else {
    sizes.emplace_back(model.reference_h(), model.reference_w());
    if (table.name == "cityscapes") {
      // The half-resolution figure is also commonly reported.
      sizes.emplace_back(model.reference_h() / 2, model.reference_w());
    }
  }
  for (const auto& [h, w] : sizes) {
    print_summary(model.count_flops(h, w), args.format, args.convention);
  }
  return 0;
}

int run_infer(const std::string& weights, const std::string& image_path,
              const std::string& out_path) {
  Model model = load_weights(weights);
  TensorF input = image_to_tensor(read_pnm(image_path));
  NoGradGuard ng;
  TensorF logits = model.forward(input, false);
  LabelMap labels = argmax_labels(logits)[0];
  if (model.num_class() == 2) {
    write_pnm(out_path, mask_to_image(labels_to_mask(labels)));
  } else {
    Image8 img{labels.h, labels.w, 1, std::vector<uint8_t>(labels.v.size())};
    for (size_t i = 0; i < labels.v.size(); ++i) {
      img.data[i] = static_cast<uint8_t>(labels.v[i]);
    }
    write_pnm(out_path, img);
  }
  return 0;
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return json::parse(in);
}

ToyDatasetConfig dataset_from(const json& j) {
  ToyDatasetConfig cfg;
  cfg.count = j.value("count", cfg.count);
  cfg.image_size = j.value("image_size", cfg.image_size);
  cfg.seed = j.value("seed", cfg.seed);
  const std::string family = j.value("family", "mixed");
  if (family == "ellipses") cfg.family = ToyDatasetConfig::Family::Ellipses;
  else if (family == "rectangles") cfg.family = ToyDatasetConfig::Family::Rectangles;
  else if (family == "mixed") cfg.family = ToyDatasetConfig::Family::Mixed;
  else throw ConfigError("dataset.family must be ellipses, rectangles or mixed");
  return cfg;
}

TwoStageSchedule schedule_from(const json& j) {
  TwoStageSchedule s;
  s.stage1_epochs = j.value("stage1_epochs", s.stage1_epochs);
  s.stage2_epochs = j.value("stage2_epochs", s.stage2_epochs);
  s.batch1 = j.value("batch1", s.batch1);
  s.batch2 = j.value("batch2", s.batch2);
  return s;
}

OptimConfig optim_from(const json& j) {
  OptimConfig o;
  o.lr = j.value("lr", o.lr);
  o.weight_decay = j.value("weight_decay", o.weight_decay);
  o.beta1 = j.value("beta1", o.beta1);
  o.beta2 = j.value("beta2", o.beta2);
  o.eps = j.value("eps", o.eps);
  o.seed = j.value("seed", o.seed);
  return o;
}

LossConfig loss_from(const json& j) {
  LossConfig l;
  l.lambda = j.value("lambda", l.lambda);
  l.structuring_size = j.value("structuring_size", l.structuring_size);
  return l;
}

struct ModelSpec {
  ArchTable table;
  int classes;
  DecoderKind kind;
  uint64_t seed;
};

ModelSpec model_from(const json& j) {
  ModelSpec spec{arch_preset("toy"), 2, DecoderKind::IB, 42};
  if (j.contains("table")) spec.table = load_arch_table(j["table"].get<std::string>());
  else spec.table = arch_preset(j.value("preset", "toy"));
  spec.classes = j.value("classes", 2);
  spec.kind = decoder_kind_from_name(j.value("decoder", "IB"));
  spec.seed = j.value("seed", spec.seed);
  return spec;
}

void emit_records(const TrainReport& report, const std::string& format, std::ostream& out) {
  if (format == "json-lines") {
    for (const auto& r : report.records) {
      json j{{"stage", r.stage}, {"epoch", r.epoch}, {"loss", r.loss}, {"miou", r.miou}};
      out << j.dump() << "\n";
    }
  } else {
    out << "stage,epoch,loss,miou\n";
    for (const auto& r : report.records) {
      out << r.stage << "," << r.epoch << "," << r.loss << "," << r.miou << "\n";
    }
  }
}

int run_train_toy(const std::string& config_path, const std::string& format) {
  json cfg = load_json(config_path);
  ModelSpec spec = model_from(cfg.value("model", json::object()));
  Model model = build_sinet(spec.table, spec.classes, spec.kind, spec.seed);
  auto data = make_toy_dataset(dataset_from(cfg.value("dataset", json::object())));
  TrainOptions opts;
  opts.loss = loss_from(cfg.value("loss", json::object()));
  opts.checkpoint_path = cfg.value("checkpoint", "");
  TrainReport report =
      train_two_stage(model, data, schedule_from(cfg.value("schedule", json::object())),
                      optim_from(cfg.value("optim", json::object())), opts);
  emit_records(report, format, std::cout);
  if (cfg.contains("report")) {
    std::ofstream out(cfg["report"].get<std::string>());
    emit_records(report, format, out);
  }
  std::cerr << "best mIoU: stage1 " << report.best_stage1_miou << ", stage2 "
            << report.best_stage2_miou << "\n";
  return 0;
}

int run_ablate(const std::string& config_path, const std::string& format) {
  json cfg = load_json(config_path);
  ModelSpec spec = model_from(cfg.value("model", json::object()));
  auto data = make_toy_dataset(dataset_from(cfg.value("dataset", json::object())));
  std::vector<DecoderKind> kinds;
  for (const auto& k :
       cfg.value("kinds", json::array({"IB", "ReverseIB", "RemoveIB", "GAU"}))) {
    kinds.push_back(decoder_kind_from_name(k.get<std::string>()));
  }
  std::vector<double> angles;
  for (const auto& a : cfg.value("angles", json::array({0.0, 25.0, 45.0, 75.0, 90.0}))) {
    angles.push_back(a.get<double>());
  }
  AblationResult result =
      ablate_decoders(spec.table, spec.classes, data, kinds, angles,
                      schedule_from(cfg.value("schedule", json::object())),
                      optim_from(cfg.value("optim", json::object())),
                      loss_from(cfg.value("loss", json::object())), spec.seed);
  if (format == "json-lines") {
    for (const auto& c : result.cells) {
      json j{{"decoder", decoder_kind_name(c.kind)}, {"angle", c.angle}, {"miou", c.miou}};
      std::cout << j.dump() << "\n";
    }
  } else {
    std::cout << "decoder,angle,miou\n";
    for (const auto& c : result.cells) {
      std::cout << decoder_kind_name(c.kind) << "," << c.angle << "," << c.miou << "\n";
    }
  }
  return 0;
}

int run_bench(const std::string& config_path, bool default_matrix, int iterations,
              double pause, const std::string& format) {
  std::vector<int> channels{32, 128};
  std::vector<long> sizes{48, 120, 320};
  std::vector<int> dilations{2, 6, 12, 18};
  uint64_t seed = 1;
  if (!config_path.empty()) {
    json cfg = load_json(config_path);
    if (cfg.contains("channels")) channels = cfg["channels"].get<std::vector<int>>();
    if (cfg.contains("sizes")) sizes = cfg["sizes"].get<std::vector<long>>();
    if (cfg.contains("dilations")) dilations = cfg["dilations"].get<std::vector<int>>();
    iterations = cfg.value("iterations", iterations);
    pause = cfg.value("pause_seconds", pause);
    seed = cfg.value("seed", seed);
  } else if (!default_matrix) {
    throw ConfigError("bench: pass --config or --default-matrix");
  }
  BenchReport report = bench_dilated(channels, sizes, dilations, iterations, pause, seed);
  if (format == "json-lines") {
    for (const auto& e : report.entries) {
      json j{{"channels", e.cfg.channels}, {"size", e.cfg.size},
             {"dilation", e.cfg.dilation}, {"iterations", e.iterations},
             {"min_ms", e.min_ms},         {"mean_ms", e.mean_ms},
             {"max_ms", e.max_ms},         {"total_ms", e.total_ms}};
      std::cout << j.dump() << "\n";
    }
  } else {
    std::cout << bench_report_csv(report);
  }
  return 0;
}

int run_datagen_expand(const std::string& boxes_path, const std::string& image_size,
                       const CropSpec& spec, const std::string& out_path) {
  const auto [w, h] = parse_hw(image_size);  // WxH, matching image conventions
  std::ostringstream out;
  for (const auto& [id, box] : read_boxes(boxes_path)) {
    CropRect r = expand_face_box(box, w, h, spec);
    out << id << "," << r.x << "," << r.y << "," << r.w << "," << r.h << "\n";
  }
  if (out_path.empty()) {
    std::cout << out.str();
  } else {
    std::ofstream f(out_path);
    f << out.str();
  }
  return 0;
}

int run_datagen_crop(const std::string& image_path, const std::string& mask_path,
                     const std::string& rect_str, const std::string& out_image,
                     const std::string& out_mask) {
  std::vector<long> vals;
  std::stringstream ss(rect_str);
  std::string item;
  while (std::getline(ss, item, ',')) vals.push_back(std::stol(item));
  if (vals.size() != 4) throw ConfigError("--rect expects x,y,w,h");
  CropRect rect{vals[0], vals[1], vals[2], vals[3]};
  TensorF image = image_to_tensor(read_pnm(image_path));
  BinaryMask mask = image_to_mask(read_pnm(mask_path));
  auto [ci, cm] = crop_pair(image, mask, rect);
  write_pnm(out_image, tensor_to_image(ci));
  write_pnm(out_mask, mask_to_image(cm));
  return 0;
}

int run_datagen_review(const std::string& manifest_path, const std::string& decisions_path,
                       const std::string& out_path) {
  auto entries = read_manifest(manifest_path);
  auto decisions = read_decisions(decisions_path);
  ReviewResult result = review_manifest(entries, decisions);
  if (out_path.empty()) {
    for (const auto& e : result.accepted) {
      std::cout << e.id << "\t" << e.image_path << "\t" << e.mask_path << "\t" << e.rect.x
                << "," << e.rect.y << "," << e.rect.w << "," << e.rect.h << "\t"
                << e.decision << "\n";
    }
  } else {
    write_manifest(out_path, result.accepted);
  }
  std::cerr << "accepted " << result.accepted.size() << ", rejected "
            << result.rejected.size() << ", pending " << result.pending.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SINet: lightweight portrait segmentation toolkit"};
  app.require_subcommand(1);

  SummarizeArgs sum;
  auto* summarize = app.add_subcommand("summarize", "Parameter and FLOP accounting");
  summarize->add_option("--preset", sum.preset, "portrait|cityscapes|toy");
  summarize->add_option("--table", sum.table_path, "architecture table file");
  summarize->add_option("--classes", sum.classes, "class count (preset default if omitted)");
  summarize->add_option("--input", sum.input, "input size HxW");
  summarize->add_option("--convention", sum.convention)
      ->check(CLI::IsMember({"mac", "2mac"}));
  summarize->add_option("--format", sum.format)
      ->check(CLI::IsMember({"text", "csv", "json-lines"}));
  summarize->add_option("--decoder", sum.decoder)
      ->check(CLI::IsMember({"IB", "ReverseIB", "RemoveIB", "GAU"}));

  std::string weights, image, out;
  auto* infer = app.add_subcommand("infer", "Segment one image");
  infer->add_option("--weights", weights)->required();
  infer->add_option("--image", image)->required();
  infer->add_option("--out", out)->required();

  std::string train_config, train_format = "csv";
  auto* train = app.add_subcommand("train-toy", "Two-stage training on synthetic data");
  train->add_option("--config", train_config)->required();
  train->add_option("--format", train_format)->check(CLI::IsMember({"csv", "json-lines"}));

  std::string ablate_config, ablate_format = "csv";
  auto* ablate = app.add_subcommand("ablate-decoders", "Decoder-variant rotation ablation");
  ablate->add_option("--config", ablate_config)->required();
  ablate->add_option("--format", ablate_format)->check(CLI::IsMember({"csv", "json-lines"}));

  std::string bench_config, bench_format = "csv";
  bool bench_default = false;
  int bench_iterations = 100;
  double bench_pause = 2.0;
  auto* bench = app.add_subcommand("bench", "Dilated-conv latency micro-benchmark");
  bench->add_option("--config", bench_config);
  bench->add_flag("--default-matrix", bench_default, "32/128 ch x 48/120/320 x d 2/6/12/18");
  bench->add_option("--iterations", bench_iterations);
  bench->add_option("--pause", bench_pause, "seconds between configs");
  bench->add_option("--format", bench_format)->check(CLI::IsMember({"csv", "json-lines"}));

  auto* datagen = app.add_subcommand("datagen", "Portrait-crop data generation");
  datagen->require_subcommand(1);

  std::string boxes_path, image_size, expand_out;
  CropSpec crop_spec;
  auto* expand = datagen->add_subcommand("expand", "Expand face boxes to portrait crops");
  expand->add_option("--boxes", boxes_path)->required();
  expand->add_option("--image-size", image_size, "WxH")->required();
  expand->add_option("--scale-w", crop_spec.scale_w);
  expand->add_option("--scale-h", crop_spec.scale_h);
  expand->add_option("--down-shift", crop_spec.down_shift);
  expand->add_option("--out", expand_out);

  std::string crop_image, crop_mask, crop_rect, crop_out_image, crop_out_mask;
  auto* crop = datagen->add_subcommand("crop", "Crop an image/mask pair");
  crop->add_option("--image", crop_image)->required();
  crop->add_option("--mask", crop_mask)->required();
  crop->add_option("--rect", crop_rect, "x,y,w,h")->required();
  crop->add_option("--out-image", crop_out_image)->required();
  crop->add_option("--out-mask", crop_out_mask)->required();

  std::string manifest_path, decisions_path, review_out;
  auto* review = datagen->add_subcommand("review", "Apply accept/reject decisions");
  review->add_option("--manifest", manifest_path)->required();
  review->add_option("--decisions", decisions_path)->required();
  review->add_option("--out", review_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*summarize) return run_summarize(sum);
    if (*infer) return run_infer(weights, image, out);
    if (*train) return run_train_toy(train_config, train_format);
    if (*ablate) return run_ablate(ablate_config, ablate_format);
    if (*bench) {
      return run_bench(bench_config, bench_default, bench_iterations, bench_pause,
                       bench_format);
    }
    if (*expand) return run_datagen_expand(boxes_path, image_size, crop_spec, expand_out);
    if (*crop) {
      return run_datagen_crop(crop_image, crop_mask, crop_rect, crop_out_image,
                              crop_out_mask);
    }
    if (*review) return run_datagen_review(manifest_path, decisions_path, review_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
