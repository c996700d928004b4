// rdlt: dataset building, transform training, baselines, RD evaluation and plots.

#include "rdlt/baselines.hpp"
#include "rdlt/binary_io.hpp"
#include "rdlt/dataset.hpp"
#include "rdlt/error.hpp"
#include "rdlt/evaluation.hpp"
#include "rdlt/report.hpp"
#include "rdlt/trainer.hpp"
#include "rdlt/transforms.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <regex>
#include <sstream>
#include <thread>

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Usage problems detected after parsing (exit code 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Splices option values from a `--config FILE` JSON object into the argument list, right
// after the subcommand path. Keys already given as flags are skipped, so flags win.
std::vector<std::string> expand_config(const CLI::App& app, int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::size_t insert_at = 1;
  const CLI::App* current = &app;
  std::string config_path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      --i;
      continue;
    }
    if (a.rfind("--config=", 0) == 0) {
      config_path = a.substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      --i;
      continue;
    }
    if (insert_at == i && !a.empty() && a[0] != '-') {
      const auto subs = current->get_subcommands([&](const CLI::App* s) { return s->get_name() == a; });
      if (!subs.empty()) {
        current = subs.front();
        insert_at = i + 1;
      }
    }
  }
  if (config_path.empty()) return args;

  json j;
  try {
    j = json::parse(rdlt::read_file(config_path));
  } catch (const json::exception& e) {
    throw rdlt::IoError(config_path + ": config file is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError(config_path + ": config file must hold a JSON object");
  const auto scalar = [&](const std::string& key, const json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return v.dump();
    throw UsageError(config_path + ": key '" + key + "' must be a string, number, boolean or array");
  };
  std::vector<std::string> extra;
  for (const auto& [key, value] : j.items()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (given) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) extra.push_back(flag);
      continue;
    }
    extra.push_back(flag);
    if (value.is_array()) {
      for (const auto& v : value) extra.push_back(scalar(key, v));
    } else {
      extra.push_back(scalar(key, value));
    }
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(insert_at), extra.begin(), extra.end());
  return args;
}

void add_config(CLI::App* sub) {
  // Consumed by expand_config before parsing; declared so that help lists it.
  sub->add_option("--config", "JSON object of option values keyed by long flag name (flags win on conflict)")
      ->type_name("FILE");
}

int default_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

std::uint64_t default_seed() {
  if (const char* s = std::getenv("RDLT_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used);
      if (used == std::string(s).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("RDLT_SEED is not an unsigned integer: '") + s + "'");
  }
  return 1;
}

void check_block_size(int n, bool allow_any) {
  const bool supported = n == 4 || n == 8 || n == 16 || n == 32;
  if (supported) return;
  if (!allow_any)
    throw UsageError("unsupported block size " + std::to_string(n) +
                     " (supported: 4, 8, 16, 32; pass --allow-any-n to override)");
  std::cerr << "warning: block size " << n << " is outside the supported set {4, 8, 16, 32}\n";
}

// Resolved option values of `app`, excluding output paths and worker counts.
json resolved_options(const CLI::App* app) {
  json j = json::object();
  for (const CLI::Option* opt : app->get_options({})) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help" || name == "config" || name == "out" || name == "threads" || name == "log-csv") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      j[name] = r.size() == 1 && opt->get_items_expected_max() <= 1 ? json(r.front()) : json(r);
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

std::string file_hash(const fs::path& p) { return rdlt::sha256_hex(rdlt::read_file(p)); }

json provenance(const CLI::App* app, const std::string& command, json inputs) {
  return {{"tool", "rdlt"}, {"command", command}, {"options", resolved_options(app)}, {"inputs", std::move(inputs)}};
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  rdlt::write_file_atomic(p, std::string_view(text));
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  rdlt::write_file_atomic(p, std::span<const std::uint8_t>(bytes));
}

fs::path sidecar(const fs::path& p) { return fs::path(p.string() + ".json"); }

// Built-in name (dct2-N, dst7-N, dct8-N) unless a file of that name exists; files may be
// transform (RDLT) or model (RDLM) files.
struct LoadedTransform {
  rdlt::TransformMatrix transform;
  std::string source_hash;
};

LoadedTransform load_transform(const std::string& spec) {
  static const std::regex builtin(R"((dct2|dst7|dct8)-([0-9]+))");
  std::smatch m;
  if (!fs::exists(spec) && std::regex_match(spec, m, builtin)) {
    const int n = std::stoi(m[2]);
    if (n < 2 || n > 64) throw rdlt::InvalidArgument("built-in transform size out of range: " + spec);
    const auto kind = m[1].str();
    if (kind == "dct2") return {rdlt::dct2_matrix(n), "builtin:" + spec};
    if (kind == "dst7") return {rdlt::dst7_matrix(n), "builtin:" + spec};
    return {rdlt::dct8_matrix(n), "builtin:" + spec};
  }
  const auto bytes = rdlt::read_file(spec);
  const std::string magic(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(4, bytes.size())));
  if (magic == rdlt::kModelMagic) return {rdlt::decode_model_file(bytes, spec).transform, rdlt::sha256_hex(bytes)};
  return {rdlt::decode_transform_file(bytes, spec), rdlt::sha256_hex(bytes)};
}

const rdlt::BlockSet& pick_split(const rdlt::BlockDataset& ds, const std::string& split) {
  return split == "train" ? ds.train : ds.eval;
}

json dataset_input(const rdlt::BlockDataset& ds, const std::string& split) {
  return {{"content_hash", ds.content_hash()}, {"split", split}};
}

void write_transform_outputs(const fs::path& out, const rdlt::TransformMatrix& t, const json& prov) {
  write_bytes(out, rdlt::encode_transform_file(t));
  json mirror = t.to_json();
  mirror["provenance"] = prov;
  write_text(sidecar(out), mirror.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

struct DatasetArgs {
  std::string images;
  std::string out;
  int n = 8;
  double split = 0.85;
  std::uint64_t seed = 1;
  bool allow_any_n = false;
  int threads = 1;
};

int run_dataset(const DatasetArgs& a) {
  check_block_size(a.n, a.allow_any_n);
  const auto images = rdlt::load_image_dir(a.images);
  rdlt::DatasetConfig cfg;
  cfg.n = a.n;
  cfg.split = a.split;
  cfg.seed = a.seed;
  const auto ds = rdlt::build_dataset(images, cfg);
  rdlt::write_dataset(a.out, ds);
  std::cout << "dataset: " << ds.train.count() << " train / " << ds.eval.count() << " eval blocks, content hash "
            << ds.content_hash() << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string dataset;
  std::string out;
  std::string transform_out;
  std::string log_csv;
  std::int64_t log_every = 1000;
  std::optional<std::int64_t> steps;
  rdlt::TrainConfig config;
  bool allow_any_n = false;
  int threads = 1;
};

int run_train(const CLI::App* app, TrainArgs a) {
  check_block_size(a.config.n, a.allow_any_n);
  if (a.steps) {
    if (*a.steps < 0) throw UsageError("--steps must be >= 0");
    a.config.phase1_steps = *a.steps / 5;
    a.config.phase2_steps = *a.steps - a.config.phase1_steps;
  }
  a.config.validate();
  const auto ds = rdlt::read_dataset(a.dataset);
  if (ds.n != a.config.n)
    throw rdlt::InvalidArgument("dataset block size " + std::to_string(ds.n) + " does not match --n " +
                                std::to_string(a.config.n));

  std::unique_ptr<std::ostream> log_file;
  std::ostream* log = nullptr;
  if (!a.log_csv.empty()) {
    if (a.log_csv == "-") {
      log = &std::cout;
    } else {
      log_file = std::make_unique<std::ostringstream>();
      log = log_file.get();
    }
    *log << "step,loss,D,R,Q,defect\n";
  }
  rdlt::TrainOptions opts;
  opts.data_hash = ds.content_hash();
  opts.log_every = log ? a.log_every : 0;
  opts.on_log = [&](const rdlt::TrainLogRow& r) {
    *log << r.step << ',' << rdlt::format_double(r.terms.loss) << ',' << rdlt::format_double(r.terms.distortion) << ','
         << rdlt::format_double(r.terms.rate) << ',' << rdlt::format_double(r.terms.step) << ','
         << rdlt::format_double(r.defect) << '\n';
    log->flush();
  };
  const auto model = rdlt::train(ds.train, a.config, opts);

  rdlt::write_model(a.out, model);
  const fs::path transform_out = a.transform_out.empty() ? fs::path(a.out).replace_extension(".rdlt") : fs::path(a.transform_out);
  const json prov = provenance(app, "train", {{"dataset", dataset_input(ds, "train")}});
  write_transform_outputs(transform_out, model.transform, {{"resolved", prov}, {"training", model.metadata()}});
  if (log_file) write_text(a.log_csv, static_cast<std::ostringstream&>(*log_file).str());
  std::cout << "trained " << model.transform.label() << ": loss " << model.initial_loss << " -> " << model.final_loss
            << ", model " << a.out << ", transform " << transform_out.string() << "\n";
  return kExitOk;
}

struct BaselineArgs {
  std::string dataset;
  std::string out;
  int n = 8;
  bool allow_any_n = false;
  rdlt::SotConfig sot;
  int threads = 1;
};

int run_klt(const CLI::App* app, const BaselineArgs& a) {
  check_block_size(a.n, a.allow_any_n);
  const auto ds = rdlt::read_dataset(a.dataset);
  if (ds.n != a.n) throw rdlt::InvalidArgument("dataset block size " + std::to_string(ds.n) + " does not match --n");
  const auto klt = rdlt::klt_from_blocks(ds.train);
  const fs::path out = a.out.empty() ? fs::path("klt-" + std::to_string(a.n) + ".rdlt") : fs::path(a.out);
  write_transform_outputs(out, klt.transform, {{"resolved", provenance(app, "klt", {{"dataset", dataset_input(ds, "train")}})},
                                               {"eigenvalues", klt.eigenvalues}});
  std::cout << "wrote " << klt.transform.label() << " to " << out.string() << "\n";
  return kExitOk;
}

int run_sot(const CLI::App* app, const BaselineArgs& a) {
  check_block_size(a.n, a.allow_any_n);
  a.sot.validate();
  const auto ds = rdlt::read_dataset(a.dataset);
  if (ds.n != a.n) throw rdlt::InvalidArgument("dataset block size " + std::to_string(ds.n) + " does not match --n");
  const auto sot = rdlt::sot_train(ds.train, rdlt::as_dense(rdlt::dct2_matrix(a.n)), a.sot);
  const fs::path out = a.out.empty() ? fs::path("sot-" + std::to_string(a.n) + ".rdlt") : fs::path(a.out);
  write_transform_outputs(out, sot.transform, {{"resolved", provenance(app, "sot", {{"dataset", dataset_input(ds, "train")}})},
                                               {"iterations", sot.iterations},
                                               {"objective_history", sot.objective_history}});
  std::cout << "wrote " << sot.transform.label() << " to " << out.string() << " after " << sot.iterations
            << " iterations\n";
  return kExitOk;
}

struct EvalArgs {
  std::string dataset;
  std::vector<std::string> transforms;
  std::vector<double> steps = rdlt::kEvaluationSteps;
  std::string split = "eval";
  std::string out;
  double alpha = rdlt::kDefaultMtsAlpha;
  int threads = 1;
};

int run_eval(const CLI::App* app, const EvalArgs& a) {
  const auto ds = rdlt::read_dataset(a.dataset);
  const auto& blocks = pick_split(ds, a.split);
  std::vector<rdlt::RDCurve> curves;
  json inputs = {{"dataset", dataset_input(ds, a.split)}, {"transforms", json::object()}};
  for (const auto& spec : a.transforms) {
    const auto t = load_transform(spec);
    inputs["transforms"][t.transform.label()] = t.source_hash;
    curves.push_back(rdlt::evaluate(t.transform, blocks, a.steps, a.threads));
  }
  const std::string csv = rdlt::curves_to_csv(curves);
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    write_text(a.out, csv);
    write_text(sidecar(a.out), provenance(app, "eval", inputs).dump(2) + "\n");
  }
  return kExitOk;
}

int run_mts(const CLI::App* app, const EvalArgs& a) {
  const auto ds = rdlt::read_dataset(a.dataset);
  const auto& blocks = pick_split(ds, a.split);
  std::vector<rdlt::MtsResult> results;
  json inputs = {{"dataset", dataset_input(ds, a.split)}, {"primaries", json::object()}};
  json selections = json::object();
  for (const auto& spec : a.transforms) {
    const auto t = load_transform(spec);
    inputs["primaries"][t.transform.label()] = t.source_hash;
    results.push_back(rdlt::mts_evaluate(t.transform, blocks, a.steps, a.alpha, a.threads));
    json per_q = json::array();
    for (const auto& p : results.back().points)
      per_q.push_back({{"Q", p.q}, {"selection_counts", p.selection_counts}, {"payload_bits", p.payload_bits},
                       {"signaling_bits", p.signaling_bits}});
    selections[results.back().label] = {{"candidates", results.back().candidate_labels}, {"points", per_q}};
  }
  const std::string csv = rdlt::mts_to_csv(results);
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    write_text(a.out, csv);
    json side = provenance(app, "mts", inputs);
    side["selection"] = selections;
    write_text(sidecar(a.out), side.dump(2) + "\n");
  }
  return kExitOk;
}

struct BdArgs {
  std::string test;
  std::string anchor;
  std::string test_label;
  std::string anchor_label;
  std::string out;
};

rdlt::RDCurve pick_curve(const std::string& path, const std::string& label) {
  const auto curves = rdlt::read_curves_csv(path);
  if (curves.empty()) throw rdlt::IoError(path + ": no curves");
  if (label.empty()) return curves.front();
  for (const auto& c : curves)
    if (c.label == label) return c;
  throw rdlt::IoError(path + ": no curve labeled '" + label + "'");
}

int run_bd(const CLI::App* app, const BdArgs& a) {
  const auto test = pick_curve(a.test, a.test_label);
  const auto anchor = pick_curve(a.anchor, a.anchor_label);
  const auto r = rdlt::bd_metrics(test, anchor);
  json j = {{"test", test.label},
            {"anchor", anchor.label},
            {"bd_psnr_db", r.bd_psnr_db},
            {"bd_rate_percent", r.bd_rate_percent},
            {"provenance", provenance(app, "bd", {{"test", file_hash(a.test)}, {"anchor", file_hash(a.anchor)}})}};
  if (a.out.empty())
    std::cout << j.dump(2) << "\n";
  else
    write_text(a.out, j.dump(2) + "\n");
  return kExitOk;
}

struct PlotArgs {
  std::vector<std::string> curves;
  std::string transform;
  std::string out;
};

int run_plot(const CLI::App* app, const PlotArgs& a) {
  std::vector<rdlt::RDCurve> curves;
  json inputs = json::object();
  for (const auto& path : a.curves) {
    auto c = rdlt::read_curves_csv(path);
    inputs[path] = file_hash(path);
    curves.insert(curves.end(), c.begin(), c.end());
  }
  const std::string svg = rdlt::render_rd_svg(curves, provenance(app, "plot", inputs).dump());
  write_text(a.out, svg);
  return kExitOk;
}

int run_basis(const CLI::App* app, const PlotArgs& a) {
  const auto t = load_transform(a.transform);
  write_bytes(a.out, rdlt::encode_pgm(rdlt::basis_mosaic(t.transform)));
  write_text(sidecar(a.out), provenance(app, "basis", {{"transform", t.source_hash}}).dump(2) + "\n");
  return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rate-distortion learned transforms: datasets, training, baselines and RD evaluation", "rdlt"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::function<int()> action;

  // dataset build
  DatasetArgs ds_args;
  auto* dataset = app.add_subcommand("dataset", "Residual block datasets");
  dataset->require_subcommand(1);
  auto* build = dataset->add_subcommand("build", "Build a residual block dataset from a folder of images");
  add_config(build);
  build->add_option("--images", ds_args.images, "Folder of P5 PGM / PNG images")->required();
  build->add_option("--out", ds_args.out, "Output directory (train.rdlb, eval.rdlb, manifest.json)")->required();
  build->add_option("--n", ds_args.n, "Block size")->capture_default_str();
  build->add_option("--split", ds_args.split, "Training fraction")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  build->add_option("--seed", ds_args.seed, "Shuffle seed (default: $RDLT_SEED or 1)");
  build->add_flag("--allow-any-n", ds_args.allow_any_n, "Accept block sizes outside {4, 8, 16, 32}");
  build->add_option("--threads", ds_args.threads, "Worker cap (results do not depend on it)")->check(CLI::PositiveNumber);
  build->callback([&] { action = [&] { return run_dataset(ds_args); }; });

  // train
  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a rate-distortion learned transform");
  add_config(train);
  auto& tc = tr.config;
  train->add_option("--dataset", tr.dataset, "Dataset directory")->required();
  train->add_option("--out", tr.out, "Model file (.rdlm)")->required();
  train->add_option("--transform-out", tr.transform_out, "Transform file (default: model path with .rdlt)");
  train->add_option("--n", tc.n, "Block size")->capture_default_str();
  train->add_option("--steps", tr.steps, "Total steps, split 1:4 between phase 1 and phase 2");
  train->add_option("--phase1-steps", tc.phase1_steps, "Steps at lambda-lo")->capture_default_str();
  train->add_option("--phase2-steps", tc.phase2_steps, "Steps with lambda drawn from [lambda-lo, lambda-hi]")->capture_default_str();
  train->add_option("--lambda-lo", tc.lambda_lo, "Lowest lambda")->capture_default_str();
  train->add_option("--lambda-hi", tc.lambda_hi, "Highest lambda")->capture_default_str();
  train->add_option("--lambda-scale", tc.lambda_scale, "Rate weight per unit lambda (MSE per bpp)")->capture_default_str();
  train->add_option("--batch", tc.batch_size, "Blocks per step")->capture_default_str();
  train->add_option("--lr", tc.learning_rate, "Adam step size for the transform")->capture_default_str();
  train->add_option("--aux-lr", tc.aux_learning_rate, "Adam step size for entropy and step-size parameters")->capture_default_str();
  train->add_option("--orthonormalize-every", tc.orthonormalize_every, "Steps between projections (0: export only)")->capture_default_str();
  train->add_option("--orth-penalty", tc.orth_penalty_weight, "Weight of the squared orthonormality defect")->capture_default_str();
  train->add_option("--qnet-hidden", tc.qnet_hidden, "Hidden units of the lambda-to-step network")->capture_default_str();
  train->add_option("--initial-step", tc.initial_step, "Step size predicted before training")->capture_default_str();
  train->add_option("--seed", tc.seed, "Training seed (default: $RDLT_SEED or 1)");
  train->add_option("--log-csv", tr.log_csv, "Write step,loss,D,R,Q,defect rows here ('-' for stdout)");
  train->add_option("--log-every", tr.log_every, "Steps between log rows")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_flag("--allow-any-n", tr.allow_any_n, "Accept block sizes outside {4, 8, 16, 32}");
  train->add_option("--threads", tr.threads, "Worker cap (results do not depend on it)")->check(CLI::PositiveNumber);
  train->callback([&] { action = [&] { return run_train(train, tr); }; });

  // klt / sot
  BaselineArgs klt_args;
  auto* klt = app.add_subcommand("klt", "Fit the KLT baseline on a dataset's training split");
  add_config(klt);
  klt->add_option("--dataset", klt_args.dataset, "Dataset directory")->required();
  klt->add_option("--n", klt_args.n, "Block size")->capture_default_str();
  klt->add_option("--out", klt_args.out, "Transform file (default: klt-N.rdlt)");
  klt->add_flag("--allow-any-n", klt_args.allow_any_n, "Accept block sizes outside {4, 8, 16, 32}");
  klt->add_option("--threads", klt_args.threads, "Worker cap (results do not depend on it)")->check(CLI::PositiveNumber);
  klt->callback([&] { action = [&] { return run_klt(klt, klt_args); }; });

  BaselineArgs sot_args;
  auto* sot = app.add_subcommand("sot", "Train the sparse orthonormal transform baseline");
  add_config(sot);
  sot->add_option("--dataset", sot_args.dataset, "Dataset directory")->required();
  sot->add_option("--n", sot_args.n, "Block size")->capture_default_str();
  sot->add_option("--out", sot_args.out, "Transform file (default: sot-N.rdlt)");
  sot->add_option("--threshold-lambda", sot_args.sot.threshold_lambda, "l0 weight; coefficients below its square root are zeroed")
      ->capture_default_str();
  sot->add_option("--iters", sot_args.sot.max_iters, "Maximum alternating iterations")->capture_default_str();
  sot->add_option("--tol", sot_args.sot.tol, "Relative objective change that stops training")->capture_default_str();
  sot->add_flag("--allow-any-n", sot_args.allow_any_n, "Accept block sizes outside {4, 8, 16, 32}");
  sot->add_option("--threads", sot_args.threads, "Worker cap (results do not depend on it)")->check(CLI::PositiveNumber);
  sot->callback([&] { action = [&] { return run_sot(sot, sot_args); }; });

  // eval / mts
  EvalArgs ev;
  ev.threads = default_threads();
  auto* eval = app.add_subcommand("eval", "RD curves of transforms on a dataset split");
  add_config(eval);
  eval->add_option("--dataset", ev.dataset, "Dataset directory")->required();
  eval->add_option("--transform", ev.transforms, "Transform or model file, or dct2-N / dst7-N / dct8-N (repeatable)")
      ->required();
  eval->add_option("--q", ev.steps, "Quantization step sizes")->delimiter(',')->capture_default_str();
  eval->add_option("--split", ev.split, "Dataset split")->check(CLI::IsMember({"train", "eval"}))->capture_default_str();
  eval->add_option("--out", ev.out, "CSV output (default: stdout)");
  eval->add_option("--threads", ev.threads, "Worker cap (results do not depend on it)")->check(CLI::PositiveNumber);
  eval->callback([&] { action = [&] { return run_eval(eval, ev); }; });

  EvalArgs mv;
  mv.threads = default_threads();
  auto* mts = app.add_subcommand("mts", "Multiple transform selection around one or more primary transforms");
  add_config(mts);
  mts->add_option("--dataset", mv.dataset, "Dataset directory")->required();
  mts->add_option("--primary", mv.transforms, "Primary transform (file or built-in name; repeatable)")->required();
  mts->add_option("--q", mv.steps, "Quantization step sizes")->delimiter(',')->capture_default_str();
  mts->add_option("--alpha", mv.alpha, "Selection weight: lambda = alpha * Q^2")->capture_default_str()->check(CLI::PositiveNumber);
  mts->add_option("--split", mv.split, "Dataset split")->check(CLI::IsMember({"train", "eval"}))->capture_default_str();
  mts->add_option("--out", mv.out, "CSV output (default: stdout)");
  mts->add_option("--threads", mv.threads, "Worker cap (results do not depend on it)")->check(CLI::PositiveNumber);
  mts->callback([&] { action = [&] { return run_mts(mts, mv); }; });

  // bd
  BdArgs bd_args;
  auto* bd = app.add_subcommand("bd", "Bjontegaard BD-PSNR and BD-rate of a test curve against an anchor");
  add_config(bd);
  bd->add_option("--test", bd_args.test, "Curve CSV of the tested transform")->required();
  bd->add_option("--anchor", bd_args.anchor, "Curve CSV of the anchor")->required();
  bd->add_option("--test-label", bd_args.test_label, "Curve label within --test (default: first)");
  bd->add_option("--anchor-label", bd_args.anchor_label, "Curve label within --anchor (default: first)");
  bd->add_option("--out", bd_args.out, "JSON output (default: stdout)");
  bd->callback([&] { action = [&] { return run_bd(bd, bd_args); }; });

  // plot / basis
  PlotArgs plot_args;
  auto* plot = app.add_subcommand("plot", "SVG plot of RD curves");
  add_config(plot);
  plot->add_option("--curves", plot_args.curves, "Curve CSV files (repeatable)")->required();
  plot->add_option("--out", plot_args.out, "SVG output")->required();
  plot->callback([&] { action = [&] { return run_plot(plot, plot_args); }; });

  PlotArgs basis_args;
  auto* basis = app.add_subcommand("basis", "PGM mosaic of a transform's basis images");
  add_config(basis);
  basis->add_option("--transform", basis_args.transform, "Transform or model file, or a built-in name")->required();
  basis->add_option("--out", basis_args.out, "PGM output")->required();
  basis->callback([&] { action = [&] { return run_basis(basis, basis_args); }; });

  try {
    const auto seed = default_seed();
    ds_args.seed = seed;
    tr.config.seed = seed;
    auto args = expand_config(app, argc, argv);
    std::vector<char*> ptrs;
    for (auto& a : args) ptrs.push_back(a.data());
    app.parse(static_cast<int>(ptrs.size()), ptrs.data());
    if (!action) return kExitUsage;
    return action();
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
