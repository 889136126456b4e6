// fracmatch command-line interface.
//
// Exit codes: 0 success, 2 usage, 3 data format, 4 numerical failure.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fracmatch/classifier.hpp"
#include "fracmatch/error.hpp"
#include "fracmatch/features.hpp"
#include "fracmatch/heightmap.hpp"
#include "fracmatch/spectral.hpp"
#include "fracmatch/synth.hpp"

namespace fs = std::filesystem;
using namespace fracmatch;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalWarning {
  std::string message;
};

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::invalid_argument: return kExitUsage;
    case ErrorCode::degenerate_scatter:
    case ErrorCode::not_converged: return kExitNumerical;
    default: return kExitData;
  }
}

// Options shared by every subcommand. Flags given on the command line win
// over the config file; the config file wins over built-in defaults.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string bands;
  std::string mirror = "h";
  double prior = 0.5;
  double threshold = 0.5;
  bool blur = false;
  std::optional<double> pitch_um;
  PreprocessOptions prep;
  json synth = json::object();

  json to_json() const {
    json j = {{"seed", seed},
              {"bands", bands},
              {"mirror", mirror},
              {"prior", prior},
              {"threshold", threshold},
              {"blur", blur},
              {"remove_tilt", prep.remove_tilt},
              {"remove_spikes", prep.remove_spikes},
              {"spike_radius", prep.spike_radius},
              {"spike_k", prep.spike_k},
              {"taper_fraction", prep.taper_fraction}};
    j["pitch_um"] = pitch_um ? json(*pitch_um) : json(nullptr);
    return j;
  }
};

std::string fnv_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

MirrorAxis mirror_axis(const std::string& s) {
  if (s == "h") return MirrorAxis::horizontal;
  if (s == "v") return MirrorAxis::vertical;
  if (s == "off") return MirrorAxis::off;
  throw UsageError("--mirror must be one of h, v, off");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io_failure, "cannot create " + dir.string() + ": " + ec.message());
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

HeightMap load_input(const std::string& path, const RunConfig& rc) {
  const bool csv = fs::path(path).extension() == ".csv";
  if (csv && !rc.pitch_um) throw UsageError(path + ": CSV height maps carry no pitch; pass --pitch-um");
  return load_heightmap(path, csv ? HeightMapFormat::csv_grid : HeightMapFormat::hmap_binary,
                        rc.pitch_um.value_or(0.0));
}

std::vector<PairKind> kinds_from(const std::string& s) {
  if (s == "all") return {PairKind::base_tip, PairKind::replica_base, PairKind::replica_tip};
  try {
    return {parse_pair_kind(s)};
  } catch (const Error&) {
    throw UsageError("--kind must be base-tip, replica-base, replica-tip or all");
  }
}

std::vector<SurfacePair> corpus_pairs(const Corpus& c, const std::string& kind, MirrorAxis axis) {
  std::vector<SurfacePair> out;
  for (PairKind k : kinds_from(kind)) {
    auto p = c.pairs(k, axis);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<FeatureMatrix> sorted(std::vector<FeatureMatrix> fs) {
  std::sort(fs.begin(), fs.end(), [](const auto& a, const auto& b) { return a.pair_id < b.pair_id; });
  return fs;
}

// Subcommands ----------------------------------------------------------------------

struct SynthArgs {
  std::size_t rods = 10;
  std::size_t images = 6;
  std::optional<std::size_t> window;
  std::optional<double> hurst, split, rms, cutoff, rolloff, noise;
  std::size_t bubbles = 0;
  double bubble_depth = 40.0;
  double bubble_min = 70.0, bubble_max = 200.0;
};

int cmd_synth(const RunConfig& rc, const SynthArgs& a, const fs::path& out) {
  if (a.rods == 0) throw UsageError("--rods must be >= 1");
  if (a.images == 0) throw UsageError("--images must be >= 1");
  SynthConfig cfg = synth_config_from_json(rc.synth);
  cfg.seed = rc.seed;
  if (rc.pitch_um) cfg.pitch_um = *rc.pitch_um;
  if (a.window) {
    cfg.strip_height = *a.window;
    cfg.strip_width = required_strip_width(*a.window, a.images, 0.5);
  }
  if (a.hurst) cfg.hurst = *a.hurst;
  if (a.split) cfg.split_frequency = *a.split;
  if (a.rms) cfg.rms_height_um = *a.rms;
  if (a.cutoff) cfg.replica_cutoff_wavelength_um = *a.cutoff;
  if (a.rolloff) cfg.rolloff_wavelength_um = *a.rolloff;
  if (a.noise) cfg.noise_rms_um = *a.noise;
  if (a.bubbles > 0) cfg.bubble = BubbleConfig{a.bubbles, a.bubble_min, a.bubble_max, a.bubble_depth};
  const Corpus corpus = generate_corpus(cfg, a.rods, a.images);
  write_corpus(corpus, out);
  std::cout << "wrote " << corpus.rods.size() << " rods x 3 roles x " << corpus.images << " images to "
            << out.string() << '\n';
  return kExitOk;
}

int cmd_preprocess(const RunConfig& rc, const std::vector<std::string>& inputs, bool mirror_image, bool taper,
                   const fs::path& out) {
  if (inputs.empty()) throw UsageError("preprocess needs at least one --input");
  ensure_dir(out);
  json report = {{"config", rc.to_json()}, {"config_fingerprint", fnv_hex(rc.to_json().dump())}, {"images", json::array()}};
  for (const auto& in : inputs) {
    HeightMap m = load_input(in, rc);
    if (mirror_image) m = mirror(m, rc.prep.mirror_axis);
    if (rc.prep.remove_tilt) m = remove_tilt(m);
    std::size_t replaced = 0;
    if (rc.prep.remove_spikes) {
      auto r = remove_spikes(m, rc.prep.spike_radius, rc.prep.spike_k);
      replaced = r.replaced;
      m = std::move(r.map);
    }
    if (taper) m = taper_window(m, rc.prep.taper_fraction);
    const fs::path dst = out / (fs::path(in).stem().string() + ".hmap");
    save_heightmap(m, dst);
    report["images"].push_back({{"input", fs::path(in).filename().string()},
                                {"output", dst.filename().string()},
                                {"width", m.width()},
                                {"height", m.height()},
                                {"pitch_um", m.pitch_um()},
                                {"spikes_replaced", replaced}});
  }
  write_json(report, out / "preprocess.json");
  return kExitOk;
}

struct PairSource {
  std::string corpus;
  std::string kind;
  std::string features;
  std::vector<std::string> left, right;
};

std::vector<FeatureMatrix> features_from(const RunConfig& rc, const PairSource& src, const BandSet& bands,
                                         const std::string& default_kind) {
  const int sources = (!src.corpus.empty()) + (!src.features.empty()) + (!src.left.empty() || !src.right.empty());
  if (sources != 1) throw UsageError("give exactly one of --corpus, --features or --left/--right");
  if (!src.features.empty()) return read_features_csv(src.features, bands);
  if (!src.corpus.empty()) {
    const Corpus c = read_corpus(src.corpus);
    const auto pairs = corpus_pairs(c, src.kind.empty() ? default_kind : src.kind, rc.prep.mirror_axis);
    return sorted(build_features(pairs, bands, rc.prep, rc.blur));
  }
  if (src.left.empty() || src.right.empty()) throw UsageError("--left and --right are both required");
  auto load_seq = [&](const std::vector<std::string>& files, SurfaceRole role) {
    auto seq = std::make_shared<ImageSequence>();
    seq->role = role;
    for (const auto& f : files) seq->images.push_back(load_input(f, rc));
    return std::shared_ptr<const ImageSequence>(seq);
  };
  SurfacePair p;
  p.left = load_seq(src.left, SurfaceRole::base);
  p.right = load_seq(src.right, SurfaceRole::tip);
  p.mirror_right = rc.prep.mirror_axis != MirrorAxis::off;
  p.pair_id = "left~right";
  return {build_feature(p, bands, rc.prep, rc.blur)};
}

BandSet bands_or(const RunConfig& rc, const BandSet& fallback) {
  return rc.bands.empty() ? fallback : BandSet::parse(rc.bands);
}

int cmd_compare(const RunConfig& rc, const PairSource& src, const fs::path& out) {
  const BandSet bands = bands_or(rc, BandSet::classification());
  const auto features = features_from(rc, src, bands, "all");
  ensure_dir(out);
  write_features_csv(features, bands, out / "features.csv");
  std::ofstream csv(out / "correlations.csv");
  if (!csv) throw Error(ErrorCode::io_failure, "cannot write correlations.csv");
  csv << "pair_id,truth,band_lo,band_hi,image,r,fisher_z\n" << std::setprecision(17);
  for (const auto& f : features) {
    for (std::size_t b = 0; b < f.band_count; ++b) {
      for (std::size_t k = 0; k < f.image_count; ++k) {
        csv << f.pair_id << ',' << to_string(f.truth) << ',' << bands.band(b).lo << ',' << bands.band(b).hi << ','
            << k << ',' << f.raw_at(b, k) << ',' << f.at(b, k) << '\n';
      }
    }
  }
  write_json({{"config", rc.to_json()}, {"config_fingerprint", fnv_hex(rc.to_json().dump())},
              {"fingerprint", preprocess_fingerprint(rc.prep, bands, rc.blur)},
              {"pairs", features.size()}},
             out / "compare.json");
  std::cout << "compared " << features.size() << " pairs over " << bands.count() << " bands\n";
  return kExitOk;
}

int cmd_train(const RunConfig& rc, const PairSource& src, const fs::path& out) {
  const BandSet bands = bands_or(rc, BandSet::classification());
  const auto features = features_from(rc, src, bands, "base-tip");
  TrainOptions to;
  to.prior_match = rc.prior;
  to.fingerprint = preprocess_fingerprint(rc.prep, bands, rc.blur);
  const TrainedClassifier c = train(features, to);
  ensure_dir(out);
  save_model(c, out / "model.json");
  std::cout << "trained on " << features.size() << " pairs; model fingerprint " << c.fingerprint << '\n';
  if (!c.match_info.converged || !c.nonmatch_info.converged) {
    throw NumericalWarning{"fit did not converge; model written with converged=false"};
  }
  return kExitOk;
}

int cmd_classify(const RunConfig& rc, const std::string& model_path, const PairSource& src, const fs::path& out) {
  if (model_path.empty()) throw UsageError("classify needs --model");
  const TrainedClassifier c = load_model(model_path);
  const BandSet bands = bands_or(rc, c.bands);
  const std::string fp = preprocess_fingerprint(rc.prep, bands, rc.blur);
  if (fp != c.fingerprint) {
    throw Error(ErrorCode::fingerprint_mismatch, "preprocessing fingerprint " + fp + " (bands " + bands.to_string() +
                                                     ") does not match the model's " + c.fingerprint + " (bands " +
                                                     c.bands.to_string() + ")");
  }
  const auto features = features_from(rc, src, bands, "all");
  const auto reports = classify_all(c, features, rc.threshold);
  ensure_dir(out);
  write_reports_json(reports, bands, fp, out / "reports.json");
  write_reports_csv(reports, bands, out / "reports.csv");
  write_json({{"config", rc.to_json()}, {"config_fingerprint", fnv_hex(rc.to_json().dump())}, {"model", model_path}},
             out / "classify.json");
  const ConfusionCounts t = tally(reports);
  std::cout << "pairs=" << reports.size() << " match=" << (t.true_match + t.false_nonmatch)
            << " non-match=" << (t.true_nonmatch + t.false_match) << " false-positives=" << t.false_match
            << " false-negatives=" << t.false_nonmatch << " unlabeled=" << t.unknown << '\n';
  return kExitOk;
}

int cmd_sweep(const RunConfig& rc, const PairSource& src, std::size_t bootstrap, const fs::path& out) {
  const BandSet bands = bands_or(rc, BandSet::sweep());
  SweepOptions so;
  so.bootstrap = bootstrap;
  so.seed = rc.seed;
  std::vector<SweepRow> rows;
  std::optional<BandLayout> layout;
  for (bool blur : rc.blur ? std::vector<bool>{false, true} : std::vector<bool>{false}) {
    RunConfig r = rc;
    r.blur = blur;
    const auto features = features_from(r, src, bands, "replica-tip");
    if (!layout) {
      if (src.corpus.empty()) throw UsageError("sweep needs --corpus");
      const Corpus c = read_corpus(src.corpus);
      layout.emplace(layout_for(c.rods.front().tip, bands));
    }
    auto part = band_sweep(features, blur, *layout, so);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  ensure_dir(out);
  write_sweep_csv(rows, out / "sweep.csv");
  json flags = json::array();
  for (std::size_t b = 0; b < bands.count(); ++b) {
    flags.push_back({{"band_lo", bands.band(b).lo},
                     {"band_hi", bands.band(b).hi},
                     {"frequency_lines", layout->frequency_lines(b)},
                     {"low_resolution", layout->low_resolution(b)}});
  }
  write_json({{"config", rc.to_json()}, {"config_fingerprint", fnv_hex(rc.to_json().dump())}, {"bootstrap", bootstrap}, {"bands", flags}}, out / "sweep.json");
  std::cout << "wrote " << rows.size() << " sweep rows\n";
  return kExitOk;
}

// Config merge ------------------------------------------------------------------------

template <class T>
void merge(const json& cfg, const char* key, const CLI::Option* opt, T& field) {
  if (opt->count() == 0 && cfg.contains(key) && !cfg.at(key).is_null()) field = cfg.at(key).get<T>();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fracmatch: fracture surface comparison by banded spectral correlation"};
  app.require_subcommand(1);
  app.fallthrough();

  RunConfig rc;
  std::string config_path, out_dir = ".";
  std::string mirror = "h";
  double pitch = 0.0;
  bool no_tilt = false, no_spikes = false;
  auto* o_seed = app.add_option("--seed", rc.seed, "Random seed");
  app.add_option("--config", config_path, "JSON config file; flags override its values");
  app.add_option("--out", out_dir, "Output directory");
  auto* o_bands = app.add_option("--bands", rc.bands, "Band thresholds in mm^-1, e.g. 5,10,20");
  auto* o_mirror = app.add_option("--mirror", mirror, "Mirror axis for tips")->check(CLI::IsMember({"h", "v", "off"}));
  auto* o_prior = app.add_option("--prior", rc.prior, "Prior probability of a match")->check(CLI::Range(0.0, 1.0));
  auto* o_threshold = app.add_option("--threshold", rc.threshold, "Posterior decision threshold");
  auto* o_blur = app.add_flag("--blur", rc.blur, "Apply the 3x3 spectral blur");
  auto* o_pitch = app.add_option("--pitch-um", pitch, "Pixel pitch in micrometres (required for CSV input)");
  auto* o_no_tilt = app.add_flag("--no-tilt", no_tilt, "Skip tilt removal");
  auto* o_no_spikes = app.add_flag("--no-spikes", no_spikes, "Skip spike removal");
  auto* o_taper = app.add_option("--taper", rc.prep.taper_fraction, "Tukey edge fraction per side");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--rods", sa.rods, "Number of rods");
  synth->add_option("--images", sa.images, "Images per surface");
  synth->add_option("--window", sa.window, "Square window side in pixels");
  synth->add_option("--hurst", sa.hurst, "Hurst exponent");
  synth->add_option("--split-frequency", sa.split, "Frequency (mm^-1) where halves decorrelate");
  synth->add_option("--rms-um", sa.rms, "RMS height");
  synth->add_option("--replica-cutoff-um", sa.cutoff, "Replica cutoff wavelength");
  synth->add_option("--rolloff-um", sa.rolloff, "Roll-off wavelength");
  synth->add_option("--noise-um", sa.noise, "Acquisition noise RMS");
  synth->add_option("--bubbles", sa.bubbles, "Bubbles per replica");
  synth->add_option("--bubble-depth-um", sa.bubble_depth, "Bubble depth");
  synth->add_option("--bubble-min-um", sa.bubble_min, "Smallest bubble diameter");
  synth->add_option("--bubble-max-um", sa.bubble_max, "Largest bubble diameter");

  std::vector<std::string> pre_inputs;
  bool pre_mirror = false, pre_taper = false;
  auto* preprocess = app.add_subcommand("preprocess", "Tilt and spike removal of height maps");
  preprocess->add_option("--input", pre_inputs, "Height map files (.hmap or .csv)")->required();
  preprocess->add_flag("--mirror-image", pre_mirror, "Mirror before processing");
  preprocess->add_flag("--apply-taper", pre_taper, "Apply the Tukey window");

  PairSource src;
  auto add_source = [&](CLI::App* sub) {
    sub->add_option("--corpus", src.corpus, "Corpus directory");
    sub->add_option("--kind", src.kind, "base-tip, replica-base, replica-tip or all");
    sub->add_option("--features", src.features, "Feature CSV from compare");
    sub->add_option("--left", src.left, "Left image sequence files");
    sub->add_option("--right", src.right, "Right image sequence files");
  };
  auto* compare = app.add_subcommand("compare", "Band correlation features of surface pairs");
  add_source(compare);
  auto* train_cmd = app.add_subcommand("train", "Fit the match and non-match models");
  add_source(train_cmd);
  std::string model_path;
  auto* classify_cmd = app.add_subcommand("classify", "Posterior match probabilities");
  add_source(classify_cmd);
  classify_cmd->add_option("--model", model_path, "Model file from train")->required();
  std::size_t bootstrap = 2000;
  auto* sweep = app.add_subcommand("sweep", "Band-sweep mean correlations with bootstrap intervals");
  add_source(sweep);
  sweep->add_option("--bootstrap", bootstrap, "Bootstrap resamples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    json cfg = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw Error(ErrorCode::io_failure, "cannot open config " + config_path);
      try {
        in >> cfg;
      } catch (const json::exception& e) {
        throw Error(ErrorCode::parse_error, config_path + ": " + e.what());
      }
      if (!cfg.is_object()) throw Error(ErrorCode::parse_error, config_path + ": expected a JSON object");
    }
    merge(cfg, "seed", o_seed, rc.seed);
    merge(cfg, "bands", o_bands, rc.bands);
    merge(cfg, "mirror", o_mirror, mirror);
    merge(cfg, "prior", o_prior, rc.prior);
    merge(cfg, "threshold", o_threshold, rc.threshold);
    merge(cfg, "blur", o_blur, rc.blur);
    merge(cfg, "taper_fraction", o_taper, rc.prep.taper_fraction);
    if (o_pitch->count() > 0) {
      rc.pitch_um = pitch;
    } else if (cfg.contains("pitch_um") && !cfg.at("pitch_um").is_null()) {
      rc.pitch_um = cfg.at("pitch_um").get<double>();
    }
    if (rc.pitch_um && !(*rc.pitch_um > 0.0)) throw UsageError("--pitch-um must be positive");
    rc.prep.remove_tilt = o_no_tilt->count() ? !no_tilt : cfg.value("remove_tilt", true);
    rc.prep.remove_spikes = o_no_spikes->count() ? !no_spikes : cfg.value("remove_spikes", true);
    rc.prep.spike_radius = cfg.value("spike_radius", rc.prep.spike_radius);
    rc.prep.spike_k = cfg.value("spike_k", rc.prep.spike_k);
    if (cfg.contains("synth")) rc.synth = cfg.at("synth");
    rc.mirror = mirror;
    rc.prep.mirror_axis = mirror_axis(mirror);
    if (!(rc.prior > 0.0 && rc.prior < 1.0)) throw UsageError("--prior must lie strictly inside (0, 1)");
    if (!(rc.threshold > 0.0 && rc.threshold < 1.0)) throw UsageError("--threshold must lie strictly inside (0, 1)");

    const fs::path out = out_dir;
    if (*synth) return cmd_synth(rc, sa, out);
    if (*preprocess) return cmd_preprocess(rc, pre_inputs, pre_mirror, pre_taper, out);
    if (*compare) return cmd_compare(rc, src, out);
    if (*train_cmd) return cmd_train(rc, src, out);
    if (*classify_cmd) return cmd_classify(rc, model_path, src, out);
    if (*sweep) return cmd_sweep(rc, src, bootstrap, out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalWarning& w) {
    std::cerr << "warning: " << w.message << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    std::cerr << "error (config): " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
