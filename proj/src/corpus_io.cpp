#include <fstream>

#include "fracmatch/error.hpp"
#include "fracmatch/synth.hpp"

namespace fracmatch {
namespace {

const char* const kManifest = "manifest.json";
const SurfaceRole kRoles[] = {SurfaceRole::base, SurfaceRole::tip, SurfaceRole::replica};

ImageSequence& sequence_of(RodRecord& rod, SurfaceRole role) {
  switch (role) {
    case SurfaceRole::base: return rod.base;
    case SurfaceRole::tip: return rod.tip;
    case SurfaceRole::replica: return rod.replica;
  }
  return rod.base;
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io_failure, "cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json manifest;
  manifest["format"] = "fracmatch-corpus";
  manifest["version"] = 1;
  manifest["config"] = to_json(corpus.config);
  manifest["window"] = corpus.window;
  manifest["images"] = corpus.images;
  manifest["overlap_fraction"] = 0.5;
  manifest["truth_rule"] = "pairs with the same rod label are matches";
  manifest["rods"] = nlohmann::json::array();
  for (const auto& rod : corpus.rods) {
    std::filesystem::create_directories(dir / rod.label, ec);
    if (ec) throw Error(ErrorCode::io_failure, "cannot create " + (dir / rod.label).string());
    nlohmann::json entry = {{"label", rod.label}, {"seed", rod.seed}};
    for (SurfaceRole role : kRoles) {
      nlohmann::json files = nlohmann::json::array();
      const ImageSequence& seq = rod.sequence(role);
      for (std::size_t k = 0; k < seq.count(); ++k) {
        const std::string rel = rod.label + "/" + to_string(role) + "_" + std::to_string(k) + ".hmap";
        save_heightmap(seq.images[k], dir / rel);
        files.push_back(rel);
      }
      entry[to_string(role)] = files;
    }
    manifest["rods"].push_back(entry);
  }
  std::ofstream out(dir / kManifest);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write " + (dir / kManifest).string());
  out << manifest.dump(2) << '\n';
}

Corpus read_corpus(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifest);
  if (!in) throw Error(ErrorCode::io_failure, "cannot open " + (dir / kManifest).string());
  Corpus corpus;
  try {
    nlohmann::json manifest;
    in >> manifest;
    if (manifest.at("format").get<std::string>() != "fracmatch-corpus") {
      throw Error(ErrorCode::bad_magic, "not a corpus manifest");
    }
    if (manifest.at("version").get<int>() != 1) throw Error(ErrorCode::bad_version, "unsupported corpus version");
    corpus.config = synth_config_from_json(manifest.at("config"));
    corpus.window = manifest.at("window").get<std::size_t>();
    corpus.images = manifest.at("images").get<std::size_t>();
    const double overlap = manifest.at("overlap_fraction").get<double>();
    for (const auto& entry : manifest.at("rods")) {
      RodRecord rod;
      rod.label = entry.at("label").get<std::string>();
      rod.seed = entry.at("seed").get<std::uint64_t>();
      for (SurfaceRole role : kRoles) {
        ImageSequence& seq = sequence_of(rod, role);
        seq.role = role;
        seq.overlap_fraction = overlap;
        for (const auto& rel : entry.at(to_string(role))) {
          seq.images.push_back(load_heightmap(dir / rel.get<std::string>(), HeightMapFormat::hmap_binary));
        }
        seq.validate();
      }
      corpus.rods.push_back(std::move(rod));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, (dir / kManifest).string() + ": " + e.what());
  }
  return corpus;
}

}  // namespace fracmatch
