#include "dyronet/dataset/manifest.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "dyronet/error.hpp"

namespace dyronet::data {

namespace fs = std::filesystem;
using nlohmann::json;
using num::NdArray;

void write_pgm(const fs::path& path, const NdArray& frame) {
  if (frame.rank() != 3 || frame.extent(0) != 1) throw DimensionError("PGM frames are [1 x H x W]");
  const std::size_t h = frame.extent(1), w = frame.extent(2);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << w << ' ' << h << "\n255\n";
  std::vector<char> bytes(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const double v = std::clamp(std::round(frame[i]), 0.0, 255.0);
    bytes[i] = static_cast<char>(static_cast<unsigned char>(v));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

NdArray read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") throw ValidationError(path.string() + " is not a binary PGM");
  std::size_t w = 0, h = 0;
  int maxval = 0;
  auto skip_comments = [&] {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string line;
      std::getline(in, line);
      in >> std::ws;
    }
  };
  skip_comments();
  in >> w;
  skip_comments();
  in >> h;
  skip_comments();
  in >> maxval;
  in.get();
  if (!in || w == 0 || h == 0 || maxval != 255) {
    throw ValidationError(path.string() + ": unsupported PGM header");
  }
  std::vector<unsigned char> bytes(w * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw IoError(path.string() + ": truncated pixel data");
  }
  NdArray frame({1, h, w});
  for (std::size_t i = 0; i < bytes.size(); ++i) frame[i] = bytes[i];
  return frame;
}

void save_manifest(const Dataset& dataset, const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
  json clips = json::array();
  for (const Clip& clip : dataset.clips) {
    const fs::path rel_dir = fs::path("clips") / clip.id;
    fs::create_directories(root / rel_dir, ec);
    if (ec) throw IoError("cannot create " + (root / rel_dir).string());
    json frames = json::array();
    json anns = json::array();
    for (std::size_t i = 0; i < clip.frames.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%04zu.pgm", i);
      const fs::path rel = rel_dir / name;
      write_pgm(root / rel, clip.frames[i]);
      frames.push_back(rel.generic_string());
      for (const branch::Annotation& a : clip.annotations[i]) {
        anns.push_back({{"image_index", i},
                        {"bbox", {a.box.x1, a.box.y1, a.box.width(), a.box.height()}},
                        {"category_id", a.class_id},
                        {"track_id", a.track_id}});
      }
    }
    clips.push_back({{"id", clip.id},
                     {"fps", clip.fps},
                     {"motion_state", to_string(clip.motion)},
                     {"regime", clip.regime},
                     {"frames", std::move(frames)},
                     {"annotations", std::move(anns)}});
  }
  const json manifest = {{"clips", std::move(clips)}};
  std::ofstream out(root / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in " + root.string());
  out << manifest.dump(1) << '\n';
}

Dataset load_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "manifest.json" : path;
  const fs::path root = file.parent_path();
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed manifest " + file.string() + ": " + e.what());
  }
  Dataset ds;
  try {
    for (const json& jc : manifest.at("clips")) {
      Clip clip;
      clip.id = jc.at("id").get<std::string>();
      clip.fps = jc.value("fps", 30.0);
      clip.motion = parse_motion_state(jc.value("motion_state", std::string("stop")));
      clip.regime = jc.value("regime", std::string());
      for (const json& f : jc.at("frames")) {
        const fs::path p = root / f.get<std::string>();
        if (!fs::exists(p)) throw IoError("manifest references missing frame " + p.string());
        clip.frames.push_back(read_pgm(p));
      }
      clip.annotations.resize(clip.frames.size());
      for (const json& ja : jc.at("annotations")) {
        const auto idx = ja.at("image_index").get<std::size_t>();
        if (idx >= clip.frames.size()) throw ValidationError("annotation image_index out of range");
        const auto bbox = ja.at("bbox").get<std::vector<double>>();
        if (bbox.size() != 4) throw ValidationError("bbox must have 4 entries");
        if (!(bbox[2] > 0.0) || !(bbox[3] > 0.0)) {
          throw ValidationError("bbox with non-positive extent in clip " + clip.id);
        }
        branch::Annotation a;
        a.box = num::Box::from_xywh(bbox[0], bbox[1], bbox[2], bbox[3]);
        a.class_id = ja.at("category_id").get<int>();
        a.track_id = ja.value("track_id", -1);
        clip.annotations[idx].push_back(a);
      }
      ds.clips.push_back(std::move(clip));
    }
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest " + file.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace dyronet::data
