#pragma once

// Occupancy grids on disk: an 8-bit P5 PGM (0 = Occupied, 128 = Unknown,
// 255 = Free; first row is the top of the map, i.e. the largest y) plus a JSON
// sidecar {"resolution", "origin_x", "origin_y"} next to it with the extension
// replaced by ".json".
//
// Import thresholds non-canonical grey levels: < 64 Occupied, > 192 Free,
// anything else Unknown.  Canonical files round-trip byte for byte.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "baseplace/gridmap.hpp"
#include "baseplace/image.hpp"

namespace baseplace {

inline std::uint8_t map_gray(CellState s) {
  switch (s) {
    case CellState::Occupied: return 0;
    case CellState::Unknown: return 128;
    case CellState::Free: return 255;
  }
  return 128;
}

inline CellState map_state(std::uint8_t v) {
  if (v < 64) return CellState::Occupied;
  if (v > 192) return CellState::Free;
  return CellState::Unknown;
}

inline GrayImage grid_to_pgm(const OccupancyGrid& grid) {
  GrayImage img(grid.width(), grid.height());
  for (int iy = 0; iy < grid.height(); ++iy)
    for (int ix = 0; ix < grid.width(); ++ix) img.at(ix, grid.height() - 1 - iy) = map_gray(grid.at({ix, iy}));
  return img;
}

inline OccupancyGrid pgm_to_grid(const GrayImage& img, double resolution, Vec2 origin) {
  OccupancyGrid grid(img.width(), img.height(), resolution, origin);
  for (int iy = 0; iy < grid.height(); ++iy)
    for (int ix = 0; ix < grid.width(); ++ix) grid.set({ix, iy}, map_state(img.at(ix, grid.height() - 1 - iy)));
  return grid;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& pgm) {
  auto p = pgm;
  p.replace_extension(".json");
  return p;
}

inline nlohmann::json map_header(const OccupancyGrid& grid) {
  return {{"resolution", grid.resolution()}, {"origin_x", grid.origin().x()}, {"origin_y", grid.origin().y()}};
}

inline void save_map(const std::filesystem::path& pgm, const OccupancyGrid& grid) {
  detail::write_bytes(pgm.string(), encode_pgm(grid_to_pgm(grid)));
  detail::write_bytes(sidecar_path(pgm).string(), map_header(grid).dump(2) + "\n");
}

inline OccupancyGrid load_map(const std::filesystem::path& pgm) {
  auto header = nlohmann::json::parse(detail::read_bytes(sidecar_path(pgm).string()));
  double res = header.at("resolution").get<double>();
  Vec2 origin(header.at("origin_x").get<double>(), header.at("origin_y").get<double>());
  return pgm_to_grid(decode_pgm(detail::read_bytes(pgm.string())), res, origin);
}

}  // namespace baseplace
