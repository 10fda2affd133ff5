#pragma once

#include <cstdint>
#include <vector>

#include "ax/grid.hpp"

namespace ax {

struct RoomRange {
  int min = 4;
  int max = 9;
};

struct MapSpec {
  int width = 15;
  int height = 15;
  RoomRange rooms;
  std::uint64_t seed = 0;
};

// Axis-aligned block of free interior cells.
struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
};

struct RoomLayout {
  GridMap map;
  std::vector<Rect> rooms;
  std::vector<Cell> doors;
};

// Smallest interior extent of a room along either axis.
inline constexpr int kMinRoomSide = 3;

// Seeded binary-space partition of the interior into rooms. Each split wall
// receives exactly one door, so the free cells stay 4-connected.
RoomLayout generate_rooms(const MapSpec& spec);

inline GridMap generate_map(const MapSpec& spec) { return generate_rooms(spec).map; }

// `n` distinct free cells drawn uniformly, headings uniform over N/E/S/W.
std::vector<AgentPose> spawn_agents(const GridMap& map, int n, std::uint64_t seed);

}  // namespace ax
