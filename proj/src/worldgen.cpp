#include "ax/worldgen.hpp"

#include <algorithm>
#include <numeric>

#include "ax/error.hpp"
#include "ax/rng.hpp"

namespace ax {
namespace {

bool has_door(const std::vector<Cell>& doors, Cell c) {
  return std::find(doors.begin(), doors.end(), c) != doors.end();
}

// Wall positions inside `r` that leave both children at least kMinRoomSide
// wide and do not seal a door in the enclosing walls.
std::vector<int> vertical_splits(const Rect& r, const std::vector<Cell>& doors) {
  std::vector<int> out;
  for (int c = r.x + kMinRoomSide; c <= r.x + r.w - 1 - kMinRoomSide; ++c)
    if (!has_door(doors, {c, r.y - 1}) && !has_door(doors, {c, r.y + r.h})) out.push_back(c);
  return out;
}

std::vector<int> horizontal_splits(const Rect& r, const std::vector<Cell>& doors) {
  std::vector<int> out;
  for (int row = r.y + kMinRoomSide; row <= r.y + r.h - 1 - kMinRoomSide; ++row)
    if (!has_door(doors, {r.x - 1, row}) && !has_door(doors, {r.x + r.w, row})) out.push_back(row);
  return out;
}

int axis_capacity(int interior) { return (interior + 1) / (kMinRoomSide + 1); }

RoomLayout partition(const MapSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  const int cap = axis_capacity(spec.width - 2) * axis_capacity(spec.height - 2);
  const int target = uniform_int(rng, spec.rooms.min, std::min(spec.rooms.max, cap));

  RoomLayout out{GridMap(spec.width, spec.height, Tile::Wall), {}, {}};
  const Rect interior{1, 1, spec.width - 2, spec.height - 2};
  for (int y = interior.y; y < interior.y + interior.h; ++y)
    for (int x = interior.x; x < interior.x + interior.w; ++x) out.map.set({x, y}, Tile::Free);
  out.rooms.push_back(interior);

  while (static_cast<int>(out.rooms.size()) < target) {
    std::vector<std::size_t> candidates;
    std::vector<double> weights;
    for (std::size_t i = 0; i < out.rooms.size(); ++i) {
      const Rect& r = out.rooms[i];
      if (!vertical_splits(r, out.doors).empty() || !horizontal_splits(r, out.doors).empty()) {
        candidates.push_back(i);
        weights.push_back(static_cast<double>(r.w) * r.h);
      }
    }
    if (candidates.empty()) break;
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    const std::size_t idx = candidates[pick(rng)];
    const Rect r = out.rooms[idx];

    const auto vs = vertical_splits(r, out.doors);
    const auto hs = horizontal_splits(r, out.doors);
    bool vertical;
    if (vs.empty()) vertical = false;
    else if (hs.empty()) vertical = true;
    else if (r.w != r.h) vertical = r.w > r.h;
    else vertical = uniform_int(rng, 0, 1) == 0;

    Rect a = r;
    Rect b = r;
    if (vertical) {
      const int c = vs[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(vs.size()) - 1))];
      for (int y = r.y; y < r.y + r.h; ++y) out.map.set({c, y}, Tile::Wall);
      const Cell door{c, uniform_int(rng, r.y, r.y + r.h - 1)};
      out.map.set(door, Tile::Free);
      out.doors.push_back(door);
      a.w = c - r.x;
      b.x = c + 1;
      b.w = r.x + r.w - c - 1;
    } else {
      const int row = hs[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(hs.size()) - 1))];
      for (int x = r.x; x < r.x + r.w; ++x) out.map.set({x, row}, Tile::Wall);
      const Cell door{uniform_int(rng, r.x, r.x + r.w - 1), row};
      out.map.set(door, Tile::Free);
      out.doors.push_back(door);
      a.h = row - r.y;
      b.y = row + 1;
      b.h = r.y + r.h - row - 1;
    }
    out.rooms[idx] = a;
    out.rooms.push_back(b);
  }
  return out;
}

}  // namespace

RoomLayout generate_rooms(const MapSpec& spec) {
  if (spec.width < 7 || spec.height < 7)
    throw Error(ErrorKind::InvalidSpec, "map must be at least 7x7");
  if (spec.rooms.min < 1 || spec.rooms.min > spec.rooms.max)
    throw Error(ErrorKind::InvalidSpec, "room count range is empty");
  const int cap = axis_capacity(spec.width - 2) * axis_capacity(spec.height - 2);
  if (spec.rooms.min > cap)
    throw Error(ErrorKind::InvalidSpec, "map too small to host " + std::to_string(spec.rooms.min) +
                                            " rooms (capacity " + std::to_string(cap) + ")");

  // Door placement can occasionally block every remaining split before the
  // minimum is met; retry on a derived seed stream.
  constexpr int kAttempts = 64;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    const std::uint64_t seed = attempt == 0 ? spec.seed : derive_seed(spec.seed, 0x6d6170, attempt);
    RoomLayout layout = partition(spec, seed);
    if (static_cast<int>(layout.rooms.size()) >= spec.rooms.min) return layout;
  }
  throw Error(ErrorKind::InvalidSpec, "could not place the minimum room count");
}

std::vector<AgentPose> spawn_agents(const GridMap& map, int n, std::uint64_t seed) {
  std::vector<Cell> free = map.free_cells();
  if (n < 0 || n > static_cast<int>(free.size()))
    throw Error(ErrorKind::NotEnoughFreeCells,
                std::to_string(n) + " agents, " + std::to_string(free.size()) + " free cells");
  Rng rng(seed);
  // Partial Fisher-Yates: the first n entries are a uniform draw without replacement.
  std::vector<AgentPose> poses;
  poses.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int j = uniform_int(rng, i, static_cast<int>(free.size()) - 1);
    std::swap(free[static_cast<std::size_t>(i)], free[static_cast<std::size_t>(j)]);
    const Cell c = free[static_cast<std::size_t>(i)];
    poses.push_back({c.x, c.y, static_cast<Heading>(uniform_int(rng, 0, 3))});
  }
  return poses;
}

}  // namespace ax
