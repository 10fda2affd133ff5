#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace ax {

// Dense 2-D grid indexed (row, col) == (y, x).
template <typename T>
using Grid = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using BoolGrid = Grid<bool>;
using RealGrid = Grid<double>;
using IntGrid = Grid<int>;

struct Cell {
  int x = 0;
  int y = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
};

// Ordering by (row, col); used for every deterministic tie-break.
struct RowMajorLess {
  bool operator()(const Cell& a, const Cell& b) const {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  }
};

enum class Heading : std::uint8_t { N = 0, E = 1, S = 2, W = 3 };

inline Heading turn_left(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 3) % 4); }
inline Heading turn_right(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 1) % 4); }

// Unit offsets indexed by Heading (N is row - 1).
inline constexpr std::array<Cell, 4> kHeadingStep{{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};

inline Cell step(Cell c, Heading h) {
  const Cell d = kHeadingStep[static_cast<int>(h)];
  return {c.x + d.x, c.y + d.y};
}

char heading_char(Heading h);

struct AgentPose {
  int x = 0;
  int y = 0;
  Heading heading = Heading::N;

  Cell cell() const { return {x, y}; }
  friend bool operator==(const AgentPose&, const AgentPose&) = default;
};

enum class Tile : std::uint8_t { Free = 0, Wall = 1 };

// Static occupancy of the world. Row-major, outer ring conventionally Wall.
class GridMap {
 public:
  GridMap() = default;
  GridMap(int width, int height, Tile fill = Tile::Wall);

  int width() const { return static_cast<int>(tiles_.cols()); }
  int height() const { return static_cast<int>(tiles_.rows()); }

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width() && c.y < height(); }
  Tile at(Cell c) const { return static_cast<Tile>(tiles_(c.y, c.x)); }
  bool is_free(Cell c) const { return in_bounds(c) && at(c) == Tile::Free; }
  void set(Cell c, Tile t) { tiles_(c.y, c.x) = static_cast<std::uint8_t>(t); }

  int free_count() const;
  std::vector<Cell> free_cells() const;

  const Grid<std::uint8_t>& tiles() const { return tiles_; }

  friend bool operator==(const GridMap& a, const GridMap& b);

 private:
  Grid<std::uint8_t> tiles_;
};

// '#' = Wall, '.' = Free, one line per row.
std::string to_ascii(const GridMap& map);
GridMap from_ascii(std::string_view text);
GridMap load_map(const std::filesystem::path& path);
void save_map(const std::filesystem::path& path, const GridMap& map);

// 4-connected flood fill over free cells from every seed.
BoolGrid reachable_free(const GridMap& map, const std::vector<Cell>& seeds);

}  // namespace ax
