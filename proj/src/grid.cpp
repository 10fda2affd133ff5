#include "ax/grid.hpp"

#include <deque>
#include <fstream>
#include <sstream>

#include "ax/error.hpp"

namespace ax {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::NotEnoughFreeCells: return "NotEnoughFreeCells";
    case ErrorKind::NoPath: return "NoPath";
    case ErrorKind::NoFrontier: return "NoFrontier";
    case ErrorKind::Deadlock: return "Deadlock";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::RefusesMismatched: return "RefusesMismatched";
    case ErrorKind::CorruptLog: return "CorruptLog";
    case ErrorKind::Config: return "Config";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

char heading_char(Heading h) {
  static constexpr char kChars[] = {'N', 'E', 'S', 'W'};
  return kChars[static_cast<int>(h)];
}

GridMap::GridMap(int width, int height, Tile fill)
    : tiles_(Grid<std::uint8_t>::Constant(height, width, static_cast<std::uint8_t>(fill))) {}

int GridMap::free_count() const {
  return static_cast<int>((tiles_ == static_cast<std::uint8_t>(Tile::Free)).count());
}

std::vector<Cell> GridMap::free_cells() const {
  std::vector<Cell> out;
  for (int y = 0; y < height(); ++y)
    for (int x = 0; x < width(); ++x)
      if (at({x, y}) == Tile::Free) out.push_back({x, y});
  return out;
}

bool operator==(const GridMap& a, const GridMap& b) {
  return a.width() == b.width() && a.height() == b.height() && (a.tiles_ == b.tiles_).all();
}

std::string to_ascii(const GridMap& map) {
  std::string out;
  out.reserve(static_cast<std::size_t>((map.width() + 1) * map.height()));
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) out.push_back(map.at({x, y}) == Tile::Wall ? '#' : '.');
    out.push_back('\n');
  }
  return out;
}

GridMap from_ascii(std::string_view text) {
  std::vector<std::string_view> rows;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    rows.push_back(line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  while (!rows.empty() && rows.back().empty()) rows.pop_back();
  if (rows.empty()) throw Error(ErrorKind::InvalidSpec, "empty map");

  const int width = static_cast<int>(rows.front().size());
  GridMap map(width, static_cast<int>(rows.size()));
  for (int y = 0; y < map.height(); ++y) {
    if (static_cast<int>(rows[y].size()) != width)
      throw Error(ErrorKind::InvalidSpec, "ragged map row " + std::to_string(y + 1));
    for (int x = 0; x < width; ++x) {
      switch (rows[y][x]) {
        case '#': map.set({x, y}, Tile::Wall); break;
        case '.': map.set({x, y}, Tile::Free); break;
        default:
          throw Error(ErrorKind::InvalidSpec, "bad map character at row " + std::to_string(y + 1) +
                                                  " col " + std::to_string(x + 1));
      }
    }
  }
  return map;
}

GridMap load_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open map file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_ascii(ss.str());
}

void save_map(const std::filesystem::path& path, const GridMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write map file " + path.string());
  out << to_ascii(map);
}

BoolGrid reachable_free(const GridMap& map, const std::vector<Cell>& seeds) {
  BoolGrid seen = BoolGrid::Constant(map.height(), map.width(), false);
  std::deque<Cell> queue;
  for (const Cell& s : seeds) {
    if (map.is_free(s) && !seen(s.y, s.x)) {
      seen(s.y, s.x) = true;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (const Cell& d : kHeadingStep) {
      const Cell n{c.x + d.x, c.y + d.y};
      if (map.is_free(n) && !seen(n.y, n.x)) {
        seen(n.y, n.x) = true;
        queue.push_back(n);
      }
    }
  }
  return seen;
}

}  // namespace ax
