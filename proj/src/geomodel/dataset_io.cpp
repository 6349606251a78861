#include "fhm/geomodel/dataset_io.hpp"

#include <fstream>
#include <string>

#include "fhm/common/binary_io.hpp"
#include "fhm/common/error.hpp"

namespace fhm::geomodel {

void write_dataset(const std::filesystem::path& path, std::span<const FaciesGrid> dataset) {
  if (dataset.empty()) throw ValidationError("cannot write an empty dataset");
  const auto& first = dataset.front();
  for (const auto& g : dataset) {
    if (g.nx() != first.nx() || g.ny() != first.ny() || g.k() != first.k()) {
      throw ShapeError("all grids in a dataset must share nx, ny and K");
    }
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ValidationError("cannot open " + path.string() + " for writing");
  os.write("FCDS", 4);
  io::write_le<std::uint32_t>(os, kDatasetVersion);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.size()));
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(first.nx()));
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(first.ny()));
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(first.k()));
  for (const auto& g : dataset) {
    os.write(reinterpret_cast<const char*>(g.codes().data()), static_cast<std::streamsize>(g.size()));
  }
  if (!os) throw ValidationError("failed writing " + path.string());
}

std::vector<FaciesGrid> read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open dataset " + path.string());
  io::expect_magic(is, "FCDS");
  const auto version = io::read_le<std::uint32_t>(is, "version");
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
  const auto count = io::read_le<std::uint32_t>(is, "count");
  const auto nx = io::read_le<std::uint32_t>(is, "nx");
  const auto ny = io::read_le<std::uint32_t>(is, "ny");
  const auto k = io::read_le<std::uint32_t>(is, "K");
  if (nx == 0 || ny == 0 || k < 2 || k > 256) throw FormatError("invalid dataset header");

  const std::size_t cells = static_cast<std::size_t>(nx) * ny;
  std::vector<FaciesGrid> out;
  out.reserve(count);
  std::vector<std::uint8_t> buf(cells);
  for (std::uint32_t r = 0; r < count; ++r) {
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(cells));
    if (is.gcount() != static_cast<std::streamsize>(cells)) {
      throw LengthMismatchError("dataset payload truncated at realization " + std::to_string(r) + " of " +
                                std::to_string(count));
    }
    try {
      out.emplace_back(static_cast<int>(nx), static_cast<int>(ny), static_cast<int>(k), buf);
    } catch (const ValidationError& e) {
      throw FormatError(std::string("corrupt dataset payload: ") + e.what());
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw LengthMismatchError("dataset has trailing bytes beyond the declared count");
  }
  return out;
}

}  // namespace fhm::geomodel
