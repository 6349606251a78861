#include "fhm/geomodel/pgm.hpp"

#include <fstream>
#include <string>
#include <vector>

#include "fhm/common/error.hpp"

namespace fhm::geomodel {

void write_pgm(const std::filesystem::path& path, const FaciesGrid& grid) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot open " + path.string() + " for writing");
  const std::string header =
      "P5\n" + std::to_string(grid.nx()) + " " + std::to_string(grid.ny()) + "\n255\n";
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::vector<char> pixels(grid.size());
  const int den = grid.k() - 1;
  for (std::size_t n = 0; n < grid.size(); ++n) {
    pixels[n] = static_cast<char>((255 * grid.codes()[n] + den / 2) / den);
  }
  os.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
  if (!os) throw ValidationError("failed writing " + path.string());
}

}  // namespace fhm::geomodel
