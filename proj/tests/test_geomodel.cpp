#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "fhm/common/error.hpp"
#include "fhm/common/rng.hpp"
#include "fhm/geomodel/channel_generator.hpp"
#include "fhm/geomodel/dataset_io.hpp"
#include "fhm/geomodel/facies_grid.hpp"
#include "fhm/geomodel/pgm.hpp"

using namespace fhm;
using namespace fhm::geomodel;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "fhm_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void dump(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("facies grid indexing and validation") {
  FaciesGrid g(4, 3, 2);
  g.set(3, 2, 1);
  CHECK(g.at(3, 2) == 1);
  CHECK(g.codes()[2 * 4 + 3] == 1);
  CHECK(g.fraction(1) == doctest::Approx(1.0 / 12.0));
  CHECK_THROWS_AS(g.set(0, 0, 2), ValidationError);
  CHECK_THROWS_AS(FaciesGrid(2, 2, 1), ValidationError);
  CHECK_THROWS_AS(FaciesGrid(2, 2, 2, {0, 1, 2, 0}), ValidationError);
  CHECK_THROWS_AS(FaciesGrid(2, 2, 2, {0, 1, 1}), ValidationError);
}

TEST_CASE("one-hot encoding") {
  SUBCASE("code 1 with k=2 lights channel 1") {
    FaciesGrid g(1, 1, 2, {1});
    const auto img = to_one_hot(g, 2);
    CHECK(img.at(0, 0, 0) == 0.0);
    CHECK(img.at(1, 0, 0) == 1.0);
  }
  SUBCASE("ties go to the lowest channel") {
    OneHotImage img{1, 1, 2, {0.5, 0.5}};
    CHECK(from_soft(img).at(0, 0) == 0);
  }
  SUBCASE("round trip and unit row sums over random grids") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng rng(seed);
      const int k = 2 + static_cast<int>(seed % 4);
      FaciesGrid g(7, 5, k);
      for (int j = 0; j < 5; ++j) {
        for (int i = 0; i < 7; ++i) g.set(i, j, static_cast<std::uint8_t>(rng.uniform_int(0, k - 1)));
      }
      const auto img = to_one_hot(g);
      for (int j = 0; j < 5; ++j) {
        for (int i = 0; i < 7; ++i) {
          double sum = 0.0;
          for (int c = 0; c < k; ++c) sum += img.at(c, i, j);
          CHECK(sum == 1.0);
        }
      }
      CHECK(from_soft(img) == g);
    }
  }
  SUBCASE("code >= k is rejected") {
    FaciesGrid g(1, 1, 3, {2});
    CHECK_THROWS_AS(to_one_hot(g, 2), ValidationError);
  }
}

TEST_CASE("channel generator parameters are validated") {
  ChannelGenParams p;
  p.nx = 7;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  CHECK_THROWS_AS(generate_channel_realization(p, 1), ValidationError);
  p = {};
  p.target_fraction_min = 0.5;
  p.target_fraction_max = 0.4;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.n_channels_min = 0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("realizations are deterministic and binary") {
  const ChannelGenParams p;
  const auto a = generate_channel_realization(p, 42);
  const auto b = generate_channel_realization(p, 42);
  CHECK(a == b);
  CHECK(a.nx() == 32);
  CHECK(a.k() == 2);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto g = generate_channel_realization(p, seed);
    for (auto c : g.codes()) CHECK(c <= 1);
  }
  CHECK(generate_channel_realization(p, 43) != a);
}

TEST_CASE("mean channel fraction over 1000 seeds lies in the target band") {
  ChannelGenParams p;
  double sum = 0.0;
  int inside = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const double f = generate_channel_realization(p, seed).fraction(1);
    sum += f;
    inside += f >= p.target_fraction_min && f <= p.target_fraction_max;
  }
  const double mean = sum / 1000.0;
  CHECK(mean >= p.target_fraction_min);
  CHECK(mean <= p.target_fraction_max);
  // Rejection sampling keeps nearly every realization in band.
  CHECK(inside >= 990);
}

TEST_CASE("every channel object spans the grid along its orientation") {
  for (auto orientation : {Orientation::along_x, Orientation::along_y}) {
    ChannelGenParams p;
    p.nx = 24;
    p.ny = 40;
    p.orientation = orientation;
    const int along = orientation == Orientation::along_x ? p.nx : p.ny;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      Rng rng(seed);
      for (const auto& obj : sample_channel_objects(p, rng)) {
        int prev_lo = 0, prev_hi = 0;
        for (int col = 0; col < along; ++col) {
          const auto [lo, hi] = obj.column_span(col);
          REQUIRE(lo <= hi);  // occupied in every column before clipping
          if (col > 0) {
            // Consecutive columns overlap or touch: the band is connected.
            CHECK(lo <= prev_hi + 1);
            CHECK(hi >= prev_lo - 1);
          }
          prev_lo = lo;
          prev_hi = hi;
        }
      }
    }
  }
}

TEST_CASE("rasterized channels stay connected across the grid") {
  // Single straight-ish channel: every column holds at least one channel cell.
  ChannelGenParams p;
  p.n_channels_min = p.n_channels_max = 1;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    auto objects = sample_channel_objects(p, rng);
    objects.front().offset = p.ny / 2.0;  // keep the band inside the grid
    objects.front().amplitude = 3.0;
    const auto g = rasterize_channels(p, objects);
    for (int i = 0; i < p.nx; ++i) {
      int count = 0;
      for (int j = 0; j < p.ny; ++j) count += g.at(i, j);
      CHECK(count > 0);
    }
  }
}

TEST_CASE("datasets use derived per-realization seeds") {
  const ChannelGenParams p;
  const auto one = generate_dataset(p, 1, 9);
  REQUIRE(one.size() == 1);
  CHECK(one.front() == generate_channel_realization(p, derive_seed(9, 0)));
  const auto a = generate_dataset(p, 100, 5);
  const auto b = generate_dataset(p, 100, 5, 3);
  CHECK(a == b);
  CHECK(a[7] == generate_channel_realization(p, derive_seed(5, 7)));
  CHECK_THROWS_AS(generate_dataset(p, 0, 5), ValidationError);
}

TEST_CASE("dataset files round trip and reject corruption") {
  const auto data = generate_dataset(ChannelGenParams{}, 5, 3);
  const auto path = temp_path("round.fcds");
  write_dataset(path, data);
  CHECK(read_dataset(path) == data);

  const auto bytes = slurp(path);
  CHECK(bytes.size() == 4 + 5 * 4 + 5 * 32 * 32);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FCDS");
  // Re-writing yields identical bytes.
  write_dataset(path, read_dataset(path));
  CHECK(slurp(path) == bytes);

  SUBCASE("truncated payload") {
    dump(path, {bytes.begin(), bytes.end() - 10});
    CHECK_THROWS_AS(read_dataset(path), LengthMismatchError);
  }
  SUBCASE("trailing bytes") {
    auto longer = bytes;
    longer.push_back(0);
    dump(path, longer);
    CHECK_THROWS_AS(read_dataset(path), LengthMismatchError);
  }
  SUBCASE("wrong magic") {
    auto bad = bytes;
    bad[0] = 'X';
    dump(path, bad);
    try {
      read_dataset(path);
      FAIL("no error");
    } catch (const LengthMismatchError&) {
      FAIL("magic reported as a length mismatch");
    } catch (const FormatError&) {
    }
  }
  SUBCASE("wrong version") {
    auto bad = bytes;
    bad[4] = 9;
    dump(path, bad);
    CHECK_THROWS_AS(read_dataset(path), FormatError);
  }
  SUBCASE("truncated header") {
    dump(path, {bytes.begin(), bytes.begin() + 10});
    CHECK_THROWS_AS(read_dataset(path), LengthMismatchError);
  }
  SUBCASE("mixed grid sizes cannot be written") {
    std::vector<FaciesGrid> mixed{FaciesGrid(4, 4, 2), FaciesGrid(5, 4, 2)};
    CHECK_THROWS_AS(write_dataset(path, mixed), ValidationError);
  }
}

TEST_CASE("pgm maps") {
  FaciesGrid g(3, 2, 2, {0, 1, 0, 1, 1, 0});
  const auto path = temp_path("map.pgm");
  write_pgm(path, g);
  const auto bytes = slurp(path);
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 6);
  CHECK(std::string(bytes.begin(), bytes.begin() + static_cast<long>(header.size())) == header);
  const std::vector<unsigned char> px(bytes.begin() + static_cast<long>(header.size()), bytes.end());
  CHECK(px == std::vector<unsigned char>{0, 255, 0, 255, 255, 0});
}
