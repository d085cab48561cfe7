#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>

#include "stackelberg/error.hpp"
#include "stackelberg/tensor_file.hpp"

using namespace stackelberg;

TEST_SUITE("tensor_file") {
  TEST_CASE("values round-trip exactly") {
    const std::vector<NamedTensor> ts{
        {"a", {2, 3}, {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, -0.0, std::numeric_limits<double>::denorm_min()}},
        {"scalar", {}, {42.0}},
        {"v", {4}, {std::nextafter(1.0, 2.0), 2.0, 3.0, std::numeric_limits<double>::max()}},
    };
    std::stringstream buf;
    write_tensors(buf, ts);
    const auto back = read_tensors(buf);
    REQUIRE(back.size() == ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
      CHECK(back[i].name == ts[i].name);
      CHECK(back[i].shape == ts[i].shape);
      REQUIRE(back[i].values.size() == ts[i].values.size());
      for (std::size_t k = 0; k < ts[i].values.size(); ++k) {
        CHECK(back[i].values[k] == ts[i].values[k]);
        CHECK(std::signbit(back[i].values[k]) == std::signbit(ts[i].values[k]));
      }
    }
  }

  TEST_CASE("documented layout") {
    std::stringstream buf;
    write_tensors(buf, {{"w", {2, 2}, {1.0, 2.0, 3.0, 4.5}}});
    std::string header, tag, name;
    int version = 0;
    std::size_t rank = 0, d0 = 0, d1 = 0;
    buf >> header >> version >> tag >> name >> rank >> d0 >> d1;
    CHECK(header == "named-tensors");
    CHECK(version == 1);
    CHECK(tag == "tensor");
    CHECK(name == "w");
    CHECK(rank == 2);
    CHECK(d0 == 2);
    CHECK(d1 == 2);
    double v[4];
    for (double& x : v) buf >> x;
    CHECK(v[3] == 4.5);
  }

  TEST_CASE("malformed files are configuration errors") {
    std::stringstream no_header("tensor x 1 2\n1 2\n");
    CHECK_THROWS_AS(read_tensors(no_header), ConfigError);
    std::stringstream truncated("named-tensors 1\ntensor x 1 3\n1 2\n");
    CHECK_THROWS_AS(read_tensors(truncated), ConfigError);
    std::stringstream bad_number("named-tensors 1\ntensor x 1 2\n1 abc\n");
    CHECK_THROWS_AS(read_tensors(bad_number), ConfigError);
    std::stringstream out;
    CHECK_THROWS_AS(write_tensors(out, {{"x", {3}, {1.0}}}), DimensionError);
  }

  TEST_CASE("files and lookup") {
    const std::string path = (std::filesystem::temp_directory_path() / "stackelberg_tensor_file_test.tensors").string();
    save_tensors(path, {{"alpha", {1}, {0.5}}, {"beta", {2}, {1.0, 2.0}}});
    const auto ts = load_tensors(path);
    std::remove(path.c_str());
    CHECK(find_tensor(ts, "beta").values[1] == 2.0);
    CHECK_THROWS_AS(find_tensor(ts, "gamma"), ConfigError);
    CHECK_THROWS(load_tensors(path));
  }
}
