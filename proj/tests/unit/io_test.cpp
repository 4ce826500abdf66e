#include "blt/common.hpp"
#include "blt/io.hpp"
#include "doctest.h"
#include "support.hpp"

#include <string>
#include <vector>

using namespace blt;

TEST_CASE("sha256 of known inputs") {
  CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("csv quoting round trip") {
  const std::vector<std::string> fields = {"plain", "with,comma", "say \"hi\"", "two\nlines", ""};
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += io::csv_escape(fields[i]);
  }
  line += "\nnext,row\n";
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;
  io::parse_csv(line, [&](std::vector<std::string>& f, std::size_t n) {
    rows.push_back(f);
    lines.push_back(n);
  });
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == fields);
  CHECK(lines[0] == 1);
  CHECK(lines[1] == 3);
}

TEST_CASE("format_double round trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125}) {
    CHECK(std::stod(io::format_double(v)) == v);
  }
}

TEST_CASE("atomic write then read") {
  testsupport::TempDir dir;
  const auto path = dir.path() / "a.txt";
  io::write_file_atomic(path, "hello");
  io::write_file_atomic(path, "world");
  CHECK(io::read_file(path) == "world");
  CHECK(io::sha256_file(path) == io::sha256_hex("world"));
  CHECK_THROWS_AS(io::read_file(dir.path() / "missing.txt"), Error);
}
