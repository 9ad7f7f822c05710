#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "telops/common.hpp"

using namespace telops;

TEST_CASE("rng streams are reproducible and tag-separated") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(derive_seed(1, "gnn") != derive_seed(1, "mlp"));
  CHECK(derive_seed(1, "gnn") != derive_seed(2, "gnn"));
  CHECK(derive_seed(7, std::uint64_t{0}) != derive_seed(7, std::uint64_t{1}));
}

TEST_CASE("rng distributions stay in range") {
  Rng r(3);
  for (int i = 0; i < 2000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(7) < 7);
    CHECK(r.exponential(2.0) >= 0.0);
  }
  CHECK_THROWS_AS(r.below(0), InvalidArgument);
}

TEST_CASE("categorical never picks zero-weight entries") {
  Rng r(9);
  const std::vector<double> w{0.0, 1.0, 0.0, 3.0};
  std::set<std::size_t> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(r.categorical(w));
  CHECK(seen == std::set<std::size_t>{1, 3});
  CHECK_THROWS_AS(r.categorical(std::vector<double>{0.0, 0.0}), InvalidArgument);
}

TEST_CASE("poisson mean") {
  Rng r(11);
  double total = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) total += static_cast<double>(r.poisson(2.5));
  CHECK(total / n == doctest::Approx(2.5).epsilon(0.03));
  CHECK(r.poisson(0.0) == 0);
}

TEST_CASE("fnv1a matches the reference byte hash") {
  Fnv1a h;
  const std::string a = "a";
  h.update(std::as_bytes(std::span(a.data(), a.size())));
  CHECK(h.digest() == 0xaf63dc4c8601ec8cULL);
  CHECK(Fnv1a{}.digest() == 0xcbf29ce484222325ULL);

  Fnv1a x, y;
  x.update("ab");
  x.update("c");
  y.update("a");
  y.update("bc");
  CHECK(x.digest() != y.digest());
}

TEST_CASE("binio round trip is little-endian") {
  std::ostringstream os;
  binio::write_magic(os, "MAGIC");
  binio::write_u64(os, 0x0102030405060708ULL);
  binio::write_f64s(os, std::vector<double>{1.5, -0.0, 1e300});
  const std::string bytes = os.str();
  CHECK(bytes.size() == 5 + 8 + 24);
  CHECK(bytes[5] == '\x08');
  std::istringstream is(bytes);
  binio::expect_magic(is, "MAGIC");
  CHECK(binio::read_u64(is) == 0x0102030405060708ULL);
  const auto v = binio::read_f64s(is, 3);
  CHECK(v[0] == 1.5);
  CHECK(std::signbit(v[1]));
  CHECK(v[2] == 1e300);
  CHECK_THROWS_AS(binio::read_u64(is), FormatError);

  std::istringstream bad("MAGID");
  CHECK_THROWS_AS(binio::expect_magic(bad, "MAGIC"), FormatError);
}

TEST_CASE("hour of day and scenario names") {
  CHECK(hour_of_day(0) == 0);
  CHECK(hour_of_day(17 * 3600 + 3599) == 17);
  CHECK(hour_of_day(18 * 3600) == 18);
  CHECK(hour_of_day(3 * kSecondsPerDay + 23 * 3600) == 23);
  for (Scenario s : {Scenario::AllDay, Scenario::OffPeak, Scenario::Peak}) {
    CHECK(parse_scenario(to_string(s)) == s);
  }
  CHECK(parse_scenario("off-peak") == Scenario::OffPeak);
  CHECK_THROWS_AS(parse_scenario("night"), InvalidArgument);
}
