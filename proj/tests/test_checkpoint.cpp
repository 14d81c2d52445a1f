#include <doctest.h>

#include <sstream>

#include "ictp/checkpoint.hpp"
#include "ictp/error.hpp"
#include "model_fixtures.hpp"

using namespace ictp;

namespace {

std::string saved(const Model& m, const ModelParams& p) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, m, p);
  return os.str();
}

Checkpoint parse(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  return read_checkpoint(is);
}

}  // namespace

TEST_CASE("checkpoint round trip preserves predictions bitwise") {
  std::mt19937_64 rng(21);
  for (auto v : {ModelVariant::full, ModelVariant::sym_lt}) {
    const Model m(fixture::small_config(2, 1, 2, v));
    const auto p = fixture::random_params(m, 8);
    const auto ck = parse(saved(m, p));
    CHECK(ck.params.values == p.values);
    CHECK(ck.params.shift == p.shift);
    CHECK(ck.params.scale == p.scale);
    CHECK(ck.params.seed == p.seed);
    CHECK(ck.config.variant == v);
    CHECK(ck.config.species == m.config().species);
    const Model back(ck.config);
    const auto c = fixture::random_cluster(rng, 5);
    CHECK(energy(back, ck.params, c) == energy(m, p, c));
  }
  const auto cfg = ModelConfig::preset("desk");
  CHECK(config_from_json(config_to_json(cfg)).radial_hidden == cfg.radial_hidden);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const Model m(fixture::small_config());
  const auto bytes = saved(m, m.init_params(3));

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(parse(bad), DataError);

  bad = bytes;
  bad[8] = 7;  // version field
  CHECK_THROWS_AS(parse(bad), DataError);

  CHECK_THROWS_AS(parse(bytes.substr(0, bytes.size() - 5)), DataError);
  CHECK_THROWS_AS(parse(bytes.substr(0, 30)), DataError);
  CHECK_THROWS_AS(parse(""), DataError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.ictp"), DataError);

  const auto pos = bytes.find("\"channels\":3");
  REQUIRE(pos != std::string::npos);
  bad = bytes;
  bad[pos + 11] = '4';  // header no longer matches the stored block table
  CHECK_THROWS_AS(parse(bad), DataError);

  CHECK_THROWS_AS(config_from_json("{\"l_max\": 2}"), DataError);
  CHECK_THROWS_AS(config_from_json("not json"), DataError);

  ModelParams wrong = m.init_params(1);
  wrong.values.pop_back();
  std::ostringstream os;
  CHECK_THROWS_AS(write_checkpoint(os, m, wrong), InvalidArgument);
}
