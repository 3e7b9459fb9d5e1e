// SPDX-License-Identifier: Apache-2.0
#include <filesystem>

#include "discover/errors.hpp"
#include "discover/model.hpp"
#include "doctest.h"

using namespace discover;

TEST_CASE("model file round trip keeps parameters, tables and id") {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.init_seed = 3;
  Model m(cfg);
  const auto path = std::filesystem::temp_directory_path() / "discover_model_test.bin";
  m.save(path);
  const Model back = Model::load(path);
  CHECK(back.config() == cfg);
  CHECK(back.id() == m.id());
  CHECK(content_id(read_file(path)) == m.id());
  CHECK(back.hyper_cdf().data == m.hyper_cdf().data);
  for (const auto& name : m.params().names()) CHECK(back.params().get(name).value() == m.params().get(name).value());
  CHECK(Model(cfg).id() == m.id());
  cfg.init_seed = 4;
  CHECK_FALSE(Model(cfg).id() == m.id());
}

TEST_CASE("mismatched archives are rejected") {
  Model m(ModelConfig::tiny());
  Archive a = m.to_archive();
  a.arrays.pop_back();
  CHECK_THROWS_AS(Model::from_archive(a), ParseError);
  CHECK_THROWS_AS(parse_archive(Bytes{1, 2, 3}), ParseError);
}
