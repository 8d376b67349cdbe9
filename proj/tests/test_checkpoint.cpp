#include <cstring>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "frn/checkpoint.hpp"
#include "frn/errors.hpp"
#include "frn/synthetic.hpp"
#include "test_util.hpp"

using namespace frn;
using frn::test::TempDir;

namespace {

ModelConfig ckpt_model(bool vse) {
  ModelConfig c;
  c.feature_dim = 32;
  c.projection_dim = 12;
  c.g_layers = {16, 8};
  c.f_layers = {8, 4};
  if (vse) {
    c.vse_enabled = true;
    c.vocab_size = 5;
    c.text_projection_dim = 3;
  }
  return c;
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename U>
U read_le(const std::vector<char>& b, std::size_t at) {
  U v = 0;
  for (std::size_t k = 0; k < sizeof(U); ++k) {
    v |= static_cast<U>(static_cast<unsigned char>(b[at + k])) << (8 * k);
  }
  return v;
}

// Offset of the first tensor's first extent, walking the documented layout.
std::size_t first_extent_offset(const std::vector<char>& b, std::string* name) {
  std::size_t at = 4 + 2 + 2;
  const auto header_len = read_le<std::uint32_t>(b, at);
  at += 4 + header_len + 4;
  const auto name_len = read_le<std::uint16_t>(b, at);
  at += 2;
  *name = std::string(b.data() + at, name_len);
  at += name_len + 1;  // rank byte
  return at;
}

Vocabulary five_words() { return Vocabulary({"red", "blue", "dress", "shoe", "bag"}); }

}  // namespace

TEST_CASE("checkpoint: float round-trip is bit-exact and scores identically") {
  SyntheticConfig sc;
  sc.n_train = 100;
  sc.n_valid = 10;
  sc.n_test = 10;
  sc.seed = 1;
  const auto data = gen_synthetic(sc);
  const auto store = data.feature_store();
  const ItemResolver resolver(store, &data.catalog, nullptr);
  const ExampleSet set(resolver, std::span(data.train).first(100));

  Rng rng(2);
  const auto params = init_params<float>(ckpt_model(false), rng);
  TrainConfig tc;
  tc.seed = 99;
  tc.patience = 5;
  TempDir dir("ckpt");
  save_checkpoint(params, tc, Vocabulary{}, dir / "m.frnc");
  const auto back = load_checkpoint<float>(dir / "m.frnc");
  CHECK(back.params == params);
  CHECK(back.params.config == params.config);
  CHECK(back.train_config.seed == 99);
  CHECK(back.train_config.patience == 5);

  const auto before = score_outfits(params, set.inputs());
  const auto after = score_outfits(back.params, set.inputs());
  REQUIRE(before.size() == 100);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i].m_s == after[i].m_s);

  save_checkpoint(back.params, back.train_config, back.vocab, dir / "again.frnc");
  CHECK(read_bytes(dir / "m.frnc") == read_bytes(dir / "again.frnc"));
}

TEST_CASE("checkpoint: double and VSE round-trips keep the vocabulary") {
  Rng rng(3);
  const auto params = init_params<double>(ckpt_model(true), rng);
  TempDir dir("ckpt");
  save_checkpoint(params, TrainConfig{}, five_words(), dir / "v.frnc");
  const auto back = load_checkpoint<double>(dir / "v.frnc");
  CHECK(back.params == params);
  CHECK(back.vocab == five_words());
  CHECK(back.params.config.vse_enabled);
}

TEST_CASE("checkpoint: a VSE checkpoint cannot drive the plain scorer") {
  Rng rng(4);
  TempDir dir("ckpt");
  save_checkpoint(init_params<float>(ckpt_model(true), rng), TrainConfig{}, five_words(),
                  dir / "v.frnc");
  const auto back = load_checkpoint<float>(dir / "v.frnc");
  const std::vector<float> x(32, 0.5f);
  const std::vector<ItemInput> outfit{{"a", x, {}}, {"b", x, {}}};
  CHECK_THROWS_AS(score_outfit(back.params, outfit), ConfigError);
}

TEST_CASE("checkpoint: corrupt files") {
  Rng rng(5);
  TempDir dir("ckpt");
  const auto path = dir / "m.frnc";
  save_checkpoint(init_params<float>(ckpt_model(false), rng), TrainConfig{}, Vocabulary{}, path);
  const auto good = read_bytes(path);

  SUBCASE("tampered shape header names the tensor") {
    auto bytes = good;
    std::string name;
    const std::size_t at = first_extent_offset(bytes, &name);
    bytes[at] = static_cast<char>(bytes[at] + 1);
    write_bytes(path, bytes);
    try {
      (void)load_checkpoint<float>(path);
      FAIL("expected ShapeHeaderError");
    } catch (const ShapeHeaderError& e) {
      CHECK(std::string(e.what()).find(name) != std::string::npos);
    }
  }
  SUBCASE("truncation") {
    for (std::size_t cut : {std::size_t{3}, std::size_t{9}, good.size() / 2, good.size() - 1}) {
      write_bytes(path, std::vector<char>(good.begin(), good.begin() + cut));
      CHECK_THROWS_AS(load_checkpoint<float>(path), FormatError);
    }
    write_bytes(path, std::vector<char>(good.begin(), good.end() - 4));
    CHECK_THROWS_AS(load_checkpoint<float>(path), TruncatedError);
  }
  SUBCASE("bad magic") {
    auto bytes = good;
    bytes[0] = 'X';
    write_bytes(path, bytes);
    CHECK_THROWS_AS(load_checkpoint<float>(path), BadMagicError);
  }
  SUBCASE("unknown version") {
    auto bytes = good;
    bytes[4] = 7;
    write_bytes(path, bytes);
    CHECK_THROWS_AS(load_checkpoint<float>(path), VersionError);
  }
  SUBCASE("scalar width mismatch") {
    CHECK_THROWS_AS(load_checkpoint<double>(path), FormatError);
  }
  SUBCASE("trailing bytes") {
    auto bytes = good;
    bytes.push_back(0);
    write_bytes(path, bytes);
    CHECK_THROWS_AS(load_checkpoint<float>(path), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint<float>(dir / "absent.frnc"), IoError);
  }
}

TEST_CASE("config JSON round-trips") {
  const ModelConfig m = ckpt_model(true);
  CHECK(model_config_from_json(to_json(m)) == m);
  TrainConfig t;
  t.learning_rate = 0.005;
  t.max_epochs = 9;
  const TrainConfig back = train_config_from_json(to_json(t));
  CHECK(back.learning_rate == 0.005);
  CHECK(back.max_epochs == 9);
}
