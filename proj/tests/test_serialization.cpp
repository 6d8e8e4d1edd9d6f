#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "fhc/bitstream.hpp"
#include "fhc/config.hpp"
#include "fhc/dataset.hpp"
#include "fhc/models.hpp"

using namespace fhc;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("fhc_test_" + std::to_string(std::rand()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("bitstream headers round-trip every scheme variant") {
  FrameBitstream f;
  f.scheme = SchemeId::neural;
  f.scenario = 1;
  f.n_prime = 360;
  f.n_t = 1;
  f.q_s = 8;
  f.sym_count = 360;
  f.rate_index = 3;
  f.t_factors = {200};
  f.payload = {1, 2, 3, 4, 5};
  f.payload_bits = 40;
  const FrameBitstream b = parse_bitstream(serialize(f), f.payload_bits);
  REQUIRE(b.scheme == f.scheme);
  REQUIRE(b.scenario == 1);
  REQUIRE(b.n_prime == 360);
  REQUIRE(b.n_t == 1);
  REQUIRE(b.q_s == 8);
  REQUIRE(b.sym_count == 360);
  REQUIRE(b.rate_index == 3);
  REQUIRE(b.t_factors == f.t_factors);
  REQUIRE(b.payload == f.payload);

  FrameBitstream r;
  r.scheme = SchemeId::refinement;
  r.scenario = 0;
  r.n_prime = 320;
  r.n_t = 1;
  r.q_s = 8;
  r.sym_count = 320;
  r.layer_index = 2;
  r.t_factors = {7};
  r.payload = {9};
  const FrameBitstream rb = parse_bitstream(serialize(r));
  REQUIRE(rb.layer_index == 2);

  // Version/magic errors.
  auto bytes = serialize(f);
  bytes[0] = 'X';
  REQUIRE_THROWS_AS(parse_bitstream(bytes), StreamError);
  bytes = serialize(f);
  bytes[4] = 9;
  REQUIRE_THROWS_AS(parse_bitstream(bytes), StreamError);
}

TEST_CASE("stream files hold multiple frames") {
  TempDir tmp;
  std::vector<FrameBitstream> frames(3);
  for (std::size_t i = 0; i < 3; ++i) {
    frames[i].scheme = SchemeId::scalar_q;
    frames[i].n_prime = 40;
    frames[i].n_t = 1;
    frames[i].q_s = 8;
    frames[i].t_factors = {static_cast<std::uint32_t>(i + 1)};
    frames[i].payload = {static_cast<std::uint8_t>(i), 0x55};
    frames[i].payload_bits = 16;
  }
  write_stream_file(tmp.file("x.cprz"), frames);
  const auto back = read_stream_file(tmp.file("x.cprz"));
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(back[i].t_factors == frames[i].t_factors);
    REQUIRE(back[i].payload == frames[i].payload);
  }
}

TEST_CASE("dataset files: same seed gives byte-identical output, frames round-trip") {
  TempDir tmp;
  RunConfig cfg = default_config(Scenario::uplink);
  cfg.n_fft = 128;
  cfg.n_sym = 56;
  cfg.n_cp = 16;
  const auto spec = cfg.frame_spec();
  auto frames1 = generate_frames(spec, cfg.channel, 20, 77, 1);
  auto frames2 = generate_frames(spec, cfg.channel, 20, 77, 2);  // threads differ
  for (std::size_t i = 0; i < frames1.size(); ++i) REQUIRE(frames1[i] == frames2[i]);

  write_dataset(tmp.file("a.cprf"), *spec, frames1);
  write_dataset(tmp.file("b.cprf"), *spec, frames1);
  std::ifstream fa(tmp.file("a.cprf"), std::ios::binary);
  std::ifstream fb(tmp.file("b.cprf"), std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(fa)), {});
  std::string sb((std::istreambuf_iterator<char>(fb)), {});
  REQUIRE(sa == sb);

  Dataset ds = read_dataset(tmp.file("a.cprf"));
  REQUIRE(ds.spec->scenario == Scenario::uplink);
  REQUIRE(ds.spec->n_fft == 128);
  REQUIRE(ds.frames.size() == 20);
  REQUIRE(ds.frames[0].size() == 144);  // n_fft + n_cp
  // float32 storage: round-trip at single precision.
  for (std::size_t i = 0; i < ds.frames[0].size(); ++i) {
    REQUIRE(ds.frames[0][i].real() ==
            static_cast<double>(static_cast<float>(frames1[0][i].real())));
  }
}

TEST_CASE("§V-sized datasets: downlink frames 512, uplink 576 samples") {
  RunConfig dl = default_config(Scenario::downlink);
  RunConfig ul = default_config(Scenario::uplink);
  REQUIRE(generate_frames(dl.frame_spec(), dl.channel, 1, 1, 1)[0].size() == 512);
  REQUIRE(generate_frames(ul.frame_spec(), ul.channel, 1, 1, 1)[0].size() == 576);
}

TEST_CASE("model bundle round-trips arrays bit-exactly") {
  TempDir tmp;
  ModelBundle b;
  b.config_json() = "{\"x\":1}";
  Rng rng(5);
  nn::Mat m(7, 3);
  for (auto& v : m.a) v = rng.uniform(-1.0, 1.0);
  b.put_mat("w.mat", m);
  b.put_u32("counts", {1, 2, 3, 65536});
  b.put_i32("support", {-5, 9});
  b.put_u8("lengths", {4, 4, 5});
  b.save(tmp.file("m.cprb"));
  ModelBundle back = ModelBundle::load(tmp.file("m.cprb"));
  REQUIRE(back.config_json() == b.config_json());
  REQUIRE(back.get_mat("w.mat").a == m.a);
  REQUIRE(back.get_u32("counts") == std::vector<std::uint32_t>{1, 2, 3, 65536});
  REQUIRE(back.get_i32("support") == std::vector<std::int32_t>{-5, 9});
  REQUIRE(back.get_u8("lengths") == std::vector<std::uint8_t>{4, 4, 5});
  REQUIRE(back.digest() == b.digest());
  REQUIRE_THROWS_AS(back.get_mat("missing"), IoError);
}

TEST_CASE("neural model bundle reproduces parameters and tables") {
  TempDir tmp;
  RunConfig cfg = default_config(Scenario::downlink);
  cfg.train.hidden = 4;
  NeuralModel m;
  Rng init(6);
  m.enc.init(2, 2, 4, init);
  m.dec.init(2, 2, 4, init);
  m.prior.init(2, init);
  m.tables.push_back(build_channel_table(m.prior.channels[0], -3, 3));
  m.tables.push_back(build_channel_table(m.prior.channels[1], -2, 5));
  const std::uint64_t before = neural_model_digest(m);
  ModelBundle b = bundle_neural(m, cfg);
  b.save(tmp.file("n.cprb"));
  NeuralModel back = neural_from_bundle(ModelBundle::load(tmp.file("n.cprb")));
  REQUIRE(neural_model_digest(back) == before);
  REQUIRE(back.tables[0].lo == m.tables[0].lo);
  REQUIRE(back.tables[0].freq == m.tables[0].freq);
  REQUIRE(back.tables[1].cum == m.tables[1].cum);
}

TEST_CASE("config: defaults embed the 5G numerology and schema rejects unknown keys") {
  RunConfig cfg = default_config(Scenario::downlink);
  REQUIRE(cfg.n_fft == 512);
  REQUIRE(cfg.resampler.k == 5);
  REQUIRE(cfg.resampler.m == 8);
  REQUIRE(cfg.scaling.n_s == 320);
  REQUIRE(cfg.n_prime() == 320);
  REQUIRE(default_config(Scenario::uplink).scaling.n_s == 360);
  REQUIRE(default_config(Scenario::uplink).n_prime() == 360);
  REQUIRE(cfg.train.batch == 32);
  REQUIRE(cfg.train.lr == 1e-4);
  REQUIRE(cfg.train.plateau == 20);
  REQUIRE(cfg.train.decay == 0.8);
  REQUIRE(cfg.sweep.lambda_grid == std::vector<double>{1e2, 5e2, 1e3, 5e3});
  REQUIRE(cfg.sweep.q_grid == std::vector<int>{4, 5, 6, 7});
  REQUIRE(cfg.varrate_scales == std::vector<double>{0.1, 0.25, 0.5, 0.9, 1.0});
  REQUIRE(cfg.refine_lambdas == std::vector<double>{1e2, 1e3, 1e4});

  const Json good = config_to_json(cfg);
  const RunConfig round = config_from_json(good);
  REQUIRE(config_digest(round) == config_digest(cfg));

  Json bad = good;
  bad["frame"]["n_fftt"] = 12;
  REQUIRE_THROWS_AS(config_from_json(bad), ConfigError);
  Json bad2 = good;
  bad2["unknown_section"] = 1;
  REQUIRE_THROWS_AS(config_from_json(bad2), ConfigError);
  Json bad3 = good;
  bad3["scaling"]["q_s"] = 16;
  REQUIRE_THROWS_AS(config_from_json(bad3), ConfigError);
  Json bad4 = good;
  bad4["scenario"] = "sideways";
  REQUIRE_THROWS_AS(config_from_json(bad4), ConfigError);
}
