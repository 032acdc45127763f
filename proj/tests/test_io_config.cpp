#include "gnh/config.hpp"
#include "gnh/io.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace gnh;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gnh_io_" + name + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Toml, ParsesTablesValuesAndComments) {
  const auto doc = config::parse(R"(# leading comment
title = 'top'
[grid]
dim = 2            # trailing comment
cells = [8,
         16,   # per axis
]
length = 1.5e0
[bc]
scalar = "robin"
robin_b = -1_000
flag = true
name = "a \"quoted\" \\ value"
)");
  EXPECT_EQ(doc.at("title").s, "top");
  EXPECT_EQ(doc.at("grid.dim").i, 2);
  ASSERT_EQ(doc.at("grid.cells").items.size(), 2u);
  EXPECT_EQ(doc.at("grid.cells").items[1].i, 16);
  EXPECT_DOUBLE_EQ(doc.at("grid.length").f, 1.5);
  EXPECT_EQ(doc.at("bc.robin_b").i, -1000);
  EXPECT_TRUE(doc.at("bc.flag").b);
  EXPECT_EQ(doc.at("bc.name").s, "a \"quoted\" \\ value");
}

TEST(Toml, RejectsMalformedInput) {
  EXPECT_THROW(config::parse("a = 1\na = 2\n"), config::ConfigError);
  EXPECT_THROW(config::parse("[t]\n[t]\n"), config::ConfigError);
  EXPECT_THROW(config::parse("a = \"open\n"), config::ConfigError);
  EXPECT_THROW(config::parse("a = [1, 2\n"), config::ConfigError);
  EXPECT_THROW(config::parse("a.b = 1\n"), config::ConfigError);
  EXPECT_THROW(config::parse("a = {x = 1}\n"), config::ConfigError);
  EXPECT_THROW(config::parse("a = 1 2\n"), config::ConfigError);
  EXPECT_THROW(config::parse("a = 12abc\n"), config::ConfigError);
  try {
    config::parse("x = 1\ny = ?\n", "cfg");
    FAIL();
  } catch (const config::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg:2"), std::string::npos);
  }
}

TEST(RunConfig, DefaultsAndValidation) {
  auto c = config::from_document(config::parse("[grid]\ndim = 2\ncells = [4, 8]\nlength = [1.0, 2.0]\n"));
  EXPECT_EQ(c.grid.cells[1], 8);
  EXPECT_DOUBLE_EQ(c.grid.spacing[0], 0.25);
  EXPECT_DOUBLE_EQ(c.grid.spacing[1], 0.25);
  EXPECT_EQ(c.model, config::ModelKind::Scalar);

  auto bad = [](const std::string& text) { return config::from_document(config::parse(text)); };
  EXPECT_THROW(bad("[grid]\ncellz = 3\n"), config::ConfigError);
  EXPECT_THROW(bad("[tolerances]\nctol = -1\n"), config::ConfigError);
  EXPECT_THROW(bad("[tolerances]\nktol = 0\n"), config::ConfigError);
  EXPECT_THROW(bad("[run]\ntimes = [0.0, 1.0, 1.0]\n"), config::ConfigError);
  EXPECT_THROW(bad("[run]\ntimes = [1.0, 0.5]\n"), config::ConfigError);
  EXPECT_THROW(bad("[bc]\nscalar = \"robin\"\n"), config::ConfigError);
  EXPECT_THROW(bad("[model]\nkind = \"maxwell\"\n[grid]\ndim = 1\n"), config::ConfigError);
  EXPECT_THROW(bad("[grid]\ndim = 2\ncells = 6\nhole_lo = [0, 2]\nhole_hi = [3, 4]\n"), config::ConfigError);
  EXPECT_THROW(bad("[model]\nkind = \"raw\"\n"), config::ConfigError);
  EXPECT_THROW(bad("[run]\ninitial = \"file\"\n"), config::ConfigError);
}

TEST(RunConfig, OverridesReplaceScalarKeys) {
  auto doc = config::parse("[grid]\ndim = 1\ncells = 8\n[run]\ntimes = [0.0]\n");
  config::apply_override(doc, "grid.cells=32");
  config::apply_override(doc, "bc.scalar=neumann");
  config::apply_override(doc, "run.times=[0.0, 2.0]");
  const auto c = config::from_document(doc);
  EXPECT_EQ(c.grid.cells[0], 32);
  EXPECT_EQ(c.bc.scalar, ScalarBc::Neumann);
  EXPECT_EQ(c.times.size(), 2u);
  EXPECT_THROW(config::apply_override(doc, "run.times=3"), config::ConfigError);
  EXPECT_THROW(config::apply_override(doc, "novalue"), config::ConfigError);
}

TEST(RunConfig, FingerprintTracksOperatorInputsOnly) {
  const auto base = config::from_document(config::parse("[grid]\ndim = 1\ncells = 8\n"));
  auto same = config::from_document(config::parse("[grid]\ndim = 1\ncells = 8\n[run]\ntimes = [0.0, 5.0]\n[output]\ndir = \"x\"\n"));
  EXPECT_EQ(base.fingerprint(), same.fingerprint());
  for (const char* text : {"[grid]\ndim = 1\ncells = 9\n", "[grid]\ndim = 1\ncells = 8\n[bc]\nscalar = \"neumann\"\n",
                           "[grid]\ndim = 1\ncells = 8\n[tolerances]\nktol = 1e-6\n",
                           "[grid]\ndim = 1\ncells = 8\nlength = 2.0\n",
                           "[model]\nsign = \"euclidean\"\n[grid]\ndim = 1\ncells = 8\n"})
    EXPECT_NE(config::from_document(config::parse(text)).fingerprint(), base.fingerprint()) << text;
}

TEST(TextFormats, MatricesRoundTrip) {
  Matrix A(2, 3);
  A << 1.0, -0.1, 3e-300, 0.0, 1.0 / 3.0, -7.25;
  const Matrix B = io::dense_from_text(io::dense_to_text(A));
  EXPECT_EQ(A, B);
  SparseMatrix S(3, 4);
  S.insert(2, 1) = 0.1;
  S.insert(0, 3) = -2.0;
  S.insert(1, 0) = 1.0 / 7.0;
  const std::string text = io::triplets_to_text(S);
  EXPECT_EQ(text.substr(0, text.find('\n')), "3 4 3");
  EXPECT_EQ(Matrix(io::triplets_from_text(text)), Matrix(S));
  EXPECT_EQ(io::triplets_to_text(io::triplets_from_text(text)), text);
  EXPECT_THROW(io::triplets_from_text("2 2 2\n0 0 1\n0 0 2\n"), ShapeError);
  EXPECT_THROW(io::triplets_from_text("2 2 1\n2 0 1\n"), ShapeError);
  EXPECT_THROW(io::triplets_from_text("2 2 2\n0 0 1\n"), ShapeError);
  EXPECT_THROW(io::dense_from_text("2 2\n1 2\n3\n"), ShapeError);
}

TEST(TextFormats, FieldAndStateCsvAreByteStable) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  Vector q(17), p(17);
  for (Index i = 0; i < 17; ++i) {
    q(i) = nd(rng);
    p(i) = nd(rng) * 1e-12;
  }
  const std::string f = io::field_to_csv(q);
  EXPECT_EQ(io::field_from_csv(f), q);
  EXPECT_EQ(io::field_to_csv(io::field_from_csv(f)), f);
  const io::StateTable s{{"Q", q}, {"P", p}};
  const std::string text = io::state_to_csv(s);
  const auto back = io::state_from_csv(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].first, "Q");
  EXPECT_EQ(io::state_to_csv(back), text);
  EXPECT_THROW(io::field_from_csv("entity_index,value\n0,1\n2,3\n"), ShapeError);
  EXPECT_THROW(io::field_from_csv("index,value\n0,1\n"), ShapeError);
  EXPECT_THROW(io::state_from_csv("component,entity_index,value\nQ,0,1\nQ,0,2\n"), ShapeError);
  EXPECT_THROW(io::component(back, "P", 18, "state"), ShapeError);
  EXPECT_THROW(io::component(back, "Qperp", 17, "state"), ShapeError);
}

TEST(SpectralCache, RoundTripIsExact) {
  const auto dir = scratch("cache");
  ScalarModel m(make_grid(GridSpec::unit(1, 12)), BoundaryConditionSpec{ScalarBc::Neumann, {}, VectorBc::Relative});
  const auto d = m.decompose();
  const io::SpectralCache cache{dir, "entry"};
  cache.store(d, "abc", "desc");
  std::string why;
  const auto back = cache.load("abc", m.mass(), why);
  ASSERT_TRUE(back.has_value()) << why;
  EXPECT_EQ(back->eigenvalues, d.eigenvalues);
  EXPECT_EQ(back->eigenvectors, d.eigenvectors);
  EXPECT_EQ(back->kernel_count, d.kernel_count);
  EXPECT_EQ(back->ktol, d.ktol);
  EXPECT_EQ(back->op_norm, d.op_norm);
  EXPECT_EQ(back->complete, d.complete);
  // header layout
  const std::string bytes = io::read_file(cache.binary());
  EXPECT_EQ(bytes.substr(0, 4), "GNHS");
  EXPECT_EQ(bytes.size(), 4 + 4 + 3 * 8 + 8 + 8 * (d.modes() + d.size() * d.modes()));
  fs::remove_all(dir);
}

TEST(SpectralCache, RejectsForeignOrTamperedEntries) {
  const auto dir = scratch("poison");
  ScalarModel m(make_grid(GridSpec::unit(1, 10)), BoundaryConditionSpec{});
  const io::SpectralCache cache{dir, "entry"};
  cache.store(m.decompose(), "abc", "desc");
  std::string why;
  EXPECT_FALSE(cache.load("abd", m.mass(), why).has_value());
  EXPECT_NE(why.find("fingerprint"), std::string::npos);
  EXPECT_FALSE(cache.load("abc", Vector::Ones(4), why).has_value());
  // flip one payload byte
  std::string bytes = io::read_file(cache.binary());
  bytes[bytes.size() - 3] ^= 0x40;
  io::write_file_atomic(cache.binary(), bytes);
  EXPECT_FALSE(cache.load("abc", m.mass(), why).has_value());
  EXPECT_NE(why.find("hash"), std::string::npos);
  const io::SpectralCache missing{dir, "missing"};
  EXPECT_FALSE(missing.load("abc", m.mass(), why).has_value());
  fs::remove_all(dir);
}

TEST(Hashing, Fnv1aReferenceValues) {
  EXPECT_EQ(io::fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(io::fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(io::hex64(0xabcULL), "0000000000000abc");
}
