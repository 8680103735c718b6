#include <gtest/gtest.h>

#include <cstring>
#include <limits>
#include <random>

#include "mekb/archive.hpp"
#include "support/support.hpp"

using namespace mekb;
using mekb::testing::compile_text;

namespace {

std::vector<std::uint8_t> bytes(const char* s) { return {s, s + std::strlen(s)}; }

const char* kClinicLike =
    "option tolerance = 1e-10\n"
    "var Visit : boolean\nvar Tb : boolean\nvar Smoke : boolean\nvar Grade : ordinal {lo < mid < hi}\n"
    "rule [0.05] Visit => Tb\nrule hs: [0.5] Smoke\nrule ground [0.3] Smoke & Tb => Grade > lo\n";

}  // namespace

TEST(Base64, KnownVectors) {
  EXPECT_EQ(detail::base64_encode(bytes("Man")), "TWFu");
  EXPECT_EQ(detail::base64_encode(bytes("Ma")), "TWE=");
  EXPECT_EQ(detail::base64_encode(bytes("M")), "TQ==");
  EXPECT_EQ(detail::base64_encode(bytes("")), "");
  EXPECT_EQ(detail::base64_decode("TWFu"), bytes("Man"));
  EXPECT_EQ(detail::base64_decode("TWE="), bytes("Ma"));
  EXPECT_EQ(detail::base64_decode("TQ=="), bytes("M"));
  EXPECT_THROW(detail::base64_decode("TQ="), Error);
  EXPECT_THROW(detail::base64_decode("T!=="), Error);
  EXPECT_THROW(detail::base64_decode("T=Q="), Error);
}

TEST(Cells, BitExactRoundTrip) {
  std::mt19937_64 rng(61);
  std::vector<double> cells{0.0, -0.0, 1.0, 1.0 / 3.0, std::numeric_limits<double>::denorm_min(),
                            std::numeric_limits<double>::max()};
  for (int i = 0; i < 100; ++i) cells.push_back(std::bit_cast<double>(rng() & 0x7fefffffffffffffULL));
  const auto back = detail::decode_cells(detail::encode_cells(cells));
  ASSERT_EQ(back.size(), cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back[i]), std::bit_cast<std::uint64_t>(cells[i]));
}

TEST(Archive, LoadReproducesEveryCell) {
  const KnowledgeBase kb = compile_text(kClinicLike);
  const KnowledgeBase back = load_archive(save_archive(kb));
  EXPECT_EQ(back.schema, kb.schema);
  EXPECT_EQ(back.rules, kb.rules);
  EXPECT_EQ(back.options, kb.options);
  EXPECT_EQ(back.tree(), kb.tree());
  ASSERT_EQ(back.dist.size(), kb.dist.size());
  for (std::size_t h = 0; h < kb.dist.size(); ++h)
    for (std::size_t i = 0; i < kb.dist.leg(h).size(); ++i)
      EXPECT_EQ(std::bit_cast<std::uint64_t>(back.dist.leg(h)[i]), std::bit_cast<std::uint64_t>(kb.dist.leg(h)[i]));
  EXPECT_EQ(back.report.status, kb.report.status);
  EXPECT_EQ(back.report.ledger.entries.size(), kb.report.ledger.entries.size());
}

TEST(Archive, SaveIsAFixedPoint) {
  const std::string once = save_archive(compile_text(kClinicLike));
  EXPECT_EQ(save_archive(load_archive(once)), once);
}

TEST(Archive, CompileIsDeterministic) {
  EXPECT_EQ(save_archive(compile_text(kClinicLike)), save_archive(compile_text(kClinicLike)));
}

TEST(Archive, RejectsForeignOrBrokenDocuments) {
  const nlohmann::json good = to_archive_json(compile_text(kClinicLike));
  EXPECT_THROW(load_archive("not json"), Error);
  EXPECT_THROW(load_archive("{}"), Error);
  auto bad_version = good;
  bad_version["version"] = 99;
  EXPECT_THROW(from_archive_json(bad_version), Error);
  auto bad_tree = good;
  bad_tree["hypertree"]["edges"] = nlohmann::json::array();
  EXPECT_THROW(from_archive_json(bad_tree), Error);
  auto bad_cells = good;
  bad_cells["tables"][0]["cells"] = "AAAA";
  EXPECT_THROW(from_archive_json(bad_cells), Error);
}

TEST(Files, MissingFileIsIoError) {
  try {
    read_file("/nonexistent/definitely/not/here.kb");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}
