#include <gtest/gtest.h>

#include <thread>

#include "mekb/service.hpp"
#include "support/support.hpp"

using namespace mekb;
using nlohmann::json;

namespace {

const char* kImplicationFloat = "var A : boolean\nvar B : boolean\nrule [1.0] A => B\n";

// Real server on an ephemeral loopback port.
class Running {
 public:
  explicit Running(KnowledgeBase kb) : service_(std::move(kb)) {
    service_.register_routes(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Running() {
    server_.stop();
    thread_.join();
  }

  Service& service() { return service_; }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(30, 0);
    return c;
  }

  json get(const std::string& path, int expect = 200) const {
    auto res = client().Get(path);
    EXPECT_TRUE(res) << path;
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << path << ": " << res->body;
    return json::parse(res->body);
  }
  json post(const std::string& path, const json& body, int expect = 200) const {
    auto res = client().Post(path, body.dump(), "application/json");
    EXPECT_TRUE(res) << path;
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << path << ": " << res->body;
    return json::parse(res->body);
  }
  std::string new_session() const { return post("/sessions", json::object(), 201)["session"]; }

 private:
  Service service_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

KnowledgeBase clinic() {
  return compile(parse_kb(read_file(std::string(MEKB_SOURCE_DIR) + "/kb/chest_clinic.kb")));
}

}  // namespace

TEST(Service, FreshUniformMarginals) {
  Running s(mekb::testing::compile_text("var A : boolean\nvar B : boolean\n"));
  const json m = s.get("/kb/marginals")["marginals"];
  EXPECT_EQ(m["A"]["t"], 0.5);
  EXPECT_EQ(m["B"]["f"], 0.5);
}

TEST(Service, KbDocument) {
  Running s(mekb::testing::compile_text(kImplicationFloat));
  const json kb = s.get("/kb");
  EXPECT_EQ(kb["variables"].size(), 2u);
  EXPECT_EQ(kb["rules"][0]["text"], "[1.000000] A => B");
  EXPECT_EQ(kb["report"]["status"], "converged");
}

TEST(Service, EvidenceOnImplication) {
  Running s(mekb::testing::compile_text(kImplicationFloat));
  const std::string id = s.new_session();
  const json r = s.post("/sessions/" + id + "/evidence", {{"set", {{"A", "t"}}}});
  EXPECT_EQ(r["marginals"]["B"]["f"], 0.0);
  EXPECT_EQ(r["marginals"]["B"]["t"], 1.0);
  EXPECT_EQ(r["evidence"]["A"], "t");
}

TEST(Service, ImpossibleEvidenceLeavesTheSessionAlone) {
  Running s(mekb::testing::compile_text(kImplicationFloat));
  const std::string id = s.new_session();
  const json first = s.post("/sessions/" + id + "/evidence", {{"set", {{"A", "t"}}}});
  const json err = s.post("/sessions/" + id + "/evidence", {{"set", {{"B", "f"}}}}, 422);
  EXPECT_EQ(err["conjunct"], "B = f");
  // a no-op request returns the state from before the failure
  const json now = s.post("/sessions/" + id + "/evidence", json::object());
  EXPECT_EQ(now["marginals"], first["marginals"]);
  EXPECT_EQ(now["evidence"], first["evidence"]);
}

TEST(Service, SetThenClearRestoresBaseMarginals) {
  Running s(clinic());
  const json base = s.get("/kb/marginals")["marginals"];
  const std::string id = s.new_session();
  s.post("/sessions/" + id + "/evidence", {{"set", {{"Dyspnoea", "t"}, {"VisitAsia", "t"}}}});
  s.post("/sessions/" + id + "/evidence", {{"clear", {"VisitAsia"}}});
  const json cleared = s.post("/sessions/" + id + "/evidence", {{"clear_all", true}});
  EXPECT_EQ(cleared["marginals"], base);
  EXPECT_TRUE(cleared["evidence"].empty());
}

TEST(Service, SessionsAreIsolated) {
  Running s(clinic());
  const std::string a = s.new_session(), b = s.new_session();
  const json ra = s.post("/sessions/" + a + "/evidence", {{"set", {{"Smoking", "t"}}}});
  const json rb = s.post("/sessions/" + b + "/evidence", {{"set", {{"Smoking", "f"}}}});
  EXPECT_EQ(ra["marginals"]["Smoking"]["t"], 1.0);
  EXPECT_EQ(rb["marginals"]["Smoking"]["t"], 0.0);
  const json again = s.post("/sessions/" + a + "/evidence", json::object());
  EXPECT_EQ(again["marginals"], ra["marginals"]);
}

TEST(Service, UnknownSessionIs404) {
  Running s(mekb::testing::compile_text(kImplicationFloat));
  s.post("/sessions/nope/evidence", {{"set", {{"A", "t"}}}}, 404);
  s.post("/sessions/nope/query", {{"imperatives", {"A"}}}, 404);
}

TEST(Service, BadRequestsAre400) {
  Running s(mekb::testing::compile_text(kImplicationFloat));
  const std::string id = s.new_session();
  s.post("/sessions/" + id + "/evidence", {{"set", {{"Q", "t"}}}}, 400);
  s.post("/sessions/" + id + "/query", {{"imperatives", {"A &"}}}, 400);
  s.get("/kb/graph?kind=cloud", 400);
  auto res = s.client().Post("/sessions/" + id + "/query", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

// Same engine path as the library call, so answers are identical.
TEST(Service, ClinicQueryEqualsLibraryAndOracle) {
  const KnowledgeBase kb = clinic();
  const QuerySpec spec = parse_query("assume [0.9] * => (Bronchitis | Cancer)\neval Smoking\n", kb.schema);
  const QueryResult direct = complex_query(kb.dist, spec, kb.options, kb.schema);
  Running s(kb);
  const std::string id = s.new_session();
  const json r = s.post("/sessions/" + id + "/query",
                        {{"hypotheticals", {"[0.9] * => (Bronchitis | Cancer)"}},
                         {"imperatives", {{{"conclusion", "Smoking"}}}}});
  EXPECT_EQ(r["answers"][0]["probability"].get<double>(), *direct.answers[0].probability);
  Rule h = spec.hypotheticals[0];
  const OracleResult o = oracle_project(to_explicit_joint(kb.dist, kb.schema), {h}, 1e-12, 10000);
  EXPECT_NEAR(r["answers"][0]["probability"].get<double>(),
              sentence_probability(o.joint, parse_fact("Smoking", kb.schema)), 1e-7);
  // text form
  const json t = s.post("/sessions/" + id + "/query",
                        {{"text", "assume [0.9] * => (Bronchitis | Cancer)\neval Smoking\n"}});
  EXPECT_EQ(t["answers"], r["answers"]);
}

TEST(Service, QueryRunsOnTheSessionSnapshot) {
  Running s(mekb::testing::compile_text(kImplicationFloat));
  const std::string id = s.new_session();
  s.post("/sessions/" + id + "/evidence", {{"set", {{"A", "t"}}}});
  const json r = s.post("/sessions/" + id + "/query", {{"imperatives", {"B"}}});
  EXPECT_EQ(r["answers"][0]["probability"], 1.0);
}

TEST(Service, InfeasibleHypotheticalsAre422) {
  Running s(mekb::testing::compile_text(kImplicationFloat));
  const std::string id = s.new_session();
  const json r = s.post("/sessions/" + id + "/query",
                        {{"hypotheticals", {"[0.5] A & !B"}}, {"imperatives", {"B"}}}, 422);
  EXPECT_EQ(r["rules"], json::array({"H1"}));
}

TEST(Service, Graphs) {
  Running s(mekb::testing::compile_text("var A : boolean\nvar B : boolean\nvar C : boolean\nrule [0.9] A & B => C\n"));
  EXPECT_EQ(s.get("/kb/graph?kind=dependency")["edges"].size(), 3u);
  EXPECT_EQ(s.get("/kb/graph?kind=mixed")["edges"].size(), 2u);  // two arrows into C
  EXPECT_EQ(s.get("/kb/graph?kind=structure")["nodes"].size(), 1u);
  auto dot = s.client().Get("/kb/graph?kind=dependency&format=dot");
  ASSERT_TRUE(dot);
  EXPECT_EQ(dot->body.rfind("graph dependency {", 0), 0u);
}

TEST(Service, Ledger) {
  Running s(mekb::testing::compile_text(kImplicationFloat));
  const json l = s.get("/kb/ledger");
  ASSERT_EQ(l["entries"].size(), 1u);
  EXPECT_NEAR(l["entries"][0]["increment_bits"].get<double>(), std::log2(4.0 / 3.0), 1e-12);
  auto csv = s.client().Get("/kb/ledger?format=csv");
  ASSERT_TRUE(csv);
  EXPECT_EQ(csv->body.rfind("sweep,", 0), 0u);
}

TEST(Service, LearnIsExclusive) {
  Running s(mekb::testing::compile_text(kImplicationFloat));
  const std::string csv = "A,B\nt,t\nt,t\nt,t\nf,f\n";
  {
    auto claim = s.service().try_claim_writer();
    ASSERT_TRUE(claim);
    s.post("/kb/learn", {{"alpha", 0.5}, {"sample_csv", csv}}, 409);
  }
  const json zero = s.post("/kb/learn", {{"alpha", 0.0}, {"sample_csv", csv}});
  EXPECT_FALSE(zero["changed"]);
  const json before = s.get("/kb/marginals");
  const json learned = s.post("/kb/learn", {{"alpha", 0.5}, {"sample_csv", csv}});
  EXPECT_TRUE(learned["changed"]);
  EXPECT_EQ(learned["report"]["status"], "converged");
  EXPECT_NE(s.get("/kb/marginals"), before);
  s.post("/kb/learn", {{"alpha", 0.5}, {"sample_csv", "A,B\nt,maybe\n"}}, 400);
}

TEST(Service, ConcurrentSessions) {
  Running s(clinic());
  std::vector<std::thread> threads;
  std::atomic<int> failures{0};
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      const std::string id = s.new_session();
      const std::string value = t % 2 ? "t" : "f";
      for (int k = 0; k < 5; ++k) {
        const json r = s.post("/sessions/" + id + "/evidence", {{"set", {{"Smoking", value}}}});
        // marginals are read after propagation, so allow rounding
        if (std::abs(r["marginals"]["Smoking"][value].get<double>() - 1.0) > 1e-12) ++failures;
        const json q = s.post("/sessions/" + id + "/query", {{"imperatives", {"Smoking"}}});
        if (std::abs(q["answers"][0]["probability"].get<double>() - (t % 2 ? 1.0 : 0.0)) > 1e-12) ++failures;
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(failures.load(), 0);
}
