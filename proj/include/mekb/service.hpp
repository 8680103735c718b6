#pragma once

// HTTP/JSON consultation service over a compiled knowledge base.
//
//   GET  /kb                      schema, rules, solve report
//   GET  /kb/graph?kind=...       dependency | mixed | structure (format=json|dot)
//   GET  /kb/marginals            per-variable distributions
//   GET  /kb/ledger               entropy ledger (format=json|csv)
//   POST /kb/learn                {"alpha": a, "sample_csv": "..."}; 409 while busy
//   POST /sessions                new evidence session
//   POST /sessions/{id}/evidence  {"set": {"Var": "value"}, "clear": ["Var"], "clear_all": bool}
//   POST /sessions/{id}/query     {"hypotheticals": [...], "imperatives": [...]} or {"text": "..."}

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "mekb/archive.hpp"
#include "mekb/hypertree.hpp"
#include "mekb/knowledge_base.hpp"
#include "mekb/learning.hpp"
#include "mekb/query.hpp"

namespace mekb {

// Builds a QuerySpec from the JSON body used by the service.
inline QuerySpec query_spec_from_json(const nlohmann::json& body, const Schema& schema) {
  if (body.contains("text")) return parse_query(body.at("text").get<std::string>(), schema);
  QuerySpec spec;
  for (const auto& h : body.value("hypotheticals", nlohmann::json::array())) {
    spec.hypotheticals.push_back(parse_rule(h.get<std::string>(), schema));
    spec.hypotheticals.back().id = "H" + std::to_string(spec.hypotheticals.size());
  }
  for (const auto& imp : body.value("imperatives", nlohmann::json::array())) {
    if (imp.is_string()) {
      spec.imperatives.push_back(parse_imperative(imp.get<std::string>(), schema));
    } else {
      Sentence premise;
      if (imp.contains("premise") && !imp.at("premise").is_null())
        premise = parse_fact(imp.at("premise").get<std::string>(), schema);
      spec.imperatives.push_back(
          make_imperative(parse_fact(imp.at("conclusion").get<std::string>(), schema), premise, schema));
    }
  }
  if (spec.imperatives.empty()) throw Error(ErrorKind::kParse, "a query needs at least one imperative");
  return spec;
}

class Service {
 public:
  struct Session {
    std::string id;
    std::shared_ptr<const KnowledgeBase> base;
    std::vector<Evidence> evidence;
    std::shared_ptr<const FactoredDistribution> snapshot;
    Marginals marginals;
    std::chrono::system_clock::time_point created;
    std::mutex mu;  // evidence and snapshot
  };

  // Exclusive writer claim; learn requests fail with 409 while one is held.
  class WriterClaim {
   public:
    explicit WriterClaim(std::atomic<bool>* flag) : flag_(flag) {}
    WriterClaim(WriterClaim&& o) noexcept : flag_(std::exchange(o.flag_, nullptr)) {}
    WriterClaim& operator=(WriterClaim&&) = delete;
    ~WriterClaim() {
      if (flag_) flag_->store(false);
    }
    explicit operator bool() const { return flag_ != nullptr; }

   private:
    std::atomic<bool>* flag_;
  };

  explicit Service(KnowledgeBase kb) : base_(std::make_shared<const KnowledgeBase>(std::move(kb))) {}

  std::shared_ptr<const KnowledgeBase> base() const {
    std::lock_guard lock(mu_);
    return base_;
  }

  WriterClaim try_claim_writer() {
    bool expected = false;
    if (!writer_busy_.compare_exchange_strong(expected, true)) return WriterClaim(nullptr);
    return WriterClaim(&writer_busy_);
  }

  void register_routes(httplib::Server& svr) {
    svr.Get("/kb", [this](const httplib::Request&, httplib::Response& res) { get_kb(res); });
    svr.Get("/kb/graph", [this](const httplib::Request& req, httplib::Response& res) { get_graph(req, res); });
    svr.Get("/kb/marginals", [this](const httplib::Request&, httplib::Response& res) {
      auto kb = base();
      reply(res, 200, {{"marginals", marginals_json(marginals(kb->dist, kb->schema), kb->schema)}});
    });
    svr.Get("/kb/ledger", [this](const httplib::Request& req, httplib::Response& res) {
      auto kb = base();
      if (req.has_param("format") && req.get_param_value("format") == "csv")
        res.set_content(ledger_csv(kb->report.ledger), "text/csv");
      else
        reply(res, 200, ledger_json(kb->report.ledger));
    });
    svr.Post("/kb/learn", [this](const httplib::Request& req, httplib::Response& res) { post_learn(req, res); });
    svr.Post("/sessions", [this](const httplib::Request&, httplib::Response& res) { post_session(res); });
    svr.Post(R"(/sessions/([^/]+)/evidence)", [this](const httplib::Request& req, httplib::Response& res) {
      post_evidence(req.matches[1], req, res);
    });
    svr.Post(R"(/sessions/([^/]+)/query)", [this](const httplib::Request& req, httplib::Response& res) {
      post_query(req.matches[1], req, res);
    });
  }

 private:
  static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void reply_error(httplib::Response& res, int status, const std::string& message,
                          nlohmann::json extra = nlohmann::json::object()) {
    extra["error"] = message;
    reply(res, status, extra);
  }

  static std::optional<nlohmann::json> parse_body(const httplib::Request& req, httplib::Response& res) {
    try {
      return req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      reply_error(res, 400, std::string("body is not JSON: ") + e.what());
      return std::nullopt;
    }
  }

  static int status_for(const Error& e) {
    switch (e.kind()) {
      case ErrorKind::kParse:
      case ErrorKind::kResolution:
      case ErrorKind::kKind:
      case ErrorKind::kRange:
      case ErrorKind::kSchema:
      case ErrorKind::kDuplicate: return 400;
      case ErrorKind::kImpossibleEvidence:
      case ErrorKind::kInfeasibleRule:
      case ErrorKind::kUndefinedConditional: return 422;
      case ErrorKind::kCapacity: return 413;
      default: return 500;
    }
  }

  static nlohmann::json error_extra(const Error& e) {
    nlohmann::json j = {{"kind", to_string(e.kind())}};
    if (!e.subject().empty()) j["subject"] = e.subject();
    if (e.has_position()) j["column"] = e.position().column;
    return j;
  }

  std::shared_ptr<Session> find_session(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  void get_kb(httplib::Response& res) {
    auto kb = base();
    reply(res, 200,
          {{"variables", schema_json(kb->schema)},
           {"rules", rules_json(kb->rules, kb->schema)},
           {"options",
            {{"tolerance", kb->options.tolerance},
             {"max_sweeps", kb->options.max_sweeps},
             {"heuristic", to_string(kb->options.heuristic)}}},
           {"report", report_json(kb->report)}});
  }

  void get_graph(const httplib::Request& req, httplib::Response& res) {
    auto kb = base();
    const std::string kind_text = req.has_param("kind") ? req.get_param_value("kind") : "dependency";
    auto kind = parse_graph_kind(kind_text);
    if (!kind) return reply_error(res, 400, "unknown graph kind '" + kind_text + "'");
    if (req.has_param("format") && req.get_param_value("format") == "dot") {
      res.set_content(graph_dot(*kind, kb->schema, kb->rules, &kb->tree()), "text/vnd.graphviz");
      return;
    }
    reply(res, 200, graph_json(*kind, kb->schema, kb->rules, &kb->tree()));
  }

  void post_session(httplib::Response& res) {
    auto kb = base();
    auto s = std::make_shared<Session>();
    s->base = kb;
    s->snapshot = std::make_shared<const FactoredDistribution>(kb->dist);
    s->marginals = marginals(kb->dist, kb->schema);
    s->created = std::chrono::system_clock::now();
    {
      std::lock_guard lock(mu_);
      s->id = "s" + std::to_string(++session_counter_);
      sessions_[s->id] = s;
    }
    reply(res, 201, {{"session", s->id}, {"marginals", marginals_json(s->marginals, kb->schema)}});
  }

  static nlohmann::json evidence_json(const std::vector<Evidence>& ev, const Schema& schema) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& e : ev) out[schema[e.var].name] = schema[e.var].values[e.value];
    return out;
  }

  void post_evidence(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    auto session = find_session(id);
    if (!session) return reply_error(res, 404, "unknown session '" + id + "'");
    auto body = parse_body(req, res);
    if (!body) return;
    std::lock_guard session_lock(session->mu);
    const Schema& schema = session->base->schema;
    try {
      std::vector<Evidence> next = body->value("clear_all", false) ? std::vector<Evidence>{} : session->evidence;
      for (const auto& name : body->value("clear", nlohmann::json::array())) {
        auto v = schema.find(name.get<std::string>());
        if (!v) throw Error(ErrorKind::kResolution, "unknown variable '" + name.get<std::string>() + "'");
        std::erase_if(next, [&](const Evidence& e) { return e.var == *v; });
      }
      const nlohmann::json set = body->value("set", nlohmann::json::object());
      for (const auto& [name, value] : set.items()) {
        auto v = schema.find(name);
        if (!v) throw Error(ErrorKind::kResolution, "unknown variable '" + name + "'", name);
        auto x = schema[*v].value_index(value.get<std::string>());
        if (!x)
          throw Error(ErrorKind::kResolution, "'" + value.get<std::string>() + "' is not a value of '" + name + "'",
                      name);
        std::erase_if(next, [&](const Evidence& e) { return e.var == *v; });
        next.push_back({*v, *x});
      }
      // Recondition from the base snapshot; the session only changes on success.
      Instantiation inst = instantiate(session->base->dist, next, schema);
      session->evidence = std::move(next);
      session->snapshot = std::make_shared<const FactoredDistribution>(std::move(inst.dist));
      session->marginals = std::move(inst.marginals);
      reply(res, 200,
            {{"session", id},
             {"evidence", evidence_json(session->evidence, schema)},
             {"marginals", marginals_json(session->marginals, schema)}});
    } catch (const Error& e) {
      nlohmann::json extra = error_extra(e);
      if (e.kind() == ErrorKind::kImpossibleEvidence) extra["conjunct"] = e.subject();
      reply_error(res, status_for(e), e.what(), extra);
    } catch (const nlohmann::json::exception& e) {
      reply_error(res, 400, std::string("malformed evidence body: ") + e.what());
    }
  }

  void post_query(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    auto session = find_session(id);
    if (!session) return reply_error(res, 404, "unknown session '" + id + "'");
    auto body = parse_body(req, res);
    if (!body) return;
    std::shared_ptr<const FactoredDistribution> snapshot;
    std::shared_ptr<const KnowledgeBase> kb;
    {
      std::lock_guard session_lock(session->mu);
      snapshot = session->snapshot;
      kb = session->base;
    }
    try {
      const QuerySpec spec = query_spec_from_json(*body, kb->schema);
      const QueryResult result = complex_query(*snapshot, spec, kb->options, kb->schema);
      nlohmann::json out = query_result_json(result);
      if (!result.feasible()) {
        out["error"] = "hypothetical rules are inconsistent";
        out["rules"] = result.report.offending_rules;
        return reply(res, 422, out);
      }
      reply(res, 200, out);
    } catch (const Error& e) {
      reply_error(res, status_for(e), e.what(), error_extra(e));
    } catch (const nlohmann::json::exception& e) {
      reply_error(res, 400, std::string("malformed query body: ") + e.what());
    }
  }

  void post_learn(const httplib::Request& req, httplib::Response& res) {
    WriterClaim claim = try_claim_writer();
    if (!claim) return reply_error(res, 409, "another learn operation is running");
    auto body = parse_body(req, res);
    if (!body) return;
    auto kb = base();
    try {
      const double alpha = body->at("alpha").get<double>();
      const Sample sample = sample_from_csv(body->value("sample_csv", std::string{}), kb->schema);
      LearnedKnowledgeBase learned = learn(*kb, sample, alpha);
      nlohmann::json out = {{"report", report_json(learned.kb.report)}, {"warnings", learned.warnings},
                            {"changed", learned.changed}};
      if (learned.changed) {
        std::lock_guard lock(mu_);
        base_ = std::make_shared<const KnowledgeBase>(std::move(learned.kb));
      }
      reply(res, 200, out);
    } catch (const Error& e) {
      reply_error(res, status_for(e), e.what(), error_extra(e));
    } catch (const nlohmann::json::exception& e) {
      reply_error(res, 400, std::string("malformed learn body: ") + e.what());
    }
  }

  mutable std::mutex mu_;  // base_, sessions_
  std::shared_ptr<const KnowledgeBase> base_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::size_t session_counter_ = 0;
  std::atomic<bool> writer_busy_{false};
};

}  // namespace mekb
