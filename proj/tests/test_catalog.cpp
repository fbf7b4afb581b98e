#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace wsms;
using wsms::testing::add_service;
using wsms::testing::cat1;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Io;
}

}  // namespace

TEST(LoadCatalog, EmptyServices) {
  auto c = load_catalog(R"({"services": []})");
  EXPECT_TRUE(c.services.empty());
}

TEST(LoadCatalog, Cat1Shape) {
  const auto& c = cat1();
  EXPECT_EQ(c.services.size(), 3u);
  EXPECT_EQ(c.edges.size(), 2u);
  EXPECT_TRUE(c.edges.contains({"ws_src", "ws_credit"}));
  EXPECT_TRUE(c.edges.contains({"ws_src", "ws_addr"}));
  EXPECT_EQ(c.service("ws_credit").inputs, std::vector<std::string>{"cid"});
  EXPECT_EQ(c.service("ws_src").selectivity, 4.0);
  EXPECT_EQ(c.service("ws_src").dataset.size(), 4u);
  EXPECT_EQ(c.width("zip"), 8.0);
}

TEST(LoadCatalog, CycleNamesBothServices) {
  auto text = cli::read_file(wsms::testing::sample_path("cyclic.json"));
  try {
    load_catalog(text);
    FAIL() << "expected cycle error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Cycle);
    EXPECT_NE(std::string(e.what()).find("{ws_credit, ws_src}"), std::string::npos) << e.what();
  }
}

TEST(LoadCatalog, MalformedAndUnknownKeys) {
  EXPECT_EQ(kind_of([] { load_catalog("{"); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { load_catalog(R"({"services": [], "extra": 1})"); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { load_catalog(R"({"services": [{"id": "a", "bogus": 1}]})"); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { load_catalog(R"({"edges": [["a"]]})"); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { load_catalog(R"({"predicate_selectivities": {"nocolon": 0.5}})"); }), ErrorKind::Parse);
}

TEST(LoadCatalog, InvariantViolationNamesElement) {
  Catalog c = cat1();
  c.services.at("ws_addr").selectivity = -1;
  try {
    load_catalog(catalog_to_json(c));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Invariant);
    EXPECT_NE(std::string(e.what()).find("ws_addr"), std::string::npos);
  }
}

TEST(LoadCatalog, JsonRoundTrip) {
  auto again = load_catalog(catalog_to_json(cat1()));
  EXPECT_EQ(catalog_to_json(again), catalog_to_json(cat1()));
  EXPECT_EQ(again.service("ws_src").dataset, cat1().service("ws_src").dataset);
}

TEST(ValidateCatalog, Cat1IsValid) { EXPECT_TRUE(validate_catalog(cat1()).empty()); }

TEST(ValidateCatalog, ZeroSelectivity) {
  Catalog c = cat1();
  c.services.at("ws_credit").selectivity = 0;
  auto v = validate_catalog(c);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].subject, "ws_credit");
  EXPECT_EQ(v[0].rule, "selectivity");
}

TEST(ValidateCatalog, MissingWidthNamesAttribute) {
  Catalog c = cat1();
  c.attr_widths.erase("zip");
  auto v = validate_catalog(c);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].message.find("zip"), std::string::npos);
}

TEST(ValidateCatalog, OrderedBySubjectThenRule) {
  Catalog c = cat1();
  c.services.at("ws_src").selectivity = 0;
  c.services.at("ws_addr").profile.packing = -1;
  c.services.at("ws_addr").avg_callsize = -1;
  c.predicate_selectivities[{"score", Comparator::Gt}] = 1.5;
  auto v = validate_catalog(c);
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v[0].subject, "");
  EXPECT_EQ(v[1].subject, "ws_addr");
  EXPECT_EQ(v[1].rule, "profile");
  EXPECT_EQ(v[2].rule, "sizes");
  EXPECT_EQ(v[3].subject, "ws_src");
}

TEST(ValidateCatalog, StructuralRules) {
  Catalog c;
  auto& ws = add_service(c, "a", {"x"}, {"x"});
  (void)ws;
  c.edges.emplace("a", "ghost");
  auto v = validate_catalog(c);
  std::set<std::string> rules;
  for (const auto& x : v) rules.insert(x.rule);
  EXPECT_TRUE(rules.contains("io-disjoint"));
  EXPECT_TRUE(rules.contains("edge"));
}

TEST(MapServices, ExactCapabilityMatch) {
  auto m = map_services(cat1(), {"customers", "unknown"});
  ASSERT_EQ(m.at("customers").size(), 1u);
  EXPECT_EQ(m.at("customers")[0]->id, "ws_src");
  EXPECT_TRUE(m.at("unknown").empty());
}

TEST(MapServices, CompetingProviders) {
  Catalog c = cat1();
  ServiceSpec alt = c.service("ws_credit");
  alt.id = "ws_credit2";
  c.services.emplace(alt.id, alt);
  auto m = map_services(c, {"credit"});
  EXPECT_EQ(m.at("credit").size(), 2u);
}

TEST(SelectService, CheapestWins) {
  ServiceSpec a, b;
  a.id = "ws";
  a.profile = wsms::testing::kProfile0;
  a.avg_callsize = 200;
  a.avg_resultsize = 1000;
  b = a;
  b.id = "ws_prime";
  b.profile.serviceexec += 14;  // 90.0
  EXPECT_NEAR(per_tuple_cost(b), 90.0, 1e-9);
  std::vector<const ServiceSpec*> both{&b, &a};
  EXPECT_EQ(select_service(both).id, "ws");
  std::vector<const ServiceSpec*> single{&b};
  EXPECT_EQ(select_service(single).id, "ws_prime");
}

TEST(SelectService, TieGoesToSmallestId) {
  ServiceSpec a, b;
  a.id = "b";
  b.id = "a";
  std::vector<const ServiceSpec*> v{&a, &b};
  EXPECT_EQ(select_service(v).id, "a");
}

TEST(SelectService, EmptyIsUnsatisfiable) {
  std::vector<const ServiceSpec*> none;
  EXPECT_EQ(kind_of([&] { select_service(none); }), ErrorKind::Unsatisfiable);
}

TEST(SelectService, ProfiledMeansOverrideDeclarations) {
  ServiceSpec a, b;
  a.id = "a";
  a.profile.serviceexec = 10;
  b.id = "b";
  b.profile.serviceexec = 20;
  ProfilerStats stats = record_observation({}, "a", 100, 0);
  CostModel cm{&stats};
  std::vector<const ServiceSpec*> v{&a, &b};
  EXPECT_EQ(select_service(v).id, "a");
  EXPECT_EQ(select_service(v, cm).id, "b");
}

TEST(Compose, Cat1Edges) {
  auto g = compose({"ws_src", "ws_credit", "ws_addr"}, cat1());
  EXPECT_EQ(g.edges, (std::set<Edge>{{"ws_src", "ws_credit"}, {"ws_src", "ws_addr"}}));
  EXPECT_EQ(g.lexicographic_topological_order(), (std::vector<std::string>{"ws_src", "ws_addr", "ws_credit"}));
}

TEST(Compose, DataEdgesWithoutExplicitOnes) {
  Catalog c = cat1();
  c.edges.clear();
  auto g = compose({"ws_src", "ws_credit"}, c);
  EXPECT_EQ(g.edges, (std::set<Edge>{{"ws_src", "ws_credit"}}));
}

TEST(Compose, SingleSource) {
  auto g = compose({"ws_src"}, cat1());
  EXPECT_TRUE(g.edges.empty());
}

TEST(Compose, ContradictingExplicitEdgeIsCycle) {
  Catalog c = cat1();
  c.edges.emplace("ws_credit", "ws_src");
  EXPECT_EQ(kind_of([&] { compose({"ws_src", "ws_credit"}, c); }), ErrorKind::Cycle);
}

TEST(Compose, IndependentOfInsertionOrder) {
  std::set<std::string> a{"ws_addr", "ws_credit", "ws_src"};
  std::set<std::string> b;
  for (const char* id : {"ws_src", "ws_credit", "ws_addr"}) b.insert(id);
  EXPECT_EQ(compose(a, cat1()).edges, compose(b, cat1()).edges);
}

TEST(Compose, GeneratedGraphsAlwaysHaveTopologicalOrder) {
  for (const auto& cc : wsms::testing::corpus(60, 5)) {
    auto g = compose(cc.vq.service_set(), cc.catalog);
    auto order = g.lexicographic_topological_order();
    EXPECT_EQ(order.size(), g.nodes.size());
    EXPECT_TRUE(g.is_linear_extension(order));
    for (const auto& id : g.nodes) {
      for (const auto& in : cc.catalog.service(id).inputs) {
        const auto& producer = cc.vq.producers.at(in);
        EXPECT_TRUE(g.edges.contains({producer, id})) << producer << " -> " << id;
      }
    }
  }
}

TEST(ServiceGraph, LinearExtensionCheck) {
  ServiceGraph g{{"a", "b", "c"}, {{"a", "b"}, {"b", "c"}}};
  EXPECT_TRUE(g.is_linear_extension(std::vector<std::string>{"a", "b", "c"}));
  EXPECT_FALSE(g.is_linear_extension(std::vector<std::string>{"b", "a", "c"}));
  EXPECT_FALSE(g.is_linear_extension(std::vector<std::string>{"a", "b"}));
}

TEST(Generator, InstancesAreValidAndDeterministic) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    GeneratorOptions opt;
    opt.topology = static_cast<Topology>(seed % 3);
    auto a = generate_instance(seed, opt);
    auto b = generate_instance(seed, opt);
    EXPECT_EQ(catalog_to_json(a.catalog), catalog_to_json(b.catalog));
    EXPECT_EQ(a.query, b.query);
    EXPECT_TRUE(validate_catalog(a.catalog).empty()) << seed;
    EXPECT_NO_THROW(validate_query(a.query, a.catalog)) << a.query;
    for (const auto& [id, ws] : a.catalog.services) EXPECT_LE(ws.dataset.size(), 50u);
  }
}
