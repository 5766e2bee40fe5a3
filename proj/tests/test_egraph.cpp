#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <fstream>
#include <set>

#include "doctest.h"
#include "sad/adjacency.hpp"
#include "sad/events.hpp"
#include "sad/rng.hpp"

using namespace sad;

namespace {

void write_file(const std::string& path, const std::string& body) {
    std::ofstream os(path);
    os << body;
}

EventStream random_stream(Rng& rng, size_t n_events, size_t n_nodes, size_t feat_dim = 2) {
    EventStream s;
    s.num_nodes = n_nodes;
    s.num_users = n_nodes / 2;
    s.edge_feature_dim = feat_dim;
    double t = 0.0;
    for (size_t i = 0; i < n_events; ++i) {
        t += rng.uniform(0.0, 3.0);
        Event e;
        e.src = static_cast<uint32_t>(rng.below(n_nodes));
        e.dst = static_cast<uint32_t>(rng.below(n_nodes));
        e.t = t;
        e.label = static_cast<int>(rng.below(2));
        e.features.assign(feat_dim, rng.normal());
        s.events.push_back(std::move(e));
    }
    return s;
}

}  // namespace

TEST_CASE("ingest_csv: sorting, id offset, labels") {
    const std::string path = "ingest_basic.csv";
    write_file(path,
               "user_id,item_id,timestamp,state_label,f0\n"
               "0,0,5,0,0.5\n"
               "1,2,1,1,-1.25\n"
               "0,1,3,0,2\n");
    const EventStream s = ingest_csv(path);
    REQUIRE(s.events.size() == 3);
    CHECK(s.events[0].t == 1.0);
    CHECK(s.events[1].t == 3.0);
    CHECK(s.events[2].t == 5.0);
    // 2 users, 3 items: item 0 becomes node id 2
    CHECK(s.num_users == 2);
    CHECK(s.num_nodes == 5);
    CHECK(s.events[2].dst == 2);
    // state_label passes through
    CHECK(s.events[0].label == 1);
    CHECK(s.events[0].features[0] == -1.25);
}

TEST_CASE("ingest_csv: malformed rows are rejected with their line number") {
    SUBCASE("ragged row") {
        write_file("ingest_ragged.csv", "h\n0,0,1,0,0.5\n0,1,2,0,0.5,0.7\n");
        try {
            ingest_csv("ingest_ragged.csv");
            FAIL("expected rejection");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        }
    }
    SUBCASE("unparsable number") {
        write_file("ingest_bad_num.csv", "h\n0,0,oops,0,0.5\n");
        CHECK_THROWS_AS(ingest_csv("ingest_bad_num.csv"), std::invalid_argument);
    }
    SUBCASE("negative timestamp") {
        write_file("ingest_neg_t.csv", "h\n0,0,-4,0,0.5\n");
        try {
            ingest_csv("ingest_neg_t.csv");
            FAIL("expected rejection");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
    SUBCASE("label outside 0/1") {
        write_file("ingest_bad_label.csv", "h\n0,0,1,-1,0.5\n");
        CHECK_THROWS_AS(ingest_csv("ingest_bad_label.csv"), std::invalid_argument);
    }
}

TEST_CASE("chronological_split: floor boundaries and order") {
    Rng rng(3);
    SUBCASE("10 events split 7/1/2") {
        const EventStream s = random_stream(rng, 10, 6);
        const SplitResult r = chronological_split(s);
        CHECK(r.train.events.size() == 7);
        CHECK(r.val.events.size() == 1);
        CHECK(r.test.events.size() == 2);
    }
    SUBCASE("20 events split 14/3/3") {
        const EventStream s = random_stream(rng, 20, 6);
        const SplitResult r = chronological_split(s);
        CHECK(r.train.events.size() == 14);
        CHECK(r.val.events.size() == 3);
        CHECK(r.test.events.size() == 3);
    }
    SUBCASE("splits partition the stream in order") {
        const EventStream s = random_stream(rng, 57, 9);
        const SplitResult r = chronological_split(s);
        CHECK(r.train.events.back().t <= r.val.events.front().t);
        CHECK(r.val.events.back().t <= r.test.events.front().t);
        std::vector<Event> joined = r.train.events;
        joined.insert(joined.end(), r.val.events.begin(), r.val.events.end());
        joined.insert(joined.end(), r.test.events.begin(), r.test.events.end());
        REQUIRE(joined.size() == s.events.size());
        for (size_t i = 0; i < joined.size(); ++i) {
            CHECK(joined[i].t == s.events[i].t);
            CHECK(joined[i].src == s.events[i].src);
        }
    }
    SUBCASE("empty stream rejected") {
        EventStream empty;
        empty.num_nodes = 1;
        CHECK_THROWS_AS(chronological_split(empty), std::invalid_argument);
    }
    SUBCASE("fractions must sum to one") {
        const EventStream s = random_stream(rng, 10, 4);
        CHECK_THROWS_AS(chronological_split(s, {0.5, 0.1, 0.1}), std::invalid_argument);
    }
}

TEST_CASE("temporal_neighbors: recency order and the strictly-before boundary") {
    EventStream s;
    s.num_nodes = 4;
    s.num_users = 2;
    s.edge_feature_dim = 1;
    for (double t : {1.0, 2.0, 3.0}) {
        Event e;
        e.src = 0;
        e.dst = static_cast<uint32_t>(1 + static_cast<int>(t) % 3);
        e.t = t;
        e.label = 0;
        e.features = {t};
        s.events.push_back(e);
    }
    const TemporalAdjacency adj(s);
    SUBCASE("most recent first") {
        const auto nbrs = adj.neighbors_before(0, 2.5, 2);
        REQUIRE(nbrs.size() == 2);
        CHECK(nbrs[0].t == 2.0);
        CHECK(nbrs[1].t == 1.0);
    }
    SUBCASE("strict inequality at the boundary") { CHECK(adj.neighbors_before(0, 1.0, 2).empty()); }
    SUBCASE("truncation to available history") { CHECK(adj.neighbors_before(0, 10.0, 10).size() == 3); }
}

TEST_CASE("temporal_neighbors equals a brute-force scan on random streams") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const size_t n_nodes = 2 + rng.below(8);
        const EventStream s = random_stream(rng, 1 + rng.below(100), n_nodes);
        const TemporalAdjacency adj(s);
        for (int q = 0; q < 50; ++q) {
            const uint32_t node = static_cast<uint32_t>(rng.below(n_nodes));
            const double t = rng.uniform(0.0, s.events.back().t + 1.0);
            const size_t k = 1 + rng.below(6);
            // oracle: linear scan for events touching the node strictly before t
            std::vector<std::pair<double, size_t>> hits;
            for (size_t i = 0; i < s.events.size(); ++i) {
                if (s.events[i].t >= t) continue;
                if (s.events[i].src == node || s.events[i].dst == node) hits.push_back({s.events[i].t, i});
            }
            // most recent first; equal times resolve by later event index first
            std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
                return a.first != b.first ? a.first > b.first : a.second > b.second;
            });
            if (hits.size() > k) hits.resize(k);
            const auto got = adj.neighbors_before(node, t, k);
            REQUIRE(got.size() == hits.size());
            for (size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].t == hits[i].first);
                CHECK(got[i].event_index == hits[i].second);
                CHECK(got[i].t < t);
            }
        }
    }
}

TEST_CASE("sample_subgraph: structure and truncation") {
    Rng rng(23);
    SUBCASE("isolated node yields a bare root") {
        EventStream s = random_stream(rng, 5, 6);
        s.num_nodes = 7;  // node 6 appears in no event
        const TemporalAdjacency adj(s);
        const Subgraph g = sample_subgraph(adj, 6, 100.0, 2, 20);
        REQUIRE(g.layers.size() == 3);
        CHECK(g.layers[0].size() == 1);
        CHECK(g.layers[1].empty());
        CHECK(g.layers[2].empty());
    }
    SUBCASE("per_hop truncation keeps the most recent events") {
        EventStream s;
        s.num_nodes = 30;
        s.num_users = 1;
        s.edge_feature_dim = 1;
        for (int i = 0; i < 25; ++i) {
            Event e;
            e.src = 0;
            e.dst = static_cast<uint32_t>(1 + i % 29);
            e.t = static_cast<double>(i);
            e.label = 0;
            e.features = {0.0};
            s.events.push_back(e);
        }
        const TemporalAdjacency adj(s);
        const Subgraph g = sample_subgraph(adj, 0, 1000.0, 2, 20);
        REQUIRE(g.layers[1].size() == 20);
        CHECK(g.layers[1].front().query_time == 24.0);  // most recent first
        CHECK(g.layers[1].back().query_time == 5.0);
        for (const SubgraphEntry& e : g.layers[1]) CHECK(e.dt_parent >= 0.0);
    }
    SUBCASE("depth never exceeds hops and children stay strictly earlier") {
        const EventStream s = random_stream(rng, 80, 10);
        const TemporalAdjacency adj(s);
        const Subgraph g = sample_subgraph(adj, 1, s.events.back().t, 3, 4);
        CHECK(g.layers.size() == 4);
        for (size_t d = 0; d + 1 < g.layers.size(); ++d) {
            for (const SubgraphEntry& parent : g.layers[d]) {
                for (size_t c = parent.child_begin; c < parent.child_end; ++c) {
                    CHECK(g.layers[d + 1][c].query_time < parent.query_time);
                    CHECK(g.layers[d + 1][c].dt_parent > 0.0);
                }
            }
        }
    }
}

TEST_CASE("drop_labels: exact count, determinism, no mutation") {
    Rng rng(29);
    EventStream s = random_stream(rng, 100, 8);
    SUBCASE("p=0 is the identity") {
        const EventStream d = drop_labels(s, 0.0, 1);
        for (size_t i = 0; i < s.events.size(); ++i) CHECK(d.events[i].label == s.events[i].label);
    }
    SUBCASE("p=1 unlabels everything") {
        const EventStream d = drop_labels(s, 1.0, 1);
        for (const Event& e : d.events) CHECK(e.label == -1);
    }
    SUBCASE("exactly floor(p*L) dropped, same seed same set") {
        const EventStream d1 = drop_labels(s, 0.5, 9);
        const EventStream d2 = drop_labels(s, 0.5, 9);
        size_t dropped = 0;
        for (size_t i = 0; i < s.events.size(); ++i) {
            CHECK(d1.events[i].label == d2.events[i].label);
            if (d1.events[i].label == -1 && s.events[i].label != -1) ++dropped;
        }
        CHECK(dropped == 50);
        // original untouched
        for (const Event& e : s.events) CHECK(e.label != -1);
    }
    SUBCASE("dropping p then 0 equals dropping p") {
        const EventStream d1 = drop_labels(s, 0.3, 5);
        const EventStream d2 = drop_labels(d1, 0.0, 6);
        for (size_t i = 0; i < s.events.size(); ++i) CHECK(d1.events[i].label == d2.events[i].label);
    }
    SUBCASE("different seeds pick different sets") {
        const EventStream d1 = drop_labels(s, 0.5, 1);
        const EventStream d2 = drop_labels(s, 0.5, 2);
        bool differ = false;
        for (size_t i = 0; i < s.events.size(); ++i) differ = differ || (d1.events[i].label != d2.events[i].label);
        CHECK(differ);
    }
}
