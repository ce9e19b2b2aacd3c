#include <random>

#include <gtest/gtest.h>

#include "kng/kng.hpp"
#include "oracles.hpp"

using namespace kng;

TEST(Topology, TouchCreatesEdgeAtAgeZero) {
    TopologyGraph g;
    g.touch(3, 1);
    EXPECT_TRUE(g.contains(1, 3));
    EXPECT_EQ(*g.age(3, 1), 0u);
    EXPECT_EQ(g.event_counter(), 1u);
    EXPECT_THROW(g.touch(2, 2), ArgumentError);
}

TEST(Topology, TouchResetsAgeOthersGrow) {
    TopologyGraph g;
    g.touch(0, 1);
    g.touch(2, 3);
    for (int i = 0; i < 5; ++i) g.touch(4, 5);
    EXPECT_EQ(*g.age(0, 1), 6u);
    const auto other_before = *g.age(2, 3);
    g.touch(1, 0);
    EXPECT_EQ(*g.age(0, 1), 0u);
    EXPECT_EQ(*g.age(2, 3), other_before + 1);
}

TEST(Topology, SweepBoundary) {
    TopologyGraph empty;
    EXPECT_EQ(empty.sweep(25), 0u);

    TopologyGraph g;
    g.touch(0, 1);
    for (int i = 0; i < 25; ++i) g.touch(2, 3);
    EXPECT_EQ(*g.age(0, 1), 25u);
    EXPECT_EQ(g.sweep(25), 0u);
    EXPECT_TRUE(g.contains(0, 1));
    g.touch(2, 3);
    EXPECT_EQ(g.sweep(25), 1u);
    EXPECT_FALSE(g.contains(0, 1));
    EXPECT_EQ(g.sweep(25), 0u);
    EXPECT_FALSE(g.contains(0, 1));
}

TEST(Topology, LazyMatchesEagerReference) {
    std::mt19937_64 gen(17);
    std::uniform_int_distribution<std::uint32_t> node(0, 14);
    TopologyGraph lazy;
    oracle::EagerGraph eager;
    const std::uint64_t age_max = 25;
    for (int event = 0; event < 10000; ++event) {
        std::uint32_t a = node(gen), b = node(gen);
        while (b == a) b = node(gen);
        lazy.touch(a, b);
        eager.touch(a, b);
        if (gen() % 7 == 0) {
            ASSERT_EQ(lazy.sweep(age_max), eager.sweep(age_max));
            ASSERT_LE(lazy.max_age(), age_max);
        }
        if (gen() % 5 == 0) {
            ASSERT_EQ(lazy.edge_count(), eager.ages().size());
            for (const auto& [e, age] : eager.ages()) ASSERT_EQ(lazy.age(e.first, e.second), age);
        }
    }
}

TEST(Topology, RestoreValidates) {
    std::map<TopologyGraph::Edge, std::uint64_t> edges{{{0, 2}, 3}};
    const auto g = TopologyGraph::restore(edges, 5);
    EXPECT_EQ(*g.age(2, 0), 2u);
    EXPECT_THROW(TopologyGraph::restore(edges, 2), ArgumentError);
    EXPECT_THROW(TopologyGraph::restore({{{1, 1}, 0}}, 2), ArgumentError);
}
