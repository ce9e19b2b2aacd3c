#ifndef KNG_TOPOLOGY_HPP
#define KNG_TOPOLOGY_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kng/errors.hpp"

namespace kng {

/// Undirected neuron graph with lazily evaluated edge ages.
///
/// Every touch is one aging event: the touched edge is refreshed to age 0
/// and every other edge grows one step older. Instead of incrementing each
/// edge, an edge stores the event counter at its last refresh and its age is
/// `event_counter - last_refresh`. Pruning happens in `sweep`, which must be
/// called before edges are read (thresholds); re-touching a stale but not yet
/// swept edge resets it exactly like deleting and re-adding it would.
class TopologyGraph {
public:
    using Edge = std::pair<std::uint32_t, std::uint32_t>;

    static Edge key(std::uint32_t a, std::uint32_t b) { return a < b ? Edge{a, b} : Edge{b, a}; }

    void touch(std::uint32_t a, std::uint32_t b) {
        if (a == b) throw ArgumentError("touch_edge: self-loop on neuron " + std::to_string(a));
        ++event_counter_;
        edges_[key(a, b)] = event_counter_;
    }

    /// Removes every edge whose age exceeds `age_max`; returns how many.
    std::size_t sweep(std::uint64_t age_max) {
        std::size_t removed = 0;
        for (auto it = edges_.begin(); it != edges_.end();) {
            if (event_counter_ - it->second > age_max) {
                it = edges_.erase(it);
                ++removed;
            } else {
                ++it;
            }
        }
        return removed;
    }

    std::optional<std::uint64_t> age(std::uint32_t a, std::uint32_t b) const {
        auto it = edges_.find(key(a, b));
        if (it == edges_.end()) return std::nullopt;
        return event_counter_ - it->second;
    }

    bool contains(std::uint32_t a, std::uint32_t b) const { return edges_.count(key(a, b)) != 0; }
    std::size_t edge_count() const { return edges_.size(); }
    std::uint64_t event_counter() const { return event_counter_; }
    const std::map<Edge, std::uint64_t>& edges() const { return edges_; }

    std::uint64_t max_age() const {
        std::uint64_t m = 0;
        for (const auto& [e, refresh] : edges_) m = std::max(m, event_counter_ - refresh);
        return m;
    }

    /// Adjacency lists for `n` neurons, neighbours in ascending order.
    std::vector<std::vector<std::uint32_t>> adjacency(std::size_t n) const {
        std::vector<std::vector<std::uint32_t>> adj(n);
        for (const auto& [e, refresh] : edges_) {
            if (e.second >= n) throw StateError("topology graph references neuron out of range");
            adj[e.first].push_back(e.second);
            adj[e.second].push_back(e.first);
        }
        for (auto& list : adj) std::sort(list.begin(), list.end());
        return adj;
    }

    /// Rebuilds a graph from serialized state.
    static TopologyGraph restore(std::map<Edge, std::uint64_t> edges, std::uint64_t event_counter) {
        TopologyGraph g;
        for (const auto& [e, refresh] : edges) {
            if (e.first >= e.second) throw ArgumentError("topology graph: edge keys must be ordered, no self-loops");
            if (refresh > event_counter) throw ArgumentError("topology graph: refresh beyond event counter");
        }
        g.edges_ = std::move(edges);
        g.event_counter_ = event_counter;
        return g;
    }

    friend bool operator==(const TopologyGraph&, const TopologyGraph&) = default;

private:
    std::map<Edge, std::uint64_t> edges_;
    std::uint64_t event_counter_ = 0;
};

} // namespace kng

#endif // KNG_TOPOLOGY_HPP
