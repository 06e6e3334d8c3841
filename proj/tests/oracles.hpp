#pragma once

#include <queue>
#include <vector>

#include "gnnmp/explorer.hpp"

namespace gnnmp::check {

// Sequential closure oracle: the tree after graph b is the closure of the tree after graph b-1 under
// ground-truth-free edges of graph b. Returns the number of batches until the goal joins, or 0.
inline std::size_t closure_oracle(const Problem& p, const ExploreOptions& o) {
  SampleStream stream(p.env, p.seed, o.seed);
  BatchGraph bg(p.start, p.goal, o.k0);
  std::vector<char> reached;
  std::size_t batches = 0;
  while (true) {
    const Rgg g = bg.add_batch(stream.next(o.batch_size), nullptr);
    ++batches;
    reached.resize(g.num_vertices(), 0);
    reached[0] = 1;
    std::queue<std::size_t> q;
    for (std::size_t v = 0; v < g.num_vertices(); ++v)
      if (reached[v]) q.push(v);
    while (!q.empty()) {
      const std::size_t v = q.front();
      q.pop();
      for (std::size_t e : g.incident[v]) {
        const Edge& edge = g.edges[e];
        const std::size_t w = edge.other(v);
        if (!edge.traversable || reached[w]) continue;
        if (!p.env.segment_free_unmetered(g.vertices[v], g.vertices[w])) continue;
        reached[w] = 1;
        q.push(w);
      }
    }
    if (reached[1]) return batches;
    if (bg.num_free_samples() + o.batch_size > o.max_samples) return 0;
  }
}

}  // namespace gnnmp::check
