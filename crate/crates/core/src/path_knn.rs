//! Nearest neighbors under the power-weighted shortest-path metric and the
//! longest-leg path distance, without ever touching the complete graph.
//!
//! The search is Dijkstra's algorithm restricted to the directed Euclidean
//! k-NN graph: when a vertex is settled only its `k` Euclidean neighbors
//! are relaxed. The first `k` vertices settled this way are exactly the `k`
//! nearest under the path metric, so one search costs `O(k²)` queue
//! operations plus `k` Euclidean k-NN queries.
//!
//! Finite `p` accumulates `‖·‖^p` additively; `p = ∞` replaces the sum
//! with a max. Keys are stored as path lengths rather than powers, and a
//! leg is added as `(key^p + leg^p)^{1/p}` evaluated relative to the
//! larger operand, so large `p` neither overflows nor collapses short
//! distances to zero.

use std::cmp::{Ordering, Reverse};
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::euclidean_index::{KnnTable, Neighbor, SpatialIndex};
use crate::path_metrics::{norm_pair, PowerParam};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathKnnOptions {
    /// Report the source as its own first neighbor at distance 0, so that
    /// `k` entries include it. When false, `k` other points are returned.
    pub include_source: bool,
}

impl Default for PathKnnOptions {
    fn default() -> Self {
        Self {
            include_source: true,
        }
    }
}

/// Work counters for one search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Distinct Euclidean neighbor sets looked up.
    pub knn_queries: usize,
    pub decrease_or_insert_calls: usize,
    pub max_queue_len: usize,
}

/// Path-metric neighbors of `source`, ascending by distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathNeighborResult {
    pub source: usize,
    pub neighbors: Vec<Neighbor>,
    pub stats: SearchStats,
}

impl PathNeighborResult {
    pub fn indices(&self) -> Vec<usize> {
        self.neighbors.iter().map(|n| n.index).collect()
    }

    /// Neighbors other than the source.
    pub fn others(&self) -> impl Iterator<Item = &Neighbor> {
        self.neighbors.iter().filter(move |n| n.index != self.source)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry_ {
    key: f64,
    index: usize,
}

impl Eq for Entry_ {}

impl Ord for Entry_ {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .total_cmp(&other.key)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Entry_ {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-priority queue where `decrease_or_insert` pushes a duplicate entry
/// instead of decreasing a key in place. Entries for vertices that are
/// already settled are dropped when they surface.
#[derive(Debug, Default)]
pub struct PruningQueue {
    heap: BinaryHeap<Reverse<Entry_>>,
    best: HashMap<usize, f64>,
    settled: HashMap<usize, f64>,
    calls: usize,
    max_len: usize,
}

impl PruningQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Lowers the key of `index` to `key`, inserting it if absent. No-op if
    /// the vertex is settled or already queued with a key `<= key`.
    pub fn decrease_or_insert(&mut self, index: usize, key: f64) {
        self.calls += 1;
        if self.settled.contains_key(&index) {
            return;
        }
        match self.best.entry(index) {
            Entry::Occupied(mut e) if key < *e.get() => {
                e.insert(key);
            }
            Entry::Occupied(_) => return,
            Entry::Vacant(e) => {
                e.insert(key);
            }
        }
        self.heap.push(Reverse(Entry_ { key, index }));
        self.max_len = self.max_len.max(self.heap.len());
    }

    /// Seeds the queue with the search source at key 0. Not counted as a
    /// `decrease_or_insert` call.
    pub fn push_source(&mut self, index: usize) {
        self.best.insert(index, 0.0);
        self.heap.push(Reverse(Entry_ { key: 0.0, index }));
        self.max_len = self.max_len.max(self.heap.len());
    }

    /// Pops the live entry with the smallest `(key, index)` and marks it
    /// settled.
    pub fn extract_min(&mut self) -> Option<(usize, f64)> {
        while let Some(Reverse(Entry_ { key, index })) = self.heap.pop() {
            if self.settled.contains_key(&index) {
                continue;
            }
            self.settled.insert(index, key);
            return Some((index, key));
        }
        None
    }

    pub fn is_settled(&self, index: usize) -> bool {
        self.settled.contains_key(&index)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }
}

/// Supplies the Euclidean neighbor set of a vertex during one search.
trait NeighborSource {
    fn neighbors(&mut self, u: usize) -> Result<&[Neighbor]>;
    fn lookups(&self) -> usize;
}

/// On-demand queries against the index, memoized for one search.
struct Queried<'i, 'd> {
    index: &'i SpatialIndex<'d>,
    k: usize,
    memo: HashMap<usize, Vec<Neighbor>>,
}

impl NeighborSource for Queried<'_, '_> {
    fn neighbors(&mut self, u: usize) -> Result<&[Neighbor]> {
        let list = match self.memo.entry(u) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(self.index.knn(u, self.k)?.neighbors),
        };
        Ok(list)
    }

    fn lookups(&self) -> usize {
        self.memo.len()
    }
}

/// Lookups into a precomputed k-NN table.
struct Tabled<'t> {
    table: &'t KnnTable,
    k: usize,
    seen: Vec<usize>,
}

impl NeighborSource for Tabled<'_> {
    fn neighbors(&mut self, u: usize) -> Result<&[Neighbor]> {
        if !self.seen.contains(&u) {
            self.seen.push(u);
        }
        Ok(&self.table.neighbors(u)[..self.k])
    }

    fn lookups(&self) -> usize {
        self.seen.len()
    }
}

fn validate(n: usize, source: usize, k: usize) -> Result<()> {
    if source >= n {
        return Err(Error::IndexOutOfRange { index: source, n });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k >= n {
        return Err(Error::TooManyNeighbors { k, n });
    }
    Ok(())
}

/// The `k` nearest points to `source` under `p`, source included first.
pub fn path_knn(
    index: &SpatialIndex,
    source: usize,
    k: usize,
    p: PowerParam,
) -> Result<PathNeighborResult> {
    path_knn_with(index, source, k, p, PathKnnOptions::default())
}

pub fn path_knn_with(
    index: &SpatialIndex,
    source: usize,
    k: usize,
    p: PowerParam,
    options: PathKnnOptions,
) -> Result<PathNeighborResult> {
    validate(index.len(), source, k)?;
    let mut neighbors = Queried {
        index,
        k,
        memo: HashMap::new(),
    };
    search(&mut neighbors, source, k, p, options)
}

/// Same search using a precomputed Euclidean table with at least `k`
/// neighbors per point.
pub fn path_knn_from_table(
    data: &Dataset,
    table: &KnnTable,
    source: usize,
    k: usize,
    p: PowerParam,
    options: PathKnnOptions,
) -> Result<PathNeighborResult> {
    validate(data.len(), source, k)?;
    if table.k() < k || table.len() != data.len() {
        return Err(Error::InvalidParameter(format!(
            "table holds {} neighbors for {} points, need {k} for {}",
            table.k(),
            table.len(),
            data.len()
        )));
    }
    let mut neighbors = Tabled {
        table,
        k,
        seen: Vec::with_capacity(k + 1),
    };
    search(&mut neighbors, source, k, p, options)
}

/// Path neighbors of every point, ordered by source. The Euclidean k-NN
/// graph is computed once and shared by all searches.
pub fn path_knn_all(
    index: &SpatialIndex,
    k: usize,
    p: PowerParam,
) -> Result<Vec<PathNeighborResult>> {
    path_knn_all_with(index, k, p, PathKnnOptions::default())
}

pub fn path_knn_all_with(
    index: &SpatialIndex,
    k: usize,
    p: PowerParam,
    options: PathKnnOptions,
) -> Result<Vec<PathNeighborResult>> {
    validate(index.len(), 0, k)?;
    let table = index.knn_table(k)?;
    path_knn_all_from_table(index.data(), &table, k, p, options)
}

pub fn path_knn_all_from_table(
    data: &Dataset,
    table: &KnnTable,
    k: usize,
    p: PowerParam,
    options: PathKnnOptions,
) -> Result<Vec<PathNeighborResult>> {
    (0..data.len())
        .into_par_iter()
        .map(|s| path_knn_from_table(data, table, s, k, p, options))
        .collect()
}

/// Maps Euclidean edge lengths to additive (or max-combined) keys and back.
#[derive(Debug, Clone, Copy)]
enum Weighting {
    Sum,
    Norm(f64),
    Max,
}

impl Weighting {
    fn new(p: PowerParam) -> Self {
        match p {
            PowerParam::Infinity => Self::Max,
            PowerParam::Finite(p) if p == 1.0 => Self::Sum,
            PowerParam::Finite(p) => Self::Norm(p),
        }
    }

    #[inline]
    fn extend(self, key: f64, edge: f64) -> f64 {
        match self {
            Self::Sum => key + edge,
            Self::Norm(p) => norm_pair(key, edge, p),
            Self::Max => key.max(edge),
        }
    }
}

fn search(
    neighbors: &mut dyn NeighborSource,
    source: usize,
    k: usize,
    p: PowerParam,
    options: PathKnnOptions,
) -> Result<PathNeighborResult> {
    let settle = if options.include_source { k } else { k + 1 };
    let weighting = Weighting::new(p);

    let mut queue = PruningQueue::new();
    queue.push_source(source);
    let mut out = Vec::with_capacity(settle);
    while out.len() < settle {
        let (u, key) = queue.extract_min().ok_or_else(|| {
            Error::InvalidParameter(format!(
                "k-NN graph search from {source} exhausted after {} vertices",
                out.len()
            ))
        })?;
        out.push(Neighbor {
            index: u,
            distance: key,
        });
        for v in neighbors.neighbors(u)? {
            if v.index == u || queue.is_settled(v.index) {
                continue;
            }
            queue.decrease_or_insert(v.index, weighting.extend(key, v.distance));
        }
    }
    if !options.include_source {
        out.remove(0);
    }
    Ok(PathNeighborResult {
        source,
        neighbors: out,
        stats: SearchStats {
            knn_queries: neighbors.lookups(),
            decrease_or_insert_calls: queue.calls(),
            max_queue_len: queue.max_len(),
        },
    })
}
