//! Exact Euclidean k-nearest-neighbor search.
//!
//! [`SpatialIndex`] is a k-d tree that splits on the coordinate of widest
//! spread at the median. Queries keep the incremental squared distance to
//! the query's cell (Arya–Mount) so descending into the far child costs
//! O(1). Neighbors are ordered by `(distance, index)`, the query point is
//! never its own neighbor, and results match [`knn_brute`] exactly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{squared_distance, Dataset};
use crate::error::{Error, Result};

/// Points per leaf.
pub const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Neighbors of `source`, ascending by distance then index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborList {
    pub source: usize,
    pub neighbors: Vec<Neighbor>,
}

impl NeighborList {
    pub fn indices(&self) -> Vec<usize> {
        self.neighbors.iter().map(|n| n.index).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    sq: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sq
            .total_cmp(&other.sq)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Immutable k-d tree over a borrowed dataset. Safe to query from many
/// threads at once.
#[derive(Debug, Clone)]
pub struct SpatialIndex<'a> {
    data: &'a Dataset,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl<'a> SpatialIndex<'a> {
    pub fn build(data: &'a Dataset) -> Self {
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut nodes = Vec::with_capacity(2 * data.len() / LEAF_SIZE + 1);
        build_node(data, &mut order, 0, data.len(), &mut nodes);
        Self { data, nodes, order }
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The `k` nearest points to point `source`, excluding `source` itself.
    pub fn knn(&self, source: usize, k: usize) -> Result<NeighborList> {
        check_query(self.data, source, k)?;
        Ok(NeighborList {
            source,
            neighbors: self.search(self.data.point(source), k, Some(source)),
        })
    }

    /// The `k` nearest dataset points to an arbitrary query location.
    pub fn knn_point(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        if query.len() != self.data.dim() {
            return Err(Error::LengthMismatch {
                left: query.len(),
                right: self.data.dim(),
            });
        }
        if k > self.data.len() {
            return Err(Error::TooManyNeighbors {
                k: k - 1,
                n: self.data.len(),
            });
        }
        Ok(self.search(query, k, None))
    }

    /// `knn(i, k)` for every point, in parallel.
    pub fn knn_table(&self, k: usize) -> Result<KnnTable> {
        check_query(self.data, 0, k)?;
        let lists = (0..self.len())
            .into_par_iter()
            .map(|i| NeighborList {
                source: i,
                neighbors: self.search(self.data.point(i), k, Some(i)),
            })
            .collect();
        Ok(KnnTable { k, lists })
    }

    fn search(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        let mut offsets = vec![0.0; self.data.dim()];
        self.descend(0, query, k, exclude, 0.0, &mut offsets, &mut heap);
        finish(heap)
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        node: usize,
        query: &[f64],
        k: usize,
        exclude: Option<usize>,
        cell_sq: f64,
        offsets: &mut [f64],
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &index in &self.order[start..end] {
                    if Some(index) == exclude {
                        continue;
                    }
                    let sq = squared_distance(query, self.data.point(index));
                    offer(heap, k, Candidate { sq, index });
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = query[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.descend(near, query, k, exclude, cell_sq, offsets, heap);
                let old = offsets[dim];
                let far_sq = cell_sq - old * old + diff * diff;
                // Equal bound still explored: a tie at the boundary may
                // have a smaller index.
                let worst = if heap.len() == k {
                    heap.peek().map_or(f64::INFINITY, |c| c.sq)
                } else {
                    f64::INFINITY
                };
                if far_sq <= worst {
                    offsets[dim] = diff;
                    self.descend(far, query, k, exclude, far_sq, offsets, heap);
                    offsets[dim] = old;
                }
            }
        }
    }
}

fn build_node(
    data: &Dataset,
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &mut order[start..end];
    let dim = widest_dimension(data, slice);
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        data.point(a)[dim]
            .total_cmp(&data.point(b)[dim])
            .then(a.cmp(&b))
    });
    let value = data.point(slice[mid])[dim];
    nodes.push(Node::Leaf { start, end });
    let left = build_node(data, order, start, start + mid, nodes);
    let right = build_node(data, order, start + mid, end, nodes);
    nodes[id] = Node::Split {
        dim,
        value,
        left,
        right,
    };
    id
}

fn widest_dimension(data: &Dataset, indices: &[usize]) -> usize {
    let dim = data.dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for &i in indices {
        for (d, &x) in data.point(i).iter().enumerate() {
            lo[d] = lo[d].min(x);
            hi[d] = hi[d].max(x);
        }
    }
    (0..dim)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .unwrap_or(0)
}

#[inline]
fn offer(heap: &mut BinaryHeap<Candidate>, k: usize, candidate: Candidate) {
    if heap.len() < k {
        heap.push(candidate);
    } else if let Some(worst) = heap.peek() {
        if candidate < *worst {
            heap.pop();
            heap.push(candidate);
        }
    }
}

fn finish(heap: BinaryHeap<Candidate>) -> Vec<Neighbor> {
    heap.into_sorted_vec()
        .into_iter()
        .map(|c| Neighbor {
            index: c.index,
            distance: c.sq.sqrt(),
        })
        .collect()
}

fn check_query(data: &Dataset, source: usize, k: usize) -> Result<()> {
    let n = data.len();
    if source >= n {
        return Err(Error::IndexOutOfRange { index: source, n });
    }
    if k >= n && k > 0 {
        return Err(Error::TooManyNeighbors { k, n });
    }
    Ok(())
}

/// Exhaustive-scan reference for [`SpatialIndex::knn`].
pub fn knn_brute(data: &Dataset, source: usize, k: usize) -> Result<NeighborList> {
    check_query(data, source, k)?;
    let query = data.point(source);
    let mut all: Vec<Candidate> = (0..data.len())
        .filter(|&i| i != source)
        .map(|index| Candidate {
            sq: squared_distance(query, data.point(index)),
            index,
        })
        .collect();
    all.sort();
    all.truncate(k);
    Ok(NeighborList {
        source,
        neighbors: all
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: c.sq.sqrt(),
            })
            .collect(),
    })
}

/// Euclidean k-NN lists for every point; the directed k-NN graph.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnTable {
    k: usize,
    lists: Vec<NeighborList>,
}

impl KnnTable {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.lists[i].neighbors
    }

    pub fn lists(&self) -> &[NeighborList] {
        &self.lists
    }
}
