//! Synthetic road metric and the two lot graphs: the contextual graph
//! (`dist <= ε`, self-loops kept) and the relaxed propagation graph
//! (`dist <= max(ε, dist to k-th nearest labeled lot)`, no self-loops).

use std::sync::Arc;

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};

use crate::error::{Error, Result};
use crate::numerics::Adjacency;

#[derive(Clone, Debug, PartialEq)]
pub struct ParkingLot {
    pub id: usize,
    pub x_km: f64,
    pub y_km: f64,
    pub capacity: u32,
    pub labeled: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BoundingBox {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        let ok = [min_x, min_y, max_x, max_y].iter().all(|v| v.is_finite()) && max_x > min_x && max_y > min_y;
        if !ok {
            return Err(Error::Config(format!("degenerate bounding box ({min_x}, {min_y})..({max_x}, {max_y})")));
        }
        Ok(BoundingBox { min_x, min_y, max_x, max_y })
    }

    pub fn square(side_km: f64) -> Result<Self> {
        Self::new(0.0, 0.0, side_km, side_km)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

/// Square lattice of roads covering a bounding box, with every lot attached
/// to its nearest lattice node. Lot-to-lot distances are precomputed.
#[derive(Clone, Debug)]
pub struct RoadNetwork {
    spacing: f64,
    bbox: BoundingBox,
    nx: usize,
    ny: usize,
    attach_node: Vec<usize>,
    attach_offset: Vec<f64>,
    dist: Vec<f64>,
    lots: usize,
}

fn nearest_index(coord: f64, origin: f64, spacing: f64, count: usize) -> usize {
    // exact midpoints go to the lower node
    let raw = ((coord - origin) / spacing - 0.5).ceil();
    raw.clamp(0.0, (count - 1) as f64) as usize
}

impl RoadNetwork {
    pub fn build(lots: &[ParkingLot], bbox: BoundingBox, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::Config(format!("grid spacing must be positive, got {spacing}")));
        }
        let nx = (bbox.width() / spacing).ceil() as usize + 1;
        let ny = (bbox.height() / spacing).ceil() as usize + 1;
        let mut lattice = UnGraph::<(), f64>::with_capacity(nx * ny, 2 * nx * ny);
        for _ in 0..nx * ny {
            lattice.add_node(());
        }
        let node = |ix: usize, iy: usize| iy * nx + ix;
        for iy in 0..ny {
            for ix in 0..nx {
                if ix + 1 < nx {
                    lattice.add_edge(NodeIndex::new(node(ix, iy)), NodeIndex::new(node(ix + 1, iy)), spacing);
                }
                if iy + 1 < ny {
                    lattice.add_edge(NodeIndex::new(node(ix, iy)), NodeIndex::new(node(ix, iy + 1)), spacing);
                }
            }
        }
        let reach = dijkstra(&lattice, NodeIndex::new(0), None, |e| *e.weight());
        if reach.len() != lattice.node_count() {
            return Err(Error::DisconnectedLattice);
        }

        let mut attach_node = Vec::with_capacity(lots.len());
        let mut attach_offset = Vec::with_capacity(lots.len());
        for lot in lots {
            let ix = nearest_index(lot.x_km, bbox.min_x, spacing, nx);
            let iy = nearest_index(lot.y_km, bbox.min_y, spacing, ny);
            let nxk = bbox.min_x + ix as f64 * spacing;
            let nyk = bbox.min_y + iy as f64 * spacing;
            attach_node.push(node(ix, iy));
            attach_offset.push((lot.x_km - nxk).hypot(lot.y_km - nyk));
        }

        let mut sources: Vec<usize> = attach_node.clone();
        sources.sort_unstable();
        sources.dedup();
        let mut node_dist = std::collections::HashMap::with_capacity(sources.len());
        for &s in &sources {
            let d = dijkstra(&lattice, NodeIndex::new(s), None, |e| *e.weight());
            let mut row = vec![f64::INFINITY; lattice.node_count()];
            for (n, v) in d {
                row[n.index()] = v;
            }
            node_dist.insert(s, row);
        }

        let n = lots.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            let row = &node_dist[&attach_node[i]];
            // Fill both triangles from one sum so the matrix is exactly symmetric.
            for j in i + 1..n {
                let d = attach_offset[i] + row[attach_node[j]] + attach_offset[j];
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        Ok(RoadNetwork { spacing, bbox, nx, ny, attach_node, attach_offset, dist, lots: n })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn lattice_size(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn lot_count(&self) -> usize {
        self.lots
    }

    /// Lattice coordinates of the node lot `i` is attached to.
    pub fn attachment(&self, i: usize) -> ((usize, usize), f64) {
        let node = self.attach_node[i];
        ((node % self.nx, node / self.nx), self.attach_offset[i])
    }

    /// Shortest lattice path between the attachment nodes plus both
    /// attachment offsets; zero for `i == j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.lots + j]
    }
}

/// The contextual and propagation graphs over one set of lots.
#[derive(Clone, Debug)]
pub struct CityGraph {
    pub epsilon: f64,
    pub k: usize,
    /// Symmetric, self-loops included, neighbor lists sorted by id.
    pub context: Arc<Adjacency>,
    /// All lots within each lot's relaxed radius, self excluded.
    pub prop_neighbors: Arc<Adjacency>,
    /// Labeled subset of `prop_neighbors`: the PropConv aggregation sets.
    pub prop_sources: Arc<Adjacency>,
    pub prop_radius: Vec<f64>,
}

impl CityGraph {
    pub fn build(lots: &[ParkingLot], net: &RoadNetwork, epsilon: f64, k: usize) -> Result<Self> {
        let context = build_context_graph(lots.len(), |i, j| net.distance(i, j), epsilon)?;
        let prop = build_prop_graph(lots, |i, j| net.distance(i, j), epsilon, k)?;
        Ok(CityGraph {
            epsilon,
            k,
            context: Arc::new(context),
            prop_neighbors: Arc::new(prop.neighbors),
            prop_sources: Arc::new(prop.sources),
            prop_radius: prop.radius,
        })
    }

    pub fn lot_count(&self) -> usize {
        self.context.rows()
    }
}

pub fn build_context_graph(n: usize, dist: impl Fn(usize, usize) -> f64, epsilon: f64) -> Result<Adjacency> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let lists: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| dist(i, j) <= epsilon).collect()).collect();
    Adjacency::from_lists(&lists, n)
}

pub struct PropGraph {
    pub neighbors: Adjacency,
    pub sources: Adjacency,
    pub radius: Vec<f64>,
}

pub fn build_prop_graph(
    lots: &[ParkingLot],
    dist: impl Fn(usize, usize) -> f64,
    epsilon: f64,
    k: usize,
) -> Result<PropGraph> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let labeled: Vec<usize> = lots.iter().filter(|l| l.labeled).map(|l| l.id).collect();
    if labeled.is_empty() {
        return Err(Error::NoLabeledLots);
    }
    let n = lots.len();
    let mut neighbors = Vec::with_capacity(n);
    let mut sources = Vec::with_capacity(n);
    let mut radius = Vec::with_capacity(n);
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = labeled.iter().filter(|&&j| j != i).map(|&j| (dist(i, j), j)).collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let knn = others.get(k.min(others.len()).wrapping_sub(1)).map_or(0.0, |&(d, _)| d);
        let r = epsilon.max(knn);
        let near: Vec<usize> = (0..n).filter(|&j| j != i && dist(i, j) <= r).collect();
        sources.push(near.iter().copied().filter(|&j| lots[j].labeled).collect());
        neighbors.push(near);
        radius.push(r);
    }
    Ok(PropGraph {
        neighbors: Adjacency::from_lists(&neighbors, n)?,
        sources: Adjacency::from_lists(&sources, n)?,
        radius,
    })
}
