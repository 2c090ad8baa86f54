use crate::error::{Error, Result};

/// Compressed row adjacency: row `i` owns edges `offsets[i]..offsets[i + 1]`,
/// each pointing at column `targets[e]`. Rows may be empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    cols: usize,
}

impl Adjacency {
    pub fn from_lists(lists: &[Vec<usize>], cols: usize) -> Result<Self> {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for list in lists {
            for &j in list {
                if j >= cols {
                    return Err(Error::invalid("adjacency", format!("target {j} out of range for {cols} columns")));
                }
                targets.push(j);
            }
            offsets.push(targets.len());
        }
        Ok(Adjacency { offsets, targets, cols })
    }

    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn row_range(&self, row: usize) -> std::ops::Range<usize> {
        self.offsets[row]..self.offsets[row + 1]
    }

    pub fn neighbors(&self, row: usize) -> &[usize] {
        &self.targets[self.row_range(row)]
    }

    pub fn target(&self, edge: usize) -> usize {
        self.targets[edge]
    }

    pub fn degree(&self, row: usize) -> usize {
        self.offsets[row + 1] - self.offsets[row]
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.neighbors(row).binary_search(&col).is_ok()
    }

    /// Dense 0/1 matrix, row-major.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows() * self.cols];
        for i in 0..self.rows() {
            for &j in self.neighbors(i) {
                out[i * self.cols + j] = 1.0;
            }
        }
        out
    }
}
