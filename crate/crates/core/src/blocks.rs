//! Stacked block vectors: m node blocks of dimension n in one flat buffer.

/// A vector in R^{m·n} viewed as m contiguous blocks of dimension n.
///
/// Primal iterates, duals, and cost stacks all share this layout; block i
/// occupies `data[i*n .. (i+1)*n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVec {
    m: usize,
    n: usize,
    data: Vec<f64>,
}

impl BlockVec {
    /// All-zero block vector.
    pub fn zeros(m: usize, n: usize) -> Self {
        Self::constant(m, n, 0.0)
    }

    /// Every component set to `value`.
    pub fn constant(m: usize, n: usize, value: f64) -> Self {
        assert!(m > 0 && n > 0, "BlockVec requires m >= 1 and n >= 1");
        BlockVec { m, n, data: vec![value; m * n] }
    }

    /// Builds from per-node blocks; all blocks must share one dimension.
    pub fn from_blocks(blocks: &[Vec<f64>]) -> Self {
        assert!(!blocks.is_empty(), "BlockVec requires at least one block");
        let n = blocks[0].len();
        assert!(n > 0, "BlockVec requires n >= 1");
        let mut data = Vec::with_capacity(blocks.len() * n);
        for b in blocks {
            assert_eq!(b.len(), n, "ragged blocks");
            data.extend_from_slice(b);
        }
        BlockVec { m: blocks.len(), n, data }
    }

    /// Wraps a flat buffer of length m·n.
    pub fn from_flat(m: usize, n: usize, data: Vec<f64>) -> Self {
        assert!(m > 0 && n > 0, "BlockVec requires m >= 1 and n >= 1");
        assert_eq!(data.len(), m * n, "flat buffer length must be m*n");
        BlockVec { m, n, data }
    }

    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn dot(&self, other: &BlockVec) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Euclidean norm over the full stacked vector.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// self += a * other
    pub fn axpy(&mut self, a: f64, other: &BlockVec) {
        assert_eq!(self.data.len(), other.data.len());
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn sub(&self, other: &BlockVec) -> BlockVec {
        assert_eq!(self.data.len(), other.data.len());
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        BlockVec { m: self.m, n: self.n, data }
    }

    /// self *= a
    pub fn scale(&mut self, a: f64) {
        for x in &mut self.data {
            *x *= a;
        }
    }
}
