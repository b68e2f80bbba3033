/// ℝⁿ viewed as a manifold of itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FullSpace {
    dim: usize,
}

impl FullSpace {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}
