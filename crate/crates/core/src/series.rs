use nalgebra::DVector;

/// A time-ordered sequence of `dim`-dimensional observations.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSeries {
    dim: usize,
    names: Vec<String>,
    rows: Vec<DVector<f64>>,
}

impl MultiSeries {
    /// Builds a series from rows. Panics if rows disagree in dimension.
    pub fn new(dim: usize, rows: Vec<DVector<f64>>) -> Self {
        assert!(
            rows.iter().all(|r| r.len() == dim),
            "all rows must have dimension {dim}"
        );
        let names = (0..dim).map(|j| format!("y{j}")).collect();
        Self { dim, names, rows }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        Self::new(dim, rows.iter().map(|r| DVector::from_column_slice(r)).collect())
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.dim);
        self.names = names;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[DVector<f64>] {
        &self.rows
    }

    pub fn row(&self, t: usize) -> &DVector<f64> {
        &self.rows[t]
    }

    /// The univariate series of coordinate `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// The first `n` observations.
    pub fn head(&self, n: usize) -> Self {
        Self {
            dim: self.dim,
            names: self.names.clone(),
            rows: self.rows[..n.min(self.rows.len())].to_vec(),
        }
    }

    /// Keeps only the listed coordinates, in the given order.
    pub fn select(&self, coords: &[usize]) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| DVector::from_iterator(coords.len(), coords.iter().map(|&j| r[j])))
            .collect();
        let names = coords.iter().map(|&j| self.names[j].clone()).collect();
        Self {
            dim: coords.len(),
            names,
            rows,
        }
    }
}
