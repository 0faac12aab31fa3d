//! Sparse linear (optionally diagonally quadratic) program in the NLP
//! interface: min c'x + x'Qx/1 (Q diagonal) s.t. A x = b, l <= x <= u.

use faer::sparse::Triplet;

use super::nlp::NlpProblem;

#[derive(Debug, Clone, Default)]
pub struct SparseQp {
    /// Linear objective coefficients.
    pub c: Vec<f64>,
    /// Diagonal quadratic coefficients (term q_i * x_i^2); empty means LP.
    pub q_diag: Vec<f64>,
    /// Constant objective offset.
    pub c0: f64,
    pub a: Vec<Triplet<usize, usize, f64>>,
    pub b: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub x0: Vec<f64>,
}

impl SparseQp {
    pub fn new(num_vars: usize, num_cons: usize) -> SparseQp {
        SparseQp {
            c: vec![0.0; num_vars],
            q_diag: Vec::new(),
            c0: 0.0,
            a: Vec::new(),
            b: vec![0.0; num_cons],
            lower: vec![f64::NEG_INFINITY; num_vars],
            upper: vec![f64::INFINITY; num_vars],
            x0: vec![0.0; num_vars],
        }
    }

    fn quad(&self, i: usize) -> f64 {
        self.q_diag.get(i).copied().unwrap_or(0.0)
    }
}

impl NlpProblem for SparseQp {
    fn num_vars(&self) -> usize {
        self.c.len()
    }

    fn num_cons(&self) -> usize {
        self.b.len()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lower.clone(), self.upper.clone())
    }

    fn initial_point(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let mut obj = self.c0;
        for (i, &xi) in x.iter().enumerate() {
            obj += self.c[i] * xi + self.quad(i) * xi * xi;
        }
        obj
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        for i in 0..x.len() {
            grad[i] = self.c[i] + 2.0 * self.quad(i) * x[i];
        }
    }

    fn constraints(&self, x: &[f64], out: &mut [f64]) {
        for (k, v) in out.iter_mut().enumerate() {
            *v = -self.b[k];
        }
        for t in &self.a {
            out[t.row] += t.val * x[t.col];
        }
    }

    fn jacobian(&self, _x: &[f64]) -> Vec<Triplet<usize, usize, f64>> {
        self.a.clone()
    }

    fn lagrangian_hessian(
        &self,
        _x: &[f64],
        obj_factor: f64,
        _lambda: &[f64],
    ) -> Vec<Triplet<usize, usize, f64>> {
        self.q_diag
            .iter()
            .enumerate()
            .filter(|(_, &q)| q != 0.0)
            .map(|(i, &q)| Triplet::new(i, i, 2.0 * q * obj_factor))
            .collect()
    }
}
