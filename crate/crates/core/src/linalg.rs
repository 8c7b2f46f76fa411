//! Small numerical kernels: dense Gaussian elimination and a weighted-Laplacian
//! conjugate gradient solver.

use crate::complex::ToroidalComplex;

/// Solves `a x = b` in place for a dense row-major `n x n` matrix.
/// Returns `None` when a pivot falls below `1e-14` times the largest entry.
pub fn dense_solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[piv * n + col].abs() <= 1e-14 * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * n + row];
    }
    Some(x)
}

/// `sum_e k_e (x_v - x_u)^2` as an operator on vertex potentials, with vertex 0 pinned.
pub struct PinnedLaplacian<'a> {
    complex: &'a ToroidalComplex,
    weights: &'a [f64],
    diag: Vec<f64>,
}

impl<'a> PinnedLaplacian<'a> {
    pub fn new(complex: &'a ToroidalComplex, weights: &'a [f64]) -> Self {
        let mut diag = vec![0.0; complex.num_vertices()];
        for (e, k) in complex.edges.iter().zip(weights) {
            diag[e.u] += k;
            diag[e.v] += k;
        }
        Self { complex, weights, diag }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (e, k) in self.complex.edges.iter().zip(self.weights) {
            let d = k * (x[e.v] - x[e.u]);
            y[e.v] += d;
            y[e.u] -= d;
        }
        y[0] = 0.0;
    }

    /// Preconditioned CG for `L x = b` with `x_0 = 0`. Returns the solution and
    /// the iteration count. `b[0]` is ignored.
    pub fn solve(&self, b: &[f64], rel_tol: f64, max_iter: usize) -> (Vec<f64>, usize, f64) {
        let n = b.len();
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        r[0] = 0.0;
        let bnorm = norm(&r);
        if bnorm == 0.0 {
            return (x, 0, 0.0);
        }
        let precond = |r: &[f64], z: &mut [f64]| {
            for i in 0..n {
                z[i] = if i == 0 || self.diag[i] == 0.0 { 0.0 } else { r[i] / self.diag[i] };
            }
        };
        let mut z = vec![0.0; n];
        precond(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        let mut it = 0;
        let mut rel = 1.0;
        while it < max_iter {
            self.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            it += 1;
            rel = norm(&r) / bnorm;
            if rel <= rel_tol {
                break;
            }
            precond(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        (x, it, rel)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::build_ring;

    #[test]
    fn dense_solve_small_system() {
        let x = dense_solve(vec![2.0, 1.0, 1.0, 3.0], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        assert!(dense_solve(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 1.0]).is_none());
    }

    #[test]
    fn laplacian_cg_on_ring() {
        let c = build_ring(4, 1.0, 1.0).unwrap();
        let k = vec![1.0; 4];
        let lap = PinnedLaplacian::new(&c, &k);
        let b = vec![0.0, 1.0, 0.0, -1.0];
        let (x, _, rel) = lap.solve(&b, 1e-14, 100);
        assert!(rel <= 1e-14);
        let mut y = vec![0.0; 4];
        lap.apply(&x, &mut y);
        for i in 1..4 {
            assert!((y[i] - b[i]).abs() < 1e-12);
        }
    }
}
