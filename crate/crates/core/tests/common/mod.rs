//! Dense reference implementations, built from the aggregation matrices
//! alone. Nothing here calls the library's projection or covariance code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Temporal aggregation matrix over `m` high-frequency periods, one row
/// per non-unit order position, orders descending.
pub fn temporal_agg(orders: &[usize]) -> DMatrix<f64> {
    let m = orders[0];
    let rows: usize = orders.iter().filter(|&&k| k != 1).map(|k| m / k).sum();
    let mut a = DMatrix::zeros(rows, m);
    let mut r = 0;
    for &k in orders.iter().filter(|&&k| k != 1) {
        for j in 0..m / k {
            for c in j * k..(j + 1) * k {
                a[(r, c)] = 1.0;
            }
            r += 1;
        }
    }
    a
}

pub fn summing(agg: &DMatrix<f64>) -> DMatrix<f64> {
    let (u, b) = agg.shape();
    let mut s = DMatrix::zeros(u + b, b);
    s.view_mut((0, 0), (u, b)).copy_from(agg);
    s.view_mut((u, 0), (b, b)).fill_with_identity();
    s
}

pub fn constraints(agg: &DMatrix<f64>) -> DMatrix<f64> {
    let (u, b) = agg.shape();
    let mut c = DMatrix::zeros(u, u + b);
    c.view_mut((0, 0), (u, u)).fill_with_identity();
    c.view_mut((0, u), (u, b)).copy_from(&(-agg));
    c
}

/// Dense matrices of one cross-temporal structure in the row-major
/// `vec(Xᵀ)` layout: entry (i, t) at `i * q + t`.
pub struct Dense {
    pub n: usize,
    pub q: usize,
    pub n_b: usize,
    pub m: usize,
    pub s_cs: DMatrix<f64>,
    pub s_te: DMatrix<f64>,
    pub c_cs: DMatrix<f64>,
    pub c_te: DMatrix<f64>,
}

impl Dense {
    pub fn new(cs_agg: &DMatrix<f64>, orders: &[usize]) -> Self {
        let te_agg = temporal_agg(orders);
        let s_cs = summing(cs_agg);
        let s_te = summing(&te_agg);
        Dense {
            n: s_cs.nrows(),
            q: s_te.nrows(),
            n_b: s_cs.ncols(),
            m: s_te.ncols(),
            c_cs: constraints(cs_agg),
            c_te: constraints(&te_agg),
            s_cs,
            s_te,
        }
    }

    pub fn dim(&self) -> usize {
        self.n * self.q
    }

    pub fn k_cs(&self) -> DMatrix<f64> {
        self.s_cs.kronecker(&DMatrix::identity(self.q, self.q))
    }

    pub fn k_te(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n, self.n).kronecker(&self.s_te)
    }

    pub fn k_ct(&self) -> DMatrix<f64> {
        self.s_cs.kronecker(&self.s_te)
    }

    pub fn h_cs(&self) -> DMatrix<f64> {
        self.c_cs.kronecker(&DMatrix::identity(self.q, self.q))
    }

    pub fn h_te(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n, self.n).kronecker(&self.c_te)
    }

    /// Bottom-up operator from the highest-frequency bottom block.
    pub fn bottom_up(&self) -> DMatrix<f64> {
        let mut sel = DMatrix::zeros(self.n_b * self.m, self.dim());
        let (u, kstar) = (self.n - self.n_b, self.q - self.m);
        for b in 0..self.n_b {
            for h in 0..self.m {
                sel[(b * self.m + h, (u + b) * self.q + kstar + h)] = 1.0;
            }
        }
        self.k_ct() * sel
    }

    /// Cross-sectional residual `‖C_cs X‖_F` and temporal `‖C_te Xᵀ‖`.
    pub fn residuals(&self, x: &[f64]) -> (f64, f64) {
        let v = DVector::from_column_slice(x);
        ((self.h_cs() * &v).norm(), (self.h_te() * &v).norm())
    }
}

/// `K (Kᵀ Σ⁻¹ K)⁻¹ Kᵀ Σ⁻¹`.
pub fn structural(k: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let si = sigma.clone().try_inverse().expect("invertible covariance");
    let g = (k.transpose() * &si * k).try_inverse().expect("invertible Gram");
    k * g * k.transpose() * si
}

/// `I − Σ Hᵀ (H Σ Hᵀ)⁻¹ H`.
pub fn zero_constrained(h: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let d = sigma.nrows();
    let g = (h * sigma * h.transpose()).try_inverse().expect("invertible constraint system");
    DMatrix::identity(d, d) - sigma * h.transpose() * g * h
}

pub fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

pub fn kron_diag(w: &[f64], omega: &[f64]) -> Vec<f64> {
    w.iter().flat_map(|a| omega.iter().map(move |b| a * b)).collect()
}

/// Average of per-series temporal projections, applied to every row.
pub fn averaged_te(d: &Dense, sigma: &[f64]) -> DMatrix<f64> {
    let mut sum = DMatrix::zeros(d.q, d.q);
    for i in 0..d.n {
        sum += structural(&d.s_te, &diag(&sigma[i * d.q..(i + 1) * d.q]));
    }
    DMatrix::identity(d.n, d.n).kronecker(&(sum / d.n as f64))
}

/// Average of per-order cross-sectional projections, applied to every
/// column. `orders` gives the order of each position.
pub fn averaged_cs(d: &Dense, sigma: &[f64], orders: &[usize]) -> DMatrix<f64> {
    let mut seen: Vec<usize> = Vec::new();
    let mut sum = DMatrix::zeros(d.n, d.n);
    for t in 0..d.q {
        if seen.contains(&orders[t]) {
            continue;
        }
        seen.push(orders[t]);
        let col: Vec<f64> = (0..d.n).map(|i| sigma[i * d.q + t]).collect();
        sum += structural(&d.s_cs, &diag(&col));
    }
    (sum / seen.len() as f64).kronecker(&DMatrix::identity(d.q, d.q))
}

/// Order of each of the `q` positions.
pub fn position_orders(orders: &[usize]) -> Vec<usize> {
    let m = orders[0];
    orders.iter().flat_map(|&k| std::iter::repeat_n(k, m / k)).collect()
}

/// Per-(series, order) mean square of the residuals, expanded to every
/// position, with the relative floor.
pub fn wlsv_diag(res: &[Vec<f64>], n: usize, orders: &[usize], floor_rel: f64) -> Vec<f64> {
    let pos = position_orders(orders);
    let q = pos.len();
    let mut var = vec![0.0; n * q];
    for i in 0..n {
        for &k in orders {
            let cells: Vec<f64> = res
                .iter()
                .flat_map(|b| (0..q).filter(|&t| pos[t] == k).map(move |t| b[i * q + t]))
                .collect();
            let v = cells.iter().map(|e| e * e).sum::<f64>() / cells.len() as f64;
            for t in (0..q).filter(|&t| pos[t] == k) {
                var[i * q + t] = v;
            }
        }
    }
    let max = var.iter().copied().fold(0.0, f64::max);
    let floor = floor_rel * max;
    var.iter().map(|&v| v.max(floor)).collect()
}

pub fn apply(p: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (p * DVector::from_column_slice(x)).as_slice().to_vec()
}

pub fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1.0)
}

pub fn rel_gap_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

/// Random aggregation matrix: the first row is the grand total, the rest
/// are random subsets of the bottom series.
pub fn random_agg(rng: &mut impl Rng, n_u: usize, n_b: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n_u, n_b);
    if n_u == 0 {
        return a;
    }
    a.row_mut(0).fill(1.0);
    for u in 1..n_u {
        let mut cols: Vec<usize> = (0..n_b).collect();
        cols.shuffle(rng);
        for &c in &cols[..rng.random_range(1..=n_b)] {
            a[(u, c)] = 1.0;
        }
    }
    a
}

pub fn divisors(m: usize) -> Vec<usize> {
    (1..=m).rev().filter(|k| m.is_multiple_of(*k)).collect()
}

/// Random subset of the divisors of `m` keeping `m` and 1, descending.
pub fn random_orders(rng: &mut impl Rng, m: usize) -> Vec<usize> {
    divisors(m)
        .into_iter()
        .filter(|&k| k == 1 || k == m || rng.random_bool(0.5))
        .collect()
}

pub fn positive(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(0.2..5.0)).collect()
}

pub fn noisy(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-10.0..10.0)).collect()
}

/// Random dense SPD matrix with a well-conditioned spectrum.
pub fn random_spd(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() / d as f64 + DMatrix::identity(d, d)
}

/// Brute-force ranks: 1 + number of strictly smaller errors + half the
/// ties other than itself.
pub fn brute_ranks(errors: &[f64]) -> Vec<f64> {
    errors
        .iter()
        .enumerate()
        .map(|(j, &e)| {
            let less = errors.iter().filter(|&&o| o < e).count() as f64;
            let ties = errors.iter().enumerate().filter(|&(l, &o)| l != j && o == e).count() as f64;
            1.0 + less + ties / 2.0
        })
        .collect()
}
