//! Observation operator, synthetic instances and file formats.
//!
//! The sampling operator 𝓐 keeps the entries listed in a [`Mask`]. Observed
//! data is held in canonical form: a dense matrix with zeros at unobserved
//! positions, so the adjoint 𝓐* is the identity on the stored values.

pub mod io;
pub mod rng;

use crate::error::{dim_err, param_err, Error, Result};
use crate::linalg::{svd_thin, Matrix, Vector};
pub use rng::SeededRng;

/// Set of observed `(row, col)` positions of an `m × n` matrix.
///
/// Kept both as a sorted coordinate list (row-major order) and as a dense
/// membership table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    m: usize,
    n: usize,
    indices: Vec<(usize, usize)>,
    member: Vec<bool>,
}

impl Mask {
    /// Builds a mask from arbitrary-order coordinates. Duplicates are merged.
    pub fn new(m: usize, n: usize, mut indices: Vec<(usize, usize)>) -> Result<Self> {
        for &(i, j) in &indices {
            if i >= m || j >= n {
                return Err(dim_err(format!("mask index ({i}, {j}) outside {m} x {n}")));
            }
        }
        indices.sort_unstable();
        indices.dedup();
        let mut member = vec![false; m * n];
        for &(i, j) in &indices {
            member[i * n + j] = true;
        }
        Ok(Self { m, n, indices, member })
    }

    pub fn full(m: usize, n: usize) -> Self {
        let indices = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
        Self { m, n, indices, member: vec![true; m * n] }
    }

    pub fn empty(m: usize, n: usize) -> Self {
        Self { m, n, indices: Vec::new(), member: vec![false; m * n] }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    /// Observed coordinates, sorted row-major.
    pub fn indices(&self) -> &[(usize, usize)] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.indices.len() == self.m * self.n
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.m && j < self.n && self.member[i * self.n + j]
    }

    /// Observed rows of column `j`, ascending.
    pub fn column_rows(&self, j: usize) -> Vec<usize> {
        (0..self.m).filter(|&i| self.member[i * self.n + j]).collect()
    }

    /// Restriction to the given columns, renumbered `0..cols.len()`.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let mut idx = Vec::new();
        for (new_j, &j) in cols.iter().enumerate() {
            if j >= self.n {
                return Err(dim_err(format!("column {j} outside mask with {} columns", self.n)));
            }
            for i in 0..self.m {
                if self.member[i * self.n + j] {
                    idx.push((i, new_j));
                }
            }
        }
        Mask::new(self.m, cols.len(), idx)
    }

    /// Zeroes every unobserved entry of `x` in place.
    pub fn zero_unobserved(&self, x: &mut Matrix) {
        if self.is_full() {
            return;
        }
        for j in 0..self.n {
            for i in 0..self.m {
                if !self.member[i * self.n + j] {
                    x[(i, j)] = 0.0;
                }
            }
        }
    }
}

/// Partially observed matrix `X̂ = 𝓐(X)` together with its mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedObservation {
    values: Matrix,
    mask: Mask,
}

impl MaskedObservation {
    /// A fully observed matrix.
    pub fn full(x: Matrix) -> Self {
        let mask = Mask::full(x.nrows(), x.ncols());
        Self { values: x, mask }
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mask.shape()
    }

    pub fn nrows(&self) -> usize {
        self.mask.m
    }

    pub fn ncols(&self) -> usize {
        self.mask.n
    }

    /// `X̂ − 𝓐(approx)`, zero at unobserved positions.
    pub fn residual(&self, approx: &Matrix) -> Matrix {
        let mut r = &self.values - approx;
        self.mask.zero_unobserved(&mut r);
        r
    }

    /// Column `j` as a masked vector.
    pub fn column(&self, j: usize) -> MaskedColumn {
        let rows = self.mask.column_rows(j);
        MaskedColumn { values: self.values.column(j).clone_owned(), observed: rows }
    }

    /// Sub-observation made of the given columns.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let mask = self.mask.select_columns(cols)?;
        let values = self.values.select_columns(cols);
        Ok(Self { values, mask })
    }
}

/// `𝓐(X)`: copies observed entries, zeros elsewhere.
pub fn mask_apply(x: &Matrix, mask: &Mask) -> Result<MaskedObservation> {
    if x.shape() != mask.shape() {
        return Err(dim_err(format!("matrix {:?} does not match mask {:?}", x.shape(), mask.shape())));
    }
    let mut values = x.clone();
    mask.zero_unobserved(&mut values);
    Ok(MaskedObservation { values, mask: mask.clone() })
}

/// `𝓐*(Ŷ)`: the zero-filled dense matrix.
pub fn mask_adjoint(yhat: &MaskedObservation) -> Matrix {
    yhat.values.clone()
}

/// One sample of a stream: zero-filled values plus the observed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedColumn {
    values: Vector,
    observed: Vec<usize>,
}

impl MaskedColumn {
    pub fn full(values: Vector) -> Self {
        let observed = (0..values.len()).collect();
        Self { values, observed }
    }

    /// Builds a sample from raw values; entries outside `observed` are zeroed.
    pub fn new(mut values: Vector, mut observed: Vec<usize>) -> Result<Self> {
        observed.sort_unstable();
        observed.dedup();
        if let Some(&last) = observed.last() {
            if last >= values.len() {
                return Err(dim_err(format!("observed row {last} outside vector of length {}", values.len())));
            }
        }
        let mut keep = vec![false; values.len()];
        for &i in &observed {
            keep[i] = true;
        }
        for (i, v) in values.iter_mut().enumerate() {
            if !keep[i] {
                *v = 0.0;
            }
        }
        Ok(Self { values, observed })
    }

    pub fn values(&self) -> &Vector {
        &self.values
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.observed.len() == self.values.len()
    }

    /// `x̂ − 𝓐(approx)`, zero at unobserved rows.
    pub fn residual(&self, approx: &Vector) -> Vector {
        if self.is_full() {
            return &self.values - approx;
        }
        let mut r = Vector::zeros(self.values.len());
        for &i in &self.observed {
            r[i] = self.values[i] - approx[i];
        }
        r
    }
}

/// Low-rank plus sparse test matrix with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub x: Matrix,
    pub l: Matrix,
    pub s: Matrix,
    pub k: usize,
    pub rho: f64,
    pub seed: u64,
}

/// Sample standard deviation over all entries (denominator `len − 1`).
pub fn sample_std(a: &Matrix) -> f64 {
    let count = a.len() as f64;
    let mean = a.sum() / count;
    let ss: f64 = a.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (count - 1.0)).sqrt()
}

/// Rank-k matrix scaled to unit sample standard deviation: the rank-k SVD
/// truncation of an i.i.d. standard normal `m × n` matrix (filled row-major),
/// divided by the sample standard deviation of its entries.
pub fn synth_low_rank(m: usize, n: usize, k: usize, rng: &mut SeededRng) -> Result<Matrix> {
    if k == 0 || k >= m.min(n) {
        return Err(param_err(format!("rank must satisfy 0 < k < min(m, n), got k = {k} for {m} x {n}")));
    }
    let mut g = Matrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            g[(i, j)] = rng.normal();
        }
    }
    let (u, sv, v) = svd_thin(&g).ok_or_else(|| Error::Domain("SVD failed to converge".into()))?;
    let f = u.columns(0, k) * Matrix::from_diagonal(&sv.rows(0, k)) * v.columns(0, k).transpose();
    let std = sample_std(&f);
    Ok(f / std)
}

/// Sparse matrix with exactly `round(rho·m·n)` entries at distinct uniformly
/// random positions, values uniform on `amplitude`.
pub fn synth_sparse(m: usize, n: usize, rho: f64, amplitude: (f64, f64), rng: &mut SeededRng) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(param_err(format!("outlier density must lie in [0, 1], got {rho}")));
    }
    if !(amplitude.0 < amplitude.1) {
        return Err(param_err(format!("empty amplitude range [{}, {}]", amplitude.0, amplitude.1)));
    }
    let count = (rho * (m * n) as f64).round() as usize;
    let mut s = Matrix::zeros(m, n);
    for pos in rng.sample_distinct(m * n, count) {
        s[(pos / n, pos % n)] = rng.uniform_in(amplitude.0, amplitude.1);
    }
    Ok(s)
}

/// Default outlier amplitude range.
pub const DEFAULT_AMPLITUDE: (f64, f64) = (-5.0, 5.0);

/// Synthetic instance `X = L + S`. The low-rank part is drawn first, then
/// outlier positions, then outlier values, all from one stream seeded by
/// `seed`.
pub fn synth_instance(
    m: usize,
    n: usize,
    k: usize,
    rho: f64,
    amplitude: (f64, f64),
    seed: u64,
) -> Result<SyntheticInstance> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(param_err(format!("outlier density must lie in [0, 1], got {rho}")));
    }
    let mut rng = SeededRng::new(seed);
    let l = synth_low_rank(m, n, k, &mut rng)?;
    let s = synth_sparse(m, n, rho, amplitude, &mut rng)?;
    let x = &l + &s;
    Ok(SyntheticInstance { x, l, s, k, rho, seed })
}

/// Uniformly random mask with `round(fraction·m·n)` entries.
pub fn subsample_mask(m: usize, n: usize, fraction: f64, seed: u64) -> Result<Mask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(param_err(format!("sampling fraction must lie in (0, 1], got {fraction}")));
    }
    let count = (fraction * (m * n) as f64).round() as usize;
    if count == m * n {
        return Ok(Mask::full(m, n));
    }
    let mut rng = SeededRng::new(seed);
    let idx = rng.sample_distinct(m * n, count).into_iter().map(|p| (p / n, p % n)).collect();
    Mask::new(m, n, idx)
}

/// `X + N` with i.i.d. Gaussian `N` scaled so that
/// `10·log10(‖ref‖²_F / ‖N‖²_F) = snr_db`, where `ref` is `reference` when
/// given (typically the low-rank part) and `x` otherwise. `snr_db = +∞`
/// returns `x` unchanged.
pub fn add_noise(x: &Matrix, snr_db: f64, seed: u64, reference: Option<&Matrix>) -> Result<Matrix> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(param_err(format!("invalid SNR {snr_db}")));
    }
    if snr_db == f64::INFINITY {
        return Ok(x.clone());
    }
    let signal = reference.unwrap_or(x);
    if signal.shape() != x.shape() {
        return Err(dim_err("noise reference must match the data shape"));
    }
    let signal_energy = signal.norm_squared();
    if signal_energy == 0.0 {
        return Err(Error::Domain("cannot scale noise against a zero signal".into()));
    }
    let mut rng = SeededRng::new(seed);
    let mut noise = Matrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            noise[(i, j)] = rng.normal();
        }
    }
    let target = signal_energy / 10f64.powf(snr_db / 10.0);
    noise *= (target / noise.norm_squared()).sqrt();
    Ok(x + noise)
}

/// Realized SNR in dB of `noisy` against `clean`, measured relative to `reference`.
pub fn realized_snr_db(reference: &Matrix, clean: &Matrix, noisy: &Matrix) -> f64 {
    10.0 * (reference.norm_squared() / (noisy - clean).norm_squared()).log10()
}

/// A stream of samples drawn from a (possibly switching) low-rank model.
#[derive(Debug, Clone)]
pub struct SyntheticStream {
    /// `m × n` data, one sample per column.
    pub x: Matrix,
    /// Outlier-free part.
    pub l: Matrix,
    /// Orthonormal basis of the generating subspace before the switch.
    pub basis_before: Matrix,
    /// Basis after the switch (equal to `basis_before` for static streams).
    pub basis_after: Matrix,
    /// Column index of the first sample drawn from `basis_after`.
    pub switch_at: Option<usize>,
}

/// Stream of `n` samples `x_j = B·c_j + s_j` with `B` an orthonormal `m × k`
/// basis, `c_j` i.i.d. standard normal scaled by `sqrt(m/k)` so entries have
/// unit variance, and `s_j` carrying `round(rho·m)` outliers uniform on
/// `amplitude`. When `switch_at` is set, samples from that index on use a
/// fresh independent basis.
pub fn synth_stream(
    m: usize,
    k: usize,
    n: usize,
    rho: f64,
    amplitude: (f64, f64),
    switch_at: Option<usize>,
    seed: u64,
) -> Result<SyntheticStream> {
    if k == 0 || k >= m {
        return Err(param_err(format!("rank must satisfy 0 < k < m, got k = {k}, m = {m}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(param_err(format!("outlier density must lie in [0, 1], got {rho}")));
    }
    let mut rng = SeededRng::new(seed);
    let draw_basis = |rng: &mut SeededRng| {
        let g = Matrix::from_fn(m, k, |_, _| rng.normal());
        crate::linalg::orthonormalize(&g)
    };
    let basis_before = draw_basis(&mut rng);
    let basis_after = if switch_at.is_some() { draw_basis(&mut rng) } else { basis_before.clone() };
    let scale = (m as f64 / k as f64).sqrt();
    let per_column = (rho * m as f64).round() as usize;
    let mut l = Matrix::zeros(m, n);
    let mut x = Matrix::zeros(m, n);
    for j in 0..n {
        let basis = match switch_at {
            Some(s) if j >= s => &basis_after,
            _ => &basis_before,
        };
        let c = Vector::from_fn(k, |_, _| scale * rng.normal());
        let col = basis * c;
        l.set_column(j, &col);
        let mut xc = col;
        for pos in rng.sample_distinct(m, per_column) {
            xc[pos] += rng.uniform_in(amplitude.0, amplitude.1);
        }
        x.set_column(j, &xc);
    }
    Ok(SyntheticStream { x, l, basis_before, basis_after, switch_at })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_apply_full_and_empty() {
        let x = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 + 1.0);
        let full = mask_apply(&x, &Mask::full(3, 4)).unwrap();
        assert_eq!(full.values(), &x);
        let empty = mask_apply(&x, &Mask::empty(3, 4)).unwrap();
        assert_eq!(empty.values(), &Matrix::zeros(3, 4));
        assert_eq!(mask_adjoint(&full), x);
        assert_eq!(mask_adjoint(&empty), Matrix::zeros(3, 4));
    }

    #[test]
    fn mask_rejects_out_of_range() {
        assert!(Mask::new(2, 2, vec![(2, 0)]).is_err());
        assert!(Mask::new(2, 2, vec![(0, 5)]).is_err());
        assert!(mask_apply(&Matrix::zeros(2, 3), &Mask::full(3, 2)).is_err());
    }

    #[test]
    fn mask_sorted_and_deduplicated() {
        let m = Mask::new(3, 3, vec![(2, 1), (0, 2), (2, 1), (0, 0)]).unwrap();
        assert_eq!(m.indices(), &[(0, 0), (0, 2), (2, 1)]);
        assert!(m.contains(2, 1) && !m.contains(1, 1));
        assert_eq!(m.column_rows(1), vec![2]);
    }

    #[test]
    fn adjoint_then_apply_is_identity() {
        let x = Matrix::from_fn(4, 5, |i, j| (i as f64 - j as f64) * 0.3);
        let mask = subsample_mask(4, 5, 0.6, 1).unwrap();
        let y = mask_apply(&x, &mask).unwrap();
        let back = mask_apply(&mask_adjoint(&y), &mask).unwrap();
        assert_eq!(back, y);
    }

    #[test]
    fn subsample_cardinality_and_reproducibility() {
        assert!(subsample_mask(10, 10, 1.0, 4).unwrap().is_full());
        let a = subsample_mask(10, 10, 0.8, 4).unwrap();
        assert_eq!(a.len(), 80);
        assert_eq!(a, subsample_mask(10, 10, 0.8, 4).unwrap());
        assert_ne!(a, subsample_mask(10, 10, 0.8, 5).unwrap());
        assert!(subsample_mask(10, 10, 0.0, 4).is_err());
        assert!(subsample_mask(10, 10, 1.5, 4).is_err());
    }

    #[test]
    fn synth_without_outliers() {
        let inst = synth_instance(20, 15, 3, 0.0, DEFAULT_AMPLITUDE, 2).unwrap();
        assert_eq!(inst.s, Matrix::zeros(20, 15));
        assert_eq!(inst.x, inst.l);
    }

    #[test]
    fn synth_invariants() {
        let inst = synth_instance(30, 40, 4, 0.1, DEFAULT_AMPLITUDE, 8).unwrap();
        assert_eq!(inst.x, &inst.l + &inst.s);
        assert_eq!(inst.s.iter().filter(|v| **v != 0.0).count(), 120);
        assert!((sample_std(&inst.l) - 1.0).abs() < 1e-6);
        assert!(inst.s.iter().all(|v| (-5.0..5.0).contains(v)));
        let sv = crate::linalg::svd_thin(&inst.l).unwrap().1;
        assert!(sv[4] <= 1e-10 * sv[0]);
        assert!(sv[3] > 1e-3 * sv[0]);
        assert!(synth_instance(5, 5, 5, 0.1, DEFAULT_AMPLITUDE, 0).is_err());
        assert!(synth_instance(5, 5, 2, 1.1, DEFAULT_AMPLITUDE, 0).is_err());
    }

    #[test]
    fn noise_hits_requested_snr() {
        let x = Matrix::from_fn(10, 12, |i, j| ((i + 2 * j) as f64).sin());
        for snr in [-3.0, 10.0, 40.0] {
            let y = add_noise(&x, snr, 3, None).unwrap();
            assert!((realized_snr_db(&x, &x, &y) - snr).abs() < 0.01);
        }
        assert_eq!(add_noise(&x, f64::INFINITY, 3, None).unwrap(), x);
        assert_eq!(add_noise(&x, 20.0, 3, None).unwrap(), add_noise(&x, 20.0, 3, None).unwrap());
        assert!(add_noise(&Matrix::zeros(2, 2), 10.0, 1, None).is_err());
    }

    #[test]
    fn masked_column_zero_fills() {
        let c = MaskedColumn::new(Vector::from_vec(vec![1.0, 2.0, 3.0]), vec![2, 0]).unwrap();
        assert_eq!(c.values().as_slice(), &[1.0, 0.0, 3.0]);
        assert_eq!(c.observed(), &[0, 2]);
        let r = c.residual(&Vector::from_vec(vec![1.0, 9.0, 1.0]));
        assert_eq!(r.as_slice(), &[0.0, 0.0, 2.0]);
        assert!(MaskedColumn::new(Vector::zeros(2), vec![2]).is_err());
    }

    #[test]
    fn stream_switches_basis() {
        let s = synth_stream(20, 2, 30, 0.05, DEFAULT_AMPLITUDE, Some(10), 1).unwrap();
        assert_eq!(s.x.shape(), (20, 30));
        let before = s.l.column(5).clone_owned();
        let resid = &before - &s.basis_before * (s.basis_before.transpose() * &before);
        assert!(resid.norm() < 1e-10);
        let after = s.l.column(20).clone_owned();
        let resid = &after - &s.basis_after * (s.basis_after.transpose() * &after);
        assert!(resid.norm() < 1e-10);
        assert_eq!((&s.x - &s.l).iter().filter(|v| **v != 0.0).count(), 30);
    }
}
