//! Spectrum of the linearized operator `L = alpha h^(1+1/alpha) (d^2 + 1) + 1`
//! about a shrinker, in the weighted space with weight `h^(-1-1/alpha)`.
//!
//! Eigenvalues are reported for `-L`, so the unstable directions carry
//! negative `lambda`. The periodic problem is solved densely as the symmetric
//! generalized problem `[alpha (D2 + I) dx + W] phi = -lambda W phi`; the
//! four Sturm-Liouville problems on `[0, pi/k]` use finite differences with
//! Richardson extrapolation.

use crate::error::{Error, Result};
use crate::fourier;
use crate::geometry::{inner_h, SupportFunction};
use crate::shrinker::{shooting_profile, Shape, ShrinkerProfile};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const TOL_EIG: f64 = 1e-7;
pub const TOL_KER: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct DiscretizedOperator {
    pub alpha: f64,
    pub shape: Shape,
    pub h: SupportFunction,
    /// `alpha (D2 + I) dx + W`, symmetrized.
    pub a: DMatrix<f64>,
    /// Diagonal of `W`: `h^(-1-1/alpha)(theta_i) dx`.
    pub w: Vec<f64>,
    /// `max |A - A^T|` before symmetrization.
    pub symmetry_defect: f64,
}

impl DiscretizedOperator {
    pub fn n(&self) -> usize {
        self.w.len()
    }
}

pub fn build_operator(profile: &ShrinkerProfile, n: usize) -> Result<DiscretizedOperator> {
    let profile = profile.on_grid(n)?;
    let alpha = profile.alpha;
    let ops = fourier::ops(n);
    let dx = ops.spacing();
    let w: Vec<f64> = profile
        .h
        .samples()
        .iter()
        .map(|v| v.powf(-1.0 - 1.0 / alpha) * dx)
        .collect();
    let mut a = ops.d2.clone() * (alpha * dx);
    for i in 0..n {
        a[(i, i)] += alpha * dx + w[i];
    }
    let symmetry_defect = (&a - a.transpose()).abs().max();
    let a = (&a + a.transpose()) * 0.5;
    Ok(DiscretizedOperator {
        alpha,
        shape: profile.shape,
        h: profile.h,
        a,
        w,
        symmetry_defect,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecomposition {
    pub alpha: f64,
    pub shape: Shape,
    pub h: SupportFunction,
    pub eigenvalues: Vec<f64>,
    /// Weight-orthonormal eigenfunctions sampled on the grid.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// Index sets of eigenvalues closer than `TOL_EIG` to their neighbours.
    pub groups: Vec<Vec<usize>>,
    /// `None` when the samples are too degenerate to count sign changes.
    pub nodal_counts: Vec<Option<usize>>,
    pub morse_index: usize,
    pub kernel_dim: usize,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Group index of each eigenvalue.
    pub fn group_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.len()];
        for (g, members) in self.groups.iter().enumerate() {
            for &j in members {
                out[j] = g;
            }
        }
        out
    }

    /// `sup |alpha h^(1+1/alpha) (phi'' + phi) + (lambda + 1) phi| / sup |phi|`.
    pub fn residual(&self, j: usize) -> f64 {
        let phi = &self.eigenfunctions[j];
        let ops = fourier::ops(phi.len());
        let r = ops.radius(phi);
        let a = self.alpha;
        let lam = self.eigenvalues[j];
        let sup = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let res = self
            .h
            .samples()
            .iter()
            .zip(&r)
            .zip(phi)
            .map(|((h, r), p)| (a * h.powf(1.0 + 1.0 / a) * r + (lam + 1.0) * p).abs())
            .fold(0.0f64, f64::max);
        res / sup
    }

    /// Gram matrix `(phi_i, phi_j)_h` evaluated on a grid twice as fine, with
    /// everything resampled by trigonometric interpolation.
    pub fn gram_refined(&self) -> DMatrix<f64> {
        let n = self.h.n();
        let h2 = SupportFunction::new(self.alpha, fourier::resample(self.h.samples(), 2 * n))
            .expect("resampled profile stays valid");
        let fine: Vec<Vec<f64>> = self
            .eigenfunctions
            .iter()
            .map(|f| fourier::resample(f, 2 * n))
            .collect();
        let m = fine.len();
        DMatrix::from_fn(m, m, |i, j| inner_h(&fine[i], &fine[j], &h2))
    }
}

/// The `m` lowest eigenvalues of `-L` with weight-orthonormal eigenfunctions.
pub fn eigs(op: &DiscretizedOperator, m: usize) -> Result<SpectralDecomposition> {
    let n = op.n();
    if m == 0 || m > n {
        return Err(Error::DomainError(format!("requested {m} eigenpairs on a grid of {n}")));
    }
    let s: Vec<f64> = op.w.iter().map(|w| 1.0 / w.sqrt()).collect();
    let b = DMatrix::from_fn(n, n, |i, j| s[i] * op.a[(i, j)] * s[j]);
    let eig = SymmetricEigen::try_new(b, 1e-15, 0)
        .ok_or_else(|| Error::SolverFailure("symmetric eigen-solver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenfunctions = Vec::with_capacity(m);
    for &c in order.iter().take(m) {
        eigenvalues.push(-eig.eigenvalues[c]);
        let col = eig.eigenvectors.column(c);
        eigenfunctions.push((0..n).map(|i| col[i] * s[i]).collect::<Vec<f64>>());
    }

    let groups = cluster(&eigenvalues, TOL_EIG);
    for g in &groups {
        if g.len() == 2 {
            align_pair(&mut eigenfunctions, g[0], g[1], &op.w);
        }
    }
    for f in eigenfunctions.iter_mut() {
        fix_sign(f);
    }
    let nodal_counts = eigenfunctions.iter().map(|f| nodal_count(f).ok()).collect();
    let morse_index = eigenvalues.iter().filter(|l| **l < -TOL_KER).count();
    let kernel_dim = eigenvalues.iter().filter(|l| l.abs() <= TOL_KER).count();
    Ok(SpectralDecomposition {
        alpha: op.alpha,
        shape: op.shape,
        h: op.h.clone(),
        eigenvalues,
        eigenfunctions,
        groups,
        nodal_counts,
        morse_index,
        kernel_dim,
    })
}

/// Builds the operator and returns the `m` lowest eigenpairs.
pub fn spectrum(profile: &ShrinkerProfile, n: usize, m: usize) -> Result<SpectralDecomposition> {
    eigs(&build_operator(profile, n)?, m)
}

fn cluster(values: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (j, v) in values.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if (v - values[*g.last().unwrap()]).abs() < tol => g.push(j),
            _ => groups.push(vec![j]),
        }
    }
    groups
}

fn reflect(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    (0..n).map(|i| f[(n - i) % n]).collect()
}

/// Rotates a two-dimensional eigenspace so that the first member is as even
/// about `theta = 0` as possible and the second is its orthogonal partner.
fn align_pair(fs: &mut [Vec<f64>], i: usize, j: usize, w: &[f64]) {
    let odd = |f: &[f64]| -> Vec<f64> {
        let r = reflect(f);
        f.iter().zip(&r).map(|(a, b)| 0.5 * (a - b)).collect()
    };
    let (oi, oj) = (odd(&fs[i]), odd(&fs[j]));
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(w).map(|((x, y), z)| x * y * z).sum::<f64>();
    let g = nalgebra::Matrix2::new(dot(&oi, &oi), dot(&oi, &oj), dot(&oj, &oi), dot(&oj, &oj));
    let e = g.symmetric_eigen();
    let c = if e.eigenvalues[0] <= e.eigenvalues[1] { 0 } else { 1 };
    let (c1, c2) = (e.eigenvectors[(0, c)], e.eigenvectors[(1, c)]);
    let (a, b) = (fs[i].clone(), fs[j].clone());
    fs[i] = a.iter().zip(&b).map(|(x, y)| c1 * x + c2 * y).collect();
    fs[j] = a.iter().zip(&b).map(|(x, y)| -c2 * x + c1 * y).collect();
}

/// Makes the first sample exceeding a tenth of the sup norm positive.
pub fn fix_sign(f: &mut [f64]) {
    let sup = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(v) = f.iter().find(|v| v.abs() > 0.1 * sup) {
        if *v < 0.0 {
            f.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

pub fn morse_index(dec: &SpectralDecomposition) -> usize {
    dec.morse_index
}

/// Sign changes around the periodic grid. Samples below `1e-10 sup|phi|` are
/// skipped so a zero landing on a node is counted once.
pub fn nodal_count(phi: &[f64]) -> Result<usize> {
    let n = phi.len();
    let sup = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tiny = 1e-10 * sup;
    let significant: Vec<usize> = (0..n).filter(|&i| phi[i].abs() >= tiny).collect();
    if significant.is_empty() {
        return Err(Error::DegenerateSamples(n));
    }
    let mut longest = 0;
    for (a, b) in significant.iter().zip(significant.iter().cycle().skip(1)) {
        let gap = (b + n - a - 1) % n;
        longest = longest.max(if significant.len() == 1 { n - 1 } else { gap });
    }
    if longest > n / 4 {
        return Err(Error::DegenerateSamples(longest));
    }
    let mut count = 0;
    for (a, b) in significant.iter().zip(significant.iter().cycle().skip(1)) {
        if phi[*a] * phi[*b] < 0.0 {
            count += 1;
        }
    }
    Ok(count)
}

// ---------------------------------------------------------------------------
// Boundary problems on [0, pi/k]
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    DD,
    DN,
    ND,
    NN,
}

impl BoundaryCondition {
    pub const ALL: [BoundaryCondition; 4] = [Self::DD, Self::DN, Self::ND, Self::NN];

    fn dirichlet_left(self) -> bool {
        matches!(self, Self::DD | Self::DN)
    }

    fn dirichlet_right(self) -> bool {
        matches!(self, Self::DD | Self::ND)
    }
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEigenReport {
    pub bc: BoundaryCondition,
    pub eigenvalues: Vec<f64>,
    /// Nodes of the fine grid on `[0, pi/k]`.
    pub x: Vec<f64>,
    /// Eigenfunctions on the fine grid, normalized to unit sup norm.
    pub eigenfunctions: Vec<Vec<f64>>,
    pub interior_zeros: Vec<usize>,
}

pub const BOUNDARY_INTERVALS: usize = 2048;

/// Symmetric tridiagonal matrix `M^(-1/2) K M^(-1/2)` for `-psi'' - psi = sigma q psi`.
struct Tridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
    /// `M^(-1/2)` at the unknowns.
    scale: Vec<f64>,
    /// Node index of each unknown.
    nodes: Vec<usize>,
}

fn assemble(q: &[f64], dx: f64, bc: BoundaryCondition) -> Tridiagonal {
    let last = q.len() - 1;
    let first = if bc.dirichlet_left() { 1 } else { 0 };
    let end = if bc.dirichlet_right() { last - 1 } else { last };
    let nodes: Vec<usize> = (first..=end).collect();
    let inv = 1.0 / (dx * dx);
    let mut kd = Vec::with_capacity(nodes.len());
    let mut md = Vec::with_capacity(nodes.len());
    for &i in &nodes {
        let neumann_end = (i == 0 && !bc.dirichlet_left()) || (i == last && !bc.dirichlet_right());
        if neumann_end {
            kd.push(inv - 0.5);
            md.push(0.5 * q[i]);
        } else {
            kd.push(2.0 * inv - 1.0);
            md.push(q[i]);
        }
    }
    let scale: Vec<f64> = md.iter().map(|m| 1.0 / m.sqrt()).collect();
    let diag = kd.iter().zip(&scale).map(|(k, s)| k * s * s).collect();
    let off = (0..nodes.len() - 1)
        .map(|j| -inv * scale[j] * scale[j + 1])
        .collect();
    Tridiagonal {
        diag,
        off,
        scale,
        nodes,
    }
}

impl Tridiagonal {
    /// Number of eigenvalues strictly below `x`.
    fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..self.diag.len() {
            let prev = if i == 0 { 0.0 } else { self.off[i - 1] * self.off[i - 1] / d };
            d = self.diag[i] - x - prev;
            if d == 0.0 {
                d = -f64::EPSILON * (self.diag[i].abs() + x.abs()).max(1.0);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn bounds(&self) -> (f64, f64) {
        let n = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `i`-th smallest eigenvalue (0-based) by bisection on the Sturm count.
    fn eigenvalue(&self, i: usize) -> f64 {
        let (mut lo, mut hi) = self.bounds();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > i {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Inverse iteration for the eigenvector of `sigma`.
    fn eigenvector(&self, sigma: f64) -> Result<Vec<f64>> {
        let n = self.diag.len();
        let shift = sigma + 1e-10 * sigma.abs().max(1.0);
        let mut v = vec![1.0; n];
        for _ in 0..4 {
            v = solve_tridiagonal(&self.diag, &self.off, shift, &v)?;
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// Solves `(T - shift I) x = b` by Gaussian elimination with partial pivoting.
fn solve_tridiagonal(diag: &[f64], off: &[f64], shift: f64, b: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    // banded storage: row i holds columns i, i+1, i+2 after pivoting
    let mut u0: Vec<f64> = diag.iter().map(|d| d - shift).collect();
    let mut u1: Vec<f64> = (0..n).map(|i| if i + 1 < n { off[i] } else { 0.0 }).collect();
    let mut u2 = vec![0.0; n];
    let mut sub: Vec<f64> = (0..n).map(|i| if i > 0 { off[i - 1] } else { 0.0 }).collect();
    let mut rhs = b.to_vec();
    for i in 0..n.saturating_sub(1) {
        let below = sub[i + 1];
        if below.abs() > u0[i].abs() {
            // swap rows i and i+1
            let (a0, a1, a2) = (u0[i], u1[i], u2[i]);
            u0[i] = below;
            u1[i] = u0[i + 1];
            u2[i] = u1[i + 1];
            u0[i + 1] = a1;
            u1[i + 1] = a2;
            sub[i + 1] = a0;
            rhs.swap(i, i + 1);
        }
        if u0[i] == 0.0 {
            u0[i] = f64::EPSILON;
        }
        let f = sub[i + 1] / u0[i];
        u0[i + 1] -= f * u1[i];
        u1[i + 1] -= f * u2[i];
        rhs[i + 1] -= f * rhs[i];
    }
    if u0[n - 1] == 0.0 {
        u0[n - 1] = f64::EPSILON;
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        if i + 1 < n {
            acc -= u1[i] * x[i + 1];
        }
        if i + 2 < n {
            acc -= u2[i] * x[i + 2];
        }
        x[i] = acc / u0[i];
        if !x[i].is_finite() {
            return Err(Error::LinearSolveFailure("tridiagonal solve produced non-finite value".into()));
        }
    }
    Ok(x)
}

fn boundary_weight(profile: &ShrinkerProfile, k: usize, intervals: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = PI / k as f64;
    let x: Vec<f64> = (0..=intervals).map(|i| len * i as f64 / intervals as f64).collect();
    let h = match profile.shape {
        Shape::Circle => vec![1.0; x.len()],
        Shape::KFold(_) => shooting_profile(profile.alpha, profile.r_star, &x)?,
    };
    let a = profile.alpha;
    let q = h.iter().map(|v| v.powf(-1.0 - 1.0 / a) / a).collect();
    Ok((x, q))
}

/// Lowest `m` eigenvalues `mu` of `psi'' + psi = -(1/alpha) h^(-1-1/alpha) (mu + 1) psi`
/// on `[0, pi/k]` with the given boundary conditions.
pub fn boundary_eigs(profile: &ShrinkerProfile, bc: BoundaryCondition, m: usize) -> Result<BoundaryEigenReport> {
    let k = profile.shape.fold().ok_or_else(|| {
        Error::DomainError("boundary problems need a k-fold shrinker".into())
    })?;
    let coarse_n = BOUNDARY_INTERVALS;
    let fine_n = 2 * BOUNDARY_INTERVALS;
    let (_, q_coarse) = boundary_weight(profile, k, coarse_n)?;
    let (x, q_fine) = boundary_weight(profile, k, fine_n)?;
    let len = PI / k as f64;
    let t_coarse = assemble(&q_coarse, len / coarse_n as f64, bc);
    let t_fine = assemble(&q_fine, len / fine_n as f64, bc);
    let m = m.min(t_coarse.diag.len());

    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenfunctions = Vec::with_capacity(m);
    let mut interior_zeros = Vec::with_capacity(m);
    for i in 0..m {
        let s_c = t_coarse.eigenvalue(i);
        let s_f = t_fine.eigenvalue(i);
        let sigma = (4.0 * s_f - s_c) / 3.0;
        eigenvalues.push(sigma - 1.0);

        let y = t_fine.eigenvector(s_f)?;
        let mut psi = vec![0.0; x.len()];
        for (j, &node) in t_fine.nodes.iter().enumerate() {
            psi[node] = y[j] * t_fine.scale[j];
        }
        let sup = psi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        psi.iter_mut().for_each(|v| *v /= sup);
        fix_sign(&mut psi);
        let tiny = 1e-10;
        let inner: Vec<f64> = psi[1..psi.len() - 1]
            .iter()
            .copied()
            .filter(|v| v.abs() > tiny)
            .collect();
        interior_zeros.push(inner.windows(2).filter(|w| w[0] * w[1] < 0.0).count());
        eigenfunctions.push(psi);
    }
    Ok(BoundaryEigenReport {
        bc,
        eigenvalues,
        x,
        eigenfunctions,
        interior_zeros,
    })
}

// ---------------------------------------------------------------------------
// Aggregate checks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// `lambda_1 = -1 - alpha`, simple, eigenfunction parallel to `h`.
    pub first_is_dilation: bool,
    pub first_error: f64,
    pub first_alignment: f64,
    /// `lambda_2 = lambda_3 = -1`.
    pub translations: bool,
    /// No eigenvalue in `(-1 - alpha + 1e-4, -1 - 1e-4)`.
    pub gap: bool,
    pub morse_index: usize,
    pub morse_expected: usize,
    pub morse_ok: bool,
    /// Simple zero eigenvalue with eigenfunction parallel to `h'`.
    pub rotation_kernel: bool,
    pub kernel_alignment: f64,
    /// The eigenvalue after the kernel is positive and simple.
    pub first_positive_simple: bool,
    pub nodal_ok: bool,
    pub nodal_counts: Vec<Option<usize>>,
    /// For even k, `lambda_{k+1} - lambda_k` (reported only).
    pub even_fold_gap: Option<f64>,
}

impl SpectrumReport {
    pub fn all_pass(&self) -> bool {
        self.first_is_dilation
            && self.translations
            && self.gap
            && self.morse_ok
            && self.rotation_kernel
            && self.first_positive_simple
            && self.nodal_ok
    }
}

/// Weighted cosine similarity `|(f, g)_h| / (|f|_h |g|_h)`.
pub fn weighted_similarity(f: &[f64], g: &[f64], h: &SupportFunction) -> f64 {
    let fg = inner_h(f, g, h);
    let ff = inner_h(f, f, h);
    let gg = inner_h(g, g, h);
    fg.abs() / (ff * gg).sqrt()
}

/// Checks the structural claims about the spectrum of a k-fold shrinker
/// (or a circle, where the fold count is taken from the Morse index formula).
pub fn verify_spectrum(dec: &SpectralDecomposition, profile: &ShrinkerProfile) -> SpectrumReport {
    let alpha = profile.alpha;
    let lam = &dec.eigenvalues;
    let groups = dec.group_of();
    let size = |j: usize| dec.groups[groups[j]].len();
    let h = &dec.h;

    let first_error = (lam[0] + 1.0 + alpha).abs();
    let first_alignment = weighted_similarity(&dec.eigenfunctions[0], h.samples(), h);
    let first_is_dilation = first_error < 1e-7 && size(0) == 1 && first_alignment > 1.0 - 1e-8;

    let translations = lam.len() > 2 && (lam[1] + 1.0).abs() < 1e-7 && (lam[2] + 1.0).abs() < 1e-7;
    let gap = !lam.iter().any(|l| *l > -1.0 - alpha + 1e-4 && *l < -1.0 - 1e-4);

    let morse_expected = match profile.shape {
        Shape::KFold(k) => 2 * k - 1,
        Shape::Circle => 2 * (1.0 + 1.0 / alpha).sqrt().ceil() as usize - 1,
    };
    let morse_ok = dec.morse_index == morse_expected;

    let (rotation_kernel, kernel_alignment, first_positive_simple, nodal_ok, even_fold_gap) = match profile.shape {
        Shape::KFold(k) => {
            let hk = 2 * k - 1; // 0-based index of lambda_{2k}
            let dh = crate::geometry::differentiate(h, 1);
            let (ker_ok, align) = if lam.len() > hk {
                let a = weighted_similarity(&dec.eigenfunctions[hk], &dh, h);
                (lam[hk].abs() <= TOL_KER && size(hk) == 1 && a > 1.0 - 1e-6, a)
            } else {
                (false, 0.0)
            };
            let pos = lam.len() > hk + 1 && lam[hk + 1] > TOL_KER && size(hk + 1) == 1;
            let nodal = (0..(2 * k + 1).min(lam.len()))
                .all(|j| dec.nodal_counts[j] == Some(2 * ((j + 1) / 2)))
                && lam.len() > 2 * k;
            let gap = if k % 2 == 0 && lam.len() > k {
                Some(lam[k] - lam[k - 1])
            } else {
                None
            };
            (ker_ok, align, pos, nodal, gap)
        }
        Shape::Circle => {
            // every eigenvalue beyond the first comes in cos/sin pairs with 2l zeros
            let nodal = (0..lam.len().min(17))
                .all(|j| dec.nodal_counts[j] == Some(2 * ((j + 1) / 2)));
            (true, 1.0, true, nodal, None)
        }
    };

    SpectrumReport {
        first_is_dilation,
        first_error,
        first_alignment,
        translations,
        gap,
        morse_index: dec.morse_index,
        morse_expected,
        morse_ok,
        rotation_kernel,
        kernel_alignment,
        first_positive_simple,
        nodal_ok,
        nodal_counts: dec.nodal_counts.iter().take(2 * morse_expected + 4).cloned().collect(),
        even_fold_gap,
    }
}

/// `alpha (l^2 - 1) - 1`, the eigenvalues of `-L` about the unit circle.
pub fn circle_eigenvalue(alpha: f64, l: usize) -> f64 {
    alpha * ((l * l) as f64 - 1.0) - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shrinker::circle_shrinker;

    #[test]
    fn circle_spectrum_sixteenth() {
        let p = circle_shrinker(1.0 / 16.0, 256).unwrap();
        let dec = spectrum(&p, 256, 11).unwrap();
        let expect = [
            -17.0, -16.0, -16.0, -13.0, -13.0, -8.0, -8.0, -1.0, -1.0, 8.0, 8.0,
        ];
        for (l, e) in dec.eigenvalues.iter().zip(expect) {
            assert!((l - e / 16.0).abs() < 1e-8, "{l} vs {}", e / 16.0);
        }
        assert_eq!(dec.morse_index, 9);
        assert_eq!(dec.groups.len(), 6);
    }

    #[test]
    fn operator_is_symmetric_with_positive_weight() {
        let p = circle_shrinker(1.0, 64).unwrap();
        let op = build_operator(&p, 64).unwrap();
        assert!(op.symmetry_defect < 1e-12);
        let dx = 2.0 * PI / 64.0;
        assert!(op.w.iter().all(|w| (w - dx).abs() < 1e-15));
    }

    #[test]
    fn nodal_counts_of_harmonics() {
        let o = fourier::ops(64);
        let c3: Vec<f64> = o.theta.iter().map(|t| (3.0 * t).cos()).collect();
        assert_eq!(nodal_count(&c3).unwrap(), 6);
        let s2: Vec<f64> = o.theta.iter().map(|t| (2.0 * t).sin()).collect();
        assert_eq!(nodal_count(&s2).unwrap(), 4);
        assert_eq!(nodal_count(&vec![1.0; 64]).unwrap(), 0);
        let mut flat = vec![0.0; 64];
        flat[0] = 1.0;
        assert!(matches!(nodal_count(&flat), Err(Error::DegenerateSamples(_))));
    }

    #[test]
    fn tridiagonal_solver() {
        let diag = vec![2.0, 3.0, 4.0, 5.0];
        let off = vec![1.0, -1.0, 0.5];
        let b = vec![1.0, 2.0, 3.0, 4.0];
        let x = solve_tridiagonal(&diag, &off, 0.5, &b).unwrap();
        for i in 0..4 {
            let mut acc = (diag[i] - 0.5) * x[i];
            if i > 0 {
                acc += off[i - 1] * x[i - 1];
            }
            if i < 3 {
                acc += off[i] * x[i + 1];
            }
            assert!((acc - b[i]).abs() < 1e-12);
        }
    }
}
