//! Ancient solutions of `v_tau = L v + E(v)` about a shrinker `h`, where
//! `h + v` solves the normalized flow and
//! `E(v) = -h (1 + h^(1/alpha) r[v])^(-alpha) + h - alpha h^(1+1/alpha) r[v]`.
//!
//! The solution with prescribed unstable coefficients `a` is assembled layer
//! by layer. Layer `l` collects the unstable modes whose rates lie in
//! `(l+1) lambda_I < lambda <= l lambda_I` (`lambda_I` the unstable eigenvalue
//! closest to zero) and solves a fixed-point problem for the correction `w`
//! to the linear ansatz `sum a_j e^(-lambda_j tau) phi_j`. Each iteration is a
//! mode-wise Duhamel integral in the full discrete eigenbasis: modes decaying
//! slower than the layer rate are integrated forward from the bottom of the
//! time window, the others backward from `tau0` where they vanish.

use crate::error::{Error, Result};
use crate::flow::{evolve, EvolveOptions, Gauge};
use crate::geometry::{entropy, inner_h, SupportFunction};
use crate::parallel::matmul;
use crate::shrinker::{Shape, ShrinkerProfile};
use crate::spectrum::{spectrum, weighted_similarity, SpectralDecomposition, TOL_EIG};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Snap tolerance when assigning eigenvalue ratios to integer layers.
const LAYER_SNAP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub a: Vec<f64>,
}

impl CoefficientVector {
    pub fn new(a: Vec<f64>) -> Self {
        CoefficientVector { a }
    }

    pub fn zeros(len: usize) -> Self {
        CoefficientVector { a: vec![0.0; len] }
    }

    /// `epsilon` in slot `m` (0-based), zero elsewhere.
    pub fn unit(len: usize, m: usize, epsilon: f64) -> Self {
        let mut a = vec![0.0; len];
        a[m] = epsilon;
        CoefficientVector { a }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.a.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

// ---------------------------------------------------------------------------
// Nonlinearity
// ---------------------------------------------------------------------------

/// `E` evaluated from `x = h^(1/alpha) r[v]`.
fn nonlinearity_from_x(h: &[f64], x: &[f64], alpha: f64) -> Vec<f64> {
    h.iter().zip(x).map(|(hi, xi)| -hi * remainder(*xi, alpha)).collect()
}

/// `(1 + x)^(-alpha) - 1 + alpha x`, by its power series for small `x`.
fn remainder(x: f64, alpha: f64) -> f64 {
    if x.abs() < 1e-2 {
        // binomial coefficients of (1 + x)^(-alpha) from the quadratic term on
        let mut coef = -alpha * (-alpha - 1.0) / 2.0;
        let mut power = x * x;
        let mut sum = 0.0;
        for n in 2..12 {
            sum += coef * power;
            coef *= (-alpha - n as f64) / (n + 1) as f64;
            power *= x;
        }
        sum
    } else {
        (-alpha * x.ln_1p()).exp_m1() + alpha * x
    }
}

/// `remainder(s + y) - remainder(s)` without cancellation when `y` is small
/// compared with `s`.
fn remainder_difference(s: f64, y: f64, alpha: f64) -> f64 {
    let base = 1.0 + s;
    let linear = -alpha * y * (-(alpha + 1.0) * s.ln_1p()).exp_m1();
    linear + (-alpha * s.ln_1p()).exp() * remainder(y / base, alpha)
}

fn check_range(x: &[f64]) -> Result<()> {
    let sup = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(sup < 0.5) {
        return Err(Error::OutOfRange(sup));
    }
    Ok(())
}

/// The quadratic remainder `E(v)` of the normalized flow about `h`.
pub fn nonlinearity_e(profile: &ShrinkerProfile, v: &[f64]) -> Result<Vec<f64>> {
    let h = profile.h.samples();
    if v.len() != h.len() {
        return Err(Error::DomainError(format!(
            "field has {} samples, profile has {}",
            v.len(),
            h.len()
        )));
    }
    let alpha = profile.alpha;
    let r = crate::fourier::ops(v.len()).radius(v);
    let x: Vec<f64> = h.iter().zip(&r).map(|(hi, ri)| hi.powf(1.0 / alpha) * ri).collect();
    check_range(&x)?;
    Ok(nonlinearity_from_x(h, &x, alpha))
}

/// `-alpha (alpha + 1) h^(1 + 2/alpha) / 2`, the pointwise coefficient of
/// `r[v]^2` in `E(v)`.
pub fn quadratic_coefficient(profile: &ShrinkerProfile) -> Vec<f64> {
    let a = profile.alpha;
    profile
        .h
        .samples()
        .iter()
        .map(|h| -0.5 * a * (a + 1.0) * h.powf(1.0 + 2.0 / a))
        .collect()
}

// ---------------------------------------------------------------------------
// Linear pieces
// ---------------------------------------------------------------------------

/// `sum_{j in modes} a_j e^(-lambda_j tau) phi_j` at each time in `taus`
/// (one column per time).
pub fn linear_mode_ansatz(dec: &SpectralDecomposition, a: &CoefficientVector, modes: &[usize], taus: &[f64]) -> DMatrix<f64> {
    let n = dec.h.n();
    let mut out = DMatrix::zeros(n, taus.len());
    for &j in modes {
        if a.a[j] == 0.0 {
            continue;
        }
        let phi = &dec.eigenfunctions[j];
        for (c, tau) in taus.iter().enumerate() {
            let amp = a.a[j] * (-dec.eigenvalues[j] * tau).exp();
            for i in 0..n {
                out[(i, c)] += amp * phi[i];
            }
        }
    }
    out
}

fn phi_functions(z: f64) -> (f64, f64) {
    if z.abs() < 1e-3 {
        let phi1 = 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0 + z.powi(4) / 120.0;
        let phi2 = 0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0 + z.powi(4) / 720.0;
        (phi1, phi2)
    } else {
        let em1 = z.exp_m1();
        (em1 / z, (em1 - z) / (z * z))
    }
}

/// Per-step weights of the exponential integrator for `u' + lambda u = f`
/// with `f` linear on each step: `u_{n+1} = e u_n + w0 f_n + w1 f_{n+1}`.
#[derive(Debug, Clone, Copy)]
struct StepWeights {
    e: f64,
    w0: f64,
    w1: f64,
}

impl StepWeights {
    fn new(lambda: f64, dtau: f64) -> Self {
        let z = -lambda * dtau;
        let (p1, p2) = phi_functions(z);
        StepWeights {
            e: z.exp(),
            w0: dtau * (p1 - p2),
            w1: dtau * p2,
        }
    }
}

fn duhamel_with(f: &[f64], lambda: f64, delta: f64, pinned: bool, w: StepWeights) -> Result<Vec<f64>> {
    let n = f.len();
    let mut u = vec![0.0; n];
    if pinned {
        for i in (0..n - 1).rev() {
            u[i] = (u[i + 1] - w.w0 * f[i] - w.w1 * f[i + 1]) / w.e;
        }
    } else {
        let gap = lambda + delta;
        if gap.abs() < 1e-8 {
            return Err(Error::ResonanceError(gap));
        }
        u[0] = f[0] / gap;
        for i in 0..n - 1 {
            u[i + 1] = w.e * u[i] + w.w0 * f[i] + w.w1 * f[i + 1];
        }
    }
    Ok(u)
}

/// Solves `u' + lambda u = f` on a uniform grid of spacing `dtau`.
///
/// With `pinned` the solution vanishes at the last grid time (the modes
/// decaying faster than `e^(delta tau)` backwards in time). Otherwise the
/// solution is integrated forward, starting from the value of the integral
/// over `(-inf, tau_0]` under `f(s) = f(tau_0) e^(delta (s - tau_0))`.
pub fn mode_duhamel(f: &[f64], lambda: f64, delta: f64, dtau: f64, pinned: bool) -> Result<Vec<f64>> {
    if f.len() < 2 {
        return Err(Error::DomainError("time series needs at least two samples".into()));
    }
    duhamel_with(f, lambda, delta, pinned, StepWeights::new(lambda, dtau))
}

/// Precomputed eigenbasis for repeated Duhamel solves.
#[derive(Debug, Clone)]
pub struct ModalBasis {
    pub alpha: f64,
    pub lambdas: Vec<f64>,
    /// Eigenfunctions as columns.
    pub phi: DMatrix<f64>,
    /// `Phi^T W`: samples to coefficients.
    pub project: DMatrix<f64>,
    /// Rows scaled so that `radius_map * c = h^(1/alpha) r[Phi c]`.
    pub radius_map: DMatrix<f64>,
    pub h: Vec<f64>,
}

impl ModalBasis {
    pub fn new(dec: &SpectralDecomposition) -> Result<Self> {
        let n = dec.h.n();
        if dec.len() != n {
            return Err(Error::DomainError(format!(
                "need the complete basis ({n} modes), got {}",
                dec.len()
            )));
        }
        let alpha = dec.alpha;
        let h = dec.h.samples().to_vec();
        let phi = DMatrix::from_fn(n, n, |i, j| dec.eigenfunctions[j][i]);
        let w = crate::geometry::weight_h(&dec.h);
        let project = DMatrix::from_fn(n, n, |j, i| phi[(i, j)] * w[i]);
        // r[phi_j] = -(lambda_j + 1) h^(-1-1/alpha) phi_j / alpha, so
        // h^(1/alpha) r[phi_j] = -(lambda_j + 1) phi_j / (alpha h)
        let radius_map = DMatrix::from_fn(n, n, |i, j| -(dec.eigenvalues[j] + 1.0) * phi[(i, j)] / (alpha * h[i]));
        Ok(ModalBasis {
            alpha,
            lambdas: dec.eigenvalues.clone(),
            phi,
            project,
            radius_map,
            h,
        })
    }

    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    /// Modal Duhamel solve for a forcing given by its coefficients
    /// (`n x T`, one column per time).
    fn solve_modal(&self, f: &DMatrix<f64>, delta: f64, dtau: f64) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(f.nrows(), f.ncols());
        for j in 0..self.n() {
            let lambda = self.lambdas[j];
            let row: Vec<f64> = f.row(j).iter().copied().collect();
            let u = duhamel_with(&row, lambda, delta, lambda < -delta, StepWeights::new(lambda, dtau))?;
            for (c, v) in u.into_iter().enumerate() {
                out[(j, c)] = v;
            }
        }
        Ok(out)
    }
}

/// Solves `v_tau - L v = f` for a forcing sampled on a uniform time grid
/// (columns of `f`), mode by mode in the complete eigenbasis.
pub fn solve_linear_inhom(basis: &ModalBasis, f: &DMatrix<f64>, delta: f64, dtau: f64) -> Result<DMatrix<f64>> {
    let coeffs = matmul(&basis.project, f);
    let u = basis.solve_modal(&coeffs, delta, dtau)?;
    Ok(matmul(&basis.phi, &u))
}

/// Sup over time of `e^(-delta tau) |f(., tau)|_h`; finite when `f` decays like `e^(delta tau)`.
pub fn weighted_decay_norm(f: &DMatrix<f64>, taus: &[f64], h: &SupportFunction, delta: f64) -> f64 {
    (0..f.ncols())
        .map(|c| {
            let col: Vec<f64> = f.column(c).iter().copied().collect();
            inner_h(&col, &col, h).sqrt() * (-delta * taus[c]).exp()
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPartition {
    /// Number of layers, `floor(lambda_1 / lambda_I)`.
    pub count: usize,
    /// `sets[l - 1]` holds the (0-based) mode indices of layer `l`.
    pub sets: Vec<Vec<usize>>,
    /// Decay rate of each layer; `-delta_l` sits midway between
    /// `(l+1) lambda_I` and the lowest eigenvalue of the layer.
    pub deltas: Vec<f64>,
}

impl LayerPartition {
    pub fn new(dec: &SpectralDecomposition) -> Result<Self> {
        let unstable = dec.morse_index;
        if unstable == 0 {
            return Err(Error::DomainError("the shrinker has no unstable modes".into()));
        }
        let lam = &dec.eigenvalues;
        let lambda_i = lam[unstable - 1];
        let level = |x: f64| -> usize {
            let q = x / lambda_i;
            let r = q.round();
            if (q - r).abs() < LAYER_SNAP {
                r as usize
            } else {
                q.floor() as usize
            }
        };
        let count = level(lam[0]);
        let mut sets = vec![Vec::new(); count];
        // assign whole clusters by their mean so ties are never split
        let groups = dec.group_of();
        for m in 0..unstable {
            let members: Vec<usize> = (0..unstable).filter(|j| groups[*j] == groups[m]).collect();
            let mean = members.iter().map(|j| lam[*j]).sum::<f64>() / members.len() as f64;
            let l = level(mean).clamp(1, count);
            sets[l - 1].push(m);
        }
        let deltas = sets
            .iter()
            .enumerate()
            .map(|(i, set)| {
                let l = (i + 1) as f64;
                let lower = (l + 1.0) * lambda_i;
                let upper = if set.is_empty() {
                    l * lambda_i
                } else {
                    set.iter().map(|j| lam[*j]).fold(f64::INFINITY, f64::min)
                };
                -0.5 * (lower + upper)
            })
            .collect();
        Ok(LayerPartition { count, sets, deltas })
    }
}

// ---------------------------------------------------------------------------
// Time shift and recentering
// ---------------------------------------------------------------------------

/// `(1 / (2 (1 + alpha))) max{log(|a|^2 / epsilon0), 0}`.
pub fn time_shift_formula(alpha: f64, norm: f64, epsilon0: f64) -> f64 {
    ((norm * norm / epsilon0).ln().max(0.0)) / (2.0 * (1.0 + alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeShift {
    pub scaled: CoefficientVector,
    pub shift: f64,
    /// Value of the closed-form shift before enlargement.
    pub formula: f64,
}

/// Rescales `a` to `a_m e^(lambda_m T)`. `T` is the closed-form shift,
/// enlarged when needed so that the rescaled vector has norm below `epsilon0`.
pub fn time_shift(a: &CoefficientVector, lambdas: &[f64], alpha: f64, epsilon0: f64) -> TimeShift {
    let formula = time_shift_formula(alpha, a.norm(), epsilon0);
    let scaled_norm = |t: f64| -> f64 {
        a.a.iter()
            .zip(lambdas)
            .map(|(x, l)| (x * (l * t).exp()).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut shift = formula;
    if scaled_norm(shift) >= epsilon0 {
        let mut lo = shift;
        let mut hi = shift.max(1.0);
        while scaled_norm(hi) >= epsilon0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if scaled_norm(mid) >= epsilon0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        shift = hi;
    }
    let scaled = CoefficientVector::new(
        a.a.iter()
            .zip(lambdas)
            .map(|(x, l)| x * (l * shift).exp())
            .collect(),
    );
    TimeShift { scaled, shift, formula }
}

/// Checks that the first three eigenfunctions are `h`, `cos` and `sin`.
pub fn check_rigid_modes(dec: &SpectralDecomposition) -> Result<()> {
    if dec.len() < 3 {
        return Err(Error::ModeMismatch("fewer than three eigenfunctions".into()));
    }
    let h = &dec.h;
    let theta = h.theta();
    let cos: Vec<f64> = theta.iter().map(|t| t.cos()).collect();
    let sin: Vec<f64> = theta.iter().map(|t| t.sin()).collect();
    let checks = [
        (weighted_similarity(&dec.eigenfunctions[0], h.samples(), h), "h"),
        (weighted_similarity(&dec.eigenfunctions[1], &cos, h), "cos"),
        (weighted_similarity(&dec.eigenfunctions[2], &sin, h), "sin"),
    ];
    for (i, (s, name)) in checks.iter().enumerate() {
        if *s < 1.0 - 1e-6 {
            return Err(Error::ModeMismatch(format!(
                "eigenfunction {} is not parallel to {name} (similarity {s})",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Coefficient change produced by moving the space-time center: a time shift
/// `b1` and a spatial shift `(b2, b3)` add `(b1/(1+alpha)) h + (1+alpha)^(-1/(1+alpha)) (b2 cos + b3 sin)`
/// to the `e^(-lambda tau)` asymptotics, expressed in the normalized eigenbasis.
pub fn recenter(a: &CoefficientVector, b: [f64; 3], dec: &SpectralDecomposition) -> Result<CoefficientVector> {
    check_rigid_modes(dec)?;
    let alpha = dec.alpha;
    let h = &dec.h;
    let c = (1.0 + alpha).powf(-1.0 / (1.0 + alpha));
    let theta = h.theta();
    let field: Vec<f64> = theta
        .iter()
        .zip(h.samples())
        .map(|(t, hv)| b[0] / (1.0 + alpha) * hv + c * (b[1] * t.cos() + b[2] * t.sin()))
        .collect();
    let mut out = a.clone();
    for m in 0..3.min(out.len()) {
        out.a[m] += inner_h(&field, &dec.eigenfunctions[m], h);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AncientOptions {
    pub epsilon0: f64,
    /// Depth of the time window; defaults to `40 / (1 + alpha)`.
    pub t_max: Option<f64>,
    pub tau0: f64,
    pub dtau: f64,
    pub tol_fix: f64,
    pub max_iterations: usize,
}

impl Default for AncientOptions {
    fn default() -> Self {
        AncientOptions {
            epsilon0: 1e-2,
            t_max: None,
            tau0: -1.0,
            dtau: 0.02,
            tol_fix: 1e-10,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    pub modes: Vec<usize>,
    pub delta: f64,
    pub iterations: usize,
    /// Sup-norm change of each fixed-point iteration.
    pub changes: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AncientSolution {
    pub alpha: f64,
    pub shape: Shape,
    pub h: SupportFunction,
    pub a: CoefficientVector,
    pub shift: TimeShift,
    /// Construction times `-T_max .. tau0` (before the shift).
    pub construction_taus: Vec<f64>,
    pub dtau: f64,
    pub partition: LayerPartition,
    pub layers: Vec<LayerReport>,
    /// Modal coefficients `(v, phi_j)_h` of the total field, one column per time.
    #[serde(skip)]
    pub coefficients: DMatrix<f64>,
    /// `v` sampled on the grid, one column per time.
    #[serde(skip)]
    pub field: DMatrix<f64>,
    /// Modal coefficients of each non-empty layer, keyed like `layers`.
    #[serde(skip)]
    pub layer_coefficients: Vec<DMatrix<f64>>,
    #[serde(skip)]
    pub eigenvalues: Vec<f64>,
}

impl AncientSolution {
    /// Times in the original clock: the construction window shifted down by `T`.
    pub fn taus(&self) -> Vec<f64> {
        self.construction_taus.iter().map(|t| t - self.shift.shift).collect()
    }

    pub fn len(&self) -> usize {
        self.construction_taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.construction_taus.is_empty()
    }

    pub fn v_at(&self, index: usize) -> Vec<f64> {
        self.field.column(index).iter().copied().collect()
    }

    /// The support function `h + v` at a time index.
    pub fn support_at(&self, index: usize) -> Result<SupportFunction> {
        let v = self.v_at(index);
        self.h
            .with_samples(self.h.samples().iter().zip(&v).map(|(a, b)| a + b).collect())
    }

    pub fn sup_norm(&self) -> f64 {
        self.field.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Sup over interior times of `|v_tau - L v - E(v)|`, with the time
    /// derivative by central differences.
    pub fn pde_residual(&self) -> Result<f64> {
        let n = self.h.n();
        let ops = crate::fourier::ops(n);
        let alpha = self.alpha;
        let h = self.h.samples();
        let mut worst = 0.0f64;
        for c in 1..self.len() - 1 {
            let v = self.v_at(c);
            let r = ops.radius(&v);
            let x: Vec<f64> = h.iter().zip(&r).map(|(hi, ri)| hi.powf(1.0 / alpha) * ri).collect();
            let e = nonlinearity_from_x(h, &x, alpha);
            for i in 0..n {
                let dv = (self.field[(i, c + 1)] - self.field[(i, c - 1)]) / (2.0 * self.dtau);
                let lv = alpha * h[i] * x[i] + v[i];
                worst = worst.max((dv - lv - e[i]).abs());
            }
        }
        Ok(worst)
    }
}

/// Builds the ancient solution with unstable coefficients `a`.
pub fn construct_ancient(
    profile: &ShrinkerProfile,
    dec: &SpectralDecomposition,
    a: &CoefficientVector,
    opts: &AncientOptions,
) -> Result<AncientSolution> {
    let n = profile.n();
    let full;
    let dec = if dec.len() == n && dec.h.n() == n {
        dec
    } else {
        full = spectrum(profile, n, n)?;
        &full
    };
    let unstable = dec.morse_index;
    if a.len() != unstable {
        return Err(Error::DomainError(format!(
            "coefficient vector has {} entries, the Morse index is {unstable}",
            a.len()
        )));
    }
    if !(opts.epsilon0 > 0.0 && opts.dtau > 0.0 && opts.tol_fix > 0.0) {
        return Err(Error::Config("epsilon0, dtau and tol_fix must be positive".into()));
    }
    let alpha = profile.alpha;
    let t_max = opts.t_max.unwrap_or(40.0 / (1.0 + alpha));
    if !(t_max + opts.tau0 > 0.0) {
        return Err(Error::Config(format!("time window [-{t_max}, {}] is empty", opts.tau0)));
    }
    let basis = ModalBasis::new(dec)?;
    let partition = LayerPartition::new(dec)?;
    let shift = time_shift(a, &dec.eigenvalues[..unstable], alpha, opts.epsilon0);
    let scaled = &shift.scaled;

    let steps = ((opts.tau0 + t_max) / opts.dtau).ceil() as usize;
    let dtau = (opts.tau0 + t_max) / steps as f64;
    let taus: Vec<f64> = (0..=steps).map(|i| -t_max + i as f64 * dtau).collect();
    let times = taus.len();

    // coefficients of the accumulated solution and its radius variable x
    let mut total = DMatrix::zeros(n, times);
    let mut total_x = DMatrix::zeros(n, times);
    let mut layers = Vec::new();
    let mut layer_coefficients = Vec::new();

    for (li, modes) in partition.sets.iter().enumerate() {
        if modes.iter().all(|m| scaled.a[*m] == 0.0) {
            continue;
        }
        let delta = partition.deltas[li];
        let mut ansatz = DMatrix::zeros(n, times);
        for &m in modes {
            for (c, tau) in taus.iter().enumerate() {
                ansatz[(m, c)] = scaled.a[m] * (-dec.eigenvalues[m] * tau).exp();
            }
        }
        let ansatz_x = matmul(&basis.radius_map, &ansatz);

        let mut w = DMatrix::zeros(n, times);
        let mut w_x = DMatrix::zeros(n, times);
        let mut changes = Vec::new();
        let mut converged = false;
        for it in 0..opts.max_iterations {
            let forcing = nonlinearity_increment(&basis.h, &total_x, &(&w_x + &ansatz_x), alpha)?;
            let coeffs = matmul(&basis.project, &forcing);
            let next = basis.solve_modal(&coeffs, delta, dtau)?;
            let diff = matmul(&basis.phi, &(&next - &w));
            let change = diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            w_x = matmul(&basis.radius_map, &next);
            w = next;
            changes.push(change);
            if !change.is_finite() || (it >= 3 && change > 1e3 * changes[0].max(opts.tol_fix)) {
                return Err(Error::ContractionDiverged {
                    layer: li + 1,
                    iterations: it + 1,
                    last_change: change,
                });
            }
            if change < opts.tol_fix {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::ContractionDiverged {
                layer: li + 1,
                iterations: changes.len(),
                last_change: *changes.last().unwrap_or(&f64::NAN),
            });
        }
        let layer = &w + &ansatz;
        total += &layer;
        total_x += &w_x + &ansatz_x;
        layers.push(LayerReport {
            layer: li + 1,
            modes: modes.clone(),
            delta,
            iterations: changes.len(),
            changes,
        });
        layer_coefficients.push(layer);
    }

    let field = matmul(&basis.phi, &total);
    Ok(AncientSolution {
        alpha,
        shape: profile.shape,
        h: profile.h.clone(),
        a: a.clone(),
        shift,
        construction_taus: taus,
        dtau,
        partition,
        layers,
        coefficients: total,
        field,
        layer_coefficients,
        eigenvalues: dec.eigenvalues.clone(),
    })
}

/// `E(base + y) - E(base)` in terms of the radius variables of `base` and `y`.
fn nonlinearity_increment(h: &[f64], base: &DMatrix<f64>, y: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    let sup = base
        .iter()
        .zip(y.iter())
        .fold(0.0f64, |m, (b, v)| m.max((b + v).abs()));
    if !(sup < 0.5) {
        return Err(Error::OutOfRange(sup));
    }
    Ok(DMatrix::from_fn(y.nrows(), y.ncols(), |i, c| {
        -h[i] * remainder_difference(base[(i, c)], y[(i, c)], alpha)
    }))
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRate {
    pub mode: usize,
    pub lambda: f64,
    /// Fitted `d/dtau log |(v, phi_m)_h|`; should equal `-lambda`.
    pub slope: f64,
    /// Amplitude recovered from the fit intercept.
    pub recovered: f64,
    pub expected: f64,
}

fn deep_window(len: usize) -> std::ops::Range<usize> {
    0..(len / 4).max(2)
}

fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub const DECAY_FLOOR: f64 = 1e-13;

/// Fits the decay of each prescribed mode over the deepest quarter of the
/// time window, in the original clock.
pub fn layer_rates(sol: &AncientSolution) -> Result<Vec<ModeRate>> {
    let taus = sol.taus();
    let window = deep_window(taus.len());
    let mut out = Vec::new();
    for (m, &am) in sol.a.a.iter().enumerate() {
        if am == 0.0 {
            continue;
        }
        let xs: Vec<f64> = taus[window.clone()].to_vec();
        let vals: Vec<f64> = window.clone().map(|c| sol.coefficients[(m, c)]).collect();
        if vals.iter().any(|v| v.abs() < DECAY_FLOOR) {
            return Err(Error::InsufficientDecay(m + 1));
        }
        let ys: Vec<f64> = vals.iter().map(|v| v.abs().ln()).collect();
        let (slope, intercept) = fit_line(&xs, &ys);
        let lambda = sol.eigenvalues[m];
        // amplitude relative to the exact exponent, averaged over the window
        let recovered = vals
            .iter()
            .zip(&xs)
            .map(|(v, t)| v * (lambda * t).exp())
            .sum::<f64>()
            / vals.len() as f64;
        let _ = intercept;
        out.push(ModeRate {
            mode: m,
            lambda,
            slope,
            recovered,
            expected: am,
        });
    }
    Ok(out)
}

/// Fitted exponential rate of `|v_a - v_b|_h` restricted to `modes` over the
/// deepest quarter of the common window.
pub fn difference_rate(a: &AncientSolution, b: &AncientSolution, modes: &[usize]) -> Result<f64> {
    if a.len() != b.len() || a.shift.shift != b.shift.shift {
        return Err(Error::DomainError("solutions live on different time grids".into()));
    }
    let taus = a.taus();
    let window = deep_window(taus.len());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for c in window {
        let norm = modes
            .iter()
            .map(|m| (a.coefficients[(*m, c)] - b.coefficients[(*m, c)]).powi(2))
            .sum::<f64>()
            .sqrt();
        if norm < DECAY_FLOOR {
            return Err(Error::InsufficientDecay(modes.first().map_or(0, |m| m + 1)));
        }
        xs.push(taus[c]);
        ys.push(norm.ln());
    }
    Ok(fit_line(&xs, &ys).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub tau_start: f64,
    pub tau_end: f64,
    pub sup_error: f64,
    pub tolerance: f64,
    /// Time at which the forward flow left the constructed solution by more
    /// than `DIVERGENCE`, if it did.
    pub diverged_at: Option<f64>,
    pub pass: bool,
}

/// Cross-validation stops once the forward flow is this far from the constructed solution.
pub const DIVERGENCE: f64 = 1e-3;

/// Integrates the normalized flow forward from the constructed solution at
/// `tau0 - window` and compares with the constructed solution at `tau0`.
/// The flow runs in segments of at most unit length and is abandoned when it
/// drifts more than `DIVERGENCE` from the constructed solution.
pub fn cross_validate(sol: &AncientSolution, window: f64, flow_tol: f64) -> Result<CrossValidation> {
    let taus = sol.taus();
    let last = taus.len() - 1;
    let steps_back = ((window / sol.dtau).round() as usize).min(last);
    let start = last - steps_back;
    let segment = ((1.0 / sol.dtau).round() as usize).max(1);
    let tolerance = 10.0 * flow_tol;
    let mut u = sol.support_at(start)?;
    let mut i = start;
    while i < last {
        let j = (i + segment).min(last);
        let opts = EvolveOptions {
            t_start: taus[i],
            tol: flow_tol,
            dt_out: taus[j] - taus[i],
            ..Default::default()
        };
        u = evolve(&u, Gauge::Normalized, taus[j], &opts)?.last().clone();
        let err = u.sup_distance(&sol.support_at(j)?);
        if j < last && err > DIVERGENCE {
            return Ok(CrossValidation {
                tau_start: taus[start],
                tau_end: taus[last],
                sup_error: err,
                tolerance,
                diverged_at: Some(taus[j]),
                pass: false,
            });
        }
        i = j;
    }
    let sup_error = u.sup_distance(&sol.support_at(last)?);
    Ok(CrossValidation {
        tau_start: taus[start],
        tau_end: taus[last],
        sup_error,
        tolerance,
        diverged_at: None,
        pass: sup_error < tolerance,
    })
}

/// Entropy of `h + v` every `stride` time samples (and at the last one).
pub fn entropy_along_solution(sol: &AncientSolution, stride: usize) -> Result<Vec<(f64, f64)>> {
    let taus = sol.taus();
    let mut idx: Vec<usize> = (0..taus.len()).step_by(stride.max(1)).collect();
    if *idx.last().unwrap() != taus.len() - 1 {
        idx.push(taus.len() - 1);
    }
    idx.into_iter()
        .map(|c| Ok((taus[c], entropy(&sol.support_at(c)?)?.value)))
        .collect()
}

/// Projection of a normalized-gauge field onto eigenfunction `m`.
pub fn project(dec: &SpectralDecomposition, v: &[f64], m: usize) -> f64 {
    inner_h(v, &dec.eigenfunctions[m], &dec.h)
}

/// Indices of the eigenvalue cluster containing mode `m`.
pub fn cluster_of(dec: &SpectralDecomposition, m: usize) -> Vec<usize> {
    let lam = dec.eigenvalues[m];
    (0..dec.len())
        .filter(|j| (dec.eigenvalues[*j] - lam).abs() < TOL_EIG)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shrinker::circle_shrinker;

    #[test]
    fn nonlinearity_vanishes_on_translations() {
        let p = circle_shrinker(1.0 / 16.0, 64).unwrap();
        let v: Vec<f64> = p.h.theta().iter().map(|t| 1e-3 * t.cos()).collect();
        let e = nonlinearity_e(&p, &v).unwrap();
        assert!(e.iter().all(|x| x.abs() < 1e-15));
        let zero = nonlinearity_e(&p, &vec![0.0; 64]).unwrap();
        assert!(zero.iter().all(|x| *x == 0.0));
        let big: Vec<f64> = p.h.theta().iter().map(|t| 0.2 * (2.0 * t).cos()).collect();
        assert!(matches!(nonlinearity_e(&p, &big), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn remainder_forms_agree() {
        for alpha in [1.0 / 16.0, 0.5, 1.0] {
            for x in [-0.3, -2e-2, -5e-3, 1e-6, 9e-3, 0.2] {
                let direct = (1.0f64 + x).powf(-alpha) - 1.0 + alpha * x;
                assert!((remainder(x, alpha) - direct).abs() < 1e-15, "{alpha} {x}");
            }
            for (s, y) in [(1e-3, 1e-12), (-0.2, 0.1), (0.05, -3e-3), (0.0, 4e-3)] {
                let diff = remainder_difference(s, y, alpha);
                let direct = remainder(s + y, alpha) - remainder(s, alpha);
                assert!((diff - direct).abs() < 1e-15, "{alpha} {s} {y}");
            }
        }
        // quadratic leading term survives for tiny increments
        let d = remainder_difference(1e-3, 1e-30, 0.5);
        let expected = 0.5 * 1.5 * 1e-3 * 1e-30;
        assert!((d - expected).abs() < 3e-3 * expected);
    }

    #[test]
    fn duhamel_closed_forms() {
        let dtau = 0.01;
        let taus: Vec<f64> = (0..=400).map(|i| -4.0 + i as f64 * dtau).collect();
        let delta = 0.7;
        let f: Vec<f64> = taus.iter().map(|t| (delta * t).exp()).collect();
        for lambda in [-0.5, 0.0, 2.0, 500.0] {
            let u = mode_duhamel(&f, lambda, delta, dtau, false).unwrap();
            for (ui, t) in u.iter().zip(&taus) {
                let exact = (delta * t).exp() / (lambda + delta);
                assert!((ui - exact).abs() < 1e-5 * exact.abs(), "lambda {lambda}");
            }
        }
        let u = mode_duhamel(&f, -1.0, delta, dtau, true).unwrap();
        assert_eq!(*u.last().unwrap(), 0.0);
        assert!(matches!(
            mode_duhamel(&f, -delta, delta, dtau, false),
            Err(Error::ResonanceError(_))
        ));
        let zero = mode_duhamel(&vec![0.0; 10], 1.0, delta, dtau, false).unwrap();
        assert!(zero.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn time_shift_examples() {
        let t = time_shift_formula(1.0 / 16.0, 1.0, 1e-2);
        assert!((t - 8.0 / 17.0 * 100f64.ln()).abs() < 1e-12);
        assert!((t - 2.167_138_911_053_22).abs() < 1e-12);
        let a = CoefficientVector::new(vec![0.05, 0.0]);
        let s = time_shift(&CoefficientVector::new(vec![0.001, 0.002]), &[-1.0, -0.5], 0.0625, 1e-2);
        assert_eq!(s.shift, 0.0);
        let s2 = time_shift(&a, &[-1.0, -0.5], 0.0625, 1e-2);
        assert!(s2.scaled.norm() < 1e-2);
    }

    #[test]
    fn circle_partition() {
        let p = circle_shrinker(1.0 / 16.0, 64).unwrap();
        let dec = spectrum(&p, 64, 64).unwrap();
        let part = LayerPartition::new(&dec).unwrap();
        assert_eq!(part.count, 17);
        assert_eq!(part.sets[0], vec![7, 8]);
        assert_eq!(part.sets[7], vec![5, 6]);
        assert_eq!(part.sets[12], vec![3, 4]);
        assert_eq!(part.sets[15], vec![1, 2]);
        assert_eq!(part.sets[16], vec![0]);
        let flat: usize = part.sets.iter().map(|s| s.len()).sum();
        assert_eq!(flat, 9);
    }
}
