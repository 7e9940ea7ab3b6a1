//! Reaction terms `f(z, x)`, their primitives, a model family built from
//! spectral data, a sampling auditor for the growth/monotonicity/resonance/
//! near-zero hypotheses, and the Nemytskii operators on P1 functions.

use std::fmt::Debug;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::form::SymmetricForm;
use crate::mesh::{Mesh, QuadPoint};
use crate::spectrum::EigenDecomposition;

/// A Carathéodory reaction with the constants it declares for the
/// hypotheses on `f`.
pub trait Reaction: Send + Sync + Debug {
    fn value(&self, z: &[f64], x: f64) -> f64;
    /// `F(z, x) = ∫₀ˣ f(z, s) ds`.
    fn primitive(&self, z: &[f64], x: f64) -> f64;
    /// `∂f/∂x`, right-sided at kinks.
    fn derivative(&self, z: &[f64], x: f64) -> f64;

    /// `a(z)` in `|f(z,x)| ≤ a(z)(1+|x|)`.
    fn growth_bound(&self, z: &[f64]) -> f64;
    /// `η(z)` in `(f(z,x)−f(z,x'))(x−x') ≥ η(z)(x−x')²`.
    fn monotonicity_floor(&self, z: &[f64]) -> f64;
    /// `δ`, half-width of the band around zero.
    fn band(&self) -> f64;
    /// `ϑ(z)` in `f(z,x)x ≤ ϑ(z)x²` for `|x| ≤ δ`.
    fn upper_slope(&self, z: &[f64]) -> f64;

    fn is_autonomous(&self) -> bool {
        true
    }

    fn name(&self) -> String;
}

/// The spectral values a reaction is measured against: `λ̂_m`, `λ̂_{m+1}`,
/// `λ̂_{l−1}`, `λ̂_l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralLevels {
    pub m: usize,
    pub l: usize,
    pub lambda_m: f64,
    pub lambda_m1: f64,
    pub lambda_l1: f64,
    pub lambda_l: f64,
}

impl SpectralLevels {
    pub fn from_decomposition(decomp: &EigenDecomposition, m: usize, l: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::hypothesis("H(f)(ii)", "m must be at least 1"));
        }
        if l < m + 2 {
            return Err(Error::hypothesis(
                "H(f)(iv)",
                format!("need l >= m+2, got m = {m}, l = {l}"),
            ));
        }
        let get = |k: usize| {
            decomp.distinct(k).ok_or(Error::InsufficientClusters {
                needed: l,
                available: decomp.clusters.len(),
            })
        };
        Ok(SpectralLevels {
            m,
            l,
            lambda_m: get(m)?,
            lambda_m1: get(m + 1)?,
            lambda_l1: get(l - 1)?,
            lambda_l: get(l)?,
        })
    }
}

/// Odd, autonomous reaction that is linear with slope `λ̂_{l−1}` on
/// `|x| ≤ δ` and resonant at infinity with slope `λ̂_{m+1}` softened by
/// `a_s·x(1+x²)^{-1/4}`:
///
/// ```text
/// f(x) = λ̂_{l−1} x                                   |x| ≤ δ
/// f(x) = λ̂_{m+1} x − a_s x (1+x²)^{-1/4} + c_j sgn x   |x| > δ
/// ```
///
/// with `c_j` chosen so that `f` is continuous at `±δ`.
#[derive(Debug, Clone, Serialize)]
pub struct ModelReaction {
    pub levels: SpectralLevels,
    pub softening: f64,
    pub delta: f64,
    pub jump: f64,
}

impl ModelReaction {
    pub fn new(levels: SpectralLevels, softening: f64, delta: f64) -> Result<Self> {
        let SpectralLevels {
            lambda_m,
            lambda_m1,
            lambda_l1,
            lambda_l,
            ..
        } = levels;
        if !(lambda_m < lambda_m1) {
            return Err(Error::hypothesis(
                "H(f)(ii)",
                format!("need lambda_m < lambda_(m+1), got {lambda_m} >= {lambda_m1}"),
            ));
        }
        if !(lambda_m1 <= lambda_l1) {
            return Err(Error::hypothesis(
                "H(f)(iv)",
                format!("need lambda_(m+1) <= lambda_(l-1), got {lambda_m1} > {lambda_l1}"),
            ));
        }
        if !(lambda_l1 < lambda_l) {
            return Err(Error::hypothesis(
                "H(f)(iv)",
                format!("need lambda_(l-1) < lambda_l, got {lambda_l1} >= {lambda_l}"),
            ));
        }
        if !(softening > 0.0 && softening < lambda_m1 - lambda_m) {
            return Err(Error::hypothesis(
                "H(f)(ii)",
                format!(
                    "softening must lie in (0, {}), got {softening}",
                    lambda_m1 - lambda_m
                ),
            ));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::hypothesis("H(f)(iv)", format!("band must be positive, got {delta}")));
        }
        let jump = (lambda_l1 - lambda_m1) * delta + softening * delta * (1.0 + delta * delta).powf(-0.25);
        Ok(ModelReaction {
            levels,
            softening,
            delta,
            jump,
        })
    }

    fn eta(&self) -> f64 {
        self.levels.lambda_l1.min(self.levels.lambda_m1 - self.softening)
    }

    #[inline]
    fn inner(&self, x: f64) -> bool {
        // Right-sided convention at the kinks: x = -δ is inner, x = δ outer.
        -self.delta <= x && x < self.delta
    }
}

impl Reaction for ModelReaction {
    fn value(&self, _z: &[f64], x: f64) -> f64 {
        let lv = &self.levels;
        if x.abs() <= self.delta {
            lv.lambda_l1 * x
        } else {
            lv.lambda_m1 * x - self.softening * x * (1.0 + x * x).powf(-0.25) + self.jump * x.signum()
        }
    }

    fn primitive(&self, _z: &[f64], x: f64) -> f64 {
        let lv = &self.levels;
        let d = self.delta;
        let t = x.abs();
        if t <= d {
            0.5 * lv.lambda_l1 * x * x
        } else {
            0.5 * lv.lambda_l1 * d * d + 0.5 * lv.lambda_m1 * (t * t - d * d)
                - (2.0 * self.softening / 3.0) * ((1.0 + t * t).powf(0.75) - (1.0 + d * d).powf(0.75))
                + self.jump * (t - d)
        }
    }

    fn derivative(&self, _z: &[f64], x: f64) -> f64 {
        let lv = &self.levels;
        if self.inner(x) {
            lv.lambda_l1
        } else {
            let s = 1.0 + x * x;
            lv.lambda_m1 - self.softening * (1.0 + 0.5 * x * x) * s.powf(-1.25)
        }
    }

    fn growth_bound(&self, _z: &[f64]) -> f64 {
        let lv = &self.levels;
        lv.lambda_l1
            .abs()
            .max(lv.lambda_m1.abs() + self.softening + self.jump)
    }

    fn monotonicity_floor(&self, _z: &[f64]) -> f64 {
        self.eta()
    }

    fn band(&self) -> f64 {
        self.delta
    }

    fn upper_slope(&self, _z: &[f64]) -> f64 {
        self.levels.lambda_l1
    }

    fn name(&self) -> String {
        "model".into()
    }
}

/// `f(x) = c·x`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinearReaction {
    pub slope: f64,
    /// Band reported for the near-zero clause.
    pub delta: f64,
}

impl Reaction for LinearReaction {
    fn value(&self, _z: &[f64], x: f64) -> f64 {
        self.slope * x
    }
    fn primitive(&self, _z: &[f64], x: f64) -> f64 {
        0.5 * self.slope * x * x
    }
    fn derivative(&self, _z: &[f64], _x: f64) -> f64 {
        self.slope
    }
    fn growth_bound(&self, _z: &[f64]) -> f64 {
        self.slope.abs()
    }
    fn monotonicity_floor(&self, _z: &[f64]) -> f64 {
        self.slope
    }
    fn band(&self) -> f64 {
        self.delta
    }
    fn upper_slope(&self, _z: &[f64]) -> f64 {
        self.slope
    }
    fn name(&self) -> String {
        format!("linear(slope={})", self.slope)
    }
}

/// `f(x) = x²`: superlinear, breaks the growth clause.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SquareReaction {
    pub growth: f64,
    pub delta: f64,
}

impl Reaction for SquareReaction {
    fn value(&self, _z: &[f64], x: f64) -> f64 {
        x * x
    }
    fn primitive(&self, _z: &[f64], x: f64) -> f64 {
        x * x * x / 3.0
    }
    fn derivative(&self, _z: &[f64], x: f64) -> f64 {
        2.0 * x
    }
    fn growth_bound(&self, _z: &[f64]) -> f64 {
        self.growth
    }
    fn monotonicity_floor(&self, _z: &[f64]) -> f64 {
        f64::NEG_INFINITY
    }
    fn band(&self) -> f64 {
        self.delta
    }
    fn upper_slope(&self, _z: &[f64]) -> f64 {
        2.0 * self.delta
    }
    fn name(&self) -> String {
        "square".into()
    }
}

// ---------------------------------------------------------------------------
// Audit

#[derive(Debug, Clone, Serialize)]
pub struct SamplingGrid {
    /// Largest |x| sampled.
    pub x_max: f64,
    /// Log-spaced samples per decade.
    pub per_decade: usize,
    /// Samples across the band `[-δ, δ]`.
    pub band_samples: usize,
    /// Spacing of the close difference pairs.
    pub pair_spacing: f64,
    /// Value `f(x)x − 2F(x)` must exceed at `x_max`.
    pub growth_threshold: f64,
    /// Points of the domain at which z-dependent data is sampled.
    pub z_samples: Vec<Vec<f64>>,
}

impl SamplingGrid {
    /// Grid reaching `10⁶·δ`, with z sampled at a handful of mesh nodes.
    pub fn for_reaction(r: &dyn Reaction, mesh: &Mesh) -> Self {
        let n = mesh.n_nodes();
        let picks = [0, n / 4, n / 2, (3 * n) / 4, n - 1];
        let mut z: Vec<Vec<f64>> = picks.iter().map(|&i| mesh.node(i).to_vec()).collect();
        z.dedup();
        SamplingGrid {
            x_max: 1e6 * r.band(),
            per_decade: 12,
            band_samples: 201,
            pair_spacing: 1e-4,
            growth_threshold: 1.0,
            z_samples: z,
        }
    }

    fn points(&self, delta: f64) -> Vec<f64> {
        let mut xs = vec![0.0];
        let lo = (delta * 1e-6).log10();
        let hi = self.x_max.log10();
        let steps = ((hi - lo) * self.per_decade as f64).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let x = 10f64.powf(lo + (hi - lo) * k as f64 / steps as f64);
            xs.push(x);
            xs.push(-x);
        }
        for k in 0..self.band_samples {
            let t = -1.0 + 2.0 * k as f64 / (self.band_samples - 1).max(1) as f64;
            xs.push(t * delta);
        }
        xs.push(self.x_max);
        xs.push(-self.x_max);
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub z: Vec<f64>,
    pub x: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x2: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClauseVerdict {
    pub clause: &'static str,
    pub passed: bool,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub reaction: String,
    pub levels: SpectralLevels,
    pub grid: String,
    pub clauses: Vec<ClauseVerdict>,
    pub caveats: Vec<String>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn failed_clauses(&self) -> Vec<&'static str> {
        self.clauses.iter().filter(|c| !c.passed).map(|c| c.clause).collect()
    }

    pub fn table(&self) -> String {
        let mut s = format!("reaction: {}\ngrid: {}\n", self.reaction, self.grid);
        s.push_str(&format!("{:<10} {:<6} {}\n", "clause", "verdict", "detail"));
        for c in &self.clauses {
            let mut line = format!(
                "{:<10} {:<6}  {}",
                c.clause,
                if c.passed { "PASS" } else { "FAIL" },
                c.detail
            );
            if let Some(w) = &c.witness {
                line.push_str(&format!("  [witness z={:?} x={:e}", w.z, w.x));
                if let Some(x2) = w.x2 {
                    line.push_str(&format!(" x'={x2:e}"));
                }
                line.push(']');
            }
            s.push_str(&line);
            s.push('\n');
        }
        for c in &self.caveats {
            s.push_str(&format!("caveat: {c}\n"));
        }
        s
    }
}

fn verdict(clause: &'static str, detail: String, witness: Option<Witness>) -> ClauseVerdict {
    ClauseVerdict {
        clause,
        passed: witness.is_none(),
        detail,
        witness,
    }
}

/// Samples every clause of the hypotheses on `f`. Failures are verdicts
/// carrying a concrete witness, never errors.
pub fn audit_hypotheses(r: &dyn Reaction, levels: &SpectralLevels, grid: &SamplingGrid) -> HypothesisReport {
    let delta = r.band();
    let xs = grid.points(delta);
    let zs: Vec<Vec<f64>> = if grid.z_samples.is_empty() {
        vec![vec![0.0]]
    } else {
        grid.z_samples.clone()
    };
    let rel = |a: f64| 1e-9 * (1.0 + a.abs());
    let mut clauses = Vec::new();

    // f(z,0) = 0
    let w = zs
        .iter()
        .find(|z| r.value(z, 0.0) != 0.0)
        .map(|z| Witness { z: z.clone(), x: 0.0, x2: None });
    clauses.push(verdict("H(f)(0)", "f(z,0) = 0".into(), w));

    // (i) growth
    let mut w = None;
    'i: for z in &zs {
        let a = r.growth_bound(z);
        if !(a >= 0.0) || !a.is_finite() {
            w = Some(Witness { z: z.clone(), x: 0.0, x2: None });
            break;
        }
        for &x in &xs {
            let f = r.value(z, x);
            if !(f.abs() <= a * (1.0 + x.abs()) * (1.0 + 1e-12)) {
                w = Some(Witness { z: z.clone(), x, x2: None });
                break 'i;
            }
        }
    }
    clauses.push(verdict("H(f)(i)", "|f(z,x)| <= a(z)(1+|x|)".into(), w));

    // (ii) monotonicity floor η ≥ λ̂_m, η ≢ λ̂_m
    let mut w = None;
    let mut strict = false;
    let mut detail = "difference quotients >= eta(z) >= lambda_m".to_string();
    'ii: for z in &zs {
        let eta = r.monotonicity_floor(z);
        if !(eta >= levels.lambda_m - rel(levels.lambda_m)) {
            detail = format!("eta = {eta} below lambda_m = {}", levels.lambda_m);
            w = Some(Witness { z: z.clone(), x: 0.0, x2: None });
            break;
        }
        strict |= eta > levels.lambda_m + rel(levels.lambda_m);
        let mut pairs: Vec<(f64, f64)> = xs.windows(2).map(|p| (p[0], p[1])).collect();
        pairs.extend(xs.iter().map(|&x| (x, x + grid.pair_spacing)));
        pairs.extend(xs.iter().filter(|&&x| x > 0.0).map(|&x| (-x, x)));
        for (x, y) in pairs {
            let (fx, fy) = (r.value(z, x), r.value(z, y));
            let q = (fx - fy) / (x - y);
            let noise = 8.0 * f64::EPSILON * (fx.abs() + fy.abs()) / (x - y).abs();
            if !(q >= eta - rel(eta) - noise) {
                detail = format!("difference quotient {q} < eta = {eta}");
                w = Some(Witness { z: z.clone(), x, x2: Some(y) });
                break 'ii;
            }
        }
    }
    if w.is_none() && !strict {
        detail = format!("eta coincides with lambda_m = {} at every sampled z", levels.lambda_m);
        w = Some(Witness { z: zs[0].clone(), x: 0.0, x2: None });
    }
    clauses.push(verdict("H(f)(ii)", detail, w));

    // (iii) resonance from below and f x − 2F → +∞
    let mut w = None;
    let mut detail = format!(
        "2F/x^2 <= lambda_(m+1) = {} at the tail; f x - 2F increasing past {}",
        levels.lambda_m1, grid.growth_threshold
    );
    let tail: Vec<f64> = [grid.x_max / 100.0, grid.x_max / 10.0, grid.x_max].to_vec();
    'iii: for z in &zs {
        for &x in xs.iter().filter(|x| x.abs() >= grid.x_max / 10.0) {
            let ratio = 2.0 * r.primitive(z, x) / (x * x);
            if !(ratio <= levels.lambda_m1 + rel(levels.lambda_m1)) {
                detail = format!("2F/x^2 = {ratio} exceeds lambda_(m+1) = {}", levels.lambda_m1);
                w = Some(Witness { z: z.clone(), x, x2: None });
                break 'iii;
            }
        }
        for sign in [1.0, -1.0] {
            let q: Vec<f64> = tail
                .iter()
                .map(|&t| {
                    let x = sign * t;
                    r.value(z, x) * x - 2.0 * r.primitive(z, x)
                })
                .collect();
            for k in 0..2 {
                if !(q[k + 1] > q[k]) {
                    detail = format!("f x - 2F not increasing: {} then {}", q[k], q[k + 1]);
                    w = Some(Witness { z: z.clone(), x: sign * tail[k + 1], x2: Some(sign * tail[k]) });
                    break 'iii;
                }
            }
            if !(q[2] > grid.growth_threshold) {
                detail = format!("f x - 2F = {} at the largest sample, below threshold", q[2]);
                w = Some(Witness { z: z.clone(), x: sign * tail[2], x2: None });
                break 'iii;
            }
        }
    }
    clauses.push(verdict("H(f)(iii)", detail, w));

    // (iv) near-zero sandwich with ϑ ≤ λ̂_l, ϑ ≢ λ̂_l
    let mut w = None;
    let mut strict = false;
    let mut detail = format!(
        "lambda_(l-1) x^2 <= f x <= theta x^2 on |x| <= {delta}, theta <= lambda_l = {}",
        levels.lambda_l
    );
    'iv: for z in &zs {
        let theta = r.upper_slope(z);
        if !(theta <= levels.lambda_l + rel(levels.lambda_l)) {
            detail = format!("theta = {theta} exceeds lambda_l = {}", levels.lambda_l);
            w = Some(Witness { z: z.clone(), x: 0.0, x2: None });
            break;
        }
        strict |= theta < levels.lambda_l - rel(levels.lambda_l);
        for &x in xs.iter().filter(|x| x.abs() <= delta && **x != 0.0) {
            let fx = r.value(z, x) * x;
            let x2 = x * x;
            let tol = 1e-12 * (1.0 + fx.abs());
            if !(fx >= levels.lambda_l1 * x2 - tol) || !(fx <= theta * x2 + tol) {
                detail = format!("f(x)x = {fx:e} outside [{:e}, {:e}]", levels.lambda_l1 * x2, theta * x2);
                w = Some(Witness { z: z.clone(), x, x2: None });
                break 'iv;
            }
        }
    }
    if w.is_none() && !strict {
        detail = format!("theta coincides with lambda_l = {} at every sampled z", levels.lambda_l);
        w = Some(Witness { z: zs[0].clone(), x: 0.0, x2: None });
    }
    clauses.push(verdict("H(f)(iv)", detail, w));

    let mut caveats = Vec::new();
    if !r.is_autonomous() {
        caveats.push(format!(
            "reaction depends on z; only {} z samples were checked, uniformity in z is not certified",
            zs.len()
        ));
    }
    HypothesisReport {
        reaction: r.name(),
        levels: *levels,
        grid: format!(
            "{} x-samples up to |x| = {:e} ({} per decade, {} in band, pair spacing {:e}), {} z-samples",
            xs.len(),
            grid.x_max,
            grid.per_decade,
            grid.band_samples,
            grid.pair_spacing,
            zs.len()
        ),
        clauses,
        caveats,
    }
}

// ---------------------------------------------------------------------------
// Nemytskii operators

/// Quadrature evaluation of `u ↦ f(·, u_h(·))` and friends, `u_h` the P1
/// interpolant of the coefficient vector.
#[derive(Debug, Clone)]
pub struct Nemytskii {
    n: usize,
    dim: usize,
    quad: Vec<QuadPoint>,
}

impl Nemytskii {
    pub fn new(mesh: &Mesh) -> Self {
        Nemytskii {
            n: mesh.n_nodes(),
            dim: mesh.dim(),
            quad: mesh.volume_quadrature(),
        }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// `load_i = ∫ f(z, u_h) φ_i`.
    pub fn load(&self, r: &dyn Reaction, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for q in &self.quad {
            let fv = q.weight * r.value(q.coords(self.dim), q.interpolate(u));
            for k in 0..q.len {
                out[q.nodes[k]] += fv * q.shape[k];
            }
        }
        out
    }

    /// `∫ F(z, u_h)`.
    pub fn energy(&self, r: &dyn Reaction, u: &[f64]) -> f64 {
        self.quad
            .iter()
            .map(|q| q.weight * r.primitive(q.coords(self.dim), q.interpolate(u)))
            .sum()
    }

    /// `J_ij = ∫ ∂f/∂x(z, u_h) φ_i φ_j`.
    pub fn jacobian(&self, r: &dyn Reaction, u: &[f64]) -> SymmetricForm {
        let mut trips = Vec::with_capacity(self.quad.len() * 6);
        for q in &self.quad {
            let w = q.weight * r.derivative(q.coords(self.dim), q.interpolate(u));
            for a in 0..q.len {
                for b in a..q.len {
                    trips.push((q.nodes[a], q.nodes[b], w * q.shape[a] * q.shape[b]));
                }
            }
        }
        SymmetricForm::from_triplets(self.n, trips).expect("quadrature indices are in range")
    }

    /// `∫ (f(z,u_h) − f(z,w_h))(u_h − w_h)` and `∫ (u_h − w_h)²`.
    pub fn monotonicity_pair(&self, r: &dyn Reaction, u: &[f64], w: &[f64]) -> (f64, f64) {
        let mut num = 0.0;
        let mut den = 0.0;
        for q in &self.quad {
            let z = q.coords(self.dim);
            let (a, b) = (q.interpolate(u), q.interpolate(w));
            num += q.weight * (r.value(z, a) - r.value(z, b)) * (a - b);
            den += q.weight * (a - b) * (a - b);
        }
        (num, den)
    }
}
