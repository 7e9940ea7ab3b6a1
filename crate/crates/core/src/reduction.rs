//! Maximization over `H_−` (the map `τ`), the reduced functional
//! `φ̃(v) = φ(v + τ(v))` on `V` and its gradient.
//!
//! Points of `V` and `H_−` are handled in block coordinates (coefficients
//! in the M-orthonormal eigenvector basis). Reduced gradients are dual
//! vectors in those coordinates: `E_Vᵀ ∇φ(v + τ(v))`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::energy::EnergyContext;
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::linalg::{add, dot};
use crate::mesh::Mesh;
use crate::spectrum::{apply_cols, gap_constant, EigenDecomposition, GapCertificate, GapSide};
use crate::subspaces::{Block, SubspaceSplit};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TauControls {
    pub max_iter: usize,
    /// Absolute tolerance on the restricted gradient in the dual A-norm.
    pub grad_tol: f64,
}

impl Default for TauControls {
    fn default() -> Self {
        TauControls {
            max_iter: 100,
            grad_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TauResult {
    /// `H_−` coordinates of the maximizer.
    pub y: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    /// `φ(v + y★)`.
    pub energy: f64,
    /// `v + y★` as a full coefficient vector.
    pub point: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReducedEval {
    pub value: f64,
    /// `E_Vᵀ ∇φ(v + τ(v))`.
    pub grad: Vec<f64>,
    /// Full-space gradient at `v + τ(v)`.
    pub full_grad: Vec<f64>,
    pub tau: TauResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct RayRecord {
    pub values: Vec<f64>,
    pub tail_increasing: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoercivityReport {
    pub radii: Vec<f64>,
    pub rays: Vec<RayRecord>,
    pub flagged: usize,
}

impl CoercivityReport {
    pub fn passed(&self) -> bool {
        self.flagged == 0
    }
}

#[derive(Debug, Clone)]
pub struct ReductionContext {
    pub energy: EnergyContext,
    pub split: SubspaceSplit,
    pub certificate: GapCertificate,
    pub controls: TauControls,
    e_minus: DMatrix<f64>,
    a_minus: Cholesky<f64, Dyn>,
}

impl ReductionContext {
    /// Certifies `c1 > 0` for the reaction's monotonicity floor before
    /// accepting any `τ` solve.
    pub fn new(
        energy: EnergyContext,
        decomp: &EigenDecomposition,
        mesh: &Mesh,
        m: usize,
        l: usize,
        controls: TauControls,
    ) -> Result<Self> {
        let split = SubspaceSplit::new(decomp, &energy.mass, m, l)?;
        let r = Arc::clone(&energy.reaction);
        let eta = CoefficientField::function(move |z| r.monotonicity_floor(z));
        let certificate = gap_constant(GapSide::Below, decomp, m, &eta, mesh, &energy.gamma, &energy.h1)?;
        let cols = split.columns(Block::Minus);
        let e_minus = split.basis().columns(cols.start, cols.len()).into_owned();
        let gram = e_minus.transpose() * apply_cols(&energy.h1, &e_minus);
        let a_minus = Cholesky::new((&gram + gram.transpose()) * 0.5)
            .ok_or(Error::NotPositiveDefinite("H1 form restricted to H_-"))?;
        Ok(ReductionContext {
            energy,
            split,
            certificate,
            controls,
            e_minus,
            a_minus,
        })
    }

    pub fn c1(&self) -> f64 {
        self.certificate.constant
    }

    pub fn dim_minus(&self) -> usize {
        self.e_minus.ncols()
    }

    pub fn dim_v(&self) -> usize {
        self.split.dim(Block::V)
    }

    fn lift_minus(&self, y: &[f64]) -> Vec<f64> {
        (&self.e_minus * DVector::from_column_slice(y)).iter().copied().collect()
    }

    /// `E_−ᵀ ∇φ(v + E_− y)` for a full vector `v`.
    pub fn restricted_gradient(&self, v: &[f64], y: &[f64]) -> Vec<f64> {
        let u = add(v, &self.lift_minus(y));
        self.split.dual_coords(Block::Minus, &self.energy.grad_phi(&u))
    }

    /// `sqrt(gᵀ A_−⁻¹ g)`.
    pub fn minus_dual_norm(&self, g: &[f64]) -> f64 {
        let gv = DVector::from_column_slice(g);
        gv.dot(&self.a_minus.solve(&gv)).max(0.0).sqrt()
    }

    /// `‖E_− y‖²_A`.
    pub fn minus_a_norm2(&self, y: &[f64]) -> f64 {
        let l = self.a_minus.l();
        let yv = DVector::from_column_slice(y);
        (l.transpose() * yv).norm_squared()
    }

    pub fn tau(&self, v: &[f64]) -> Result<TauResult> {
        self.tau_from(v, None)
    }

    /// Maximizes `y ↦ φ(v + y)` over `H_−`, with `v` in V coordinates.
    pub fn tau_from(&self, v: &[f64], start: Option<&[f64]>) -> Result<TauResult> {
        let vf = self.split.lift(Block::V, v)?;
        self.tau_full(&vf, start)
    }

    pub(crate) fn tau_full(&self, vf: &[f64], start: Option<&[f64]>) -> Result<TauResult> {
        let d = self.dim_minus();
        let mut y = match start {
            Some(s) if s.len() == d => s.to_vec(),
            Some(s) => {
                return Err(Error::Dimension {
                    expected: d,
                    got: s.len(),
                    context: "tau start",
                })
            }
            None => vec![0.0; d],
        };
        let en = &self.energy;
        let value = |y: &[f64]| en.phi(&add(vf, &self.lift_minus(y)));
        let mut u = add(vf, &self.lift_minus(&y));
        let mut f = en.phi(&u);
        let f_zero = if y.iter().all(|&x| x == 0.0) { f } else { value(&vec![0.0; d]) };
        let mut full = en.grad_phi(&u);
        let mut g = self.split.dual_coords(Block::Minus, &full);
        let mut gn = self.minus_dual_norm(&g);
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut it = 0;
        while it < self.controls.max_iter {
            if gn <= self.controls.grad_tol || gn <= self.roundoff_floor(&u) {
                break;
            }
            it += 1;
            // Newton direction when the restricted Hessian is negative definite.
            let hess = en.hessian(&u);
            let he = apply_cols(&hess, &self.e_minus);
            let hr = self.e_minus.transpose() * he;
            let neg = -(&hr + hr.transpose()) * 0.5;
            let gv = DVector::from_column_slice(&g);
            // Barzilai–Borwein step on the A-preconditioned ascent direction.
            let ascent = || {
                let p = self.a_minus.solve(&gv);
                let alpha = match &prev {
                    Some((py, pg)) => {
                        let s: Vec<f64> = y.iter().zip(py).map(|(a, b)| a - b).collect();
                        let r: Vec<f64> = g.iter().zip(pg).map(|(a, b)| a - b).collect();
                        let sr = dot(&s, &r);
                        if sr < 0.0 {
                            -self.minus_a_norm2(&s) / sr
                        } else {
                            1.0 / self.c1()
                        }
                    }
                    None => 1.0 / self.c1(),
                };
                p * alpha
            };
            // Energy changes near the maximizer fall below the rounding of φ;
            // there a decrease of the restricted gradient decides.
            let flat = 1e-12 * en.phi_scale(&u).max(f.abs()) + 1e-300;
            let search = |dir: &DVector<f64>| {
                let slope = gv.dot(dir);
                let mut step = 1.0;
                for _ in 0..40 {
                    let trial: Vec<f64> = y.iter().zip(dir.iter()).map(|(a, b)| a + step * b).collect();
                    let ut = add(vf, &self.lift_minus(&trial));
                    let ft = en.phi(&ut);
                    let tg = self.split.dual_coords(Block::Minus, &en.grad_phi(&ut));
                    let tn = self.minus_dual_norm(&tg);
                    if ft >= f + 1e-4 * step * slope || (ft >= f - flat && tn < (1.0 - 1e-4 * step) * gn) {
                        return Some((step, trial, ut, ft, tn));
                    }
                    step *= 0.5;
                }
                None
            };
            let mut accepted = match Cholesky::new(neg) {
                Some(ch) => search(&ch.solve(&gv)),
                None => None,
            };
            // Newton stalls at kinks of f, where the one-sided Jacobian misleads.
            if accepted.as_ref().is_none_or(|a| a.0 < 1.0 / 64.0) {
                let alt = search(&ascent());
                accepted = match (accepted, alt) {
                    (Some(a), Some(b)) => Some(if b.4 < a.4 { b } else { a }),
                    (a, b) => a.or(b),
                };
            }
            let Some((_, ny, nu, nf, _)) = accepted else {
                break;
            };
            prev = Some((y, g));
            y = ny;
            u = nu;
            f = nf;
            full = en.grad_phi(&u);
            g = self.split.dual_coords(Block::Minus, &full);
            gn = self.minus_dual_norm(&g);
        }
        if !(gn <= self.controls.grad_tol || gn <= self.roundoff_floor(&u)) || f < f_zero - 1e-12 * (1.0 + f_zero.abs()) {
            return Err(Error::Convergence {
                what: "tau",
                iterations: it,
                grad_norm: gn,
                best: y,
            });
        }
        Ok(TauResult {
            y,
            iterations: it,
            grad_norm: gn,
            energy: f,
            point: u,
        })
    }

    /// Attainable gradient accuracy at `u` in double precision.
    fn roundoff_floor(&self, u: &[f64]) -> f64 {
        let gu = self.energy.gamma.apply(u);
        let load = self.energy.nemytskii().load(self.energy.reaction.as_ref(), u);
        let mag: Vec<f64> = gu.iter().zip(&load).map(|(a, b)| a.abs() + b.abs()).collect();
        let g = self.split.dual_coords(Block::Minus, &mag);
        64.0 * f64::EPSILON * g.iter().map(|x| x.abs()).sum::<f64>()
    }

    /// Solves from every start and returns the first result together with
    /// the largest disagreement (in `H_−` coordinates, max-norm).
    pub fn tau_multistart(&self, v: &[f64], starts: &[Vec<f64>]) -> Result<(TauResult, f64)> {
        let base = self.tau(v)?;
        let mut spread = 0.0f64;
        for s in starts {
            let r = self.tau_from(v, Some(s))?;
            for (a, b) in r.y.iter().zip(&base.y) {
                spread = spread.max((a - b).abs());
            }
        }
        Ok((base, spread))
    }

    pub fn phi_tilde(&self, v: &[f64]) -> Result<f64> {
        Ok(self.tau(v)?.energy)
    }

    pub fn grad_phi_tilde(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(v, None)?.grad)
    }

    /// Value and gradient of `φ̃`, warm-starting `τ` from `warm`.
    pub fn evaluate(&self, v: &[f64], warm: Option<&[f64]>) -> Result<ReducedEval> {
        let tau = self.tau_from(v, warm)?;
        let full_grad = self.energy.grad_phi(&tau.point);
        let grad = self.split.dual_coords(Block::V, &full_grad);
        Ok(ReducedEval {
            value: tau.energy,
            grad,
            full_grad,
            tau,
        })
    }

    /// Evaluates `φ̃(t·d)` along random A-unit directions `d ∈ V` and flags
    /// rays whose largest-radius value is not the maximum.
    pub fn coercivity_probe(&self, rng: &mut impl Rng, directions: usize, radii: &[f64]) -> Result<CoercivityReport> {
        let mut rays = Vec::new();
        if radii.is_empty() {
            return Ok(CoercivityReport {
                radii: Vec::new(),
                rays,
                flagged: 0,
            });
        }
        if radii.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Format("coercivity radii must be increasing".into()));
        }
        let dv = self.dim_v();
        for _ in 0..directions {
            let c: Vec<f64> = (0..dv).map(|_| rng.sample(StandardNormal)).collect();
            let full = self.split.lift(Block::V, &c)?;
            let na = self.energy.h1.quad(&full).sqrt();
            let dir: Vec<f64> = c.iter().map(|x| x / na).collect();
            let mut values = Vec::with_capacity(radii.len());
            let mut warm: Option<Vec<f64>> = None;
            for &t in radii {
                let v: Vec<f64> = dir.iter().map(|x| t * x).collect();
                let r = self.tau_from(&v, warm.as_deref())?;
                values.push(r.energy);
                warm = Some(r.y);
            }
            let last = *values.last().unwrap();
            let tail_increasing = values.iter().all(|&x| x <= last) && values.windows(2).last().is_none_or(|w| w[1] > w[0]);
            rays.push(RayRecord {
                values,
                tail_increasing,
            });
        }
        let flagged = rays.iter().filter(|r| !r.tail_increasing).count();
        Ok(CoercivityReport {
            radii: radii.to_vec(),
            rays,
            flagged,
        })
    }
}
