//! Critical-point searches for the reduced functional and weak-form
//! verification of the lifted solutions.
//!
//! Strategy ladder for the second critical point: deflated Newton on the
//! reduced gradient, a mountain-pass path from `0` to the first point, then
//! plain descent from `−v₁` and from W-sphere points. When the infimum of
//! `φ̃` is zero, the W-ball around the origin is flat and its points are
//! returned directly.

use nalgebra::{Cholesky, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::assembly::Forms;
use crate::error::{Error, Result};
use crate::linalg::{dot, sub, BandedCholesky, BandedLu};
use crate::mesh::Mesh;
use crate::reduction::{ReducedEval, ReductionContext};
use crate::subspaces::Block;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchPlan {
    /// Initial linking radius (A-norm); the sign check bisects it.
    pub rho: f64,
    pub w_starts: usize,
    pub random_starts: usize,
    pub zero_starts: usize,
    pub mp_nodes: usize,
    pub mp_max_iter: usize,
    /// Distinct-solution radius in the L2 norm.
    pub d_min: f64,
    /// L2 radius of the deflation factor `1 + r²/‖v − v*‖²`.
    pub deflation_radius: f64,
    pub deflation_max_iter: usize,
    pub descent_max_iter: usize,
    /// Reduced-gradient tolerance, dual A-norm.
    pub tol: f64,
    /// Weak-residual tolerance, M⁻¹-dual norm.
    pub tol_res: f64,
    pub tol_sign: f64,
    pub linking_samples: usize,
}

impl SearchPlan {
    pub fn with_domain_measure(measure: f64) -> Self {
        SearchPlan {
            rho: 1.0,
            w_starts: 4,
            random_starts: 4,
            zero_starts: 2,
            mp_nodes: 64,
            mp_max_iter: 200,
            d_min: 1e-3 * measure.sqrt(),
            deflation_radius: 0.25 * measure.sqrt(),
            deflation_max_iter: 60,
            descent_max_iter: 400,
            tol: 1e-9,
            tol_res: 1e-7,
            tol_sign: 1e-10,
            linking_samples: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("rho", self.rho),
            ("d_min", self.d_min),
            ("deflation_radius", self.deflation_radius),
            ("tol", self.tol),
            ("tol_res", self.tol_res),
            ("tol_sign", self.tol_sign),
        ];
        for (k, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::schema(k, format!("must be positive and finite, got {v}")));
            }
        }
        if self.mp_nodes < 3 {
            return Err(Error::schema("mp_nodes", "need at least 3 path nodes"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Minimizer,
    Linking,
    MountainPass,
    Deflation,
    Descent,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionRecord {
    #[serde(skip)]
    pub u: Vec<f64>,
    #[serde(skip)]
    pub v: Vec<f64>,
    pub energy: f64,
    pub reduced_grad_norm: f64,
    pub residual: f64,
    pub l2_norm: f64,
    pub provenance: Provenance,
    pub start_index: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    pub residual: f64,
    pub l2_norm: f64,
    pub energy: f64,
    pub grad_norm_euclid: f64,
    pub nontrivial: bool,
    pub passed: bool,
    /// 1D only: `|∂u/∂n + βu|` at each endpoint against its tolerance.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub robin_endpoints: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinkingReport {
    pub samples: usize,
    pub radius: f64,
    pub halvings: usize,
    pub w_fraction: f64,
    pub e_fraction: f64,
    pub compliant: bool,
    /// `(radius, w_fraction, e_fraction)` for every radius tried.
    pub history: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Attempt {
    pub strategy: &'static str,
    pub success: bool,
    pub detail: String,
}

/// `S_V = E_Vᵀ A E_V`, the H1 Gram matrix in V coordinates.
#[derive(Debug, Clone)]
pub struct VMetric {
    chol: Cholesky<f64, Dyn>,
}

impl VMetric {
    pub fn new(red: &ReductionContext) -> Result<Self> {
        let gram = red.split.block_gram(Block::V, &red.energy.h1);
        let chol = Cholesky::new(gram).ok_or(Error::NotPositiveDefinite("H1 form restricted to V"))?;
        Ok(VMetric { chol })
    }

    pub fn riesz(&self, g: &[f64]) -> Vec<f64> {
        self.chol.solve(&DVector::from_column_slice(g)).iter().copied().collect()
    }

    pub fn dual_norm(&self, g: &[f64]) -> f64 {
        dot(g, &self.riesz(g)).max(0.0).sqrt()
    }

    pub fn norm(&self, c: &[f64]) -> f64 {
        let l = self.chol.l();
        (l.transpose() * DVector::from_column_slice(c)).norm()
    }
}

/// Everything needed to search and verify.
#[derive(Debug, Clone)]
pub struct SolverContext {
    pub red: ReductionContext,
    pub metric: VMetric,
    pub plan: SearchPlan,
    mass_chol: BandedCholesky,
    potential: crate::form::SymmetricForm,
    boundary: crate::form::SymmetricForm,
    endpoints: Option<[(usize, usize, f64); 2]>,
}

impl SolverContext {
    pub fn new(red: ReductionContext, mesh: &Mesh, forms: &Forms, plan: SearchPlan) -> Result<Self> {
        plan.validate()?;
        let metric = VMetric::new(&red)?;
        let mass_chol = BandedCholesky::factor(&forms.mass)?;
        let endpoints = if mesh.dim() == 1 { Some(endpoints_1d(mesh)) } else { None };
        Ok(SolverContext {
            red,
            metric,
            plan,
            mass_chol,
            potential: forms.potential.clone(),
            boundary: forms.boundary.clone(),
            endpoints,
        })
    }

    fn dim_v(&self) -> usize {
        self.red.dim_v()
    }

    /// M-norm of a V-coordinate vector (the basis is M-orthonormal).
    fn l2(c: &[f64]) -> f64 {
        dot(c, c).sqrt()
    }

    fn random_direction(&self, rng: &mut impl Rng, block: Block) -> Vec<f64> {
        let cols = self.red.split.columns(block);
        let vcols = self.red.split.columns(Block::V);
        let mut c = vec![0.0; self.dim_v()];
        for j in cols {
            c[j - vcols.start] = rng.sample(StandardNormal);
        }
        let na = self.metric.norm(&c);
        c.iter().map(|x| x / na).collect()
    }

    fn eval(&self, v: &[f64], warm: Option<&[f64]>) -> Result<ReducedEval> {
        self.red.evaluate(v, warm)
    }

    pub fn record(&self, v: &[f64], provenance: Provenance, start_index: usize) -> Result<SolutionRecord> {
        let e = self.eval(v, None)?;
        let rg = self.metric.dual_norm(&e.grad);
        let u = e.tau.point;
        Ok(SolutionRecord {
            residual: self.mass_chol.dual_norm(&e.full_grad),
            l2_norm: self.red.energy.mass.quad(&u).max(0.0).sqrt(),
            energy: e.value,
            reduced_grad_norm: rg,
            u,
            v: v.to_vec(),
            provenance,
            start_index,
        })
    }

    /// Samples W and Ê at A-norms in `(0, ρ]`, halving `ρ` until both sign
    /// conditions hold everywhere or ten halvings are spent.
    pub fn linking_sign_check(&self, rng: &mut impl Rng, rho: f64, samples: usize) -> Result<LinkingReport> {
        let mut history = Vec::new();
        if samples == 0 {
            return Ok(LinkingReport {
                samples,
                radius: rho,
                halvings: 0,
                w_fraction: 1.0,
                e_fraction: 1.0,
                compliant: true,
                history,
            });
        }
        let tol = self.plan.tol_sign;
        let mut radius = rho;
        let mut best = (radius, 0.0, 0.0, 0usize);
        for h in 0..=10 {
            let mut w_ok = 0;
            let mut e_ok = 0;
            for _ in 0..samples {
                let t: f64 = radius * (1.0 - rng.gen::<f64>());
                let w: Vec<f64> = self.random_direction(rng, Block::W).iter().map(|x| t * x).collect();
                if self.red.phi_tilde(&w)? <= tol {
                    w_ok += 1;
                }
                let t: f64 = radius * (1.0 - rng.gen::<f64>());
                let e: Vec<f64> = self.random_direction(rng, Block::EHat).iter().map(|x| t * x).collect();
                if self.red.phi_tilde(&e)? >= -tol {
                    e_ok += 1;
                }
            }
            let (wf, ef) = (w_ok as f64 / samples as f64, e_ok as f64 / samples as f64);
            history.push((radius, wf, ef));
            if wf + ef > best.1 + best.2 || h == 0 {
                best = (radius, wf, ef, h);
            }
            if w_ok == samples && e_ok == samples {
                return Ok(LinkingReport {
                    samples,
                    radius,
                    halvings: h,
                    w_fraction: wf,
                    e_fraction: ef,
                    compliant: true,
                    history,
                });
            }
            radius *= 0.5;
        }
        Ok(LinkingReport {
            samples,
            radius: best.0,
            halvings: best.3,
            w_fraction: best.1,
            e_fraction: best.2,
            compliant: false,
            history,
        })
    }

    /// Reduced Newton step from the full-space Hessian; `None` if singular.
    fn newton_step(&self, e: &ReducedEval) -> Option<Vec<f64>> {
        let hess = self.red.energy.hessian(&e.tau.point);
        let lu = BandedLu::factor(&hess).ok()?;
        let neg: Vec<f64> = e.full_grad.iter().map(|x| -x).collect();
        let delta = lu.solve(&neg);
        if delta.iter().any(|x| !x.is_finite()) {
            return None;
        }
        self.red.split.coords(Block::V, &delta).ok()
    }

    /// A-preconditioned gradient descent with Barzilai–Borwein steps and an
    /// Armijo safeguard, switching to Newton once the gradient is small.
    pub fn descend(&self, start: &[f64]) -> Result<(Vec<f64>, ReducedEval, bool)> {
        let tol = self.plan.tol;
        let mut v = start.to_vec();
        let mut e = self.eval(&v, None)?;
        let mut gn = self.metric.dual_norm(&e.grad);
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut alpha = 1.0f64;
        for _ in 0..self.plan.descent_max_iter {
            if gn <= tol {
                return Ok((v, e, true));
            }
            if gn <= 1e-3 {
                if let Some((nv, ne, ngn)) = self.try_newton(&v, &e, gn)? {
                    v = nv;
                    e = ne;
                    gn = ngn;
                    prev = None;
                    continue;
                }
            }
            let p = self.metric.riesz(&e.grad);
            if let Some((s, y)) = &prev {
                let sy = dot(s, y);
                if sy > 0.0 {
                    let ss = self.metric.norm(s).powi(2);
                    alpha = (ss / sy).clamp(1e-8, 1e8);
                } else {
                    alpha *= 2.0;
                }
            } else {
                let pn = self.metric.norm(&p);
                alpha = (self.plan.rho / pn).min(1.0);
            }
            let slope = dot(&e.grad, &p);
            let mut step = alpha;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = v.iter().zip(&p).map(|(a, b)| a - step * b).collect();
                let te = self.eval(&trial, Some(&e.tau.y))?;
                if te.value <= e.value - 1e-4 * step * slope {
                    accepted = Some((trial, te));
                    break;
                }
                step *= 0.5;
            }
            let Some((nv, ne)) = accepted else {
                // Flat to rounding: one Newton attempt, then give up.
                if let Some((nv, ne, ngn)) = self.try_newton(&v, &e, gn)? {
                    v = nv;
                    e = ne;
                    gn = ngn;
                    prev = None;
                    continue;
                }
                break;
            };
            prev = Some((sub(&nv, &v), sub(&ne.grad, &e.grad)));
            alpha = step;
            v = nv;
            e = ne;
            gn = self.metric.dual_norm(&e.grad);
        }
        let ok = gn <= tol;
        Ok((v, e, ok))
    }

    fn try_newton(&self, v: &[f64], e: &ReducedEval, gn: f64) -> Result<Option<(Vec<f64>, ReducedEval, f64)>> {
        let Some(step) = self.newton_step(e) else {
            return Ok(None);
        };
        let mut t = 1.0;
        for _ in 0..8 {
            let trial: Vec<f64> = v.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            let te = match self.eval(&trial, Some(&e.tau.y)) {
                Ok(te) => te,
                Err(_) => return Ok(None),
            };
            let tg = self.metric.dual_norm(&te.grad);
            if tg < gn {
                return Ok(Some((trial, te, tg)));
            }
            t *= 0.5;
        }
        Ok(None)
    }

    /// Multi-start descent: small perturbations of `0`, W-ball starts at
    /// radius `ρ`, and random V starts. Returns the lowest-energy critical
    /// point, ties broken by start order.
    pub fn minimize_reduced(&self, rng: &mut impl Rng, rho: f64) -> Result<SolutionRecord> {
        let mut starts: Vec<Vec<f64>> = Vec::new();
        for _ in 0..self.plan.zero_starts {
            starts.push(self.random_direction(rng, Block::V).iter().map(|x| 1e-3 * rho * x).collect());
        }
        for _ in 0..self.plan.w_starts {
            starts.push(self.random_direction(rng, Block::W).iter().map(|x| rho * x).collect());
        }
        for _ in 0..self.plan.random_starts {
            let r: f64 = rng.gen_range(1.0..10.0);
            starts.push(self.random_direction(rng, Block::V).iter().map(|x| r * x).collect());
        }
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        let mut best_any: Option<(f64, Vec<f64>)> = None;
        for (i, s) in starts.iter().enumerate() {
            let (v, e, ok) = match self.descend(s) {
                Ok(x) => x,
                Err(_) => continue,
            };
            if best_any.as_ref().is_none_or(|(g, _)| self.metric.dual_norm(&e.grad) < *g) {
                best_any = Some((self.metric.dual_norm(&e.grad), v.clone()));
            }
            if ok && best.as_ref().is_none_or(|(f, _, _)| e.value < *f) {
                best = Some((e.value, i, v));
            }
        }
        match best {
            Some((_, i, v)) => self.record(&v, Provenance::Minimizer, i),
            None => {
                let (gn, v) = best_any.unwrap_or((f64::NAN, vec![]));
                Err(Error::Convergence {
                    what: "reduced minimization",
                    iterations: self.plan.descent_max_iter,
                    grad_norm: gn,
                    best: v,
                })
            }
        }
    }

    fn distinct(&self, v: &[f64], known: &[&[f64]]) -> bool {
        Self::l2(v) >= self.plan.d_min && known.iter().all(|k| Self::l2(&sub(v, k)) >= self.plan.d_min)
    }

    /// Deflated Newton on the reduced gradient with deflation factor
    /// `Π (1 + r²/‖v − v*‖²)` over `v* ∈ {0, v₁}`.
    fn deflated_newton(&self, start: &[f64], roots: &[&[f64]]) -> Result<Option<Vec<f64>>> {
        let d2 = self.plan.deflation_radius.max(self.plan.d_min).powi(2);
        let factor = |v: &[f64]| -> (f64, Vec<f64>) {
            // returns m(v) and ∇ log m(v)
            let mut m = 1.0;
            let mut gl = vec![0.0; v.len()];
            for r in roots {
                let diff = sub(v, r);
                let q = dot(&diff, &diff).max(1e-300);
                let fac = 1.0 + d2 / q;
                m *= fac;
                let c = -2.0 * d2 / (q * q) / fac;
                for (g, x) in gl.iter_mut().zip(&diff) {
                    *g += c * x;
                }
            }
            (m, gl)
        };
        let mut v = start.to_vec();
        let mut e = self.eval(&v, None)?;
        for _ in 0..self.plan.deflation_max_iter {
            let gn = self.metric.dual_norm(&e.grad);
            if gn <= self.plan.tol {
                return Ok(Some(v));
            }
            let Some(delta) = self.newton_step(&e) else {
                return Ok(None);
            };
            let (m, gl) = factor(&v);
            let denom = 1.0 - dot(&gl, &delta);
            let scale = if denom.abs() > 1e-12 { 1.0 / denom } else { 1.0 };
            let merit = m * gn;
            let mut t = 1.0;
            let mut next = None;
            for _ in 0..20 {
                let trial: Vec<f64> = v.iter().zip(&delta).map(|(a, b)| a + t * scale * b).collect();
                if let Ok(te) = self.eval(&trial, Some(&e.tau.y)) {
                    let tm = factor(&trial).0 * self.metric.dual_norm(&te.grad);
                    if tm < merit {
                        next = Some((trial, te));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((nv, ne)) = next else {
                return Ok(None);
            };
            v = nv;
            e = ne;
        }
        let gn = self.metric.dual_norm(&e.grad);
        Ok(if gn <= self.plan.tol { Some(v) } else { None })
    }

    /// Steepest-descent deformation of a discretized path from `0` to `v₁`.
    fn mountain_pass(&self, v1: &[f64]) -> Result<std::result::Result<Vec<f64>, String>> {
        let k = self.plan.mp_nodes;
        let mut path: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                let t = i as f64 / (k - 1) as f64;
                v1.iter().map(|x| t * x).collect()
            })
            .collect();
        let mut vals = Vec::with_capacity(k);
        let mut warm: Vec<Vec<f64>> = Vec::with_capacity(k);
        for p in &path {
            let r = self.red.tau_from(p, None)?;
            vals.push(r.energy);
            warm.push(r.y);
        }
        let ends = vals[0].max(vals[k - 1]);
        let (imax, vmax) = argmax_interior(&vals);
        if vmax <= ends + self.plan.tol_sign {
            return Ok(Err(format!(
                "no mountain-pass geometry: path maximum {vmax:e} does not exceed endpoint level {ends:e}"
            )));
        }
        let mut step = vec![self.plan.rho; k];
        let mut i = imax;
        for _ in 0..self.plan.mp_max_iter {
            let e = self.eval(&path[i], Some(&warm[i]))?;
            let gn = self.metric.dual_norm(&e.grad);
            if gn <= 1e-3 {
                let (v, _, ok) = self.descend_to_critical(&path[i])?;
                if ok {
                    return Ok(Ok(v));
                }
            }
            let p = self.metric.riesz(&e.grad);
            let pn = self.metric.norm(&p);
            let mut moved = false;
            for _ in 0..30 {
                let trial: Vec<f64> = path[i].iter().zip(&p).map(|(a, b)| a - step[i] / pn * b).collect();
                let te = self.eval(&trial, Some(&e.tau.y))?;
                if te.value < e.value - 1e-4 * step[i] * gn {
                    path[i] = trial;
                    vals[i] = te.value;
                    warm[i] = te.tau.y;
                    step[i] *= 1.5;
                    moved = true;
                    break;
                }
                step[i] *= 0.5;
            }
            if !moved {
                return Ok(Err("path node could not be lowered".into()));
            }
            let (ni, nv) = argmax_interior(&vals);
            if nv <= ends + self.plan.tol_sign {
                return Ok(Err("deformed path fell below the endpoint level".into()));
            }
            i = ni;
        }
        Ok(Err(format!("no convergence in {} path deformations", self.plan.mp_max_iter)))
    }

    /// Newton iteration on the reduced gradient, with no energy decrease
    /// requirement (saddles are valid targets).
    fn descend_to_critical(&self, start: &[f64]) -> Result<(Vec<f64>, ReducedEval, bool)> {
        let mut v = start.to_vec();
        let mut e = self.eval(&v, None)?;
        let mut gn = self.metric.dual_norm(&e.grad);
        for _ in 0..50 {
            if gn <= self.plan.tol {
                return Ok((v, e, true));
            }
            match self.try_newton(&v, &e, gn)? {
                Some((nv, ne, ng)) => {
                    v = nv;
                    e = ne;
                    gn = ng;
                }
                None => break,
            }
        }
        let ok = gn <= self.plan.tol;
        Ok((v, e, ok))
    }

    /// Strategy ladder for a second nontrivial critical point distinct from
    /// `first`. Returns the record and the attempts made.
    pub fn second_critical_point(
        &self,
        rng: &mut impl Rng,
        first: &SolutionRecord,
        rho: f64,
    ) -> Result<(SolutionRecord, Vec<Attempt>)> {
        let v1 = first.v.clone();
        let zero = vec![0.0; v1.len()];
        let known: [&[f64]; 1] = [&v1];
        let mut attempts = Vec::new();
        let mut near = Vec::new();

        // (1) deflation
        let mut starts = Vec::new();
        for _ in 0..self.plan.w_starts {
            starts.push(self.random_direction(rng, Block::W).iter().map(|x| rho * x).collect::<Vec<_>>());
        }
        for _ in 0..self.plan.random_starts {
            let r: f64 = rng.gen_range(1.0..10.0);
            starts.push(self.random_direction(rng, Block::V).iter().map(|x| r * x).collect());
        }
        let mut found = None;
        for (i, s) in starts.iter().enumerate() {
            if let Ok(Some(v)) = self.deflated_newton(s, &[&v1, &zero]) {
                if self.distinct(&v, &known) {
                    found = Some((v, i));
                    break;
                }
                near.push(format!("deflation start {i}: |v| = {:e}, |v - v1| = {:e}", Self::l2(&v), Self::l2(&sub(&v, &v1))));
            }
        }
        if let Some((v, i)) = found {
            attempts.push(Attempt {
                strategy: "deflation",
                success: true,
                detail: format!("start {i}"),
            });
            return Ok((self.record(&v, Provenance::Deflation, i)?, attempts));
        }
        attempts.push(Attempt {
            strategy: "deflation",
            success: false,
            detail: format!("{} starts, no distinct critical point", starts.len()),
        });

        // (2) mountain pass
        match self.mountain_pass(&v1).unwrap_or_else(|e| Err(e.to_string())) {
            Ok(v) if self.distinct(&v, &known) => {
                attempts.push(Attempt {
                    strategy: "mountain-pass",
                    success: true,
                    detail: "path maximum relaxed to a critical point".into(),
                });
                return Ok((self.record(&v, Provenance::MountainPass, 0)?, attempts));
            }
            Ok(v) => {
                near.push(format!("mountain pass: |v| = {:e}", Self::l2(&v)));
                attempts.push(Attempt {
                    strategy: "mountain-pass",
                    success: false,
                    detail: "converged to a non-distinct point".into(),
                });
            }
            Err(msg) => attempts.push(Attempt {
                strategy: "mountain-pass",
                success: false,
                detail: msg,
            }),
        }

        // (3) descent from −v₁ and W-sphere points
        let mut starts = vec![v1.iter().map(|x| -x).collect::<Vec<_>>()];
        for _ in 0..self.plan.w_starts {
            starts.push(self.random_direction(rng, Block::W).iter().map(|x| rho * x).collect());
        }
        for (i, s) in starts.iter().enumerate() {
            let Ok((v, _, ok)) = self.descend(s) else {
                continue;
            };
            if ok && self.distinct(&v, &known) {
                attempts.push(Attempt {
                    strategy: "descent",
                    success: true,
                    detail: if i == 0 { "from -v1".into() } else { format!("from W-sphere start {i}") },
                });
                return Ok((self.record(&v, Provenance::Descent, i)?, attempts));
            }
            if ok {
                near.push(format!("descent start {i}: |v| = {:e}, |v - v1| = {:e}", Self::l2(&v), Self::l2(&sub(&v, &v1))));
            }
        }
        attempts.push(Attempt {
            strategy: "descent",
            success: false,
            detail: format!("{} starts, no distinct critical point", starts.len()),
        });
        let trace: Vec<String> = attempts.iter().map(|a| format!("{}: {}", a.strategy, a.detail)).collect();
        Err(Error::SearchExhausted(format!(
            "search exhausted; ladder [{}]; near misses [{}]",
            trace.join("; "),
            near.join("; ")
        )))
    }

    /// When `inf φ̃ = 0`, sampled W-ball points at radius `ρ` and `ρ/2` must
    /// all be flat critical points. On success returns `±ρ·d` for the first
    /// sampled direction `d`.
    pub fn flat_w_ball(&self, rng: &mut impl Rng, rho: f64) -> Result<std::result::Result<[SolutionRecord; 2], String>> {
        let dirs: Vec<Vec<f64>> = (0..self.plan.w_starts.max(1)).map(|_| self.random_direction(rng, Block::W)).collect();
        for (i, d) in dirs.iter().enumerate() {
            for t in [rho, 0.5 * rho, -rho, -0.5 * rho] {
                let v: Vec<f64> = d.iter().map(|x| t * x).collect();
                let e = self.eval(&v, None)?;
                let gn = self.metric.dual_norm(&e.grad);
                if e.value.abs() > self.plan.tol_sign || gn > self.plan.tol {
                    return Ok(Err(format!(
                        "W-ball not flat: direction {i}, radius {t:e}: value {:e}, reduced gradient {gn:e}",
                        e.value
                    )));
                }
            }
        }
        let d = &dirs[0];
        let plus: Vec<f64> = d.iter().map(|x| rho * x).collect();
        let minus: Vec<f64> = d.iter().map(|x| -rho * x).collect();
        if !self.distinct(&plus, &[&minus]) || !self.distinct(&minus, &[]) {
            return Ok(Err(format!(
                "W-ball radius {rho:e} too small for d_min = {:e}",
                self.plan.d_min
            )));
        }
        Ok(Ok([
            self.record(&plus, Provenance::Linking, 0)?,
            self.record(&minus, Provenance::Linking, 1)?,
        ]))
    }

    pub fn verify_solution(&self, u: &[f64]) -> Verification {
        let en = &self.red.energy;
        let g = en.grad_phi(u);
        let residual = self.mass_chol.dual_norm(&g);
        let l2_norm = en.mass.quad(u).max(0.0).sqrt();
        let nontrivial = l2_norm >= self.plan.d_min;
        let mut robin = Vec::new();
        if let Some(ends) = self.endpoints {
            let load = en.nemytskii().load(en.reaction.as_ref(), u);
            let xu = self.potential.apply(u);
            let bu = self.boundary.apply(u);
            let lumped: Vec<f64> = en.mass.apply(&vec![1.0; u.len()]);
            // sup of the interior terms, scaled per unit length
            let c = (0..u.len())
                .map(|i| (xu[i] - load[i]).abs() / lumped[i])
                .fold(0.0f64, f64::max);
            for (i0, i1, h) in ends {
                let dn = (u[i0] - u[i1]) / h;
                let mismatch = (dn + bu[i0]).abs();
                robin.push((mismatch, h * c + g[i0].abs() + 1e-12));
            }
        }
        let passed = residual <= self.plan.tol_res && nontrivial;
        Verification {
            residual,
            l2_norm,
            energy: en.phi(u),
            grad_norm_euclid: crate::linalg::norm2(&g),
            nontrivial,
            passed,
            robin_endpoints: robin,
        }
    }

    /// Roundtrip check: project `u` to V, re-solve `τ`, compare.
    pub fn roundtrip_error(&self, u: &[f64]) -> Result<f64> {
        let v = self.red.split.coords(Block::V, u)?;
        let r = self.red.tau(&v)?;
        let d = sub(&r.point, u);
        Ok(crate::linalg::max_abs(&d) / crate::linalg::max_abs(u).max(1.0))
    }
}

fn argmax_interior(vals: &[f64]) -> (usize, f64) {
    let mut best = (1, vals[1]);
    for (i, &v) in vals.iter().enumerate().take(vals.len() - 1).skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// `(endpoint, neighbour, spacing)` for the left and right ends of a 1D mesh.
fn endpoints_1d(mesh: &Mesh) -> [(usize, usize, f64); 2] {
    let xs = mesh.nodes();
    let lo = (0..xs.len()).min_by(|&a, &b| xs[a][0].total_cmp(&xs[b][0])).unwrap();
    let hi = (0..xs.len()).max_by(|&a, &b| xs[a][0].total_cmp(&xs[b][0])).unwrap();
    let nb = |i: usize| {
        let e = mesh.elements().iter().find(|e| e.contains(&i)).expect("every node lies in an element");
        let j = if e[0] == i { e[1] } else { e[0] };
        (i, j, (xs[i][0] - xs[j][0]).abs())
    };
    [nb(lo), nb(hi)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyContext;
    use crate::mesh::build_interval_mesh;
    use crate::nonlinearity::{LinearReaction, ModelReaction, Reaction, SpectralLevels};
    use crate::reduction::TauControls;
    use crate::spectrum::solve_pencil;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn ctx(n: usize, m: usize, l: usize, linear: Option<f64>) -> SolverContext {
        let mesh = build_interval_mesh(0.0, PI, n).unwrap();
        let forms = Forms::assemble(&mesh, &(-0.5).into(), &0.0.into()).unwrap();
        let d = solve_pencil(&forms.gamma, &forms.mass, &Default::default()).unwrap();
        let r: Arc<dyn Reaction> = match linear {
            Some(s) => Arc::new(LinearReaction { slope: s, delta: 0.1 }),
            None => {
                let lv = SpectralLevels::from_decomposition(&d, m, l).unwrap();
                Arc::new(ModelReaction::new(lv, 0.3 * (lv.lambda_m1 - lv.lambda_m), 0.1).unwrap())
            }
        };
        let en = EnergyContext::new(&mesh, &forms, r).unwrap();
        let red = ReductionContext::new(en, &d, &mesh, m, l, TauControls::default()).unwrap();
        SolverContext::new(red, &mesh, &forms, SearchPlan::with_domain_measure(PI)).unwrap()
    }

    #[test]
    fn linear_reaction_minimizer_is_zero() {
        let c = ctx(48, 1, 3, Some(0.1));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = c.minimize_reduced(&mut rng, 1.0).unwrap();
        assert!(r.l2_norm < 1e-8, "{}", r.l2_norm);
        assert!(r.energy.abs() < 1e-12);
        let v = c.verify_solution(&r.u);
        assert!(!v.passed && !v.nontrivial);
    }

    #[test]
    fn linear_reaction_second_point_search_fails() {
        let c = ctx(32, 1, 3, Some(0.1));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let first = c.record(&vec![0.0; c.dim_v()], Provenance::Minimizer, 0).unwrap();
        let err = c.second_critical_point(&mut rng, &first, 1.0).unwrap_err();
        assert!(matches!(err, Error::SearchExhausted(_)), "{err}");
    }

    #[test]
    fn reduced_functional_is_even() {
        let c = ctx(48, 1, 3, None);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let v: Vec<f64> = (0..c.dim_v()).map(|k| rng.gen_range(-2.0..2.0) / (1.0 + k as f64)).collect();
            let mv: Vec<f64> = v.iter().map(|x| -x).collect();
            let a = c.red.phi_tilde(&v).unwrap();
            let b = c.red.phi_tilde(&mv).unwrap();
            assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn verify_controls() {
        let c = ctx(48, 1, 3, None);
        let z = vec![0.0; 48];
        let v = c.verify_solution(&z);
        assert_eq!(v.residual, 0.0);
        assert!(!v.passed);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r: Vec<f64> = (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = c.verify_solution(&r);
        assert!(v.residual > 1e-3 && !v.passed);

        let lam2 = c.red.split.levels()[1];
        let lin = ctx(48, 1, 3, Some(lam2));
        let e2 = lin.red.split.lift(Block::W, &[1.0]).unwrap();
        let v = lin.verify_solution(&e2);
        assert!(v.residual <= 1e-8 && v.passed, "{v:?}");
        for (mis, tol) in &v.robin_endpoints {
            assert!(mis <= tol, "{mis} > {tol}");
        }
    }

    #[test]
    fn linking_signs_hold_for_small_radius() {
        let c = ctx(64, 1, 3, None);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rep = c.linking_sign_check(&mut rng, 1.0, 50).unwrap();
        assert!(rep.compliant, "{rep:?}");
        assert!(rep.radius < 1.0);
        let empty = c.linking_sign_check(&mut rng, 1.0, 0).unwrap();
        assert_eq!(empty.samples, 0);
    }

    #[test]
    fn reference_branch_has_flat_w_ball() {
        let c = ctx(64, 1, 3, None);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rep = c.linking_sign_check(&mut rng, 1.0, 50).unwrap();
        let [a, b] = c.flat_w_ball(&mut rng, rep.radius).unwrap().unwrap();
        for r in [&a, &b] {
            let v = c.verify_solution(&r.u);
            assert!(v.passed, "{v:?}");
            assert!(r.l2_norm >= c.plan.d_min);
        }
        let d = (c.red.energy.mass.quad(&sub(&a.u, &b.u))).sqrt();
        assert!(d >= c.plan.d_min);
    }

    #[test]
    fn strict_branch_finds_two_points() {
        let c = ctx(64, 1, 4, None);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let first = c.minimize_reduced(&mut rng, 0.1).unwrap();
        assert!(first.energy < -1e-6, "{}", first.energy);
        let (second, attempts) = c.second_critical_point(&mut rng, &first, 0.1).unwrap();
        assert!(attempts.last().unwrap().success);
        for r in [&first, &second] {
            assert!(c.verify_solution(&r.u).passed);
            assert!(c.roundtrip_error(&r.u).unwrap() <= 1e-6);
        }
        assert!(first.energy <= second.energy + 1e-10);
        // a critical point is a fixed point of descent
        let (v, _, ok) = c.descend(&first.v).unwrap();
        assert!(ok && SolverContext::l2(&sub(&v, &first.v)) < 1e-6);
    }
}
