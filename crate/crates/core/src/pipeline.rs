//! Stage orchestration behind the CLI subcommands.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::Forms;
use crate::config::{BoundarySpec, DomainSpec, PotentialSpec, ProblemConfig, ReactionSpec, SlopeSpec};
use crate::energy::EnergyContext;
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::io::read_nodal_csv;
use crate::mesh::{build_interval_mesh, build_rectangle_mesh, Mesh};
use crate::nonlinearity::{
    audit_hypotheses, HypothesisReport, LinearReaction, ModelReaction, Reaction, SamplingGrid, SpectralLevels,
    SquareReaction,
};
use crate::reduction::{CoercivityReport, ReductionContext, TauControls};
use crate::solver::{Attempt, LinkingReport, SolutionRecord, SolverContext, Verification};
use crate::spectrum::{
    coercivity_shift, first_eigen_report, gap_constant, solve_pencil, CoercivityCertificate, EigenDecomposition,
    EigenPath, FirstEigenReport, GapCertificate, GapSide, SpectrumOptions,
};
use crate::subspaces::SplitSummary;

/// Mesh, forms and eigendecomposition for a configuration.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: ProblemConfig,
    pub mesh: Mesh,
    pub forms: Forms,
    pub decomp: EigenDecomposition,
}

fn build_mesh(domain: &DomainSpec) -> Result<Mesh> {
    match *domain {
        DomainSpec::Interval { a, b, n } => build_interval_mesh(a, b, n),
        DomainSpec::Rectangle { lx, ly, nx, ny } => build_rectangle_mesh(lx, ly, nx, ny),
    }
}

fn resolve(base: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_nodal(base: &Path, file: &str, n: usize) -> Result<Vec<f64>> {
    let path = resolve(base, file);
    let f = File::open(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    read_nodal_csv(f, n)
}

fn potential_field(spec: &PotentialSpec, domain: &DomainSpec, mesh: &Mesh, base: &Path) -> Result<CoefficientField> {
    Ok(match spec {
        PotentialSpec::Constant { value } => CoefficientField::Constant(*value),
        PotentialSpec::Nodal { file } => CoefficientField::Nodal(load_nodal(base, file, mesh.n_nodes())?),
        PotentialSpec::Cosine { offset, amplitude } => {
            let (offset, amplitude) = (*offset, *amplitude);
            let axes: Vec<(f64, f64)> = match *domain {
                DomainSpec::Interval { a, b, .. } => vec![(a, b - a)],
                DomainSpec::Rectangle { lx, ly, .. } => vec![(0.0, lx), (0.0, ly)],
            };
            CoefficientField::function(move |z| {
                let p: f64 = axes
                    .iter()
                    .zip(z)
                    .map(|(&(x0, len), &x)| (std::f64::consts::PI * (x - x0) / len).cos())
                    .product();
                offset + amplitude * p
            })
        }
    })
}

fn boundary_field(spec: &BoundarySpec, domain: &DomainSpec, mesh: &Mesh, base: &Path) -> Result<CoefficientField> {
    Ok(match spec {
        BoundarySpec::Constant { value } => CoefficientField::Constant(*value),
        BoundarySpec::Nodal { file } => {
            let v = load_nodal(base, file, mesh.n_nodes())?;
            if let Some(i) = v.iter().position(|x| *x < 0.0) {
                return Err(Error::hypothesis("H(beta)", format!("nodal boundary coefficient is negative at node {i}")));
            }
            CoefficientField::Nodal(v)
        }
        BoundarySpec::Sides { left, right, bottom, top } => {
            let (l, r, b, t) = (*left, *right, *bottom, *top);
            match *domain {
                DomainSpec::Interval { a, b: hi, .. } => {
                    CoefficientField::function(move |z| if (z[0] - a).abs() <= (z[0] - hi).abs() { l } else { r })
                }
                DomainSpec::Rectangle { lx, ly, .. } => CoefficientField::function(move |z| {
                    let d = [z[0], lx - z[0], z[1], ly - z[1]];
                    let vals = [l, r, b, t];
                    let k = (0..4).min_by(|&i, &j| d[i].abs().total_cmp(&d[j].abs())).unwrap();
                    vals[k]
                }),
            }
        }
    })
}

impl Problem {
    /// Assembles and eigensolves. With `full` the whole decomposition is
    /// computed (the splitting needs it); otherwise enough pairs to cover
    /// the clusters up to `l + 1`.
    pub fn build(config: &ProblemConfig, base: &Path, full: bool) -> Result<Problem> {
        let mesh = build_mesh(&config.domain).map_err(|e| e.in_stage("mesh"))?;
        let xi = potential_field(&config.potential, &config.domain, &mesh, base).map_err(|e| e.in_stage("potential"))?;
        let beta = boundary_field(&config.boundary, &config.domain, &mesh, base).map_err(|e| e.in_stage("boundary"))?;
        let forms = Forms::assemble(&mesh, &xi, &beta).map_err(|e| e.in_stage("assembly"))?;
        let n = mesh.n_nodes();
        let (_, l) = config.reaction.indices();
        let count = if full || n <= config.spectrum.dense_limit {
            None
        } else {
            let want = if config.spectrum.count > 0 { config.spectrum.count } else { 4 * (l + 2) + 8 };
            Some(want.min(n))
        };
        if full && n > config.spectrum.dense_limit {
            return Err(Error::Format(format!(
                "the subspace splitting needs all {n} eigenpairs but the dense path is limited to {}; \
                 coarsen the mesh or raise spectrum.dense_limit",
                config.spectrum.dense_limit
            ))
            .in_stage("eigensolve"));
        }
        let opts = SpectrumOptions {
            count,
            cluster_tol: config.spectrum.cluster_tol,
            dense_limit: config.spectrum.dense_limit,
        };
        let decomp = solve_pencil(&forms.gamma, &forms.mass, &opts).map_err(|e| e.in_stage("eigensolve"))?;
        Ok(Problem {
            config: config.clone(),
            mesh,
            forms,
            decomp,
        })
    }

    pub fn spectrum_options(&self) -> SpectrumOptions {
        SpectrumOptions {
            count: None,
            cluster_tol: self.config.spectrum.cluster_tol,
            dense_limit: self.config.spectrum.dense_limit,
        }
    }

    pub fn levels(&self) -> Result<SpectralLevels> {
        let (m, l) = self.config.reaction.indices();
        SpectralLevels::from_decomposition(&self.decomp, m, l)
    }

    pub fn reaction(&self) -> Result<Arc<dyn Reaction>> {
        let levels = self.levels()?;
        Ok(match &self.config.reaction {
            ReactionSpec::Model {
                softening_fraction,
                delta,
                ..
            } => {
                let a_s = softening_fraction * (levels.lambda_m1 - levels.lambda_m);
                Arc::new(ModelReaction::new(levels, a_s, *delta)?)
            }
            ReactionSpec::Linear { slope, delta, .. } => {
                let slope = match *slope {
                    SlopeSpec::Value { slope } => slope,
                    SlopeSpec::Eigen { k } => self.decomp.distinct(k).ok_or(Error::InsufficientClusters {
                        needed: k,
                        available: self.decomp.clusters.len(),
                    })?,
                };
                Arc::new(LinearReaction { slope, delta: *delta })
            }
            ReactionSpec::Square { growth, delta, .. } => Arc::new(SquareReaction {
                growth: *growth,
                delta: *delta,
            }),
        })
    }

    pub fn audit(&self) -> Result<HypothesisReport> {
        let r = self.reaction()?;
        let grid = SamplingGrid::for_reaction(r.as_ref(), &self.mesh);
        Ok(audit_hypotheses(r.as_ref(), &self.levels()?, &grid))
    }

    /// Side (a) at the midpoint of the gap above `λ̂_m`, side (b) one below `λ̂_m`.
    pub fn gap_certificates(&self) -> Result<(GapCertificate, GapCertificate)> {
        let (m, _) = self.config.reaction.indices();
        let lm = self.decomp.distinct(m).ok_or(Error::InsufficientClusters {
            needed: m + 1,
            available: self.decomp.clusters.len(),
        })?;
        let lm1 = self.decomp.distinct(m + 1).ok_or(Error::InsufficientClusters {
            needed: m + 1,
            available: self.decomp.clusters.len(),
        })?;
        let f = &self.forms;
        let a = gap_constant(GapSide::Below, &self.decomp, m, &(0.5 * (lm + lm1)).into(), &self.mesh, &f.gamma, &f.h1)?;
        let b = gap_constant(GapSide::Above, &self.decomp, m, &(lm - 1.0).into(), &self.mesh, &f.gamma, &f.h1)?;
        Ok((a, b))
    }

    pub fn coercivity(&self) -> Result<CoercivityCertificate> {
        let f = &self.forms;
        coercivity_shift(&f.gamma, &f.mass, &f.h1, self.decomp.values[0], &self.spectrum_options())
    }

    /// Builds the search context: energy, reduction (certifying `c1`) and plan.
    pub fn solver_context(&self) -> Result<SolverContext> {
        let (m, l) = self.config.reaction.indices();
        let energy = EnergyContext::new(&self.mesh, &self.forms, self.reaction()?)?;
        let controls = TauControls {
            max_iter: self.config.solver.tau_max_iter,
            grad_tol: self.config.solver.tau_grad_tol,
        };
        let red = ReductionContext::new(energy, &self.decomp, &self.mesh, m, l, controls)
            .map_err(|e| e.in_stage("reduction"))?;
        SolverContext::new(red, &self.mesh, &self.forms, self.config.solver.plan.clone())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterRow {
    pub value: f64,
    pub dim: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub order: usize,
    pub computed: usize,
    pub path: EigenPath,
    pub max_residual: f64,
    pub orthonormality_error: f64,
    pub clusters: Vec<ClusterRow>,
}

impl SpectrumSummary {
    fn new(p: &Problem, limit: usize) -> Self {
        SpectrumSummary {
            order: p.decomp.order(),
            computed: p.decomp.len(),
            path: p.decomp.path,
            max_residual: p.decomp.max_residual(),
            orthonormality_error: p.decomp.orthonormality_error(&p.forms.mass),
            clusters: p
                .decomp
                .clusters
                .iter()
                .take(limit)
                .map(|c| ClusterRow {
                    value: c.value,
                    dim: c.dim,
                })
                .collect(),
        }
    }
}

/// Certificate bundle written by the `spectrum` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub config: ProblemConfig,
    pub spectrum: SpectrumSummary,
    pub coercivity: CoercivityCertificate,
    pub first_eigen: FirstEigenReport,
    pub gap_below: GapCertificate,
    pub gap_above: GapCertificate,
}

pub fn run_spectrum(p: &Problem) -> Result<SpectrumReport> {
    let coercivity = p.coercivity().map_err(|e| e.in_stage("coercivity certificate"))?;
    let first_eigen = first_eigen_report(&p.decomp).map_err(|e| e.in_stage("first eigenfunction"))?;
    let (gap_below, gap_above) = p.gap_certificates().map_err(|e| e.in_stage("gap certificates"))?;
    Ok(SpectrumReport {
        config: p.config.clone(),
        spectrum: SpectrumSummary::new(p, usize::MAX),
        coercivity,
        first_eigen,
        gap_below,
        gap_above,
    })
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// `inf φ̃ < 0`: a minimizer plus one more point from the ladder.
    Minimizer,
    /// `inf φ̃ = 0`: φ̃ vanishes on a small W-ball.
    FlatWBall,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundtripRecord {
    pub residual: f64,
    pub reverse_error: f64,
}

/// Everything `solve` produces. Deterministic for a fixed config.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub config: ProblemConfig,
    pub spectrum: SpectrumSummary,
    pub split: SplitSummary,
    pub audit: HypothesisReport,
    pub coercivity: CoercivityCertificate,
    pub c1: f64,
    pub gap_below: GapCertificate,
    pub gap_above: GapCertificate,
    pub linking: LinkingReport,
    pub coercivity_probe: CoercivityReport,
    pub minimizer: SolutionRecord,
    pub branch: Branch,
    pub attempts: Vec<Attempt>,
    pub solutions: [SolutionRecord; 2],
    pub verifications: [Verification; 2],
    pub roundtrip: [RoundtripRecord; 2],
    /// L2 distance between the two solutions.
    pub separation: f64,
    pub passed: bool,
}

/// Full pipeline: audit, certificates, linking check, minimization, second
/// critical point, verification.
pub fn solve_problem(p: &Problem) -> Result<SolveReport> {
    let cfg = &p.config;
    let audit = p.audit().map_err(|e| e.in_stage("hypothesis audit"))?;
    if let Some(bad) = audit.clauses.iter().find(|c| !c.passed) {
        return Err(Error::hypothesis(bad.clause, bad.detail.clone()).in_stage("hypothesis audit"));
    }
    let coercivity = p.coercivity().map_err(|e| e.in_stage("coercivity certificate"))?;
    let (gap_below, gap_above) = p.gap_certificates().map_err(|e| e.in_stage("gap certificates"))?;
    let ctx = p.solver_context()?;
    let split = ctx.red.split.summary(&ctx.red.energy.h1);
    let plan = &ctx.plan;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.solver.seed);
    let child = |rng: &mut ChaCha8Rng| ChaCha8Rng::seed_from_u64(rng.gen());
    let linking = ctx
        .linking_sign_check(&mut child(&mut rng), plan.rho, plan.linking_samples)
        .map_err(|e| e.in_stage("linking sign check"))?;
    let coercivity_probe = ctx
        .red
        .coercivity_probe(&mut child(&mut rng), cfg.solver.probe_directions, &cfg.solver.probe_radii)
        .map_err(|e| e.in_stage("coercivity probe"))?;
    let rho = linking.radius;
    let minimizer = ctx
        .minimize_reduced(&mut child(&mut rng), rho)
        .map_err(|e| e.in_stage("minimization"))?;

    let mut srng = child(&mut rng);
    let (branch, attempts, solutions) = if minimizer.energy < -plan.tol_sign {
        let (second, attempts) = ctx
            .second_critical_point(&mut srng, &minimizer, rho)
            .map_err(|e| e.in_stage("second critical point"))?;
        (Branch::Minimizer, attempts, [minimizer.clone(), second])
    } else {
        match ctx.flat_w_ball(&mut srng, rho).map_err(|e| e.in_stage("flat W-ball"))? {
            Ok(pair) => {
                let attempts = vec![Attempt {
                    strategy: "flat-w-ball",
                    success: true,
                    detail: format!("radius {rho:e}"),
                }];
                (Branch::FlatWBall, attempts, pair)
            }
            Err(msg) => {
                let (second, mut attempts) = ctx
                    .second_critical_point(&mut srng, &minimizer, rho)
                    .map_err(|e| e.in_stage("second critical point"))?;
                attempts.insert(
                    0,
                    Attempt {
                        strategy: "flat-w-ball",
                        success: false,
                        detail: msg,
                    },
                );
                (Branch::Minimizer, attempts, [minimizer.clone(), second])
            }
        }
    };

    let verifications = [ctx.verify_solution(&solutions[0].u), ctx.verify_solution(&solutions[1].u)];
    let mut roundtrip = Vec::with_capacity(2);
    for s in &solutions {
        roundtrip.push(RoundtripRecord {
            residual: s.residual,
            reverse_error: ctx.roundtrip_error(&s.u).map_err(|e| e.in_stage("roundtrip"))?,
        });
    }
    let roundtrip: [RoundtripRecord; 2] = roundtrip.try_into().expect("two records");
    let diff: Vec<f64> = solutions[0].u.iter().zip(&solutions[1].u).map(|(a, b)| a - b).collect();
    let separation = p.forms.mass.quad(&diff).max(0.0).sqrt();
    let passed = verifications.iter().all(|v| v.passed)
        && solutions.iter().all(|s| s.l2_norm >= plan.d_min)
        && separation >= plan.d_min
        && roundtrip.iter().all(|r| r.reverse_error <= 1e-6);
    Ok(SolveReport {
        config: cfg.clone(),
        spectrum: SpectrumSummary::new(p, split.l + 2),
        split,
        audit,
        coercivity,
        c1: ctx.red.c1(),
        gap_below,
        gap_above,
        linking,
        coercivity_probe,
        minimizer,
        branch,
        attempts,
        solutions,
        verifications,
        roundtrip,
        separation,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub verification: Verification,
    pub roundtrip_error: f64,
    pub passed: bool,
}

pub fn verify_vector(p: &Problem, u: &[f64]) -> Result<VerifyReport> {
    let ctx = p.solver_context()?;
    let verification = ctx.verify_solution(u);
    let roundtrip_error = ctx.roundtrip_error(u).map_err(|e| e.in_stage("roundtrip"))?;
    let passed = verification.passed && roundtrip_error <= 1e-6;
    Ok(VerifyReport {
        verification,
        roundtrip_error,
        passed,
    })
}
