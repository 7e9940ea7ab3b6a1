//! Generalized eigenproblem `G v = λ M v`, clustering into distinct
//! eigenvalues, and the derived coercivity and spectral-gap certificates.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::assemble_potential;
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::form::SymmetricForm;
use crate::linalg::{dot, norm2, BandedCholesky};
use crate::mesh::Mesh;

/// Residual contract every returned eigenpair must meet: `‖Gv − λMv‖₂`.
pub const PAIR_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
#[serde(default)]
pub struct SpectrumOptions {
    /// Number of eigenpairs; `None` means all of them.
    pub count: Option<usize>,
    /// Relative gap below which neighbouring eigenvalues share a cluster.
    pub cluster_tol: f64,
    /// Largest order handled by the dense path.
    pub dense_limit: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            count: None,
            cluster_tol: 1e-6,
            dense_limit: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenPath {
    Dense,
    ShiftInvertLanczos,
}

/// A distinct eigenvalue and the columns spanning its eigenspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cluster {
    pub value: f64,
    pub start: usize,
    pub dim: usize,
}

impl Cluster {
    pub fn columns(&self) -> Range<usize> {
        self.start..self.start + self.dim
    }
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Ascending, with multiplicity.
    pub values: Vec<f64>,
    /// M-orthonormal eigenvectors as columns, `n x values.len()`.
    pub vectors: DMatrix<f64>,
    pub clusters: Vec<Cluster>,
    pub cluster_tol: f64,
    pub residuals: Vec<f64>,
    pub path: EigenPath,
}

impl EigenDecomposition {
    /// Wraps externally supplied pairs, clustering with `cluster_tol`.
    /// Residuals are not recomputed.
    pub fn from_parts(values: Vec<f64>, vectors: DMatrix<f64>, cluster_tol: f64) -> Result<Self> {
        if vectors.ncols() != values.len() {
            return Err(Error::Dimension {
                expected: values.len(),
                got: vectors.ncols(),
                context: "eigenvector columns",
            });
        }
        if values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Format("eigenvalues must be ascending".into()));
        }
        let clusters = cluster_values(&values, cluster_tol);
        let residuals = vec![0.0; values.len()];
        Ok(EigenDecomposition {
            values,
            vectors,
            clusters,
            cluster_tol,
            residuals,
            path: EigenPath::Dense,
        })
    }

    pub fn order(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// All `n` eigenpairs were computed.
    pub fn is_complete(&self) -> bool {
        self.values.len() == self.order()
    }

    /// The `k`-th distinct eigenvalue, counting from 1.
    pub fn distinct(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.clusters.get(i)).map(|c| c.value)
    }

    /// Column range covering clusters `first..=last` (1-based, inclusive).
    pub fn cluster_span(&self, first: usize, last: usize) -> Range<usize> {
        let a = self.clusters[first - 1].start;
        let b = self.clusters[last - 1].columns().end;
        a..b
    }

    pub fn vector(&self, j: usize) -> Vec<f64> {
        self.vectors.column(j).iter().copied().collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// `max |VᵀMV − I|`.
    pub fn orthonormality_error(&self, mass: &SymmetricForm) -> f64 {
        let mv = apply_cols(mass, &self.vectors);
        let gram = self.vectors.transpose() * mv;
        let mut e = 0.0f64;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let t = if i == j { 1.0 } else { 0.0 };
                e = e.max((gram[(i, j)] - t).abs());
            }
        }
        e
    }

    /// `max |v_iᵀ G v_j|` over pairs from different clusters.
    pub fn cross_cluster_coupling(&self, form: &SymmetricForm) -> f64 {
        let gv = apply_cols(form, &self.vectors);
        let gram = self.vectors.transpose() * gv;
        let owner = self.cluster_index();
        let mut e = 0.0f64;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                if owner[i] != owner[j] {
                    e = e.max(gram[(i, j)].abs());
                }
            }
        }
        e
    }

    /// Cluster index (0-based) of every column.
    pub fn cluster_index(&self) -> Vec<usize> {
        let mut owner = vec![0; self.len()];
        for (c, cl) in self.clusters.iter().enumerate() {
            for j in cl.columns() {
                owner[j] = c;
            }
        }
        owner
    }
}

pub(crate) fn apply_cols(form: &SymmetricForm, v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(v.nrows(), v.ncols());
    let mut y = vec![0.0; v.nrows()];
    for j in 0..v.ncols() {
        form.apply_into(v.column(j).as_slice(), &mut y);
        out.column_mut(j).copy_from_slice(&y);
    }
    out
}

pub fn cluster_values(values: &[f64], tol: f64) -> Vec<Cluster> {
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        match clusters.last_mut() {
            Some(c) if v - values[i - 1] < tol * (1.0 + v.abs()) => {
                c.dim += 1;
                sum += v;
                c.value = sum / c.dim as f64;
            }
            _ => {
                sum = v;
                clusters.push(Cluster {
                    value: v,
                    start: i,
                    dim: 1,
                });
            }
        }
    }
    clusters
}

/// Sign convention: the first entry of non-negligible size is positive.
fn normalize_sign(v: &mut [f64]) {
    let big = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-3 * big) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn pair_residual(g: &SymmetricForm, m: &SymmetricForm, lambda: f64, v: &[f64]) -> f64 {
    let gv = g.apply(v);
    let mv = m.apply(v);
    let r: Vec<f64> = gv.iter().zip(&mv).map(|(a, b)| a - lambda * b).collect();
    norm2(&r)
}

/// Smallest `count` eigenpairs of the pencil `(G, M)`, `M` positive definite.
pub fn solve_pencil(
    g: &SymmetricForm,
    m: &SymmetricForm,
    opts: &SpectrumOptions,
) -> Result<EigenDecomposition> {
    let n = g.order();
    if m.order() != n {
        return Err(Error::Dimension {
            expected: n,
            got: m.order(),
            context: "pencil order",
        });
    }
    let k = opts.count.unwrap_or(n);
    if k == 0 || k > n {
        return Err(Error::Dimension {
            expected: n,
            got: k,
            context: "requested eigenpair count",
        });
    }
    let (values, vectors, path) = if n <= opts.dense_limit {
        let (v, x) = dense_pencil(g, m, k)?;
        (v, x, EigenPath::Dense)
    } else {
        let (v, x) = lanczos_pencil(g, m, k)?;
        (v, x, EigenPath::ShiftInvertLanczos)
    };
    let mut residuals = Vec::with_capacity(k);
    for (j, &lam) in values.iter().enumerate() {
        let r = pair_residual(g, m, lam, vectors.column(j).as_slice());
        if !(r <= PAIR_RESIDUAL_TOL) {
            return Err(Error::Eigen {
                residual: r,
                detail: format!("pair {j} (lambda = {lam}) via {path:?}"),
            });
        }
        residuals.push(r);
    }
    let clusters = cluster_values(&values, opts.cluster_tol);
    Ok(EigenDecomposition {
        values,
        vectors,
        clusters,
        cluster_tol: opts.cluster_tol,
        residuals,
        path,
    })
}

/// Cholesky reduction `L⁻¹ G L⁻ᵀ` followed by a dense symmetric eigensolve.
fn dense_pencil(g: &SymmetricForm, m: &SymmetricForm, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = g.order();
    let chol = BandedCholesky::factor(m).map_err(|_| Error::NotPositiveDefinite("mass matrix"))?;
    // Y = L⁻¹ G, column by column (G is symmetric, so columns are rows).
    let mut y = g.to_dense();
    for j in 0..n {
        chol.forward_in_place(y.column_mut(j).as_mut_slice());
    }
    // C = L⁻¹ Yᵀ
    let mut c = y.transpose();
    for j in 0..n {
        chol.forward_in_place(c.column_mut(j).as_mut_slice());
    }
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = Vec::with_capacity(k);
    let mut vectors = DMatrix::zeros(n, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        values.push(eig.eigenvalues[idx]);
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        chol.backward_in_place(&mut v);
        normalize_sign(&mut v);
        vectors.column_mut(col).copy_from_slice(&v);
    }
    Ok((values, vectors))
}

/// Shift-invert Lanczos with full reorthogonalization in the M-inner
/// product. The shift is pushed below the spectrum until `G − σM` admits a
/// Cholesky factorization, so every shifted solve is positive definite.
fn lanczos_pencil(g: &SymmetricForm, m: &SymmetricForm, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = g.order();
    let mut sigma = -1.0;
    let shifted = loop {
        let s = g.add_scaled(m, -sigma)?;
        match BandedCholesky::factor(&s) {
            Ok(f) => break f,
            Err(_) if sigma > -1e12 => sigma = 4.0 * sigma - 1.0,
            Err(_) => return Err(Error::NotPositiveDefinite("shifted pencil")),
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a2c);
    let mut steps = (2 * k + 20).min(n);
    let mut worst = f64::INFINITY;
    loop {
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(steps);
        let mut alpha = Vec::with_capacity(steps);
        let mut beta: Vec<f64> = Vec::with_capacity(steps);
        let mut start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nrm = dot(&start, &m.apply(&start)).sqrt();
        start.iter_mut().for_each(|x| *x /= nrm);
        q.push(start);
        for j in 0..steps {
            let mq = m.apply(&q[j]);
            let mut w = shifted.solve(&mq);
            let a = dot(&w, &m.apply(&q[j]));
            alpha.push(a);
            // Two passes of classical Gram-Schmidt against every basis vector.
            for _ in 0..2 {
                let mw = m.apply(&w);
                for qi in &q {
                    let c = dot(qi, &mw);
                    w.iter_mut().zip(qi).for_each(|(x, y)| *x -= c * y);
                }
            }
            if j + 1 == steps {
                break;
            }
            let b = dot(&w, &m.apply(&w)).max(0.0).sqrt();
            if b < 1e-12 * a.abs().max(1e-300) {
                // Invariant subspace: restart with a fresh orthogonal direction.
                let mut r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                for _ in 0..2 {
                    let mr = m.apply(&r);
                    for qi in &q {
                        let c = dot(qi, &mr);
                        r.iter_mut().zip(qi).for_each(|(x, y)| *x -= c * y);
                    }
                }
                let nr = dot(&r, &m.apply(&r)).sqrt();
                r.iter_mut().for_each(|x| *x /= nr);
                beta.push(0.0);
                q.push(r);
            } else {
                w.iter_mut().for_each(|x| *x /= b);
                beta.push(b);
                q.push(w);
            }
        }
        let p = alpha.len();
        let mut t = DMatrix::zeros(p, p);
        for i in 0..p {
            t[(i, i)] = alpha[i];
            if i + 1 < p {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        // Largest θ of the inverted operator ↔ smallest λ = σ + 1/θ.
        let mut idx: Vec<usize> = (0..p).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        if idx.len() >= k {
            let mut pairs: Vec<(f64, Vec<f64>)> = idx[..k]
                .iter()
                .map(|&i| {
                    let theta = eig.eigenvalues[i];
                    let s = eig.eigenvectors.column(i);
                    let mut v = vec![0.0; n];
                    for (c, qc) in q.iter().take(p).enumerate() {
                        v.iter_mut().zip(qc).for_each(|(x, y)| *x += s[c] * y);
                    }
                    let nv = dot(&v, &m.apply(&v)).sqrt();
                    v.iter_mut().for_each(|x| *x /= nv);
                    normalize_sign(&mut v);
                    (sigma + 1.0 / theta, v)
                })
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            worst = pairs
                .iter()
                .map(|(l, v)| pair_residual(g, m, *l, v))
                .fold(0.0, f64::max);
            if worst <= PAIR_RESIDUAL_TOL {
                let mut vectors = DMatrix::zeros(n, k);
                let mut values = Vec::with_capacity(k);
                for (c, (l, v)) in pairs.into_iter().enumerate() {
                    values.push(l);
                    vectors.column_mut(c).copy_from_slice(&v);
                }
                return Ok((values, vectors));
            }
        }
        if steps == n {
            return Err(Error::Eigen {
                residual: worst,
                detail: "shift-invert Lanczos exhausted the full Krylov space".into(),
            });
        }
        steps = (2 * steps).min(n);
    }
}

/// Rayleigh quotient `uᵀGu / uᵀMu`.
pub fn rayleigh(g: &SymmetricForm, m: &SymmetricForm, u: &[f64]) -> Result<f64> {
    let den = m.quad(u);
    if !(den > 0.0) {
        return Err(Error::Format("Rayleigh quotient of a vector with zero M-norm".into()));
    }
    Ok(g.quad(u) / den)
}

#[derive(Debug, Clone, Serialize)]
pub struct FirstEigenReport {
    pub lambda1: f64,
    pub first_dim: usize,
    pub first_constant_sign: bool,
    /// `(column, cluster number, changes sign)` for every eigenvector past the first cluster.
    pub nodal: Vec<(usize, usize, bool)>,
    pub failures: Vec<String>,
}

impl FirstEigenReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::Certificate(self.failures.join("; ")))
        }
    }
}

/// Checks simplicity and constant sign of the first eigenfunction and the
/// nodal character of every higher one.
pub fn first_eigen_report(decomp: &EigenDecomposition) -> Result<FirstEigenReport> {
    if decomp.clusters.len() < 2 {
        return Err(Error::InsufficientClusters {
            needed: 2,
            available: decomp.clusters.len(),
        });
    }
    let first = decomp.clusters[0];
    let mut failures = Vec::new();
    if first.dim != 1 {
        failures.push(format!(
            "first eigenvalue is not simple: dim E(lambda_1) = {}",
            first.dim
        ));
    }
    let v = decomp.vector(first.start);
    let constant_sign = v.iter().all(|&x| x > 0.0) || v.iter().all(|&x| x < 0.0);
    if !constant_sign {
        failures.push("first eigenvector changes sign".into());
    }
    let mut nodal = Vec::new();
    for (c, cl) in decomp.clusters.iter().enumerate().skip(1) {
        for j in cl.columns() {
            let col = decomp.vectors.column(j);
            let big = col.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let thr = 1e-10 * big;
            let changes = col.iter().any(|&x| x > thr) && col.iter().any(|&x| x < -thr);
            if !changes {
                failures.push(format!("eigenvector {j} of cluster {} has constant sign", c + 1));
            }
            nodal.push((j, c + 1, changes));
        }
    }
    Ok(FirstEigenReport {
        lambda1: first.value,
        first_dim: first.dim,
        first_constant_sign: constant_sign,
        nodal,
        failures,
    })
}

/// Smallest eigenvalue of `(S, T)` computed densely; both symmetric and `T`
/// positive definite.
fn dense_min_max(s: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<(f64, f64)> {
    let chol = t
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("restricted Gram matrix"))?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(s)
        .ok_or(Error::Singular("restricted Gram factor"))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(Error::Singular("restricted Gram factor"))?;
    let c = (&c + c.transpose()) * 0.5;
    let ev = SymmetricEigen::new(c).eigenvalues;
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoercivityCertificate {
    pub mu: f64,
    pub c0: f64,
}

/// Shift `μ = max(0, −λ̂₁) + 1` and the constant `c0` with
/// `uᵀ(G + μM)u ≥ c0 · uᵀAu`.
pub fn coercivity_shift(
    g: &SymmetricForm,
    m: &SymmetricForm,
    a: &SymmetricForm,
    lambda1: f64,
    opts: &SpectrumOptions,
) -> Result<CoercivityCertificate> {
    let mu = (-lambda1).max(0.0) + 1.0;
    let shifted = g.add_scaled(m, mu)?;
    let c0 = if g.order() <= opts.dense_limit {
        dense_min_max(&shifted.to_dense(), &a.to_dense())?.0
    } else {
        let o = SpectrumOptions {
            count: Some(1),
            ..opts.clone()
        };
        solve_pencil(&shifted, a, &o)?.values[0]
    };
    if !(c0 > 0.0) {
        return Err(Error::Certificate(format!(
            "coercivity constant c0 = {c0} is not positive (mu = {mu})"
        )));
    }
    Ok(CoercivityCertificate { mu, c0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GapSide {
    /// Upper bound on the span of the first `m` clusters.
    Below,
    /// Lower bound on the span of clusters `m, m+1, …`.
    Above,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapCertificate {
    pub side: GapSide,
    pub m: usize,
    /// `c1` for [`GapSide::Below`], `c2` for [`GapSide::Above`].
    pub constant: f64,
    pub subspace_dim: usize,
    /// Columns of the decomposition spanning the tested subspace.
    #[serde(skip)]
    pub columns: Range<usize>,
}

/// Extremal value of `(γ(y) − ∫η y²) / ‖y‖²` over the relevant spectral
/// subspace, measured in the H1 norm. A nonpositive constant is reported as
/// a certificate failure: the discrete surrogate for unique continuation
/// did not hold.
pub fn gap_constant(
    side: GapSide,
    decomp: &EigenDecomposition,
    m: usize,
    eta: &CoefficientField,
    mesh: &Mesh,
    gamma: &SymmetricForm,
    h1: &SymmetricForm,
) -> Result<GapCertificate> {
    let clause = match side {
        GapSide::Below => "gap below eta",
        GapSide::Above => "gap above eta",
    };
    if m == 0 || m > decomp.clusters.len() {
        return Err(Error::InsufficientClusters {
            needed: m.max(1),
            available: decomp.clusters.len(),
        });
    }
    let level = decomp.clusters[m - 1].value;
    let slack = 1e-12 * (1.0 + level.abs());
    let quad = mesh.volume_quadrature();
    let dim = mesh.dim();
    let mut strict = false;
    for q in &quad {
        let e = eta.eval(q, dim);
        let (ok, gap) = match side {
            GapSide::Below => (e >= level - slack, e - level),
            GapSide::Above => (e <= level + slack, level - e),
        };
        if !ok || !e.is_finite() {
            return Err(Error::hypothesis(
                clause,
                format!("eta = {e} at {:?} is on the wrong side of lambda_{m} = {level}", q.coords(dim)),
            ));
        }
        strict |= gap > slack;
    }
    if !strict {
        return Err(Error::hypothesis(
            clause,
            format!("eta coincides with lambda_{m} = {level} at every quadrature point"),
        ));
    }
    let columns = match side {
        GapSide::Below => decomp.cluster_span(1, m),
        GapSide::Above => decomp.cluster_span(m, decomp.clusters.len()),
    };
    let h_eta = gamma.add_scaled(&assemble_potential(mesh, eta)?, -1.0)?;
    let basis = decomp.vectors.columns(columns.start, columns.len()).into_owned();
    let s = basis.transpose() * apply_cols(&h_eta, &basis);
    let t = basis.transpose() * apply_cols(h1, &basis);
    let (lo, hi) = dense_min_max(&s, &t)?;
    let constant = match side {
        GapSide::Below => -hi,
        GapSide::Above => lo,
    };
    if !(constant > 0.0) {
        return Err(Error::Certificate(format!(
            "{clause}: extremal constant {constant:e} is not positive (discrete unique continuation surrogate failed)"
        )));
    }
    Ok(GapCertificate {
        side,
        m,
        constant,
        subspace_dim: columns.len(),
        columns,
    })
}

/// Largest sine of the principal angles between `span(a)` and `span(b)`,
/// both M-orthonormal.
pub fn subspace_sine(a: &DMatrix<f64>, b: &DMatrix<f64>, mass: &SymmetricForm) -> f64 {
    let mb = apply_cols(mass, b);
    let coeff = a.transpose() * &mb;
    let resid = b - a * coeff;
    let mr = apply_cols(mass, &resid);
    let gram = resid.transpose() * mr;
    let ev = SymmetricEigen::new((&gram + gram.transpose()) * 0.5).eigenvalues;
    ev.iter().copied().fold(0.0f64, f64::max).max(0.0).sqrt()
}

/// Vector drawn from a Gaussian combination of the given columns.
pub fn random_in_span(rng: &mut impl Rng, basis: &DMatrix<f64>, cols: Range<usize>) -> Vec<f64> {
    let mut c = DVector::zeros(cols.len());
    for i in 0..cols.len() {
        c[i] = rng.sample::<f64, _>(rand_distr::StandardNormal);
    }
    let v = basis.columns(cols.start, cols.len()) * c;
    v.iter().copied().collect()
}
