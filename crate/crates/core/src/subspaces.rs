//! Orthogonal splittings `H_− ⊕ H⁰ ⊕ H₊` and `V = W ⊕ Ê` built from the
//! eigenvector clusters, with M-orthogonal projections and coordinates.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::form::SymmetricForm;
use crate::spectrum::{apply_cols, EigenDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    /// Clusters `1..=m`.
    Minus,
    /// Cluster `m+1`.
    Zero,
    /// Clusters `≥ m+2`.
    Plus,
    /// `H⁰ ⊕ H₊`.
    V,
    /// Clusters `m+1..=l−1`.
    W,
    /// Clusters `≥ l`.
    EHat,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitSummary {
    pub m: usize,
    pub l: usize,
    pub dim_minus: usize,
    pub dim_zero: usize,
    pub dim_plus: usize,
    pub dim_w: usize,
    pub dim_ehat: usize,
    pub lambda_m: f64,
    pub lambda_m1: f64,
    pub lambda_l1: f64,
    pub lambda_l: f64,
    /// `max |e_iᵀ A e_j|` for `e_i ∈ H_−`, `e_j ∈ V`. Zero only for constant
    /// potential and no boundary term; reported, not enforced.
    pub a_coupling_minus_v: f64,
}

#[derive(Debug, Clone)]
pub struct SubspaceSplit {
    m: usize,
    l: usize,
    basis: DMatrix<f64>,
    values: Vec<f64>,
    mass: SymmetricForm,
    minus: Range<usize>,
    zero: Range<usize>,
    w: Range<usize>,
    ehat: Range<usize>,
    n: usize,
    levels: [f64; 4],
}

impl SubspaceSplit {
    /// Needs every eigenpair: `H₊` is the full discrete complement.
    pub fn new(decomp: &EigenDecomposition, mass: &SymmetricForm, m: usize, l: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::hypothesis("H(f)(ii)", "m must be at least 1"));
        }
        if l < m + 2 {
            return Err(Error::hypothesis(
                "H(f)(iv)",
                format!("need l >= m+2, got m = {m}, l = {l}"),
            ));
        }
        if decomp.clusters.len() < l {
            return Err(Error::InsufficientClusters {
                needed: l,
                available: decomp.clusters.len(),
            });
        }
        let n = decomp.order();
        if !decomp.is_complete() {
            return Err(Error::Dimension {
                expected: n,
                got: decomp.len(),
                context: "subspace split needs all eigenpairs (request count = n)",
            });
        }
        if mass.order() != n {
            return Err(Error::Dimension {
                expected: n,
                got: mass.order(),
                context: "mass form order",
            });
        }
        let minus = decomp.cluster_span(1, m);
        let zero = decomp.cluster_span(m + 1, m + 1);
        let w = decomp.cluster_span(m + 1, l - 1);
        let ehat = decomp.clusters[l - 1].start..n;
        let d = |k| decomp.distinct(k).expect("cluster count checked");
        Ok(SubspaceSplit {
            m,
            l,
            basis: decomp.vectors.clone(),
            values: decomp.values.clone(),
            mass: mass.clone(),
            minus,
            zero,
            w,
            ehat,
            n,
            levels: [d(m), d(m + 1), d(l - 1), d(l)],
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// `[λ̂_m, λ̂_{m+1}, λ̂_{l−1}, λ̂_l]`.
    pub fn levels(&self) -> [f64; 4] {
        self.levels
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn mass(&self) -> &SymmetricForm {
        &self.mass
    }

    /// Columns of the eigenvector basis spanning `block`.
    pub fn columns(&self, block: Block) -> Range<usize> {
        match block {
            Block::Minus => self.minus.clone(),
            Block::Zero => self.zero.clone(),
            Block::Plus => self.zero.end..self.n,
            Block::V => self.zero.start..self.n,
            Block::W => self.w.clone(),
            Block::EHat => self.ehat.clone(),
        }
    }

    pub fn dim(&self, block: Block) -> usize {
        self.columns(block).len()
    }

    /// Eigenvalues attached to the block's columns.
    pub fn values(&self, block: Block) -> &[f64] {
        &self.values[self.columns(block)]
    }

    /// `E_bᵀ M u`: coordinates of the M-projection in the block basis.
    pub fn coords(&self, block: Block, u: &[f64]) -> Result<Vec<f64>> {
        self.check(u.len(), "vector order")?;
        let mu = self.mass.apply(u);
        Ok(self.dual_coords(block, &mu))
    }

    /// `E_bᵀ r` for a dual (load-like) vector `r`.
    pub fn dual_coords(&self, block: Block, r: &[f64]) -> Vec<f64> {
        let cols = self.columns(block);
        let e = self.basis.columns(cols.start, cols.len());
        let r = DVector::from_column_slice(r);
        (e.transpose() * r).iter().copied().collect()
    }

    pub fn lift(&self, block: Block, coeffs: &[f64]) -> Result<Vec<f64>> {
        let cols = self.columns(block);
        if coeffs.len() != cols.len() {
            return Err(Error::Dimension {
                expected: cols.len(),
                got: coeffs.len(),
                context: "block coefficients",
            });
        }
        let e = self.basis.columns(cols.start, cols.len());
        Ok((e * DVector::from_column_slice(coeffs)).iter().copied().collect())
    }

    pub fn project(&self, block: Block, u: &[f64]) -> Result<Vec<f64>> {
        let c = self.coords(block, u)?;
        self.lift(block, &c)
    }

    /// `(ū, u⁰, û)` with `ū ∈ H_−`, `u⁰ ∈ H⁰`, `û ∈ H₊`.
    pub fn components(&self, u: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        Ok((
            self.project(Block::Minus, u)?,
            self.project(Block::Zero, u)?,
            self.project(Block::Plus, u)?,
        ))
    }

    /// `E_bᵀ F E_b` for a symmetric form `F`.
    pub fn block_gram(&self, block: Block, form: &SymmetricForm) -> DMatrix<f64> {
        let cols = self.columns(block);
        let e = self.basis.columns(cols.start, cols.len()).into_owned();
        let fe = apply_cols(form, &e);
        let g = e.transpose() * fe;
        (&g + g.transpose()) * 0.5
    }

    /// `max |E_aᵀ F E_b|` between two blocks.
    pub fn cross_coupling(&self, a: Block, b: Block, form: &SymmetricForm) -> f64 {
        let (ca, cb) = (self.columns(a), self.columns(b));
        let ea = self.basis.columns(ca.start, ca.len()).into_owned();
        let eb = self.basis.columns(cb.start, cb.len());
        let fa = apply_cols(form, &ea);
        (fa.transpose() * eb).amax()
    }

    pub fn summary(&self, h1: &SymmetricForm) -> SplitSummary {
        SplitSummary {
            m: self.m,
            l: self.l,
            dim_minus: self.dim(Block::Minus),
            dim_zero: self.dim(Block::Zero),
            dim_plus: self.dim(Block::Plus),
            dim_w: self.dim(Block::W),
            dim_ehat: self.dim(Block::EHat),
            lambda_m: self.levels[0],
            lambda_m1: self.levels[1],
            lambda_l1: self.levels[2],
            lambda_l: self.levels[3],
            a_coupling_minus_v: self.cross_coupling(Block::Minus, Block::V, h1),
        }
    }

    fn check(&self, got: usize, context: &'static str) -> Result<()> {
        if got != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got,
                context,
            });
        }
        Ok(())
    }
}
