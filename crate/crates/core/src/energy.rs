//! The discrete energy `φ(u) = ½ uᵀGu − ∫F(z, u_h)` with gradient and
//! Hessian. Gradients are dual vectors: pair them with coefficient vectors
//! through the Euclidean dot product.

use std::sync::Arc;

use crate::assembly::Forms;
use crate::error::{Error, Result};
use crate::form::SymmetricForm;
use crate::linalg::sub;
use crate::mesh::Mesh;
use crate::nonlinearity::{Nemytskii, Reaction};

#[derive(Debug, Clone)]
pub struct EnergyContext {
    pub gamma: SymmetricForm,
    pub mass: SymmetricForm,
    pub h1: SymmetricForm,
    pub reaction: Arc<dyn Reaction>,
    nem: Nemytskii,
}

impl EnergyContext {
    pub fn new(mesh: &Mesh, forms: &Forms, reaction: Arc<dyn Reaction>) -> Result<Self> {
        let n = mesh.n_nodes();
        for (f, ctx) in [
            (&forms.gamma, "gamma form order"),
            (&forms.mass, "mass form order"),
            (&forms.h1, "H1 form order"),
        ] {
            if f.order() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: f.order(),
                    context: ctx,
                });
            }
        }
        Ok(EnergyContext {
            gamma: forms.gamma.clone(),
            mass: forms.mass.clone(),
            h1: forms.h1.clone(),
            reaction,
            nem: Nemytskii::new(mesh),
        })
    }

    pub fn order(&self) -> usize {
        self.gamma.order()
    }

    pub fn nemytskii(&self) -> &Nemytskii {
        &self.nem
    }

    fn check(&self, u: &[f64]) {
        assert_eq!(u.len(), self.order(), "coefficient vector has the wrong order");
    }

    pub fn phi(&self, u: &[f64]) -> f64 {
        self.check(u);
        0.5 * self.gamma.quad(u) - self.nem.energy(self.reaction.as_ref(), u)
    }

    /// `|½ uᵀGu| + |∫F(z, u)|`: the size of the terms that cancel in `φ(u)`.
    pub fn phi_scale(&self, u: &[f64]) -> f64 {
        self.check(u);
        (0.5 * self.gamma.quad(u)).abs() + self.nem.energy(self.reaction.as_ref(), u).abs()
    }

    /// `Gu − load(u)`.
    pub fn grad_phi(&self, u: &[f64]) -> Vec<f64> {
        self.check(u);
        sub(&self.gamma.apply(u), &self.nem.load(self.reaction.as_ref(), u))
    }

    /// `G − J(u)`.
    pub fn hessian(&self, u: &[f64]) -> SymmetricForm {
        self.check(u);
        let jac = self.nem.jacobian(self.reaction.as_ref(), u);
        self.gamma.add_scaled(&jac, -1.0).expect("orders match")
    }

    pub fn hess_phi_action(&self, u: &[f64], h: &[f64]) -> Vec<f64> {
        self.check(h);
        self.hessian(u).apply(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, max_abs, scale};
    use crate::mesh::build_interval_mesh;
    use crate::nonlinearity::{LinearReaction, ModelReaction, SpectralLevels};
    use crate::spectrum::{gap_constant, random_in_span, solve_pencil, GapSide};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn setup(n: usize, r: Option<Arc<dyn Reaction>>) -> (Mesh, Forms, crate::spectrum::EigenDecomposition, EnergyContext) {
        let mesh = build_interval_mesh(0.0, PI, n).unwrap();
        let forms = Forms::assemble(&mesh, &(-0.5).into(), &0.0.into()).unwrap();
        let d = solve_pencil(&forms.gamma, &forms.mass, &Default::default()).unwrap();
        let r = r.unwrap_or_else(|| {
            let lv = SpectralLevels::from_decomposition(&d, 1, 3).unwrap();
            Arc::new(ModelReaction::new(lv, 0.3 * (lv.lambda_m1 - lv.lambda_m), 0.1).unwrap())
        });
        let ctx = EnergyContext::new(&mesh, &forms, r).unwrap();
        (mesh, forms, d, ctx)
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize, s: f64) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-s..s)).collect()
    }

    #[test]
    fn zero_and_quadratic_exactness() {
        let (_, forms, _, ctx) = setup(48, None);
        let z = vec![0.0; 48];
        assert_eq!(ctx.phi(&z), 0.0);
        assert!(ctx.grad_phi(&z).iter().all(|&x| x == 0.0));

        let c = 0.7;
        let (_, _, _, lin) = setup(48, Some(Arc::new(LinearReaction { slope: c, delta: 0.1 })));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = rand_vec(&mut rng, 48, 2.0);
        let h = rand_vec(&mut rng, 48, 1.0);
        let closed = 0.5 * forms.gamma.quad(&u) - 0.5 * c * forms.mass.quad(&u);
        assert!((lin.phi(&u) - closed).abs() < 1e-12 * (1.0 + closed.abs()));
        let g = sub(&forms.gamma.apply(&u), &scale(c, &forms.mass.apply(&u)));
        assert!(max_abs(&sub(&lin.grad_phi(&u), &g)) < 1e-12);
        let act = sub(&forms.gamma.apply(&h), &scale(c, &forms.mass.apply(&h)));
        assert!(max_abs(&sub(&lin.hess_phi_action(&u, &h), &act)) < 1e-12);
    }

    #[test]
    fn finite_difference_consistency() {
        let (_, _, _, ctx) = setup(64, None);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps = 1e-5;
        for _ in 0..20 {
            let u = rand_vec(&mut rng, 64, 3.0);
            let h = rand_vec(&mut rng, 64, 1.0);
            let up: Vec<f64> = u.iter().zip(&h).map(|(a, b)| a + eps * b).collect();
            let um: Vec<f64> = u.iter().zip(&h).map(|(a, b)| a - eps * b).collect();
            let fd = (ctx.phi(&up) - ctx.phi(&um)) / (2.0 * eps);
            let an = dot(&h, &ctx.grad_phi(&u));
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-8), "{fd} vs {an}");

            let gfd = scale(1.0 / (2.0 * eps), &sub(&ctx.grad_phi(&up), &ctx.grad_phi(&um)));
            let act = ctx.hess_phi_action(&u, &h);
            let err = max_abs(&sub(&gfd, &act)) / max_abs(&act);
            // kinks of f make a few FD columns one-sided; keep them rare
            assert!(err <= 1e-5 || kink_crossed(&u, &h, eps), "hessian fd err {err}");

            let g2 = rand_vec(&mut rng, 64, 1.0);
            let a = dot(&g2, &ctx.hess_phi_action(&u, &h));
            let b = dot(&h, &ctx.hess_phi_action(&u, &g2));
            assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
        }
    }

    /// Some quadrature value of `u ± εh` straddles a kink at ±δ.
    fn kink_crossed(u: &[f64], h: &[f64], eps: f64) -> bool {
        let g = 1.0 / 3f64.sqrt();
        u.windows(2).zip(h.windows(2)).any(|(uw, hw)| {
            [0.5 - 0.5 * g, 0.5 + 0.5 * g].iter().any(|&t| {
                let x = (1.0 - t) * uw[0] + t * uw[1];
                let dx = ((1.0 - t) * hw[0] + t * hw[1]) * eps;
                ((x - dx).abs() - 0.1).signum() != ((x + dx).abs() - 0.1).signum()
            })
        })
    }

    #[test]
    fn eigenpair_is_stationary_for_linear_reaction() {
        let (_, _, d, _) = setup(64, None);
        let lam1 = d.values[0];
        let (_, _, _, ctx) = setup(64, Some(Arc::new(LinearReaction { slope: lam1, delta: 0.1 })));
        let g = ctx.grad_phi(&d.vector(0));
        assert!(max_abs(&g) < 1e-8);
    }

    #[test]
    fn concavity_on_negative_block() {
        let (mesh, forms, d, ctx) = setup(64, None);
        let eta = ctx.reaction.monotonicity_floor(&[0.0]);
        let cert = gap_constant(GapSide::Below, &d, 1, &eta.into(), &mesh, &forms.gamma, &forms.h1).unwrap();
        let c1 = cert.constant;
        assert!(c1 > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let s: f64 = rng.gen_range(0.01..20.0);
            let y = scale(s, &random_in_span(&mut rng, &d.vectors, cert.columns.clone()));
            let a = forms.h1.quad(&y);
            // energy bound carries the factor 1/2 from F(x) >= eta x^2 / 2
            assert!(ctx.phi(&y) <= -0.5 * c1 * a + 1e-10 * (1.0 + a));
            let u = rand_vec(&mut rng, 64, 3.0);
            let hy = ctx.hess_phi_action(&u, &y);
            assert!(dot(&y, &hy) <= -c1 * a + 1e-8 * (1.0 + a));
        }
    }
}
