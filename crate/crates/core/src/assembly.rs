//! Assembly of the bilinear forms behind the gamma-form and the H1 norm.
//!
//! Element contributions are buffered per element and reduced in sorted
//! index order, so the output is independent of element visitation order.

use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::form::SymmetricForm;
use crate::mesh::{Mesh, QuadPoint};

const SINGULAR_CLEARANCE: f64 = 1e-12;

fn weighted_mass(
    n: usize,
    quad: &[QuadPoint],
    mut weight: impl FnMut(&QuadPoint) -> Result<f64>,
) -> Result<SymmetricForm> {
    let mut trips = Vec::with_capacity(quad.len() * 6);
    for q in quad {
        let w = q.weight * weight(q)?;
        for a in 0..q.len {
            for b in a..q.len {
                let v = w * q.shape[a] * q.shape[b];
                trips.push((q.nodes[a], q.nodes[b], v));
            }
        }
    }
    SymmetricForm::from_triplets(n, trips)
}

/// `M_ij = ∫ φ_i φ_j`.
pub fn assemble_mass(mesh: &Mesh) -> Result<SymmetricForm> {
    weighted_mass(mesh.n_nodes(), &mesh.volume_quadrature(), |_| Ok(1.0))
}

/// `K_ij = ∫ ∇φ_i · ∇φ_j`.
pub fn assemble_stiffness(mesh: &Mesh) -> Result<SymmetricForm> {
    let mut trips = Vec::new();
    for el in mesh.elements() {
        match mesh.dim() {
            1 => {
                let h = mesh.nodes()[el[1]][0] - mesh.nodes()[el[0]][0];
                let k = 1.0 / h;
                trips.push((el[0], el[0], k));
                trips.push((el[0], el[1], -k));
                trips.push((el[1], el[1], k));
            }
            _ => {
                let p: Vec<[f64; 2]> = el.iter().map(|&i| mesh.nodes()[i]).collect();
                let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                    - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
                let area = 0.5 * det;
                // Gradient of the barycentric coordinate opposite to vertex k.
                let grads: Vec<[f64; 2]> = (0..3)
                    .map(|k| {
                        let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
                        [(a[1] - b[1]) / det, (b[0] - a[0]) / det]
                    })
                    .collect();
                for a in 0..3 {
                    for b in a..3 {
                        let v = area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                        trips.push((el[a], el[b], v));
                    }
                }
            }
        }
    }
    SymmetricForm::from_triplets(mesh.n_nodes(), trips)
}

/// `Ξ_ij = ∫ ξ φ_i φ_j` by element quadrature.
pub fn assemble_potential(mesh: &Mesh, xi: &CoefficientField) -> Result<SymmetricForm> {
    let quad = mesh.volume_quadrature();
    let singular = xi.singular_points();
    let dim = mesh.dim();
    weighted_mass(mesh.n_nodes(), &quad, |q| {
        for s in singular {
            let d2: f64 = (0..dim).map(|k| (q.x[k] - s[k]).powi(2)).sum();
            if d2.sqrt() < SINGULAR_CLEARANCE {
                return Err(Error::hypothesis(
                    "H(xi)",
                    format!("quadrature point {:?} sits on a declared singularity", q.coords(dim)),
                ));
            }
        }
        let v = xi.eval(q, dim);
        if !v.is_finite() {
            return Err(Error::hypothesis(
                "H(xi)",
                format!("potential is not finite at quadrature point {:?}", q.coords(dim)),
            ));
        }
        Ok(v)
    })
}

/// `B_ij = ∫_{∂Ω} β φ_i φ_j dσ`; rejects negative β samples.
pub fn assemble_boundary(mesh: &Mesh, beta: &CoefficientField) -> Result<SymmetricForm> {
    let quad = mesh.boundary_quadrature();
    let dim = mesh.dim();
    weighted_mass(mesh.n_nodes(), &quad, |q| {
        let v = beta.eval(q, dim);
        if !v.is_finite() || v < 0.0 {
            return Err(Error::hypothesis(
                "H(beta)",
                format!("beta = {v} at boundary point {:?}; must be >= 0", q.coords(dim)),
            ));
        }
        Ok(v)
    })
}

/// `G = K + Ξ + B`, so that `uᵀGu` is the discrete gamma-form.
pub fn compose_gamma(
    stiffness: &SymmetricForm,
    potential: &SymmetricForm,
    boundary: &SymmetricForm,
) -> Result<SymmetricForm> {
    stiffness
        .add_scaled(potential, 1.0)?
        .add_scaled(boundary, 1.0)
}

/// `A = M + K`, the Gram matrix of the H1 inner product.
pub fn compose_h1(mass: &SymmetricForm, stiffness: &SymmetricForm) -> Result<SymmetricForm> {
    mass.add_scaled(stiffness, 1.0)
}

/// All forms needed downstream, assembled once.
#[derive(Debug, Clone)]
pub struct Forms {
    pub mass: SymmetricForm,
    pub stiffness: SymmetricForm,
    pub potential: SymmetricForm,
    pub boundary: SymmetricForm,
    pub gamma: SymmetricForm,
    pub h1: SymmetricForm,
}

impl Forms {
    pub fn assemble(mesh: &Mesh, xi: &CoefficientField, beta: &CoefficientField) -> Result<Self> {
        let mass = assemble_mass(mesh)?;
        let stiffness = assemble_stiffness(mesh)?;
        let potential = assemble_potential(mesh, xi)?;
        let boundary = assemble_boundary(mesh, beta)?;
        let gamma = compose_gamma(&stiffness, &potential, &boundary)?;
        let h1 = compose_h1(&mass, &stiffness)?;
        Ok(Forms {
            mass,
            stiffness,
            potential,
            boundary,
            gamma,
            h1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, build_rectangle_mesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn meshes() -> Vec<Mesh> {
        vec![
            build_interval_mesh(0.0, 1.0, 3).unwrap(),
            build_interval_mesh(-1.0, 2.0, 17).unwrap(),
            build_rectangle_mesh(2.0, 1.0, 5, 4).unwrap(),
        ]
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn mass_partition_of_unity() {
        for mesh in meshes() {
            let m = assemble_mass(&mesh).unwrap();
            let ones = vec![1.0; mesh.n_nodes()];
            let total: f64 = m.apply(&ones).iter().sum();
            assert!((total - mesh.measure()).abs() < 1e-12);
        }
    }

    #[test]
    fn stiffness_kernel_and_linear_energy() {
        for mesh in meshes() {
            let k = assemble_stiffness(&mesh).unwrap();
            let ones = vec![1.0; mesh.n_nodes()];
            assert!(k.quad(&ones).abs() < 1e-12);
        }
        let mesh = build_interval_mesh(0.0, 1.0, 3).unwrap();
        let k = assemble_stiffness(&mesh).unwrap();
        let x: Vec<f64> = mesh.nodes().iter().map(|p| p[0]).collect();
        assert!((k.quad(&x) - 1.0).abs() < 1e-14);
        // ∫|∇(x + 2y)|² over [0,2]x[0,1] = 5 * 2.
        let mesh = build_rectangle_mesh(2.0, 1.0, 5, 4).unwrap();
        let k = assemble_stiffness(&mesh).unwrap();
        let u: Vec<f64> = mesh.nodes().iter().map(|p| p[0] + 2.0 * p[1]).collect();
        assert!((k.quad(&u) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn potential_constant_field_is_scaled_mass() {
        for mesh in meshes() {
            let m = assemble_mass(&mesh).unwrap();
            let z = assemble_potential(&mesh, &0.0.into()).unwrap();
            assert_eq!(z.max_abs(), 0.0);
            let c = -2.75;
            let xi = assemble_potential(&mesh, &c.into()).unwrap();
            let diff = xi.add_scaled(&m, -c).unwrap();
            assert!(diff.max_abs() <= 1e-12);
        }
    }

    #[test]
    fn nodal_field_interpolates() {
        let mesh = build_interval_mesh(0.0, 1.0, 9).unwrap();
        let nodal: Vec<f64> = mesh.nodes().iter().map(|p| 3.0 * p[0]).collect();
        let a = assemble_potential(&mesh, &CoefficientField::Nodal(nodal)).unwrap();
        let b = assemble_potential(&mesh, &CoefficientField::function(|z| 3.0 * z[0])).unwrap();
        assert!(a.add_scaled(&b, -1.0).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn boundary_endpoint_contributions() {
        let mesh = build_interval_mesh(0.0, 1.0, 5).unwrap();
        let b = assemble_boundary(&mesh, &1.0.into()).unwrap();
        assert!((b.quad(&[1.0; 5]) - 2.0).abs() < 1e-15);
        let mesh = build_rectangle_mesh(2.0, 1.0, 4, 3).unwrap();
        let b = assemble_boundary(&mesh, &1.0.into()).unwrap();
        let ones = vec![1.0; mesh.n_nodes()];
        assert!((b.quad(&ones) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn negative_beta_names_hypothesis() {
        let mesh = build_interval_mesh(0.0, 1.0, 5).unwrap();
        let err = assemble_boundary(&mesh, &CoefficientField::function(|z| z[0] - 0.5)).unwrap_err();
        match err {
            Error::Hypothesis { clause, .. } => assert_eq!(clause, "H(beta)"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn singular_point_on_quadrature_is_rejected() {
        let mesh = build_interval_mesh(0.0, 1.0, 3).unwrap();
        let q = mesh.volume_quadrature()[0].x;
        let xi = CoefficientField::Function {
            f: std::sync::Arc::new(move |z: &[f64]| (z[0] - q[0]).abs().powf(-0.25)),
            singular: vec![q],
        };
        assert!(assemble_potential(&mesh, &xi).is_err());
        // The midpoint is never a Gauss point.
        let xi = CoefficientField::Function {
            f: std::sync::Arc::new(|z: &[f64]| (z[0] - 0.5).abs().powf(-0.25)),
            singular: vec![[0.5, 0.0]],
        };
        assert!(assemble_potential(&mesh, &xi).is_ok());
    }

    #[test]
    fn gamma_and_h1_composition() {
        let mesh = build_interval_mesh(0.0, 1.0, 11).unwrap();
        let f = Forms::assemble(&mesh, &(-1.0).into(), &0.0.into()).unwrap();
        let ones = vec![1.0; 11];
        assert!((f.gamma.quad(&ones) + 1.0).abs() < 1e-12);
        let neumann = Forms::assemble(&mesh, &0.0.into(), &0.0.into()).unwrap();
        assert!(neumann.gamma.add_scaled(&neumann.stiffness, -1.0).unwrap().max_abs() == 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let u = rand_vec(&mut rng, 11);
            let lhs = f.h1.quad(&u);
            assert!((lhs - f.mass.quad(&u) - f.stiffness.quad(&u)).abs() < 1e-12);
            assert!(lhs >= f.mass.quad(&u));
        }
        assert!(compose_h1(&f.mass, &SymmetricForm::zeros(3)).is_err());
    }

    #[test]
    fn forms_are_symmetric_and_mass_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for mesh in meshes() {
            let n = mesh.n_nodes();
            let xi = CoefficientField::function(|z| (3.0 * z[0]).sin() - 0.5);
            let beta = CoefficientField::function(|z| 1.0 + z[0] * z[0]);
            let f = Forms::assemble(&mesh, &xi, &beta).unwrap();
            for s in [&f.mass, &f.stiffness, &f.potential, &f.boundary, &f.gamma, &f.h1] {
                for _ in 0..10 {
                    let u = rand_vec(&mut rng, n);
                    let v = rand_vec(&mut rng, n);
                    let uv: f64 = u.iter().zip(s.apply(&v)).map(|(a, b)| a * b).sum();
                    let vu: f64 = v.iter().zip(s.apply(&u)).map(|(a, b)| a * b).sum();
                    assert!((uv - vu).abs() < 1e-12);
                }
            }
            let min_rq = (0..100)
                .map(|_| {
                    let u = rand_vec(&mut rng, n);
                    f.mass.quad(&u) / u.iter().map(|x| x * x).sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(min_rq > 0.0);
            let ones = vec![1.0; n];
            assert!(f.boundary.quad(&ones) > 0.0);
        }
    }
}
