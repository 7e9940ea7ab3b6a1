use std::fmt;
use std::sync::Arc;

use crate::mesh::QuadPoint;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A scalar coefficient on the domain or its boundary, evaluated at
/// quadrature points.
#[derive(Clone)]
pub enum CoefficientField {
    Constant(f64),
    /// One value per mesh node, interpolated piecewise-linearly.
    Nodal(Vec<f64>),
    /// Pointwise callable. `singular` lists points where the callable may
    /// blow up; assembly refuses meshes whose quadrature points hit them.
    Function {
        f: ScalarFn,
        singular: Vec<[f64; 2]>,
    },
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientField::Constant(c) => write!(f, "Constant({c})"),
            CoefficientField::Nodal(v) => write!(f, "Nodal(len={})", v.len()),
            CoefficientField::Function { singular, .. } => {
                write!(f, "Function(singular={singular:?})")
            }
        }
    }
}

impl CoefficientField {
    pub fn function(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        CoefficientField::Function {
            f: Arc::new(f),
            singular: Vec::new(),
        }
    }

    pub fn eval(&self, q: &QuadPoint, dim: usize) -> f64 {
        match self {
            CoefficientField::Constant(c) => *c,
            CoefficientField::Nodal(vals) => q.interpolate(vals),
            CoefficientField::Function { f, .. } => f(q.coords(dim)),
        }
    }

    pub fn singular_points(&self) -> &[[f64; 2]] {
        match self {
            CoefficientField::Function { singular, .. } => singular,
            _ => &[],
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            CoefficientField::Constant(c) => Some(*c),
            _ => None,
        }
    }
}

impl From<f64> for CoefficientField {
    fn from(c: f64) -> Self {
        CoefficientField::Constant(c)
    }
}
