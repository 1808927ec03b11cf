//! Random subproblem instances for testing and benchmarking.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::QpInstance;
use crate::Scalar;

/// Size limits for [`random_instance`].
#[derive(Debug, Clone, Copy)]
pub struct InstanceShape {
    pub max_n: usize,
    pub max_eq: usize,
    pub max_ineq: usize,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            max_n: 4,
            max_eq: 3,
            max_ineq: 3,
        }
    }
}

/// Draws an instance with `1 ≤ n ≤ max_n`, at least one constraint, entries
/// uniform in `[-2, 2]` and `B = LᵀL + 0.1 I`.
pub fn random_instance<T: Scalar, R: Rng + ?Sized>(rng: &mut R, shape: InstanceShape) -> QpInstance<T> {
    let n = rng.gen_range(1..=shape.max_n);
    let (me, mi) = loop {
        let me = rng.gen_range(0..=shape.max_eq);
        let mi = rng.gen_range(0..=shape.max_ineq);
        if me + mi > 0 {
            break (me, mi);
        }
    };
    let mut entry = || T::lit(rng.gen_range(-2.0..=2.0));
    let l = DMatrix::from_fn(n, n, |_, _| entry());
    let b = l.tr_mul(&l) + DMatrix::identity(n, n) * T::lit(0.1);
    QpInstance {
        linear: DVector::from_fn(n, |_, _| entry()),
        b,
        h: DVector::from_fn(me, |_, _| entry()),
        jac_h: DMatrix::from_fn(n, me, |_, _| entry()),
        g: DVector::from_fn(mi, |_, _| entry()),
        jac_g: DMatrix::from_fn(n, mi, |_, _| entry()),
    }
}
