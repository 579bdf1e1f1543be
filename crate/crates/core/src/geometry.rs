//! Rigid motions of 3-D point sets.

use rand::Rng;

use crate::numerics::Tensor;

/// `x -> R x + t` with `R` a proper rotation.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidMotion {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl RigidMotion {
    /// Rotation from a unit quaternion `(w, x, y, z)`; the input is normalized.
    pub fn from_quaternion(q: [f64; 4], translation: [f64; 3]) -> Self {
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let [w, x, y, z] = q.map(|v| v / n);
        let rotation = [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ];
        Self { rotation, translation }
    }

    pub fn apply(&self, positions: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(positions.rows(), 3);
        for i in 0..positions.rows() {
            let p = positions.row(i);
            let o = out.row_mut(i);
            for (r, (rot, t)) in self.rotation.iter().zip(&self.translation).enumerate() {
                o[r] = rot[0] * p[0] + rot[1] * p[1] + rot[2] * p[2] + t;
            }
        }
        out
    }
}

/// Uniformly random rotation with a translation in `[-10, 10)^3`.
pub fn random_rigid_motion<R: Rng + ?Sized>(rng: &mut R) -> RigidMotion {
    // Four standard normals give a uniformly distributed unit quaternion.
    let mut q = [0.0; 4];
    for v in &mut q {
        let (u1, u2): (f64, f64) = (rng.random::<f64>().max(f64::MIN_POSITIVE), rng.random());
        *v = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    }
    let t = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
    RigidMotion::from_quaternion(q, t)
}
