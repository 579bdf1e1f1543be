//! Rigid-motion invariant edge descriptors from distances and bond angles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::GraphContext;
use crate::numerics::Tensor;

pub const RADIAL_COUNT: usize = 16;
pub const FOURIER_ORDER: usize = 4;

/// Gaussian radial basis on `[0, cutoff]` with an optional cosine Fourier basis
/// over bond angles. The two occupy disjoint coordinates, so their sum is a
/// concatenation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricBasis {
    pub cutoff: f64,
    pub angular: bool,
}

impl GeometricBasis {
    pub fn width(&self) -> usize {
        RADIAL_COUNT + if self.angular { FOURIER_ORDER } else { 0 }
    }

    pub fn spacing(&self) -> f64 {
        self.cutoff / (RADIAL_COUNT - 1) as f64
    }

    pub fn radial(&self, r: f64) -> [f64; RADIAL_COUNT] {
        let s = self.spacing();
        std::array::from_fn(|k| {
            let z = (r - k as f64 * s) / s;
            (-0.5 * z * z).exp()
        })
    }

    pub fn angular_terms(theta: f64) -> [f64; FOURIER_ORDER] {
        std::array::from_fn(|k| ((k + 1) as f64 * theta).cos())
    }
}

fn sub(a: &[f64], b: &[f64]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Angle between `a` and `b` in `[0, pi]`, via `atan2` for accuracy near 0 and pi.
pub fn angle(a: [f64; 3], b: [f64; 3]) -> f64 {
    let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    norm(cross).atan2(dot)
}

/// One row per directed edge of `ctx`. For the edge carrying a message from `v`
/// to receiver `u`, the row is the radial basis of `|r_u - r_v|` plus the sum of
/// angular bases of the angles at `u` between `v` and every other neighbor `w`.
pub fn geometric_edge_embed(ctx: &GraphContext, basis: &GeometricBasis) -> Result<Tensor> {
    let pos = ctx.positions.as_ref().ok_or(Error::MissingPositions("geometric"))?;
    let mut neighbors = vec![Vec::new(); ctx.node_count];
    for (&s, &d) in ctx.src.iter().zip(ctx.dst.iter()) {
        neighbors[d].push(s);
    }
    let mut out = Tensor::zeros(ctx.directed_edge_count(), basis.width());
    for (k, (&v, &u)) in ctx.src.iter().zip(ctx.dst.iter()).enumerate() {
        let ruv = sub(pos.row(v), pos.row(u));
        let r = norm(ruv);
        if r == 0.0 {
            return Err(Error::CoincidentPoints { u: u.min(v), v: u.max(v) });
        }
        let row = out.row_mut(k);
        row[..RADIAL_COUNT].copy_from_slice(&basis.radial(r));
        if basis.angular {
            for &w in neighbors[u].iter().filter(|&&w| w != v) {
                let ruw = sub(pos.row(w), pos.row(u));
                if norm(ruw) == 0.0 {
                    return Err(Error::CoincidentPoints { u: u.min(w), v: u.max(w) });
                }
                for (slot, t) in row[RADIAL_COUNT..].iter_mut().zip(GeometricBasis::angular_terms(angle(ruv, ruw))) {
                    *slot += t;
                }
            }
        }
    }
    Ok(out)
}
