//! Seeded sampling of points around an equilibrium.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{Assignment, ShiftedVar};
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    /// Number of perturbed points (the center is added on top where requested).
    pub count: usize,
    /// Half-width of the uniform box in every coordinate.
    pub radius: Real,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { count: 25, radius: 0.1, seed: 0x5eed }
    }
}

impl SampleConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        SampleConfig { seed, ..self }
    }

    pub fn with_count(self, count: usize) -> Self {
        SampleConfig { count, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// `count` points uniformly in the box of half-width `radius` around `center`.
    pub fn points(&self, center: &[Real]) -> Vec<Vec<Real>> {
        let mut rng = self.rng();
        (0..self.count)
            .map(|_| center.iter().map(|c| c + rng.gen_range(-self.radius..=self.radius)).collect())
            .collect()
    }

    /// Assignments for `vars`, each coordinate perturbed around `center(var)`.
    /// With `include_center` the unperturbed point comes first.
    pub fn assignments(
        &self,
        vars: &[ShiftedVar],
        center: impl Fn(&ShiftedVar) -> Real,
        include_center: bool,
    ) -> Vec<Assignment> {
        let c: Vec<Real> = vars.iter().map(&center).collect();
        let mut pts = Vec::with_capacity(self.count + 1);
        if include_center {
            pts.push(c.clone());
        }
        pts.extend(self.points(&c));
        pts.into_iter().map(|p| vars.iter().copied().zip(p).collect()).collect()
    }
}

/// Compact text form of a point for diagnostics.
pub fn describe_point(p: &Assignment) -> String {
    let mut entries: Vec<(&ShiftedVar, &Real)> = p.iter().collect();
    entries.sort_by_key(|e| *e.0);
    let parts: Vec<String> = entries.iter().map(|(v, x)| format!("{v}={x:.6}")).collect();
    format!("{{{}}}", parts.join(", "))
}
