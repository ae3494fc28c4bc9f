//! The pair of 3x3 markets used to show that no policy beats `T^{2/3}`
//! regret under a linear CDF condition on the minimum difference.
//!
//! Contexts live in four dimensions; every arm ranks `p1 > p2 > p3`.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::market::{compute_utilities, ArmPreferences, ContextSet, UtilityMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Base instance, `beta = 1`.
    Nu,
    /// Perturbed instance, `beta = 1 + tau`.
    NuPrime,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowerBoundInstance {
    pub variant: Variant,
    pub horizon: u64,
    pub tau: f64,
    pub phi: f64,
    pub psi: f64,
}

/// One draw: the uniform variable, the utilities it induces and the
/// contexts generating them.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerBoundRound {
    pub draw: f64,
    pub utilities: UtilityMatrix,
    pub contexts: ContextSet,
}

impl LowerBoundInstance {
    pub fn new(variant: Variant, horizon: u64) -> Self {
        Self {
            variant,
            horizon,
            tau: (horizon.max(1) as f64).powf(-1.0 / 3.0),
            phi: 0.5,
            psi: 0.125,
        }
    }

    pub fn beta(&self) -> f64 {
        match self.variant {
            Variant::Nu => 1.0,
            Variant::NuPrime => 1.0 + self.tau,
        }
    }

    pub fn theta(&self) -> Vec<DVector<f64>> {
        vec![
            DVector::from_vec(vec![self.beta(), 1.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]),
        ]
    }

    pub fn arm_prefs(&self) -> ArmPreferences {
        ArmPreferences::identity(3, 3)
    }

    fn f(&self, u: f64) -> f64 {
        if u > 1.0 / (1.0 + self.tau) {
            1.0
        } else {
            self.phi
        }
    }

    pub fn contexts(&self, u: f64) -> ContextSet {
        ContextSet::from_rows(&[
            vec![u, 0.0, 1.0, self.psi],
            vec![0.0, 1.0, 0.0, self.f(u)],
            vec![0.0, 0.0, self.psi, 0.0],
        ])
        .expect("fixed-shape contexts")
    }

    pub fn round(&self, u: f64) -> LowerBoundRound {
        let contexts = self.contexts(u);
        let utilities = compute_utilities(&self.theta(), &contexts).expect("matching dims");
        LowerBoundRound {
            draw: u,
            utilities,
            contexts,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LowerBoundRound {
        self.round(rng.gen::<f64>())
    }

    /// Optimal stable shares of the three players for draw `u`.
    pub fn closed_form_shares(&self, u: f64) -> [f64; 3] {
        match self.variant {
            Variant::Nu => [1.0, 1.0, 0.0],
            Variant::NuPrime if u <= 1.0 / (1.0 + self.tau) => [1.0, 1.0, 0.0],
            Variant::NuPrime => [self.beta() * u, self.psi, 1.0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::optimal_stable_share;

    #[test]
    fn utilities_follow_template() {
        let inst = LowerBoundInstance::new(Variant::NuPrime, 1000);
        let r = inst.round(0.3);
        let b = inst.beta();
        let expected = [[b * 0.3, 1.0, 0.0], [1.0, 0.0, 0.125], [0.125, 0.5, 0.0]];
        for (i, row) in expected.iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                assert!((r.utilities.get(i, j) - want).abs() < 1e-15);
            }
        }
        assert!((inst.tau - 0.1).abs() < 1e-12);
    }

    #[test]
    fn high_draw_flips_perturbed_shares() {
        let inst = LowerBoundInstance::new(Variant::NuPrime, 1000);
        let r = inst.round(0.95);
        let share = optimal_stable_share(&r.utilities, &inst.arm_prefs(), 0.0).unwrap();
        assert_eq!(share, inst.closed_form_shares(0.95).to_vec());
        assert_eq!(share[1], 0.125);
    }
}
