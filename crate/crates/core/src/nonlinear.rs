//! Photon-number-selective phase activation, applied per mode.
//!
//! A single gate imprints phase `phi1 + (n - 1) phi2` on an `n`-photon pulse
//! and leaves the vacuum untouched. Cascading `K` subtraction stages extends
//! the selectable range to `K + 1` photons, linear beyond that.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockState, Sector};

/// Per-mode phase pair of the single-atom gate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NonlinearParams {
    pub phi1: f64,
    pub phi2: f64,
}

impl NonlinearParams {
    pub fn new(phi1: f64, phi2: f64) -> Self {
        Self { phi1, phi2 }
    }
}

/// Phase vector of the cascaded multi-atom gate with `K` subtraction stages.
/// `K = 1` reduces exactly to [`NonlinearParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MultiAtomPhases {
    phases: Vec<f64>,
}

impl MultiAtomPhases {
    /// `phases` has length `K + 1` with `K >= 1`.
    pub fn new(phases: Vec<f64>) -> Result<Self> {
        if phases.len() < 2 {
            return Err(Error::InvalidConfig(
                "multi-atom gate needs at least two phases (K >= 1)".into(),
            ));
        }
        Ok(Self { phases })
    }

    pub fn subtraction_count(&self) -> usize {
        self.phases.len() - 1
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }
}

/// Phase acquired by an `n`-photon pulse: 0 for the vacuum, otherwise
/// `phi1 + (n - 1) phi2`.
pub fn nl_phase(n: usize, p: NonlinearParams) -> f64 {
    if n == 0 {
        0.0
    } else {
        p.phi1 + (n as f64 - 1.0) * p.phi2
    }
}

/// Cascaded-gate phase: the first `min(n, K)` photons pick up one stage phase
/// each, the remaining `n - K` share the final phase linearly.
pub fn nl_phase_multi(n: usize, p: &MultiAtomPhases) -> f64 {
    let k = p.subtraction_count();
    let selective: f64 = p.phases[..n.min(k)].iter().sum();
    selective + n.saturating_sub(k) as f64 * p.phases[k]
}

/// Applies the element-wise activation: each basis amplitude is multiplied by
/// `exp(i sum_m nl_phase(n_m))`. Diagonal in the Fock basis, so norm and
/// photon number are exactly preserved.
pub fn apply_nonlinear_layer(state: &FockState, params: &[NonlinearParams]) -> Result<FockState> {
    if params.len() != state.mode_count() {
        return Err(Error::LengthMismatch {
            expected: state.mode_count(),
            actual: params.len(),
        });
    }
    let mut sectors = Vec::new();
    for (_, sector) in state.sectors() {
        let mut amplitudes = sector.amplitudes.clone();
        for (i, occ) in sector.basis.occupations().enumerate() {
            let total: f64 = occ
                .iter()
                .zip(params)
                .map(|(&n, p)| nl_phase(n, *p))
                .sum();
            amplitudes[i] *= Complex64::from_polar(1.0, total);
        }
        sectors.push(Sector {
            basis: sector.basis.clone(),
            amplitudes,
        });
    }
    FockState::from_sectors(sectors, state.norm_flag())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{inner_product, FockBasis};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn vacuum_gets_no_phase() {
        assert_eq!(nl_phase(0, NonlinearParams::new(1.0, 2.0)), 0.0);
    }

    #[test]
    fn single_photon_gets_phi1() {
        assert!((nl_phase(1, NonlinearParams::new(0.3, 99.0)) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn two_photons_at_pi_flip_sign() {
        let phase = nl_phase(2, NonlinearParams::new(0.0, PI));
        assert!((Complex64::from_polar(1.0, phase) - c(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn multi_atom_with_one_stage_reduces_to_single_gate() {
        let single = NonlinearParams::new(0.7, -0.4);
        let multi = MultiAtomPhases::new(vec![0.7, -0.4]).unwrap();
        for n in 0..=6 {
            assert!((nl_phase(n, single) - nl_phase_multi(n, &multi)).abs() < 1e-15);
        }
    }

    #[test]
    fn multi_atom_cascade_rule() {
        let p = MultiAtomPhases::new(vec![0.2, 0.5, 1.1]).unwrap(); // K = 2
        assert!((nl_phase_multi(3, &p) - (0.2 + 0.5 + 1.1)).abs() < 1e-15);
        assert!((nl_phase_multi(5, &p) - (0.2 + 0.5 + 3.0 * 1.1)).abs() < 1e-15);
        assert_eq!(nl_phase_multi(0, &p), 0.0);
    }

    #[test]
    fn multi_atom_needs_two_phases() {
        assert!(MultiAtomPhases::new(vec![0.1]).is_err());
    }

    #[test]
    fn zero_phases_are_the_identity() {
        let basis = FockBasis::new(2, 2).unwrap();
        let state = FockState::from_terms(
            &basis,
            &[(&[1, 1], c(0.5, 0.5)), (&[2, 0], c(0.1, -0.3))],
        )
        .unwrap();
        let out = apply_nonlinear_layer(&state, &[NonlinearParams::default(); 2]).unwrap();
        assert!((inner_product(&state, &out).unwrap() - Complex64::ONE).norm() < 1e-14);
    }

    #[test]
    fn single_occupied_mode_sign_flip() {
        let basis = FockBasis::new(2, 2).unwrap();
        let state = FockState::from_occupation(&basis, &[1, 1]).unwrap();
        let params = [NonlinearParams::new(PI, 0.0), NonlinearParams::default()];
        let out = apply_nonlinear_layer(&state, &params).unwrap();
        let overlap = inner_product(&state, &out).unwrap();
        assert!((overlap - c(-1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn sign_gate_on_a_superposition() {
        // c0|0> + c1|1> + c2|2> on one mode -> c0|0> + c1|1> - c2|2> at
        // (phi1, phi2) = (0, pi).
        let params = [NonlinearParams::new(0.0, PI)];
        let coeffs = [c(0.5, 0.0), c(0.5, 0.5), c(0.0, -0.5)];
        for (n, c_n) in coeffs.iter().enumerate() {
            let basis = FockBasis::new(1, n).unwrap();
            let state = FockState::from_amplitudes(&basis, vec![*c_n]).unwrap();
            let out = apply_nonlinear_layer(&state, &params).unwrap();
            let amp = out.single_sector().unwrap().amplitudes[0];
            let expect = if n == 2 { -c_n } else { *c_n };
            assert!((amp - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn parameter_count_mismatch_rejected() {
        let basis = FockBasis::new(2, 1).unwrap();
        let state = FockState::from_occupation(&basis, &[1, 0]).unwrap();
        assert!(apply_nonlinear_layer(&state, &[NonlinearParams::default()]).is_err());
    }

    #[test]
    fn phases_compose_additively() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(8);
        let basis = FockBasis::new(3, 3).unwrap();
        let amps: Vec<Complex64> = (0..basis.len())
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut state = FockState::from_amplitudes(&basis, amps).unwrap();
        state.normalize();
        let a: Vec<NonlinearParams> = (0..3)
            .map(|_| NonlinearParams::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect();
        let b: Vec<NonlinearParams> = (0..3)
            .map(|_| NonlinearParams::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect();
        let sum: Vec<NonlinearParams> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| NonlinearParams::new(x.phi1 + y.phi1, x.phi2 + y.phi2))
            .collect();
        let sequential =
            apply_nonlinear_layer(&apply_nonlinear_layer(&state, &a).unwrap(), &b).unwrap();
        let combined = apply_nonlinear_layer(&state, &sum).unwrap();
        let overlap = inner_product(&sequential, &combined).unwrap();
        assert!((overlap - Complex64::ONE).norm() < 1e-12);
    }

    #[test]
    fn moduli_are_preserved() {
        let basis = FockBasis::new(2, 3).unwrap();
        let state = FockState::from_terms(
            &basis,
            &[(&[3, 0], c(0.6, 0.0)), (&[1, 2], c(0.0, 0.8))],
        )
        .unwrap();
        let params = [NonlinearParams::new(1.3, -0.2), NonlinearParams::new(0.4, 2.2)];
        let out = apply_nonlinear_layer(&state, &params).unwrap();
        let before = state.single_sector().unwrap();
        let after = out.single_sector().unwrap();
        for (x, y) in before.amplitudes.iter().zip(&after.amplitudes) {
            assert!((x.norm() - y.norm()).abs() < 1e-14);
        }
    }
}
