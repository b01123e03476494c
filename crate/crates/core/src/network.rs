//! Layered quantum photonic neural network: alternating interferometer
//! meshes and per-mode nonlinear phase gates, with a flat parameter packing
//! for the optimizer and a JSON checkpoint format.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockState, Sector};
use crate::interferometer::{mzi_transfer, MeshParams, SplitterError};
use crate::lift::TwoModeKernel;
use crate::nonlinear::{nl_phase, NonlinearParams};

/// One layer: a mesh followed by per-mode nonlinear phases.
#[derive(Debug, Clone)]
pub struct LayerParams {
    pub mesh: MeshParams,
    pub nonlinear: Vec<NonlinearParams>,
}

/// Trainable parameter set of the whole network.
///
/// The flat packing (`"v1"`) is layer-major: per layer, `(theta, phi)` for
/// each MZI in layout order, then the output phase column, then all `phi1`
/// and all `phi2` by mode. Fixed so checkpoints stay portable.
#[derive(Debug, Clone)]
pub struct NetworkParams {
    mode_count: usize,
    layers: Vec<LayerParams>,
}

impl NetworkParams {
    pub fn zeroed(mode_count: usize, layer_count: usize) -> Result<Self> {
        let layers = (0..layer_count)
            .map(|_| {
                Ok(LayerParams {
                    mesh: MeshParams::zeroed(mode_count)?,
                    nonlinear: vec![NonlinearParams::default(); mode_count],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { mode_count, layers })
    }

    /// All phases drawn i.i.d. uniform on `[0, 2pi)`; deterministic per seed.
    pub fn random(mode_count: usize, layer_count: usize, seed: u64) -> Result<Self> {
        let mut params = Self::zeroed(mode_count, layer_count)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let n = params.parameter_count();
        let flat: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
        params.set_flat(&flat)?;
        Ok(params)
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn mzis_per_layer(&self) -> usize {
        self.mode_count * (self.mode_count - 1) / 2
    }

    /// `L * (M(M-1) + M)` mesh phases plus `L * 2M` nonlinear phases.
    pub fn parameter_count(&self) -> usize {
        let m = self.mode_count;
        self.layers.len() * (m * (m - 1) + 3 * m)
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in &self.layers {
            for mzi in &layer.mesh.mzis {
                out.push(mzi.theta);
                out.push(mzi.phi);
            }
            out.extend_from_slice(&layer.mesh.output_phases);
            out.extend(layer.nonlinear.iter().map(|p| p.phi1));
            out.extend(layer.nonlinear.iter().map(|p| p.phi2));
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::LengthMismatch {
                expected: self.parameter_count(),
                actual: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for layer in &mut self.layers {
            for mzi in &mut layer.mesh.mzis {
                mzi.theta = it.next().unwrap();
                mzi.phi = it.next().unwrap();
            }
            for chi in &mut layer.mesh.output_phases {
                *chi = it.next().unwrap();
            }
            for p in &mut layer.nonlinear {
                p.phi1 = it.next().unwrap();
            }
            for p in &mut layer.nonlinear {
                p.phi2 = it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn to_checkpoint_json(&self) -> Result<String> {
        let dto = CheckpointJson {
            mode_count: self.mode_count,
            layer_count: self.layers.len(),
            params: self.flat(),
            packing: "v1".into(),
        };
        Ok(serde_json::to_string_pretty(&dto)?)
    }

    pub fn from_checkpoint_json(json: &str) -> Result<Self> {
        let dto: CheckpointJson = serde_json::from_str(json)?;
        if dto.packing != "v1" {
            return Err(Error::InvalidConfig(format!(
                "unknown checkpoint packing {:?}",
                dto.packing
            )));
        }
        let mut params = Self::zeroed(dto.mode_count, dto.layer_count)?;
        params.set_flat(&dto.params)?;
        Ok(params)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointJson {
    #[serde(rename = "M")]
    mode_count: usize,
    #[serde(rename = "L")]
    layer_count: usize,
    params: Vec<f64>,
    packing: String,
}

/// Elementary factor of the forward pass, in application order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factor {
    Mzi { layer: usize, index: usize },
    PhaseScreen { layer: usize },
    Nonlinear { layer: usize },
}

/// The factor sequence realized by `forward`, including or excluding the
/// activation after the final mesh.
pub fn factor_sequence(params: &NetworkParams, final_activation: bool) -> Vec<Factor> {
    let mut out = Vec::new();
    for layer in 0..params.layer_count() {
        for index in 0..params.mzis_per_layer() {
            out.push(Factor::Mzi { layer, index });
        }
        out.push(Factor::PhaseScreen { layer });
        if final_activation || layer + 1 < params.layer_count() {
            out.push(Factor::Nonlinear { layer });
        }
    }
    out
}

fn diagonal_phase(
    state: &FockState,
    mode_map: &[usize],
    phase_of: impl Fn(&[usize]) -> f64,
) -> Result<FockState> {
    let mut sectors = Vec::new();
    for (_, sector) in state.sectors() {
        let mut amplitudes = sector.amplitudes.clone();
        for (i, occ) in sector.basis.occupations().enumerate() {
            let mapped: Vec<usize> = mode_map.iter().map(|&m| occ[m]).collect();
            amplitudes[i] *= Complex64::from_polar(1.0, phase_of(&mapped));
        }
        sectors.push(Sector {
            basis: sector.basis.clone(),
            amplitudes,
        });
    }
    FockState::from_sectors(sectors, state.norm_flag())
}

/// Applies one factor of the network to a state whose mode register may be
/// larger than the network: `mode_map[k]` is the state mode carrying network
/// mode `k`. `adjoint` applies the inverse factor.
pub fn apply_factor(
    state: &FockState,
    params: &NetworkParams,
    mode_map: &[usize],
    factor: Factor,
    errors: Option<&[Vec<SplitterError>]>,
    adjoint: bool,
) -> Result<FockState> {
    match factor {
        Factor::Mzi { layer, index } => {
            let mzi = &params.layers[layer].mesh.mzis[index];
            let err = errors.map_or(SplitterError::default(), |e| e[layer][index]);
            let kernel = TwoModeKernel::new(
                mzi_transfer(mzi.params(), err),
                (mode_map[mzi.modes().0], mode_map[mzi.modes().1]),
            )?;
            let kernel = if adjoint { kernel.adjoint() } else { kernel };
            crate::lift::apply_two_mode(state, &kernel)
        }
        Factor::PhaseScreen { layer } => {
            let sign = if adjoint { -1.0 } else { 1.0 };
            let phases = &params.layers[layer].mesh.output_phases;
            diagonal_phase(state, mode_map, |occ| {
                sign * occ
                    .iter()
                    .zip(phases)
                    .map(|(&n, &chi)| n as f64 * chi)
                    .sum::<f64>()
            })
        }
        Factor::Nonlinear { layer } => {
            let sign = if adjoint { -1.0 } else { 1.0 };
            let nl = &params.layers[layer].nonlinear;
            diagonal_phase(state, mode_map, |occ| {
                sign * occ
                    .iter()
                    .zip(nl)
                    .map(|(&n, p)| nl_phase(n, *p))
                    .sum::<f64>()
            })
        }
    }
}

/// Forward pass on a subset of the state's modes.
pub fn forward_on_modes(
    state: &FockState,
    params: &NetworkParams,
    mode_map: &[usize],
    errors: Option<&[Vec<SplitterError>]>,
    final_activation: bool,
) -> Result<FockState> {
    validate_mode_map(state, params, mode_map)?;
    validate_errors(params, errors)?;
    let mut out = state.clone();
    for factor in factor_sequence(params, final_activation) {
        out = apply_factor(&out, params, mode_map, factor, errors, false)?;
    }
    Ok(out)
}

/// Forward pass of the network: per layer, the mesh (as two-mode kernels plus
/// the output phase screen) followed by the nonlinear activation.
pub fn forward(
    state: &FockState,
    params: &NetworkParams,
    errors: Option<&[Vec<SplitterError>]>,
) -> Result<FockState> {
    let identity: Vec<usize> = (0..params.mode_count()).collect();
    forward_on_modes(state, params, &identity, errors, true)
}

pub(crate) fn validate_mode_map(
    state: &FockState,
    params: &NetworkParams,
    mode_map: &[usize],
) -> Result<()> {
    if mode_map.len() != params.mode_count() {
        return Err(Error::LengthMismatch {
            expected: params.mode_count(),
            actual: mode_map.len(),
        });
    }
    for (i, &m) in mode_map.iter().enumerate() {
        if m >= state.mode_count() {
            return Err(Error::ModeIndexOutOfRange {
                index: m,
                modes: state.mode_count(),
            });
        }
        if mode_map[..i].contains(&m) {
            return Err(Error::InvalidConfig(format!("duplicate mode {m} in mode map")));
        }
    }
    Ok(())
}

pub(crate) fn validate_errors(
    params: &NetworkParams,
    errors: Option<&[Vec<SplitterError>]>,
) -> Result<()> {
    if let Some(per_layer) = errors {
        if per_layer.len() != params.layer_count() {
            return Err(Error::LengthMismatch {
                expected: params.layer_count(),
                actual: per_layer.len(),
            });
        }
        for layer in per_layer {
            if layer.len() != params.mzis_per_layer() {
                return Err(Error::LengthMismatch {
                    expected: params.mzis_per_layer(),
                    actual: layer.len(),
                });
            }
        }
    }
    Ok(())
}

/// Dense Fock-space matrix of the network on a basis: column `j` is the
/// forward image of basis state `j`.
pub fn network_matrix(
    params: &NetworkParams,
    basis: &Arc<FockBasis>,
) -> Result<ndarray::Array2<Complex64>> {
    let dim = basis.len();
    let mut out = ndarray::Array2::<Complex64>::zeros((dim, dim));
    for j in 0..dim {
        let mut amps = vec![Complex64::ZERO; dim];
        amps[j] = Complex64::ONE;
        let state = FockState::from_amplitudes(basis, amps)?;
        let image = forward(&state, params, None)?;
        let sector = image.single_sector()?;
        for (i, amp) in sector.amplitudes.iter().enumerate() {
            out[(i, j)] = *amp;
        }
    }
    Ok(out)
}

/// One draw of per-layer, per-MZI splitter errors for a whole network.
pub fn sample_network_errors<R: Rng>(
    params: &NetworkParams,
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<Vec<SplitterError>>> {
    params
        .layers()
        .iter()
        .map(|layer| crate::interferometer::sample_splitter_errors_with_rng(&layer.mesh, sigma, rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{inner_product, total_photon_number};
    use crate::interferometer::unitarity_deviation;
    use crate::lift::lift_unitary;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn parameter_count_matches_contract() {
        let p = NetworkParams::zeroed(4, 3).unwrap();
        // L (M(M-1) + M) mesh + L 2M nonlinear = 3 (12 + 4) + 3 * 8 = 72
        assert_eq!(p.parameter_count(), 72);
        assert_eq!(p.flat().len(), 72);
    }

    #[test]
    fn flatten_unflatten_is_identity() {
        let p = NetworkParams::random(4, 2, 99).unwrap();
        let flat = p.flat();
        let mut q = NetworkParams::zeroed(4, 2).unwrap();
        q.set_flat(&flat).unwrap();
        assert_eq!(q.flat(), flat);
    }

    #[test]
    fn random_init_is_seeded_and_in_range() {
        let a = NetworkParams::random(3, 2, 5).unwrap();
        let b = NetworkParams::random(3, 2, 5).unwrap();
        assert_eq!(a.flat(), b.flat());
        assert!(a.flat().iter().all(|&x| (0.0..TAU).contains(&x)));
    }

    #[test]
    fn identity_network_returns_input() {
        let params = NetworkParams::zeroed(3, 2).unwrap();
        let basis = FockBasis::new(3, 2).unwrap();
        let state = FockState::from_terms(
            &basis,
            &[(&[1, 1, 0], c(0.6, 0.0)), (&[0, 0, 2], c(0.0, 0.8))],
        )
        .unwrap();
        // theta = 0 meshes are crosses, not identities, so build the identity
        // from a decomposition of the identity matrix instead.
        let eye_mesh =
            crate::interferometer::clements_decompose(&ndarray::Array2::eye(3)).unwrap();
        let mut params = params;
        for layer in params.layers_mut() {
            layer.mesh = eye_mesh.clone();
        }
        let out = forward(&state, &params, None).unwrap();
        let overlap = inner_product(&state, &out).unwrap();
        assert!((overlap - Complex64::ONE).norm() < 1e-12);
    }

    #[test]
    fn single_layer_phase_flip() {
        let eye_mesh =
            crate::interferometer::clements_decompose(&ndarray::Array2::eye(2)).unwrap();
        let mut params = NetworkParams::zeroed(2, 1).unwrap();
        params.layers_mut()[0].mesh = eye_mesh;
        params.layers_mut()[0].nonlinear[0] = NonlinearParams::new(PI, 0.0);
        let basis = FockBasis::new(2, 1).unwrap();
        let state = FockState::from_occupation(&basis, &[1, 0]).unwrap();
        let out = forward(&state, &params, None).unwrap();
        let overlap = inner_product(&state, &out).unwrap();
        assert!((overlap - c(-1.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn forward_preserves_norm_and_photon_number() {
        let params = NetworkParams::random(4, 2, 3).unwrap();
        let basis = FockBasis::new(4, 2).unwrap();
        let state = FockState::from_occupation(&basis, &[1, 1, 0, 0]).unwrap();
        let out = forward(&state, &params, None).unwrap();
        assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
        let probs = total_photon_number(&out);
        assert!((probs[&2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_is_linear_in_the_input() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let params = NetworkParams::random(3, 2, 7).unwrap();
        let basis = FockBasis::new(3, 2).unwrap();
        let rand_state = |rng: &mut ChaCha12Rng| {
            let amps: Vec<Complex64> = (0..basis.len())
                .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            FockState::from_amplitudes(&basis, amps).unwrap()
        };
        let a = rand_state(&mut rng);
        let b = rand_state(&mut rng);
        let alpha = c(0.3, -0.4);
        let beta = c(-0.7, 0.2);
        let combo = a.scaled(alpha).add(&b.scaled(beta)).unwrap();
        let lhs = forward(&combo, &params, None).unwrap();
        let rhs = forward(&a, &params, None)
            .unwrap()
            .scaled(alpha)
            .add(&forward(&b, &params, None).unwrap().scaled(beta))
            .unwrap();
        let diff = lhs
            .single_sector()
            .unwrap()
            .amplitudes
            .iter()
            .zip(&rhs.single_sector().unwrap().amplitudes)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0f64, f64::max);
        assert!(diff < 1e-10);
    }

    #[test]
    fn network_matrix_is_unitary() {
        let params = NetworkParams::random(3, 2, 11).unwrap();
        let basis = FockBasis::new(3, 2).unwrap();
        let w = network_matrix(&params, &basis).unwrap();
        assert!(unitarity_deviation(&w) < 1e-9);
    }

    #[test]
    fn linear_network_matches_permanent_oracle() {
        // All nonlinear phases zero: the network matrix must equal the lift
        // of the product of the layer mesh unitaries.
        let mut params = NetworkParams::random(3, 2, 13).unwrap();
        for layer in params.layers_mut() {
            for p in &mut layer.nonlinear {
                *p = NonlinearParams::default();
            }
        }
        let basis = FockBasis::new(3, 2).unwrap();
        let w = network_matrix(&params, &basis).unwrap();
        let mut u = ndarray::Array2::<Complex64>::eye(3);
        for layer in params.layers() {
            u = layer.mesh.unitary(None).unwrap().dot(&u);
        }
        let lifted = lift_unitary(&u, &basis).unwrap();
        let diff = w
            .iter()
            .zip(lifted.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        assert!(diff < 1e-9, "network matrix deviates from oracle by {diff}");
    }

    #[test]
    fn forward_on_modes_embeds_a_subnetwork() {
        // A 2-mode network applied to modes (0, 1) of a 3-mode state must act
        // as (network (x) identity).
        let params = NetworkParams::random(2, 1, 31).unwrap();
        let basis3 = FockBasis::new(3, 1).unwrap();
        let state = FockState::from_occupation(&basis3, &[1, 0, 0]).unwrap();
        let out = forward_on_modes(&state, &params, &[0, 1], None, true).unwrap();
        let sector = out.single_sector().unwrap();
        let spectator = sector.amplitudes[sector.basis.index_of(&[0, 0, 1]).unwrap()];
        assert!(spectator.norm() < 1e-14);

        let basis2 = FockBasis::new(2, 1).unwrap();
        let small = FockState::from_occupation(&basis2, &[1, 0]).unwrap();
        let small_out = forward(&small, &params, None).unwrap();
        let small_sector = small_out.single_sector().unwrap();
        for (occ3, occ2) in [([1usize, 0, 0], [1usize, 0]), ([0, 1, 0], [0, 1])] {
            let a3 = sector.amplitudes[sector.basis.index_of(&occ3).unwrap()];
            let a2 = small_sector.amplitudes[small_sector.basis.index_of(&occ2).unwrap()];
            assert!((a3 - a2).norm() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trips() {
        let params = NetworkParams::random(4, 3, 17).unwrap();
        let json = params.to_checkpoint_json().unwrap();
        assert!(json.contains("\"packing\": \"v1\""));
        let back = NetworkParams::from_checkpoint_json(&json).unwrap();
        assert_eq!(params.flat(), back.flat());
    }

    #[test]
    fn error_shape_validation() {
        let params = NetworkParams::random(3, 2, 1).unwrap();
        let basis = FockBasis::new(3, 1).unwrap();
        let state = FockState::from_occupation(&basis, &[1, 0, 0]).unwrap();
        let bad = vec![vec![SplitterError::default(); 2]; 2];
        assert!(forward(&state, &params, Some(&bad)).is_err());
        let bad_layers = vec![vec![SplitterError::default(); 3]; 1];
        assert!(forward(&state, &params, Some(&bad_layers)).is_err());
    }
}
