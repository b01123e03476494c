//! Fock-basis enumeration and state-vector algebra.
//!
//! A [`FockBasis`] enumerates all occupation vectors of `M` modes at a fixed
//! total photon number `N`. A [`FockState`] holds complex amplitudes over one
//! or more photon-number sectors, which is what photon loss produces.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance below which a squared-norm deviation still counts as normalized.
pub const NORM_TOL: f64 = 1e-12;

/// Number of ways to distribute `n` photons over `m` modes, as u128 so the
/// caller can reject absurd sizes before any allocation happens.
pub fn basis_size(mode_count: usize, photon_number: usize) -> u128 {
    // binomial(n + m - 1, m - 1)
    let n = (photon_number + mode_count - 1) as u128;
    let k = (mode_count - 1) as u128;
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Enumeration of all occupation vectors for a fixed mode count and total
/// photon number, with a bidirectional index map.
///
/// Occupations are sorted in ascending lexicographic order with mode 0 most
/// significant, so `(0, 5)` comes first and `(5, 0)` last for two modes and
/// five photons. The order is fixed so serialized amplitude vectors are
/// portable across runs.
#[derive(Debug, Clone)]
pub struct FockBasis {
    mode_count: usize,
    photon_number: usize,
    occupations: Vec<Vec<usize>>,
    index_map: HashMap<Vec<usize>, usize>,
}

impl FockBasis {
    /// Enumerates the complete basis. Rejects `mode_count == 0`.
    pub fn new(mode_count: usize, photon_number: usize) -> Result<Arc<Self>> {
        if mode_count == 0 {
            return Err(Error::EmptyModeCount);
        }
        let mut occupations = Vec::new();
        let mut current = vec![0usize; mode_count];
        enumerate_into(&mut occupations, &mut current, 0, photon_number);
        let index_map = occupations
            .iter()
            .enumerate()
            .map(|(i, occ)| (occ.clone(), i))
            .collect();
        Ok(Arc::new(Self {
            mode_count,
            photon_number,
            occupations,
            index_map,
        }))
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn photon_number(&self) -> usize {
        self.photon_number
    }

    pub fn len(&self) -> usize {
        self.occupations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupations.is_empty()
    }

    pub fn occupation(&self, index: usize) -> &[usize] {
        &self.occupations[index]
    }

    pub fn occupations(&self) -> impl Iterator<Item = &[usize]> {
        self.occupations.iter().map(|o| o.as_slice())
    }

    /// Dense index of an occupation vector, if it belongs to this basis.
    pub fn index_of(&self, occupation: &[usize]) -> Option<usize> {
        self.index_map.get(occupation).copied()
    }
}

fn enumerate_into(
    out: &mut Vec<Vec<usize>>,
    current: &mut Vec<usize>,
    mode: usize,
    remaining: usize,
) {
    if mode == current.len() - 1 {
        current[mode] = remaining;
        out.push(current.clone());
        return;
    }
    for n in 0..=remaining {
        current[mode] = n;
        enumerate_into(out, current, mode + 1, remaining - n);
    }
}

/// Whether a state's amplitudes are normalized, or carry the weight left over
/// from a non-unitary branch such as photon loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormFlag {
    Normalized,
    Unnormalized { weight: f64 },
}

/// One photon-number sector of a state: a basis and its amplitude vector.
#[derive(Debug, Clone)]
pub struct Sector {
    pub basis: Arc<FockBasis>,
    pub amplitudes: Vec<Complex64>,
}

/// Complex amplitude vector over one or more photon-number sectors.
///
/// Linear layers never mix sectors, so the sector map stays small; photon
/// loss moves weight from sector `N` to `N - 1`.
#[derive(Debug, Clone)]
pub struct FockState {
    mode_count: usize,
    sectors: BTreeMap<usize, Sector>,
    norm: NormFlag,
}

impl FockState {
    /// State with a single occupied basis element, e.g. `|1, 0, 1>`.
    pub fn from_occupation(basis: &Arc<FockBasis>, occupation: &[usize]) -> Result<Self> {
        let index = basis.index_of(occupation).ok_or_else(|| {
            Error::InvalidState(format!("occupation {occupation:?} not in basis"))
        })?;
        let mut amplitudes = vec![Complex64::ZERO; basis.len()];
        amplitudes[index] = Complex64::ONE;
        Ok(Self::from_sector_unchecked(basis.clone(), amplitudes, NormFlag::Normalized))
    }

    /// State from a dense amplitude vector over a single sector.
    pub fn from_amplitudes(basis: &Arc<FockBasis>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != basis.len() {
            return Err(Error::LengthMismatch {
                expected: basis.len(),
                actual: amplitudes.len(),
            });
        }
        let norm_sqr: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        let norm = if (norm_sqr - 1.0).abs() <= NORM_TOL {
            NormFlag::Normalized
        } else {
            NormFlag::Unnormalized { weight: norm_sqr }
        };
        Ok(Self::from_sector_unchecked(basis.clone(), amplitudes, norm))
    }

    /// Superposition from `(occupation, amplitude)` terms; renormalizes.
    pub fn from_terms(basis: &Arc<FockBasis>, terms: &[(&[usize], Complex64)]) -> Result<Self> {
        let mut amplitudes = vec![Complex64::ZERO; basis.len()];
        for (occ, amp) in terms {
            let index = basis
                .index_of(occ)
                .ok_or_else(|| Error::InvalidState(format!("occupation {occ:?} not in basis")))?;
            amplitudes[index] += amp;
        }
        let mut state = Self::from_amplitudes(basis, amplitudes)?;
        state.normalize();
        Ok(state)
    }

    pub(crate) fn from_sector_unchecked(
        basis: Arc<FockBasis>,
        amplitudes: Vec<Complex64>,
        norm: NormFlag,
    ) -> Self {
        let mode_count = basis.mode_count();
        let photon_number = basis.photon_number();
        let mut sectors = BTreeMap::new();
        sectors.insert(photon_number, Sector { basis, amplitudes });
        Self {
            mode_count,
            sectors,
            norm,
        }
    }

    /// Assembles a multi-sector state. All sectors must share one mode count.
    pub fn from_sectors(sectors: Vec<Sector>, norm: NormFlag) -> Result<Self> {
        let mode_count = sectors
            .first()
            .map(|s| s.basis.mode_count())
            .ok_or_else(|| Error::InvalidState("state needs at least one sector".into()))?;
        let mut map = BTreeMap::new();
        for sector in sectors {
            if sector.basis.mode_count() != mode_count {
                return Err(Error::ModeCountMismatch {
                    left: mode_count,
                    right: sector.basis.mode_count(),
                });
            }
            if sector.amplitudes.len() != sector.basis.len() {
                return Err(Error::LengthMismatch {
                    expected: sector.basis.len(),
                    actual: sector.amplitudes.len(),
                });
            }
            map.insert(sector.basis.photon_number(), sector);
        }
        Ok(Self {
            mode_count,
            sectors: map,
            norm,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn norm_flag(&self) -> NormFlag {
        self.norm
    }

    pub fn sectors(&self) -> impl Iterator<Item = (usize, &Sector)> {
        self.sectors.iter().map(|(n, s)| (*n, s))
    }

    pub fn sector(&self, photon_number: usize) -> Option<&Sector> {
        self.sectors.get(&photon_number)
    }

    /// Amplitudes of the only sector; error when the state spans several.
    pub fn single_sector(&self) -> Result<&Sector> {
        if self.sectors.len() != 1 {
            return Err(Error::InvalidState(format!(
                "expected a single photon-number sector, found {}",
                self.sectors.len()
            )));
        }
        Ok(self.sectors.values().next().unwrap())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.sectors
            .values()
            .flat_map(|s| s.amplitudes.iter())
            .map(|a| a.norm_sqr())
            .sum()
    }

    /// Rescales to unit norm. A zero state is left untouched.
    pub fn normalize(&mut self) {
        let norm_sqr = self.norm_sqr();
        if norm_sqr <= 0.0 {
            self.norm = NormFlag::Unnormalized { weight: 0.0 };
            return;
        }
        let scale = 1.0 / norm_sqr.sqrt();
        for sector in self.sectors.values_mut() {
            for amp in &mut sector.amplitudes {
                *amp *= scale;
            }
        }
        self.norm = NormFlag::Normalized;
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let mut out = self.clone();
        for sector in out.sectors.values_mut() {
            for amp in &mut sector.amplitudes {
                *amp *= factor;
            }
        }
        out.norm = NormFlag::Unnormalized {
            weight: out.norm_sqr(),
        };
        out
    }

    /// Sector-wise sum `self + other`; the result is not renormalized.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.mode_count != other.mode_count {
            return Err(Error::ModeCountMismatch {
                left: self.mode_count,
                right: other.mode_count,
            });
        }
        let mut out = self.clone();
        for (n, sector) in &other.sectors {
            match out.sectors.get_mut(n) {
                Some(existing) => {
                    for (a, b) in existing.amplitudes.iter_mut().zip(&sector.amplitudes) {
                        *a += b;
                    }
                }
                None => {
                    out.sectors.insert(*n, sector.clone());
                }
            }
        }
        out.norm = NormFlag::Unnormalized {
            weight: out.norm_sqr(),
        };
        Ok(out)
    }

    /// Tensor product `self (x) other`, concatenating mode registers.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let mode_count = self.mode_count + other.mode_count;
        let mut sectors: BTreeMap<usize, Sector> = BTreeMap::new();
        for (na, sa) in &self.sectors {
            for (nb, sb) in &other.sectors {
                let n = na + nb;
                let joint = sectors.entry(n).or_insert_with(|| {
                    let basis = FockBasis::new(mode_count, n).expect("mode_count > 0");
                    let len = basis.len();
                    Sector {
                        basis,
                        amplitudes: vec![Complex64::ZERO; len],
                    }
                });
                let mut occ = vec![0usize; mode_count];
                for (ia, occ_a) in sa.basis.occupations().enumerate() {
                    let amp_a = sa.amplitudes[ia];
                    if amp_a == Complex64::ZERO {
                        continue;
                    }
                    occ[..self.mode_count].copy_from_slice(occ_a);
                    for (ib, occ_b) in sb.basis.occupations().enumerate() {
                        let amp_b = sb.amplitudes[ib];
                        if amp_b == Complex64::ZERO {
                            continue;
                        }
                        occ[self.mode_count..].copy_from_slice(occ_b);
                        let idx = joint.basis.index_of(&occ).expect("valid joint occupation");
                        joint.amplitudes[idx] += amp_a * amp_b;
                    }
                }
            }
        }
        let norm = match (self.norm, other.norm) {
            (NormFlag::Normalized, NormFlag::Normalized) => NormFlag::Normalized,
            _ => NormFlag::Unnormalized { weight: 0.0 },
        };
        let mut state = Self {
            mode_count,
            sectors,
            norm,
        };
        if !matches!(state.norm, NormFlag::Normalized) {
            state.norm = NormFlag::Unnormalized {
                weight: state.norm_sqr(),
            };
        }
        Ok(state)
    }
}

/// Projects onto a fixed photon count in one mode and traces that mode out.
/// Returns the renormalized conditional state on the remaining modes and the
/// branch probability (squared norm of the projected component).
pub fn condition_mode(
    state: &FockState,
    mode: usize,
    count: usize,
) -> Result<(FockState, f64)> {
    let m = state.mode_count();
    if mode >= m {
        return Err(Error::ModeIndexOutOfRange { index: mode, modes: m });
    }
    if m == 1 {
        return Err(Error::InvalidState(
            "cannot trace out the only mode of a state".into(),
        ));
    }
    let mut sectors: Vec<Sector> = Vec::new();
    for (n, sector) in state.sectors() {
        if count > n {
            continue;
        }
        let reduced = FockBasis::new(m - 1, n - count)?;
        let mut amplitudes = vec![Complex64::ZERO; reduced.len()];
        let mut any = false;
        let mut scratch = Vec::with_capacity(m - 1);
        for (i, occ) in sector.basis.occupations().enumerate() {
            if occ[mode] != count {
                continue;
            }
            let amp = sector.amplitudes[i];
            if amp == Complex64::ZERO {
                continue;
            }
            scratch.clear();
            scratch.extend(occ.iter().take(mode).chain(occ.iter().skip(mode + 1)));
            let target = reduced.index_of(&scratch).expect("reduced occupation");
            amplitudes[target] = amp;
            any = true;
        }
        if any {
            sectors.push(Sector {
                basis: reduced,
                amplitudes,
            });
        }
    }
    if sectors.is_empty() {
        let vacuum = FockBasis::new(m - 1, 0)?;
        let state = FockState::from_sector_unchecked(
            vacuum,
            vec![Complex64::ZERO],
            NormFlag::Unnormalized { weight: 0.0 },
        );
        return Ok((state, 0.0));
    }
    let mut out = FockState::from_sectors(sectors, NormFlag::Unnormalized { weight: 0.0 })?;
    let weight = out.norm_sqr();
    if weight > 0.0 {
        out.normalize();
    }
    Ok((out, weight))
}

/// Relabels modes: output occupation `i` is taken from input mode `perm[i]`.
/// `perm` must be a permutation of `0..M`.
pub fn permute_modes(state: &FockState, perm: &[usize]) -> Result<FockState> {
    let m = state.mode_count();
    if perm.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: perm.len(),
        });
    }
    let mut seen = vec![false; m];
    for &p in perm {
        if p >= m || seen[p] {
            return Err(Error::InvalidState(format!("invalid mode permutation {perm:?}")));
        }
        seen[p] = true;
    }
    let mut sectors = Vec::new();
    for (_, sector) in state.sectors() {
        let mut amplitudes = vec![Complex64::ZERO; sector.basis.len()];
        let mut scratch = vec![0usize; m];
        for (i, occ) in sector.basis.occupations().enumerate() {
            for (k, &src) in perm.iter().enumerate() {
                scratch[k] = occ[src];
            }
            let target = sector.basis.index_of(&scratch).expect("permuted occupation");
            amplitudes[target] = sector.amplitudes[i];
        }
        sectors.push(Sector {
            basis: sector.basis.clone(),
            amplitudes,
        });
    }
    FockState::from_sectors(sectors, state.norm_flag())
}

/// `<a|b>`, conjugate-linear in the first argument. Sectors with mismatched
/// photon number contribute zero; mismatched mode counts are an error.
pub fn inner_product(a: &FockState, b: &FockState) -> Result<Complex64> {
    if a.mode_count() != b.mode_count() {
        return Err(Error::ModeCountMismatch {
            left: a.mode_count(),
            right: b.mode_count(),
        });
    }
    let mut acc = Complex64::ZERO;
    for (n, sa) in a.sectors() {
        if let Some(sb) = b.sector(n) {
            for (x, y) in sa.amplitudes.iter().zip(&sb.amplitudes) {
                acc += x.conj() * y;
            }
        }
    }
    Ok(acc)
}

/// Single-photon annihilation on one mode.
///
/// Returns the renormalized post-loss state (one sector lower) and the branch
/// weight, i.e. the squared norm before renormalization, which equals the
/// mean photon number of the chosen mode.
pub fn apply_loss(state: &FockState, mode: usize) -> Result<(FockState, f64)> {
    if mode >= state.mode_count() {
        return Err(Error::ModeIndexOutOfRange {
            index: mode,
            modes: state.mode_count(),
        });
    }
    let mut sectors: Vec<Sector> = Vec::new();
    for (n, sector) in state.sectors() {
        if n == 0 {
            continue;
        }
        let lower = FockBasis::new(state.mode_count(), n - 1)?;
        let mut amplitudes = vec![Complex64::ZERO; lower.len()];
        let mut scratch = vec![0usize; state.mode_count()];
        for (i, occ) in sector.basis.occupations().enumerate() {
            let n_mode = occ[mode];
            if n_mode == 0 {
                continue;
            }
            scratch.copy_from_slice(occ);
            scratch[mode] -= 1;
            let target = lower.index_of(&scratch).expect("valid lowered occupation");
            amplitudes[target] += sector.amplitudes[i] * (n_mode as f64).sqrt();
        }
        sectors.push(Sector {
            basis: lower,
            amplitudes,
        });
    }
    if sectors.is_empty() {
        // All-vacuum input: weight zero, vacuum returned.
        let vacuum_basis = FockBasis::new(state.mode_count(), 0)?;
        let vacuum = FockState::from_sector_unchecked(
            vacuum_basis,
            vec![Complex64::ZERO],
            NormFlag::Unnormalized { weight: 0.0 },
        );
        return Ok((vacuum, 0.0));
    }
    let mut out = FockState::from_sectors(sectors, NormFlag::Unnormalized { weight: 0.0 })?;
    let weight = out.norm_sqr();
    if weight > 0.0 {
        out.normalize();
    } else {
        out.norm = NormFlag::Unnormalized { weight: 0.0 };
    }
    Ok((out, weight))
}

/// Probability of each total photon number, as a non-demolition measurement
/// would report it. Probabilities are normalized to sum to one.
pub fn total_photon_number(state: &FockState) -> BTreeMap<usize, f64> {
    let total = state.norm_sqr();
    let mut out = BTreeMap::new();
    if total <= 0.0 {
        return out;
    }
    for (n, sector) in state.sectors() {
        let weight: f64 = sector.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if weight > 0.0 {
            out.insert(n, weight / total);
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    mode_count: usize,
    photon_number: usize,
    amplitudes: Vec<[f64; 2]>,
}

/// Serializes a single-sector state as
/// `{mode_count, photon_number, amplitudes: [[re, im], ...]}` in basis order.
pub fn state_to_json(state: &FockState) -> Result<String> {
    let sector = state.single_sector()?;
    let dto = StateJson {
        mode_count: state.mode_count(),
        photon_number: sector.basis.photon_number(),
        amplitudes: sector.amplitudes.iter().map(|a| [a.re, a.im]).collect(),
    };
    Ok(serde_json::to_string_pretty(&dto)?)
}

/// Inverse of [`state_to_json`].
pub fn state_from_json(json: &str) -> Result<FockState> {
    let dto: StateJson = serde_json::from_str(json)?;
    let basis = FockBasis::new(dto.mode_count, dto.photon_number)?;
    if dto.amplitudes.len() != basis.len() {
        return Err(Error::LengthMismatch {
            expected: basis.len(),
            actual: dto.amplitudes.len(),
        });
    }
    let amplitudes = dto
        .amplitudes
        .iter()
        .map(|[re, im]| Complex64::new(*re, *im))
        .collect();
    FockState::from_amplitudes(&basis, amplitudes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn basis_sizes_match_stars_and_bars() {
        let b = FockBasis::new(2, 0).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.occupation(0), &[0, 0]);

        let b = FockBasis::new(4, 4).unwrap();
        assert_eq!(b.len(), 35);

        let b = FockBasis::new(2, 5).unwrap();
        assert_eq!(b.len(), 6);
        assert_eq!(b.occupation(0), &[0, 5]);
        assert_eq!(b.occupation(5), &[5, 0]);
    }

    #[test]
    fn zero_modes_rejected() {
        assert!(FockBasis::new(0, 3).is_err());
    }

    #[test]
    fn index_map_inverts_lookup() {
        for m in 1..=5 {
            for n in 0..=6 {
                let b = FockBasis::new(m, n).unwrap();
                assert_eq!(b.len() as u128, basis_size(m, n));
                for (i, occ) in b.occupations().enumerate() {
                    assert_eq!(b.index_of(occ), Some(i));
                    assert_eq!(occ.iter().sum::<usize>(), n);
                }
            }
        }
    }

    #[test]
    fn occupations_are_lexicographically_sorted() {
        let b = FockBasis::new(3, 4).unwrap();
        for window in b.occupations.windows(2) {
            assert!(window[0] < window[1]);
        }
    }

    #[test]
    fn inner_product_on_basis_states() {
        let basis = FockBasis::new(2, 1).unwrap();
        let one_zero = FockState::from_occupation(&basis, &[1, 0]).unwrap();
        let zero_one = FockState::from_occupation(&basis, &[0, 1]).unwrap();
        assert!((inner_product(&one_zero, &one_zero).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        assert!(inner_product(&one_zero, &zero_one).unwrap().norm() < 1e-15);

        let basis2 = FockBasis::new(2, 2).unwrap();
        let plus = FockState::from_terms(
            &basis2,
            &[(&[2, 0], c(1.0, 0.0)), (&[0, 2], c(1.0, 0.0))],
        )
        .unwrap();
        let two_zero = FockState::from_occupation(&basis2, &[2, 0]).unwrap();
        let overlap = inner_product(&plus, &two_zero).unwrap();
        assert!((overlap.re - 1.0 / 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn inner_product_rejects_mode_mismatch() {
        let a = FockState::from_occupation(&FockBasis::new(2, 1).unwrap(), &[1, 0]).unwrap();
        let b = FockState::from_occupation(&FockBasis::new(3, 1).unwrap(), &[1, 0, 0]).unwrap();
        assert!(inner_product(&a, &b).is_err());
    }

    #[test]
    fn cross_sector_inner_product_is_zero() {
        let a = FockState::from_occupation(&FockBasis::new(2, 1).unwrap(), &[1, 0]).unwrap();
        let b = FockState::from_occupation(&FockBasis::new(2, 2).unwrap(), &[1, 1]).unwrap();
        assert_eq!(inner_product(&a, &b).unwrap(), Complex64::ZERO);
    }

    #[test]
    fn loss_of_a_single_photon() {
        let basis = FockBasis::new(2, 1).unwrap();
        let state = FockState::from_occupation(&basis, &[1, 0]).unwrap();
        let (out, weight) = apply_loss(&state, 0).unwrap();
        assert!((weight - 1.0).abs() < 1e-12);
        let probs = total_photon_number(&out);
        assert_eq!(probs.len(), 1);
        assert!((probs[&0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loss_on_empty_mode_has_zero_weight() {
        let basis = FockBasis::new(2, 2).unwrap();
        let state = FockState::from_occupation(&basis, &[2, 0]).unwrap();
        let (_, weight) = apply_loss(&state, 1).unwrap();
        assert_eq!(weight, 0.0);
    }

    #[test]
    fn loss_mode_out_of_range_rejected() {
        let basis = FockBasis::new(2, 1).unwrap();
        let state = FockState::from_occupation(&basis, &[1, 0]).unwrap();
        assert!(apply_loss(&state, 2).is_err());
    }

    #[test]
    fn loss_on_three_photon_code_matches_hand_computation() {
        // |C> with alpha = 1, beta = 0: (|0,3> + sqrt(3)|2,1>)/2. Annihilating
        // mode 0 by hand: sqrt(3)*sqrt(2)/2 |1,1>, weight 3/2, i.e. |1,1>
        // after renormalization.
        let basis = FockBasis::new(2, 3).unwrap();
        let code_zero = FockState::from_terms(
            &basis,
            &[(&[0, 3], c(1.0, 0.0)), (&[2, 1], c(3.0_f64.sqrt(), 0.0))],
        )
        .unwrap();
        let (out, weight) = apply_loss(&code_zero, 0).unwrap();
        assert!((weight - 1.5).abs() < 1e-12);
        let sector = out.single_sector().unwrap();
        let idx = sector.basis.index_of(&[1, 1]).unwrap();
        assert!((sector.amplitudes[idx].norm() - 1.0).abs() < 1e-12);
        let probs = total_photon_number(&out);
        assert!((probs[&2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn photon_number_of_deterministic_states() {
        let basis = FockBasis::new(2, 3).unwrap();
        let state = FockState::from_occupation(&basis, &[2, 1]).unwrap();
        let probs = total_photon_number(&state);
        assert_eq!(probs.len(), 1);
        assert!((probs[&3] - 1.0).abs() < 1e-15);

        let vacuum = FockState::from_occupation(&FockBasis::new(2, 0).unwrap(), &[0, 0]).unwrap();
        let probs = total_photon_number(&vacuum);
        assert!((probs[&0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tensor_product_concatenates_modes() {
        let one = FockBasis::new(1, 1).unwrap();
        let anc = FockState::from_occupation(&one, &[1]).unwrap();
        let basis = FockBasis::new(2, 2).unwrap();
        let code = FockState::from_occupation(&basis, &[1, 1]).unwrap();
        let joint = anc.tensor(&code).unwrap();
        assert_eq!(joint.mode_count(), 3);
        let sector = joint.single_sector().unwrap();
        let idx = sector.basis.index_of(&[1, 1, 1]).unwrap();
        assert!((sector.amplitudes[idx].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_preserves_amplitudes() {
        let basis = FockBasis::new(3, 2).unwrap();
        let state = FockState::from_terms(
            &basis,
            &[(&[2, 0, 0], c(0.6, 0.3)), (&[0, 1, 1], c(-0.2, 0.7))],
        )
        .unwrap();
        let json = state_to_json(&state).unwrap();
        let back = state_from_json(&json).unwrap();
        let overlap = inner_product(&state, &back).unwrap();
        assert!((overlap.norm() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn inner_product_is_conjugate_symmetric(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let basis = FockBasis::new(3, 2).unwrap();
            let rand_state = |rng: &mut rand_chacha::ChaCha12Rng| {
                let amps: Vec<Complex64> = (0..basis.len())
                    .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect();
                let mut s = FockState::from_amplitudes(&basis, amps).unwrap();
                s.normalize();
                s
            };
            let a = rand_state(&mut rng);
            let b = rand_state(&mut rng);
            let ab = inner_product(&a, &b).unwrap();
            let ba = inner_product(&b, &a).unwrap();
            prop_assert!((ab - ba.conj()).norm() < 1e-12);
            let aa = inner_product(&a, &a).unwrap();
            prop_assert!(aa.im.abs() < 1e-12 && aa.re >= 0.0);
        }
    }
}
