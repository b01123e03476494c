//! Lifting single-particle unitaries to the N-photon Fock space.
//!
//! The fast path applies 2x2 kernels directly to state amplitudes, one
//! `(n_i + n_j)` family at a time. The permanent-based dense lift exists as a
//! verification oracle and for channel extraction of small networks.

use ndarray::Array2;
use num_complex::Complex64;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockState, Sector};
use crate::interferometer::unitarity_deviation;

/// Largest matrix accepted by [`permanent`]; Ryser costs 2^n * n.
pub const PERMANENT_MAX: usize = 12;

/// Matrix permanent by Ryser's formula with Gray-code row-sum updates.
/// Exact for integer matrices; the empty matrix has permanent 1.
pub fn permanent(a: &Array2<Complex64>) -> Result<Complex64> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: a.ncols(),
        });
    }
    if n > PERMANENT_MAX {
        return Err(Error::PermanentTooLarge {
            n,
            max: PERMANENT_MAX,
        });
    }
    if n == 0 {
        return Ok(Complex64::ONE);
    }
    let mut row_sums = vec![Complex64::ZERO; n];
    let mut total = Complex64::ZERO;
    let mut gray: u64 = 0;
    for k in 1u64..(1 << n) {
        let next = k ^ (k >> 1);
        let flipped = (gray ^ next).trailing_zeros() as usize;
        let added = next & (1 << flipped) != 0;
        for (i, sum) in row_sums.iter_mut().enumerate() {
            if added {
                *sum += a[(i, flipped)];
            } else {
                *sum -= a[(i, flipped)];
            }
        }
        gray = next;
        let product: Complex64 = row_sums.iter().product();
        if next.count_ones() % 2 == 0 {
            total -= product;
        } else {
            total += product;
        }
    }
    if n % 2 == 0 {
        total = -total;
    }
    Ok(total)
}

/// A 2x2 unitary acting on one mode pair of the Fock space.
#[derive(Debug, Clone)]
pub struct TwoModeKernel {
    matrix: [[Complex64; 2]; 2],
    modes: (usize, usize),
}

impl TwoModeKernel {
    pub fn new(matrix: [[Complex64; 2]; 2], modes: (usize, usize)) -> Result<Self> {
        if modes.0 == modes.1 {
            return Err(Error::DegenerateModePair(modes.0));
        }
        let m = Array2::from_shape_vec(
            (2, 2),
            vec![matrix[0][0], matrix[0][1], matrix[1][0], matrix[1][1]],
        )
        .unwrap();
        let dev = unitarity_deviation(&m);
        if dev > 1e-12 {
            return Err(Error::NotUnitary { deviation: dev });
        }
        Ok(Self { matrix, modes })
    }

    pub fn matrix(&self) -> &[[Complex64; 2]; 2] {
        &self.matrix
    }

    pub fn modes(&self) -> (usize, usize) {
        self.modes
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.matrix;
        Self {
            matrix: [
                [m[0][0].conj(), m[1][0].conj()],
                [m[0][1].conj(), m[1][1].conj()],
            ],
            modes: self.modes,
        }
    }
}

/// Dense `(s+1)`-dimensional lift of a 2x2 matrix onto the two-mode subspace
/// with `s` total photons: `out[k'][k] = <k', s-k'| lift(u) |k, s-k>`.
///
/// Valid for any 2x2 matrix, not just unitaries, so it also serves parameter
/// derivatives.
pub fn two_mode_family_matrix(u: &[[Complex64; 2]; 2], s: usize) -> Vec<Vec<Complex64>> {
    let fact: Vec<f64> = {
        let mut f = vec![1.0f64; s + 1];
        for i in 1..=s {
            f[i] = f[i - 1] * i as f64;
        }
        f
    };
    let binom = |n: usize, k: usize| -> f64 { fact[n] / (fact[k] * fact[n - k]) };
    let mut out = vec![vec![Complex64::ZERO; s + 1]; s + 1];
    for k in 0..=s {
        for k_out in 0..=s {
            let mut acc = Complex64::ZERO;
            let p_min = k_out.saturating_sub(s - k);
            let p_max = k.min(k_out);
            for p in p_min..=p_max {
                acc += binom(k, p)
                    * binom(s - k, k_out - p)
                    * u[0][0].powu(p as u32)
                    * u[1][0].powu((k - p) as u32)
                    * u[0][1].powu((k_out - p) as u32)
                    * u[1][1].powu(((s - k) - (k_out - p)) as u32);
            }
            let scale = (fact[k_out] * fact[s - k_out] / (fact[k] * fact[s - k])).sqrt();
            out[k_out][k] = acc * scale;
        }
    }
    out
}

/// Applies a two-mode kernel to every sector of a state. Photon number is
/// conserved exactly; the norm is preserved to machine precision.
pub fn apply_two_mode(state: &FockState, kernel: &TwoModeKernel) -> Result<FockState> {
    apply_two_mode_matrix(state, kernel.matrix(), kernel.modes())
}

/// Same as [`apply_two_mode`] but without the unitarity guard, so it can
/// apply generator matrices during gradient accumulation.
pub fn apply_two_mode_matrix(
    state: &FockState,
    matrix: &[[Complex64; 2]; 2],
    modes: (usize, usize),
) -> Result<FockState> {
    let (mi, mj) = modes;
    if mi == mj {
        return Err(Error::DegenerateModePair(mi));
    }
    let m = state.mode_count();
    if mi >= m || mj >= m {
        return Err(Error::ModeIndexOutOfRange {
            index: mi.max(mj),
            modes: m,
        });
    }
    let mut sectors = Vec::new();
    for (_, sector) in state.sectors() {
        let basis = &sector.basis;
        let n = basis.photon_number();
        let families: Vec<Vec<Vec<Complex64>>> = (0..=n)
            .map(|s| two_mode_family_matrix(matrix, s))
            .collect();
        let mut out = vec![Complex64::ZERO; basis.len()];
        let mut scratch = vec![0usize; m];
        for (idx, occ) in basis.occupations().enumerate() {
            let amp = sector.amplitudes[idx];
            if amp == Complex64::ZERO {
                continue;
            }
            let k = occ[mi];
            let s = k + occ[mj];
            let fam = &families[s];
            scratch.copy_from_slice(occ);
            for k_out in 0..=s {
                let coeff = fam[k_out][k];
                if coeff == Complex64::ZERO {
                    continue;
                }
                scratch[mi] = k_out;
                scratch[mj] = s - k_out;
                let target = basis.index_of(&scratch).expect("photon-conserving move");
                out[target] += coeff * amp;
            }
        }
        sectors.push(Sector {
            basis: basis.clone(),
            amplitudes: out,
        });
    }
    FockState::from_sectors(sectors, state.norm_flag())
}

/// Applies the one-body operator `sum_{ab} h[a][b] a^dag_a a_b` restricted to
/// a mode pair. This is the second-quantized generator used for parameter
/// derivatives of lifted two-mode kernels.
pub fn apply_one_body_pair(
    state: &FockState,
    h: &[[Complex64; 2]; 2],
    modes: (usize, usize),
) -> Result<FockState> {
    let (ma, mb) = modes;
    if ma == mb {
        return Err(Error::DegenerateModePair(ma));
    }
    let m = state.mode_count();
    if ma >= m || mb >= m {
        return Err(Error::ModeIndexOutOfRange {
            index: ma.max(mb),
            modes: m,
        });
    }
    let mut sectors = Vec::new();
    for (_, sector) in state.sectors() {
        let basis = &sector.basis;
        let mut out = vec![Complex64::ZERO; basis.len()];
        let mut scratch = vec![0usize; m];
        for (idx, occ) in basis.occupations().enumerate() {
            let amp = sector.amplitudes[idx];
            if amp == Complex64::ZERO {
                continue;
            }
            let na = occ[ma];
            let nb = occ[mb];
            out[idx] += (h[0][0] * na as f64 + h[1][1] * nb as f64) * amp;
            if nb > 0 {
                scratch.copy_from_slice(occ);
                scratch[ma] = na + 1;
                scratch[mb] = nb - 1;
                let target = basis.index_of(&scratch).expect("photon-conserving hop");
                out[target] += h[0][1] * ((nb * (na + 1)) as f64).sqrt() * amp;
            }
            if na > 0 {
                scratch.copy_from_slice(occ);
                scratch[ma] = na - 1;
                scratch[mb] = nb + 1;
                let target = basis.index_of(&scratch).expect("photon-conserving hop");
                out[target] += h[1][0] * ((na * (nb + 1)) as f64).sqrt() * amp;
            }
        }
        sectors.push(Sector {
            basis: basis.clone(),
            amplitudes: out,
        });
    }
    FockState::from_sectors(sectors, state.norm_flag())
}

/// Dense Fock-space matrix of an M-mode unitary on a fixed basis.
///
/// Element `(t, s)` is `Per(U_{T,S}) / sqrt(prod T_k! prod S_k!)` where the
/// submatrix repeats rows by the target occupation and columns by the source
/// occupation.
pub fn lift_unitary(u: &Array2<Complex64>, basis: &Arc<FockBasis>) -> Result<Array2<Complex64>> {
    let m = basis.mode_count();
    if u.nrows() != m || u.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: u.nrows(),
        });
    }
    let n = basis.photon_number();
    if n > PERMANENT_MAX {
        return Err(Error::PermanentTooLarge {
            n,
            max: PERMANENT_MAX,
        });
    }
    let dim = basis.len();
    let fact: Vec<f64> = {
        let mut f = vec![1.0f64; n + 1];
        for i in 1..=n {
            f[i] = f[i - 1] * i as f64;
        }
        f
    };
    let occ_norm = |occ: &[usize]| -> f64 { occ.iter().map(|&k| fact[k]).product() };
    let mut out = Array2::<Complex64>::zeros((dim, dim));
    let mut sub = Array2::<Complex64>::zeros((n, n));
    for (col, source) in basis.occupations().enumerate() {
        let src_modes: Vec<usize> = source
            .iter()
            .enumerate()
            .flat_map(|(mode, &k)| std::iter::repeat(mode).take(k))
            .collect();
        for (row, target) in basis.occupations().enumerate() {
            let tgt_modes: Vec<usize> = target
                .iter()
                .enumerate()
                .flat_map(|(mode, &k)| std::iter::repeat(mode).take(k))
                .collect();
            for (i, &ti) in tgt_modes.iter().enumerate() {
                for (j, &sj) in src_modes.iter().enumerate() {
                    sub[(i, j)] = u[(ti, sj)];
                }
            }
            let per = permanent(&sub)?;
            out[(row, col)] = per / (occ_norm(source) * occ_norm(target)).sqrt();
        }
    }
    Ok(out)
}
