//! Single-particle linear optics: MZI transfer matrices, rectangular mesh
//! synthesis, Clements decomposition, splitter-error injection, and
//! Haar-random unitary sampling.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;

use crate::error::{Error, Result};

/// Phase pair of a single Mach-Zehnder interferometer.
///
/// Angles are unconstrained finite reals during optimization; range reduction
/// to `[0, 2pi)` happens only at serialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MziParams {
    pub theta: f64,
    pub phi: f64,
}

impl MziParams {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }
}

/// Deviations of the two internal beam splitters from 50:50.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SplitterError {
    pub alpha: f64,
    pub beta: f64,
}

impl SplitterError {
    pub fn is_zero(&self) -> bool {
        self.alpha == 0.0 && self.beta == 0.0
    }
}

fn beam_splitter(angle: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = angle.sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(0.0, s)],
        [Complex64::new(0.0, s), Complex64::new(c, 0.0)],
    ]
}

fn mat2_mul(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let mut out = [[Complex64::ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Transfer matrix of one MZI.
///
/// With zero splitter error this is the closed form
/// `i e^{i theta/2} [[e^{i phi} sin(theta/2), cos(theta/2)],
///                   [e^{i phi} cos(theta/2), -sin(theta/2)]]`.
/// With nonzero `(alpha, beta)` it is the component product
/// `BS(pi/4 + beta) . PS(theta) . BS(pi/4 + alpha) . PS(phi)` where
/// `PS(x) = diag(e^{ix}, 1)`; the two agree exactly at `alpha = beta = 0`.
pub fn mzi_transfer(params: MziParams, error: SplitterError) -> [[Complex64; 2]; 2] {
    if error.is_zero() {
        let half = params.theta / 2.0;
        let (s, c) = half.sin_cos();
        let pref = Complex64::i() * Complex64::from_polar(1.0, half);
        let e_phi = Complex64::from_polar(1.0, params.phi);
        [
            [pref * e_phi * s, pref * c],
            [pref * e_phi * c, -pref * s],
        ]
    } else {
        let ps = |x: f64| {
            [
                [Complex64::from_polar(1.0, x), Complex64::ZERO],
                [Complex64::ZERO, Complex64::ONE],
            ]
        };
        let m = mat2_mul(&beam_splitter(FRAC_PI_4 + error.beta), &ps(params.theta));
        let m = mat2_mul(&m, &beam_splitter(FRAC_PI_4 + error.alpha));
        mat2_mul(&m, &ps(params.phi))
    }
}

/// Derivatives of the MZI transfer matrix with respect to its two phases,
/// valid for both the ideal and the faulty-splitter model.
pub fn mzi_transfer_derivatives(
    params: MziParams,
    error: SplitterError,
) -> ([[Complex64; 2]; 2], [[Complex64; 2]; 2]) {
    let dps = |x: f64| {
        [
            [Complex64::i() * Complex64::from_polar(1.0, x), Complex64::ZERO],
            [Complex64::ZERO, Complex64::ZERO],
        ]
    };
    let ps = |x: f64| {
        [
            [Complex64::from_polar(1.0, x), Complex64::ZERO],
            [Complex64::ZERO, Complex64::ONE],
        ]
    };
    let bs_b = beam_splitter(FRAC_PI_4 + error.beta);
    let bs_a = beam_splitter(FRAC_PI_4 + error.alpha);
    let d_theta = mat2_mul(&mat2_mul(&mat2_mul(&bs_b, &dps(params.theta)), &bs_a), &ps(params.phi));
    let d_phi = mat2_mul(&mat2_mul(&mat2_mul(&bs_b, &ps(params.theta)), &bs_a), &dps(params.phi));
    (d_theta, d_phi)
}

/// One MZI slot of the rectangular mesh, named by its layout position.
/// The coupled mode pair is `(col % 2 + 2 row, col % 2 + 2 row + 1)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeshMzi {
    pub col: usize,
    pub row: usize,
    pub theta: f64,
    pub phi: f64,
}

impl MeshMzi {
    pub fn modes(&self) -> (usize, usize) {
        let lo = self.col % 2 + 2 * self.row;
        (lo, lo + 1)
    }

    pub fn params(&self) -> MziParams {
        MziParams::new(self.theta, self.phi)
    }
}

/// Ordered MZI phases in the rectangular (Clements) layout plus the output
/// phase column `D`. MZIs are ordered column-major: the light traverses
/// column 0 first, and within a column rows are disjoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshParams {
    #[serde(rename = "M")]
    pub mode_count: usize,
    pub mzis: Vec<MeshMzi>,
    pub output_phases: Vec<f64>,
}

impl MeshParams {
    /// All-zero mesh in the canonical rectangular layout.
    pub fn zeroed(mode_count: usize) -> Result<Self> {
        if mode_count == 0 {
            return Err(Error::EmptyModeCount);
        }
        let mut mzis = Vec::with_capacity(mode_count * (mode_count - 1) / 2);
        for col in 0..mode_count {
            let mut row = 0;
            loop {
                let lo = col % 2 + 2 * row;
                if lo + 1 >= mode_count {
                    break;
                }
                mzis.push(MeshMzi {
                    col,
                    row,
                    theta: 0.0,
                    phi: 0.0,
                });
                row += 1;
            }
        }
        debug_assert_eq!(mzis.len(), mode_count * (mode_count - 1) / 2);
        Ok(Self {
            mode_count,
            mzis,
            output_phases: vec![0.0; mode_count],
        })
    }

    pub fn mzi_count(&self) -> usize {
        self.mzis.len()
    }

    /// The dense unitary realized by this mesh, optionally with one splitter
    /// error per MZI.
    pub fn unitary(&self, errors: Option<&[SplitterError]>) -> Result<Array2<Complex64>> {
        if let Some(errs) = errors {
            if errs.len() != self.mzis.len() {
                return Err(Error::LengthMismatch {
                    expected: self.mzis.len(),
                    actual: errs.len(),
                });
            }
        }
        let m = self.mode_count;
        let mut u = Array2::eye(m);
        for (k, mzi) in self.mzis.iter().enumerate() {
            let err = errors.map_or(SplitterError::default(), |e| e[k]);
            let t = mzi_transfer(mzi.params(), err);
            let (a, b) = mzi.modes();
            // u <- T_embedded . u, touching only rows a and b
            for j in 0..m {
                let ua = u[(a, j)];
                let ub = u[(b, j)];
                u[(a, j)] = t[0][0] * ua + t[0][1] * ub;
                u[(b, j)] = t[1][0] * ua + t[1][1] * ub;
            }
        }
        for (i, chi) in self.output_phases.iter().enumerate() {
            let d = Complex64::from_polar(1.0, *chi);
            for j in 0..m {
                u[(i, j)] *= d;
            }
        }
        Ok(u)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

/// Convenience wrapper matching the mesh contract directly.
pub fn mesh_unitary(
    mesh: &MeshParams,
    errors: Option<&[SplitterError]>,
) -> Result<Array2<Complex64>> {
    mesh.unitary(errors)
}

pub fn unitarity_deviation(u: &Array2<Complex64>) -> f64 {
    let m = u.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let mut acc = Complex64::ZERO;
            for k in 0..m {
                acc += u[(k, i)].conj() * u[(k, j)];
            }
            let target = if i == j { Complex64::ONE } else { Complex64::ZERO };
            dev = dev.max((acc - target).norm());
        }
    }
    dev
}

/// Rectangular-mesh synthesis of an arbitrary unitary (Clements scheme).
///
/// Nulls the matrix diagonal by diagonal, alternating right-multiplications
/// by `T^-1` and left-multiplications by `T`, then commutes the leftover left
/// factors through the residual diagonal. The result reproduces `U` through
/// [`mesh_unitary`] to better than 1e-10 for well-conditioned input.
pub fn clements_decompose(u: &Array2<Complex64>) -> Result<MeshParams> {
    let m = u.nrows();
    if m == 0 || u.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m.max(1),
            actual: u.ncols(),
        });
    }
    let dev = unitarity_deviation(u);
    if dev > 1e-8 {
        return Err(Error::NotUnitary { deviation: dev });
    }

    let mut v = u.clone();
    // Factors applied on the right as T^-1 (recorded params are of T itself)
    // and on the left as T, kept in application order.
    let mut right_ops: Vec<(usize, MziParams)> = Vec::new();
    let mut left_ops: Vec<(usize, MziParams)> = Vec::new();

    for l in 0..m.saturating_sub(1) {
        if l % 2 == 0 {
            for k in 0..=l {
                let r = m - 1 - k;
                let c = l - k;
                let p = null_with_right(&mut v, r, c);
                right_ops.push((c, p));
            }
        } else {
            for k in 0..=l {
                let r = m - 1 - l + k;
                let c = k;
                let p = null_with_left(&mut v, r, c);
                left_ops.push((r - 1, p));
            }
        }
    }

    // v is now diagonal: L . U . R = D', so U = L^-1 . D' . R^-1. Absorb the
    // left inverses into the diagonal from the innermost factor outward:
    // T^-1 . D = D_new . T_new on the same mode pair.
    let mut diag: Vec<Complex64> = (0..m).map(|i| v[(i, i)]).collect();
    let mut absorbed: Vec<(usize, MziParams)> = Vec::with_capacity(left_ops.len());
    for &(mode, params) in left_ops.iter().rev() {
        let t = mzi_transfer(params, SplitterError::default());
        // q = T^dagger . diag(d_m, d_m1) restricted to the pair
        let q = [
            [t[0][0].conj() * diag[mode], t[1][0].conj() * diag[mode + 1]],
            [t[0][1].conj() * diag[mode], t[1][1].conj() * diag[mode + 1]],
        ];
        let (new_params, d0, d1) = refactor_as_diag_times_t(&q);
        diag[mode] = d0;
        diag[mode + 1] = d1;
        absorbed.push((mode, new_params));
    }
    absorbed.reverse();

    // Application order: all right factors first, then the absorbed left
    // factors innermost-first.
    let mut ordered: Vec<(usize, MziParams)> = right_ops;
    let mut absorbed_rev = absorbed;
    absorbed_rev.reverse();
    ordered.extend(absorbed_rev);

    pack_rectangular(m, &ordered, &diag)
}

/// Solve T params so that (V . T^dagger)[r][c] = 0, with T acting on columns
/// (c, c+1), and apply the rotation in place.
fn null_with_right(v: &mut Array2<Complex64>, r: usize, c: usize) -> MziParams {
    let m = v.nrows();
    let a = v[(r, c)];
    let b = v[(r, c + 1)];
    let theta = 2.0 * b.norm().atan2(a.norm());
    let phi = if a.norm() == 0.0 || b.norm() == 0.0 {
        0.0
    } else {
        let rho = -b / a;
        -rho.im.atan2(rho.re)
    };
    let params = MziParams::new(theta, phi);
    let t = mzi_transfer(params, SplitterError::default());
    // v <- v . T^dagger on columns (c, c+1)
    for i in 0..m {
        let x = v[(i, c)];
        let y = v[(i, c + 1)];
        v[(i, c)] = x * t[0][0].conj() + y * t[0][1].conj();
        v[(i, c + 1)] = x * t[1][0].conj() + y * t[1][1].conj();
    }
    params
}

/// Solve T params so that (T . V)[r][c] = 0, with T acting on rows (r-1, r),
/// and apply the rotation in place.
fn null_with_left(v: &mut Array2<Complex64>, r: usize, c: usize) -> MziParams {
    let m = v.nrows();
    let a = v[(r - 1, c)];
    let b = v[(r, c)];
    let theta = 2.0 * a.norm().atan2(b.norm());
    let phi = if a.norm() == 0.0 || b.norm() == 0.0 {
        0.0
    } else {
        let rho = b / a;
        rho.im.atan2(rho.re)
    };
    let params = MziParams::new(theta, phi);
    let t = mzi_transfer(params, SplitterError::default());
    for j in 0..m {
        let x = v[(r - 1, j)];
        let y = v[(r, j)];
        v[(r - 1, j)] = t[0][0] * x + t[0][1] * y;
        v[(r, j)] = t[1][0] * x + t[1][1] * y;
    }
    params
}

/// Factor a 2x2 unitary as diag(d0, d1) . T(theta, phi).
fn refactor_as_diag_times_t(q: &[[Complex64; 2]; 2]) -> (MziParams, Complex64, Complex64) {
    let s = q[0][0].norm();
    let c = q[0][1].norm();
    let theta = 2.0 * s.atan2(c);
    let pref = Complex64::i() * Complex64::from_polar(1.0, theta / 2.0);
    let (phi, d0) = if c > 1e-14 {
        let d0 = q[0][1] / (pref * c);
        let phi = if s > 1e-14 {
            let e_phi = q[0][0] / (pref * d0 * s);
            e_phi.im.atan2(e_phi.re)
        } else {
            0.0
        };
        (phi, d0)
    } else {
        // Pure cross coupling: theta = pi, first row lives in column 0.
        let d0 = q[0][0] / (pref * s);
        (0.0, d0)
    };
    let d1 = if s > 1e-14 {
        -q[1][1] / (pref * s)
    } else {
        let e_phi = Complex64::from_polar(1.0, phi);
        q[1][0] / (pref * e_phi * c)
    };
    (MziParams::new(theta, phi), d0, d1)
}

/// Greedily pack an application-ordered factor list into the canonical
/// rectangular layout and attach the output phase column.
fn pack_rectangular(
    m: usize,
    ordered: &[(usize, MziParams)],
    diag: &[Complex64],
) -> Result<MeshParams> {
    let mut mesh = MeshParams::zeroed(m)?;
    let slot_of = HashMapSlots::new(&mesh);
    let mut next_free = vec![0usize; m];
    for &(mode, params) in ordered {
        let col0 = next_free[mode].max(next_free[mode + 1]);
        // Advance to the first column whose parity hosts this mode pair.
        let mut col = col0;
        while col % 2 != mode % 2 {
            col += 1;
        }
        let row = (mode - col % 2) / 2;
        let slot = slot_of.lookup(col, row).ok_or_else(|| {
            Error::InvalidState(format!(
                "decomposition produced an MZI outside the rectangular layout (col {col}, row {row})"
            ))
        })?;
        mesh.mzis[slot].theta = params.theta;
        mesh.mzis[slot].phi = params.phi;
        next_free[mode] = col + 1;
        next_free[mode + 1] = col + 1;
    }
    mesh.output_phases = diag.iter().map(|d| d.im.atan2(d.re)).collect();
    Ok(mesh)
}

struct HashMapSlots {
    map: std::collections::HashMap<(usize, usize), usize>,
}

impl HashMapSlots {
    fn new(mesh: &MeshParams) -> Self {
        let map = mesh
            .mzis
            .iter()
            .enumerate()
            .map(|(i, mzi)| ((mzi.col, mzi.row), i))
            .collect();
        Self { map }
    }

    fn lookup(&self, col: usize, row: usize) -> Option<usize> {
        self.map.get(&(col, row)).copied()
    }
}

/// Haar-random unitary via QR of a complex Gaussian matrix with the phases of
/// R's diagonal folded into Q. Deterministic for a fixed seed.
pub fn sample_haar_unitary(dim: usize, seed: u64) -> Array2<Complex64> {
    assert!(dim >= 1, "dimension must be positive");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let a = Array2::from_shape_fn((dim, dim), |_| {
        Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))
    });
    // Modified Gram-Schmidt with one reorthogonalization pass; columns of `a`
    // become Q, and the R diagonal fixes the phase convention.
    let mut q = Array2::<Complex64>::zeros((dim, dim));
    for j in 0..dim {
        let mut col: Vec<Complex64> = (0..dim).map(|i| a[(i, j)]).collect();
        let mut r_jj = Complex64::ZERO;
        for _pass in 0..2 {
            for k in 0..j {
                let mut proj = Complex64::ZERO;
                for i in 0..dim {
                    proj += q[(i, k)].conj() * col[i];
                }
                for i in 0..dim {
                    col[i] -= proj * q[(i, k)];
                }
            }
        }
        let norm = col.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        // Project the original column onto the normalized direction to read
        // off the (complex) diagonal of R before phase fixing.
        for i in 0..dim {
            let qi = col[i] / norm;
            r_jj += qi.conj() * a[(i, j)];
            q[(i, j)] = qi;
        }
        let phase = r_jj / r_jj.norm();
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Independent Gaussian splitter errors, two draws per MZI. `sigma = 0`
/// yields exact zeros so the faulty path can be compared bit-for-bit.
pub fn sample_splitter_errors(
    mesh: &MeshParams,
    sigma: f64,
    seed: u64,
) -> Result<Vec<SplitterError>> {
    sample_splitter_errors_with_rng(mesh, sigma, &mut ChaCha12Rng::seed_from_u64(seed))
}

pub fn sample_splitter_errors_with_rng<R: Rng>(
    mesh: &MeshParams,
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<SplitterError>> {
    if sigma < 0.0 {
        return Err(Error::NegativeSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(vec![SplitterError::default(); mesh.mzi_count()]);
    }
    let normal = Normal::new(0.0, sigma).unwrap();
    Ok((0..mesh.mzi_count())
        .map(|_| SplitterError {
            alpha: normal.sample(rng),
            beta: normal.sample(rng),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mat2_from(t: &[[Complex64; 2]; 2]) -> Array2<Complex64> {
        Array2::from_shape_vec((2, 2), vec![t[0][0], t[0][1], t[1][0], t[1][1]]).unwrap()
    }

    fn max_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn mzi_at_theta_zero_is_cross() {
        let t = mzi_transfer(MziParams::new(0.0, 0.0), SplitterError::default());
        let i = Complex64::i();
        assert!((t[0][0]).norm() < 1e-15);
        assert!((t[0][1] - i).norm() < 1e-15);
        assert!((t[1][0] - i).norm() < 1e-15);
        assert!((t[1][1]).norm() < 1e-15);
    }

    #[test]
    fn mzi_at_theta_pi_is_signed_bar() {
        let t = mzi_transfer(MziParams::new(PI, 0.0), SplitterError::default());
        assert!((t[0][0] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!((t[1][1] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(t[0][1].norm() < 1e-15);
        assert!(t[1][0].norm() < 1e-15);
    }

    #[test]
    fn faulty_path_matches_ideal_at_zero_error() {
        let p = MziParams::new(0.7, -1.3);
        let ideal = mzi_transfer(p, SplitterError::default());
        let product = mzi_transfer(p, SplitterError { alpha: 0.0, beta: 1e-300 });
        for i in 0..2 {
            for j in 0..2 {
                assert!((ideal[i][j] - product[i][j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn mzi_is_unitary_over_parameter_sweep() {
        use rand::Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let p = MziParams::new(rng.random_range(-7.0..7.0), rng.random_range(-7.0..7.0));
            let e = SplitterError {
                alpha: rng.random_range(-0.3..0.3),
                beta: rng.random_range(-0.3..0.3),
            };
            let t = mat2_from(&mzi_transfer(p, e));
            assert!(unitarity_deviation(&t) < 1e-12);
        }
    }

    #[test]
    fn faulty_example_is_unitary() {
        let t = mzi_transfer(
            MziParams::new(PI / 2.0, PI / 3.0),
            SplitterError { alpha: 0.01, beta: -0.02 },
        );
        assert!(unitarity_deviation(&mat2_from(&t)) < 1e-12);
    }

    #[test]
    fn single_mzi_mesh_matches_block() {
        let mut mesh = MeshParams::zeroed(2).unwrap();
        mesh.mzis[0].theta = PI;
        let u = mesh.unitary(None).unwrap();
        assert!((u[(0, 0)] - Complex64::new(-1.0, 0.0)).norm() < 1e-14);
        assert!((u[(1, 1)] - Complex64::ONE).norm() < 1e-14);
    }

    #[test]
    fn mesh_layout_has_expected_size() {
        for m in 1..=8 {
            let mesh = MeshParams::zeroed(m).unwrap();
            assert_eq!(mesh.mzi_count(), m * (m - 1) / 2);
        }
    }

    #[test]
    fn random_mesh_is_unitary() {
        use rand::Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut mesh = MeshParams::zeroed(4).unwrap();
        for mzi in &mut mesh.mzis {
            mzi.theta = rng.random_range(0.0..2.0 * PI);
            mzi.phi = rng.random_range(0.0..2.0 * PI);
        }
        for p in &mut mesh.output_phases {
            *p = rng.random_range(0.0..2.0 * PI);
        }
        let u = mesh.unitary(None).unwrap();
        assert!(unitarity_deviation(&u) < 1e-12);
    }

    #[test]
    fn error_list_length_is_checked() {
        let mesh = MeshParams::zeroed(4).unwrap();
        let errs = vec![SplitterError::default(); 3];
        assert!(mesh.unitary(Some(&errs)).is_err());
    }

    #[test]
    fn decompose_identity_round_trips() {
        let u = Array2::<Complex64>::eye(3);
        let mesh = clements_decompose(&u).unwrap();
        let back = mesh.unitary(None).unwrap();
        assert!(max_diff(&u, &back) < 1e-12);
    }

    #[test]
    fn decompose_diagonal_round_trips() {
        let phases = [0.3, -1.1, 2.4, 0.9];
        let mut u = Array2::<Complex64>::zeros((4, 4));
        for (i, chi) in phases.iter().enumerate() {
            u[(i, i)] = Complex64::from_polar(1.0, *chi);
        }
        let mesh = clements_decompose(&u).unwrap();
        let back = mesh.unitary(None).unwrap();
        assert!(max_diff(&u, &back) < 1e-12);
    }

    #[test]
    fn decompose_haar_round_trips_for_all_sizes() {
        for m in 2..=8 {
            let u = sample_haar_unitary(m, 40 + m as u64);
            let mesh = clements_decompose(&u).unwrap();
            let back = mesh.unitary(None).unwrap();
            assert!(
                max_diff(&u, &back) < 1e-10,
                "round-trip residual too large for M = {m}: {}",
                max_diff(&u, &back)
            );
        }
    }

    #[test]
    fn decompose_then_reconstruct_then_decompose_is_stable() {
        let u = sample_haar_unitary(6, 7);
        let mesh = clements_decompose(&u).unwrap();
        let back = mesh.unitary(None).unwrap();
        let mesh2 = clements_decompose(&back).unwrap();
        let back2 = mesh2.unitary(None).unwrap();
        assert!(max_diff(&back, &back2) < 1e-10);
    }

    #[test]
    fn decompose_rejects_non_unitary() {
        let mut u = Array2::<Complex64>::eye(3);
        u[(0, 0)] = Complex64::new(1.5, 0.0);
        match clements_decompose(&u) {
            Err(Error::NotUnitary { deviation }) => assert!(deviation > 0.1),
            other => panic!("expected NotUnitary, got {other:?}"),
        }
    }

    #[test]
    fn haar_unitary_is_deterministic_and_unitary() {
        let a = sample_haar_unitary(8, 123);
        let b = sample_haar_unitary(8, 123);
        assert_eq!(max_diff(&a, &b), 0.0);
        assert!(unitarity_deviation(&a) < 1e-12);

        let single = sample_haar_unitary(1, 9);
        assert!((single[(0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn haar_moment_matches_first_entry() {
        // E|U_00|^2 = 1/dim; Var = 2/(d(d+1)) - 1/d^2 = 0.0375 for d = 4.
        let dim = 4;
        let samples = 10_000;
        let mean: f64 = (0..samples)
            .map(|s| sample_haar_unitary(dim, 1000 + s as u64)[(0, 0)].norm_sqr())
            .sum::<f64>()
            / samples as f64;
        let se = (0.0375f64 / samples as f64).sqrt();
        assert!(
            (mean - 0.25).abs() < 3.0 * se,
            "mean {mean} outside 3 standard errors"
        );
    }

    #[test]
    fn splitter_errors_zero_sigma_is_exactly_zero() {
        let mesh = MeshParams::zeroed(4).unwrap();
        let errs = sample_splitter_errors(&mesh, 0.0, 1).unwrap();
        assert!(errs.iter().all(|e| e.alpha == 0.0 && e.beta == 0.0));
    }

    #[test]
    fn splitter_errors_match_requested_sigma() {
        let mesh = MeshParams::zeroed(8).unwrap(); // 28 MZIs
        let mut draws = Vec::new();
        let mut seed = 0u64;
        while draws.len() < 10_000 {
            for e in sample_splitter_errors(&mesh, 0.01, 77 + seed).unwrap() {
                draws.push(e.alpha);
                draws.push(e.beta);
            }
            seed += 1;
        }
        draws.truncate(10_000);
        let var: f64 = draws.iter().map(|x| x * x).sum::<f64>() / draws.len() as f64;
        let std = var.sqrt();
        assert!((0.0097..=0.0103).contains(&std), "sample std {std}");
    }

    #[test]
    fn splitter_errors_reject_negative_sigma() {
        let mesh = MeshParams::zeroed(2).unwrap();
        assert!(sample_splitter_errors(&mesh, -0.1, 0).is_err());
    }

    #[test]
    fn splitter_errors_are_reproducible() {
        let mesh = MeshParams::zeroed(5).unwrap();
        let a = sample_splitter_errors(&mesh, 0.02, 42).unwrap();
        let b = sample_splitter_errors(&mesh, 0.02, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mesh_json_round_trips() {
        let u = sample_haar_unitary(4, 3);
        let mesh = clements_decompose(&u).unwrap();
        let json = mesh.to_json().unwrap();
        let back = MeshParams::from_json(&json).unwrap();
        let diff = max_diff(&mesh.unitary(None).unwrap(), &back.unitary(None).unwrap());
        assert!(diff < 1e-12);
        assert!(json.contains("\"col\""));
        assert!(json.contains("\"M\""));
    }
}
