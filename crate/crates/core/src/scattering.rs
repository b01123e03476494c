//! Continuous-mode solver for the cascaded Lambda-system nonlinear phase
//! gate: photon subtraction, phase shifts plus time reversal, photon
//! addition, and the overlap fidelity of the assembled gate.
//!
//! The solver works in the Markovian (broadband-cavity) limit, where the
//! cavity enters only through the enhanced decay rate `Gamma = 2 g^2 /
//! kappa`, but retains the excited-state dynamics so finite-bandwidth
//! distortions survive. For a two-photon input the joint state closes on
//! three components: two photons in the incident mode with the atom in its
//! initial ground state, one photon with the atom excited, and one photon in
//! each mode with the atom flipped. Eliminating the ground-state components
//! leaves a single delay-type equation for the excited amplitude
//! `B(t1; t)` over photon stamp `t1` and evolution time `t`:
//!
//! ```text
//! dB(t1; t)/dt = -Gamma B(t1; t) - Gamma B(t; t1) [t1 <= t] + D(t1, t)
//! ```
//!
//! with the drive `D` built from the initial two-photon amplitudes. The
//! ground-state amplitudes are linear reconstructions of `B`, so the full
//! stamp-by-evolution matrix of `B` is the solver's working set.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Atom-cavity parameters; the Markovian dynamics depend on them only
/// through `gamma()`.
#[derive(Debug, Clone, Copy)]
pub struct AtomParams {
    pub g: f64,
    pub kappa: f64,
}

impl AtomParams {
    pub fn new(g: f64, kappa: f64) -> Result<Self> {
        if g <= 0.0 || kappa <= 0.0 {
            return Err(Error::InvalidConfig(
                "coupling and decay rates must be positive".into(),
            ));
        }
        Ok(Self { g, kappa })
    }

    /// Cavity-enhanced atomic decay rate `2 g^2 / kappa`.
    pub fn gamma(&self) -> f64 {
        2.0 * self.g * self.g / self.kappa
    }
}

/// Gaussian pulse with spectral width `sigma_prime` on a uniform time grid.
/// The quoted width `sigma` (as in "sigma over g") is the spectral FWHM
/// convention `sigma = 2 sqrt(ln 2) sigma_prime`.
#[derive(Debug, Clone)]
pub struct PulseSpec {
    sigma_prime: f64,
    t_min: f64,
    step: f64,
    n: usize,
    norm: f64,
}

impl PulseSpec {
    pub fn new(sigma_prime: f64, t_min: f64, t_max: f64, step: f64) -> Result<Self> {
        if sigma_prime <= 0.0 || step <= 0.0 || t_max <= t_min {
            return Err(Error::InvalidConfig("invalid pulse grid".into()));
        }
        let n = ((t_max - t_min) / step).round() as usize + 1;
        let mut pulse = Self {
            sigma_prime,
            t_min,
            step,
            n,
            norm: 1.0,
        };
        // Normalize so the squared Riemann sum over the grid is exactly 1.
        let sum: f64 = (0..n).map(|j| pulse.xi(pulse.time(j)).powi(2)).sum();
        pulse.norm = 1.0 / (sum * step).sqrt();
        Ok(pulse)
    }

    /// Grid sized for the gate solver: `span_fwhm` temporal FWHMs centered on
    /// zero, step `step_scale * min(1/(10 Gamma), 1/(10 kappa))`.
    pub fn for_gate(
        sigma_over_g: f64,
        atom: AtomParams,
        span_fwhm: f64,
        step_scale: f64,
    ) -> Result<Self> {
        if sigma_over_g <= 0.0 {
            return Err(Error::InvalidConfig("sigma must be positive".into()));
        }
        let sigma_prime = sigma_over_g * atom.g / (2.0 * (2.0f64).ln().sqrt());
        let fwhm_t = 2.0 * (2.0f64).ln().sqrt() / sigma_prime;
        let step = step_scale * (1.0 / (10.0 * atom.gamma())).min(1.0 / (10.0 * atom.kappa));
        let span = span_fwhm * fwhm_t;
        let half_steps = (span / (2.0 * step)).ceil() as usize;
        let half = half_steps as f64 * step;
        Self::new(sigma_prime, -half, half, step)
    }

    pub fn sigma_prime(&self) -> f64 {
        self.sigma_prime
    }

    /// Spectral FWHM-convention width `2 sqrt(ln 2) sigma_prime`.
    pub fn sigma(&self) -> f64 {
        2.0 * (2.0f64).ln().sqrt() * self.sigma_prime
    }

    /// Temporal FWHM of `|xi(t)|^2`.
    pub fn fwhm_time(&self) -> f64 {
        2.0 * (2.0f64).ln().sqrt() / self.sigma_prime
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t_min + index as f64 * self.step
    }

    pub fn center(&self) -> f64 {
        self.t_min + (self.n - 1) as f64 * self.step / 2.0
    }

    /// Grid-normalized Gaussian amplitude centered on the grid center.
    pub fn xi(&self, t: f64) -> f64 {
        let u = (t - self.center()) * self.sigma_prime;
        self.norm
            * (self.sigma_prime * self.sigma_prime / std::f64::consts::PI).powf(0.25)
            * (-0.5 * u * u).exp()
    }

    /// Rejects grids that do not resolve the atomic and cavity timescales.
    pub fn validate_resolution(&self, atom: AtomParams) -> Result<()> {
        let required = (1.0 / (10.0 * atom.gamma())).min(1.0 / (10.0 * atom.kappa));
        if self.step > required * (1.0 + 1e-12) {
            return Err(Error::GridUnderResolved {
                step: self.step,
                required,
            });
        }
        Ok(())
    }

    /// Rejects grids whose span covers less than eight temporal FWHMs.
    pub fn validate_span(&self) -> Result<()> {
        let span = (self.n - 1) as f64 * self.step;
        if span < 8.0 * self.fwhm_time() * (1.0 - 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "grid span {span:.3} covers fewer than 8 temporal FWHMs ({:.3})",
                self.fwhm_time()
            )));
        }
        Ok(())
    }

    /// Rejects pulses that are not symmetric about the grid center.
    pub fn validate_symmetric(&self) -> Result<()> {
        let mut dev: f64 = 0.0;
        for j in 0..self.n {
            let a = self.xi(self.time(j));
            let b = self.xi(self.time(self.n - 1 - j));
            dev = dev.max((a - b).abs());
        }
        if dev > 1e-8 {
            return Err(Error::AsymmetricPulse { deviation: dev });
        }
        Ok(())
    }
}

/// Whether a two-time grid holds a bosonic pair in one mode (exchange
/// symmetric, stored as a triangle) or one photon in each of two distinct
/// modes (general, stored densely).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    SymmetricPair,
    DistinctPair,
}

/// Discretized two-time complex amplitude over `(t1, t2)`.
#[derive(Debug, Clone)]
pub struct TwoPhotonAmplitude {
    n: usize,
    step: f64,
    kind: PairKind,
    data: Vec<Complex64>,
}

impl TwoPhotonAmplitude {
    pub fn zeros(n: usize, step: f64, kind: PairKind) -> Self {
        let len = match kind {
            PairKind::SymmetricPair => n * (n + 1) / 2,
            PairKind::DistinctPair => n * n,
        };
        Self {
            n,
            step,
            kind,
            data: vec![Complex64::ZERO; len],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn kind(&self) -> PairKind {
        self.kind
    }

    #[inline]
    fn tri_index(&self, i: usize, j: usize) -> usize {
        // i <= j, row-major over the upper triangle
        i * self.n - i * (i + 1) / 2 + j
    }

    /// Symmetrizing read.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        match self.kind {
            PairKind::SymmetricPair => {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                self.data[self.tri_index(a, b)]
            }
            PairKind::DistinctPair => self.data[i * self.n + j],
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: Complex64) {
        match self.kind {
            PairKind::SymmetricPair => {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                let idx = self.tri_index(a, b);
                self.data[idx] = value;
            }
            PairKind::DistinctPair => self.data[i * self.n + j] = value,
        }
    }

    /// Row-wise Euler-Maclaurin correction for the derivative jump the
    /// amplitudes carry across the equal-time diagonal. Without it the plain
    /// Riemann sum stalls at second order in the step.
    fn diagonal_cusp_correction(&self, weight: impl Fn(usize, usize) -> Complex64) -> Complex64 {
        let n = self.n;
        if n < 3 {
            return Complex64::ZERO;
        }
        let mut acc = Complex64::ZERO;
        for i in 0..n {
            let j = i.clamp(2, n - 3);
            let g = |jj: usize| weight(i, jj);
            // One-sided first derivatives of the row integrand about the
            // diagonal node, each second-order accurate.
            let right = -3.0 * g(j) + 4.0 * g(j + 1) - g(j + 2);
            let left = 3.0 * g(j) - 4.0 * g(j - 1) + g(j - 2);
            acc += (right - left) / (2.0 * self.step);
        }
        acc * self.step.powi(3) / 12.0
    }

    /// Physical squared norm including the bosonic double counting for
    /// symmetric pairs, with the diagonal cusp correction.
    pub fn norm_sqr(&self) -> f64 {
        let measure = self.step * self.step;
        let factor = match self.kind {
            PairKind::SymmetricPair => 2.0,
            PairKind::DistinctPair => 1.0,
        };
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                acc += self.get(i, j).norm_sqr();
            }
        }
        let correction = self
            .diagonal_cusp_correction(|i, j| Complex64::new(self.get(i, j).norm_sqr(), 0.0));
        factor * (measure * acc + correction.re)
    }

    /// `<self|other>` with the same measure convention as [`Self::norm_sqr`].
    pub fn overlap(&self, other: &Self) -> Result<Complex64> {
        if self.n != other.n || self.kind != other.kind {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: other.n,
            });
        }
        let measure = self.step * self.step;
        let factor = match self.kind {
            PairKind::SymmetricPair => 2.0,
            PairKind::DistinctPair => 1.0,
        };
        let mut acc = Complex64::ZERO;
        for i in 0..self.n {
            for j in 0..self.n {
                acc += self.get(i, j).conj() * other.get(i, j);
            }
        }
        let correction =
            self.diagonal_cusp_correction(|i, j| self.get(i, j).conj() * other.get(i, j));
        Ok(factor * (measure * acc + correction))
    }

    /// Largest deviation from exchange symmetry; zero by construction for
    /// triangle-stored grids, measured explicitly for dense ones.
    pub fn symmetry_deviation(&self) -> f64 {
        match self.kind {
            PairKind::SymmetricPair => 0.0,
            PairKind::DistinctPair => {
                let mut dev: f64 = 0.0;
                for i in 0..self.n {
                    for j in 0..i {
                        dev = dev.max((self.data[i * self.n + j] - self.data[j * self.n + i]).norm());
                    }
                }
                dev
            }
        }
    }
}

/// Output of the two-photon subtraction step: the entangled one-photon-each
/// amplitude, the residual unsubtracted pair, and diagnostics.
#[derive(Debug, Clone)]
pub struct TwoPhotonPair {
    /// Mode-a (x) mode-b amplitude; `get(a_stamp, b_stamp)`.
    pub ab: TwoPhotonAmplitude,
    /// Residual two-photon amplitude left in mode a (bound-state component).
    pub aa: TwoPhotonAmplitude,
    /// Excited-state population remaining at the end of the window.
    pub excited_norm: f64,
    /// Largest deviation of the total norm from 1 over the integration.
    pub norm_drift: f64,
}

/// Output of the photon-addition step.
#[derive(Debug, Clone)]
pub struct AdditionOutput {
    /// Recovered two-photon amplitude in mode a.
    pub aa: TwoPhotonAmplitude,
    /// Residual amplitude with the b photon never absorbed.
    pub ab_residual: TwoPhotonAmplitude,
    pub excited_norm: f64,
    pub norm_drift: f64,
}

/// Four-point Lagrange weights for interpolation at fractional index `pos`
/// with the stencil confined to `[lo, hi]`. The amplitudes carry a
/// derivative jump across the stamp/evolution diagonal, so stencils must not
/// straddle it or the interpolation degrades to second order.
fn lagrange4_bounded(pos: f64, lo: usize, hi: usize) -> (usize, [f64; 4]) {
    let width = hi + 1 - lo;
    debug_assert!(width >= 4, "stencil needs four points");
    let base = pos.floor() as isize - 1;
    let start = base.clamp(lo as isize, hi as isize - 3) as usize;
    let x = pos - start as f64;
    let mut w = [0.0f64; 4];
    for (k, slot) in w.iter_mut().enumerate() {
        let mut acc = 1.0;
        for m in 0..4 {
            if m != k {
                acc *= (x - m as f64) / (k as f64 - m as f64);
            }
        }
        *slot = acc;
    }
    (start, w)
}

/// Drive term of the excited-amplitude equation.
trait Drive {
    /// `D(t1 = grid stamp j, t = tau)`, with `tau` at integer or
    /// half-integer grid positions.
    fn eval(&self, j: usize, tau_pos: f64, out: &mut [Complex64]);
    /// Initial aa-amplitude `H0(i, j)` for norm accounting and output.
    fn h0(&self, i: usize, j: usize) -> Complex64;
    /// Initial ab-amplitude `C0(i, j)`.
    fn c0(&self, i: usize, j: usize) -> Complex64;
}

/// Pass 1: product two-photon input `H0 = xi xi / sqrt(2)`, no b photon.
struct SubtractionDrive<'a> {
    pulse: &'a PulseSpec,
    gamma: f64,
    xi: Vec<f64>,
}

impl Drive for SubtractionDrive<'_> {
    fn eval(&self, _j: usize, tau_pos: f64, out: &mut [Complex64]) {
        // D(t1, t) = -sqrt(2 Gamma) xi(t) xi(t1)
        let t = self.pulse.time(0) + tau_pos * self.pulse.step();
        let scale = -(2.0 * self.gamma).sqrt() * self.pulse.xi(t);
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = Complex64::new(scale * self.xi[j], 0.0);
        }
    }

    fn h0(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.xi[i] * self.xi[j] / 2.0f64.sqrt(), 0.0)
    }

    fn c0(&self, _i: usize, _j: usize) -> Complex64 {
        Complex64::ZERO
    }
}

/// Pass 2: general initial amplitudes, as produced by time reversal.
struct AdditionDrive<'a> {
    h0: &'a TwoPhotonAmplitude,
    c0: &'a TwoPhotonAmplitude,
    gamma: f64,
}

impl Drive for AdditionDrive<'_> {
    fn eval(&self, _j: usize, tau_pos: f64, out: &mut [Complex64]) {
        // D(t1, t) = -sqrt(Gamma) [2 H0(t1, t) + C0(t1, t)]
        let n = self.h0.len();
        let root = self.gamma.sqrt();
        let frac = tau_pos - tau_pos.round();
        if frac.abs() < 1e-9 {
            let col = tau_pos.round() as usize;
            for (j, slot) in out.iter_mut().enumerate() {
                *slot = -root * (2.0 * self.h0.get(j, col) + self.c0.get(j, col));
            }
        } else {
            for (j, slot) in out.iter_mut().enumerate() {
                // The initial amplitudes carry a derivative jump across
                // their own diagonal at column j; interpolate on the side of
                // the diagonal that tau lies on.
                let (start, w) = if tau_pos >= j as f64 {
                    lagrange4_bounded(tau_pos, j.min(n - 4), n - 1)
                } else {
                    lagrange4_bounded(tau_pos, 0, j.max(3))
                };
                let mut acc = Complex64::ZERO;
                for k in 0..4 {
                    acc += w[k] * (2.0 * self.h0.get(j, start + k) + self.c0.get(j, start + k));
                }
                *slot = -root * acc;
            }
        }
    }

    fn h0(&self, i: usize, j: usize) -> Complex64 {
        self.h0.get(i, j)
    }

    fn c0(&self, i: usize, j: usize) -> Complex64 {
        self.c0.get(i, j)
    }
}

/// Integrates the delay equation for the excited amplitude over the full
/// grid and reconstructs the output amplitudes.
struct HierarchySolution {
    aa: TwoPhotonAmplitude,
    ab: TwoPhotonAmplitude,
    excited_norm: f64,
    norm_drift: f64,
}

fn solve_hierarchy(pulse: &PulseSpec, gamma: f64, drive: &dyn Drive) -> HierarchySolution {
    let n = pulse.len();
    let dt = pulse.step();
    // b[col * n + row]: excited amplitude at photon stamp `row`, evolution
    // time `col`; columns fill left to right.
    let mut b = vec![Complex64::ZERO; n * n];
    let mut d_buf = vec![Complex64::ZERO; n];
    let mut stage = vec![Complex64::ZERO; n];
    let mut k1 = vec![Complex64::ZERO; n];
    let mut k2 = vec![Complex64::ZERO; n];
    let mut k3 = vec![Complex64::ZERO; n];
    let mut k4 = vec![Complex64::ZERO; n];

    let half_gamma_root = 0.5 * gamma.sqrt();

    let rhs = |tau_pos: f64,
               y: &[Complex64],
               b: &[Complex64],
               d: &[Complex64],
               out: &mut [Complex64],
               col_limit: usize| {
        // Row j's delay term switches on when the evolution time crosses the
        // stamp t_j, i.e. exactly at a step boundary. Its contribution to the
        // step that ENDS there is zero (a jump at the endpoint has no
        // measure), so rows at or beyond `col_limit` see no delay yet; they
        // pick it up from the first stage of the next step onward.
        let frac = tau_pos - tau_pos.round();
        if frac.abs() < 1e-9 {
            let row = tau_pos.round() as usize;
            for j in 0..n {
                let delay = if j < col_limit {
                    b[j * n + row]
                } else {
                    Complex64::ZERO
                };
                out[j] = -gamma * y[j] - gamma * delay + d[j];
            }
        } else {
            for j in 0..n {
                let delay = if j < col_limit {
                    // B(stamp; evol = t_j) has a derivative jump at stamp =
                    // t_j; the delay only reads stamps >= t_j, so keep the
                    // stencil on that side.
                    let (start, w) = lagrange4_bounded(tau_pos, j.min(n - 4), n - 1);
                    let base = j * n + start;
                    w[0] * b[base] + w[1] * b[base + 1] + w[2] * b[base + 2] + w[3] * b[base + 3]
                } else {
                    Complex64::ZERO
                };
                out[j] = -gamma * y[j] - gamma * delay + d[j];
            }
        }
    };

    for col in 0..n - 1 {
        let t0 = col as f64;
        // Stage 1 at tau = t_col.
        let y0: Vec<Complex64> = b[col * n..(col + 1) * n].to_vec();
        drive.eval(0, t0, &mut d_buf);
        rhs(t0, &y0, &b, &d_buf, &mut k1, col + 1);
        // Stages 2 and 3 at tau = t_col + dt/2.
        for j in 0..n {
            stage[j] = y0[j] + 0.5 * dt * k1[j];
        }
        drive.eval(0, t0 + 0.5, &mut d_buf);
        rhs(t0 + 0.5, &stage, &b, &d_buf, &mut k2, col + 1);
        for j in 0..n {
            stage[j] = y0[j] + 0.5 * dt * k2[j];
        }
        rhs(t0 + 0.5, &stage, &b, &d_buf, &mut k3, col + 1);
        // Stage 4 at tau = t_{col+1}.
        for j in 0..n {
            stage[j] = y0[j] + dt * k3[j];
        }
        drive.eval(0, t0 + 1.0, &mut d_buf);
        rhs(t0 + 1.0, &stage, &b, &d_buf, &mut k4, col + 1);
        for j in 0..n {
            let next = y0[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            b[(col + 1) * n + j] = next;
        }
    }

    // Probability accounting at a set of probe times covering the window.
    // The instantaneous amplitudes are pointwise reconstructions of B; the
    // quadrature treats the deposit front (stamp = probe time) as a
    // half-weighted value jump and corrects the equal-time cusp.
    let probes: Vec<usize> = {
        let count = 16.min(n - 1);
        (1..=count).map(|p| p * (n - 1) / count).collect()
    };
    let mut norm_drift: f64 = 0.0;
    let root = gamma.sqrt();
    for &k in &probes {
        let h_at = |i: usize, j: usize| -> Complex64 {
            let mut value = drive.h0(i, j);
            if j <= k {
                value += half_gamma_root * b[j * n + i];
            }
            if i <= k {
                value += half_gamma_root * b[i * n + j];
            }
            value
        };
        let c_at = |a: usize, bj: usize| -> Complex64 {
            let mut value = drive.c0(a, bj);
            if bj <= k {
                value += root * b[bj * n + a];
            }
            value
        };
        // Front-line handling: at stamp = t_k the deposit is mid-jump, so
        // average the squared values of both sides.
        let h_sq = |i: usize, j: usize| -> f64 {
            if i == k || j == k {
                let mut before = drive.h0(i, j);
                if j < k {
                    before += half_gamma_root * b[j * n + i];
                }
                if i < k {
                    before += half_gamma_root * b[i * n + j];
                }
                0.5 * (h_at(i, j).norm_sqr() + before.norm_sqr())
            } else {
                h_at(i, j).norm_sqr()
            }
        };
        let c_sq = |a: usize, bj: usize| -> f64 {
            if bj == k {
                0.5 * (c_at(a, bj).norm_sqr() + drive.c0(a, bj).norm_sqr())
            } else {
                c_at(a, bj).norm_sqr()
            }
        };
        let mut s_h = 0.0;
        let mut s_c = 0.0;
        for i in 0..n {
            for j in 0..n {
                s_h += h_sq(i, j);
                s_c += c_sq(i, j);
            }
        }
        // Equal-time cusp corrections, row-wise, on the settled region.
        let mut corr_h = 0.0;
        let mut corr_c = 0.0;
        for i in 0..n {
            let jc = i.clamp(2, n - 3);
            if jc + 2 < k {
                let right = -3.0 * h_sq(i, jc) + 4.0 * h_sq(i, jc + 1) - h_sq(i, jc + 2);
                let left = 3.0 * h_sq(i, jc) - 4.0 * h_sq(i, jc - 1) + h_sq(i, jc - 2);
                corr_h += (right - left) / (2.0 * dt);
                let right = -3.0 * c_sq(i, jc) + 4.0 * c_sq(i, jc + 1) - c_sq(i, jc + 2);
                let left = 3.0 * c_sq(i, jc) - 4.0 * c_sq(i, jc - 1) + c_sq(i, jc - 2);
                corr_c += (right - left) / (2.0 * dt);
            }
        }
        let dt3 = dt.powi(3) / 12.0;
        let s_h = 2.0 * (dt * dt * s_h + dt3 * corr_h);
        let s_c = dt * dt * s_c + dt3 * corr_c;
        // Excited-state norm with its own stamp cusp at t_k.
        let mut s_e = 0.0;
        for i in 0..n {
            s_e += b[k * n + i].norm_sqr();
        }
        let mut s_e = dt * s_e;
        if (2..n - 3).contains(&k) {
            let g = |i: usize| b[k * n + i].norm_sqr();
            let right = -3.0 * g(k) + 4.0 * g(k + 1) - g(k + 2);
            let left = 3.0 * g(k) - 4.0 * g(k - 1) + g(k - 2);
            s_e += dt * dt / 12.0 * (right - left);
        }
        let total = s_h + s_c + s_e;
        norm_drift = norm_drift.max((total - 1.0).abs());
    }

    // Reconstruct the final amplitudes from the B matrix.
    let mut aa = TwoPhotonAmplitude::zeros(n, dt, PairKind::SymmetricPair);
    let mut ab = TwoPhotonAmplitude::zeros(n, dt, PairKind::DistinctPair);
    for i in 0..n {
        for j in i..n {
            let value = drive.h0(i, j)
                + half_gamma_root * (b[j * n + i] + b[i * n + j]);
            aa.set(i, j, value);
        }
    }
    let root = gamma.sqrt();
    for a in 0..n {
        for bcol in 0..n {
            ab.set(a, bcol, drive.c0(a, bcol) + root * b[bcol * n + a]);
        }
    }
    let excited_norm = dt
        * (0..n)
            .map(|i| b[(n - 1) * n + i].norm_sqr())
            .sum::<f64>();
    HierarchySolution {
        aa,
        ab,
        excited_norm,
        norm_drift,
    }
}

/// Single-photon subtraction: integrates the scalar excited amplitude and
/// returns the emitted mode-b waveform on the grid together with the
/// residual excited-state norm. In the narrow-pulse limit the output
/// approaches `-xi(t)`.
pub fn subtract_one_photon(
    pulse: &PulseSpec,
    atom: AtomParams,
) -> Result<(Vec<Complex64>, f64)> {
    pulse.validate_resolution(atom)?;
    let gamma = atom.gamma();
    let n = pulse.len();
    let dt = pulse.step();
    let root = gamma.sqrt();
    let mut e = Complex64::ZERO;
    let mut out = vec![Complex64::ZERO; n];
    out[0] = root * e;
    for k in 0..n - 1 {
        let t = pulse.time(k);
        let f = |tau: f64, y: Complex64| -gamma * y - root * pulse.xi(tau);
        let k1 = f(t, e);
        let k2 = f(t + 0.5 * dt, e + 0.5 * dt * k1);
        let k3 = f(t + 0.5 * dt, e + 0.5 * dt * k2);
        let k4 = f(t + dt, e + dt * k3);
        e += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out[k + 1] = root * e;
    }
    Ok((out, e.norm_sqr()))
}

/// Two-photon subtraction: full hierarchy solve from the product input.
pub fn subtract_two_photons(pulse: &PulseSpec, atom: AtomParams) -> Result<TwoPhotonPair> {
    pulse.validate_resolution(atom)?;
    let gamma = atom.gamma();
    let xi: Vec<f64> = (0..pulse.len()).map(|j| pulse.xi(pulse.time(j))).collect();
    let drive = SubtractionDrive { pulse, gamma, xi };
    let solution = solve_hierarchy(pulse, gamma, &drive);
    Ok(TwoPhotonPair {
        ab: solution.ab,
        aa: solution.aa,
        excited_norm: solution.excited_norm,
        norm_drift: solution.norm_drift,
    })
}

/// Applies the per-mode phase shifts and the phase-conjugating mirror: the
/// b photon gains `phi1`, each a photon gains `phi2`, then every amplitude
/// is conjugated and reflected about the pulse center.
pub fn phase_and_time_reverse(
    pair: &TwoPhotonPair,
    pulse: &PulseSpec,
    phi1: f64,
    phi2: f64,
) -> Result<TwoPhotonPair> {
    pulse.validate_symmetric()?;
    let n = pair.ab.len();
    let ab_phase = Complex64::from_polar(1.0, phi1 + phi2);
    let aa_phase = Complex64::from_polar(1.0, 2.0 * phi2);
    let mut ab = TwoPhotonAmplitude::zeros(n, pair.ab.step(), PairKind::DistinctPair);
    for a in 0..n {
        for b in 0..n {
            ab.set(a, b, ab_phase * pair.ab.get(n - 1 - a, n - 1 - b).conj());
        }
    }
    let mut aa = TwoPhotonAmplitude::zeros(n, pair.aa.step(), PairKind::SymmetricPair);
    for i in 0..n {
        for j in i..n {
            aa.set(i, j, aa_phase * pair.aa.get(n - 1 - i, n - 1 - j).conj());
        }
    }
    Ok(TwoPhotonPair {
        ab,
        aa,
        excited_norm: pair.excited_norm,
        norm_drift: pair.norm_drift,
    })
}

/// Photon addition: forward-integrates the hierarchy with the time-reversed
/// pair as input and the atom in the flipped ground state. In the
/// narrow-pulse limit with zero phases the output recovers the original
/// product state.
pub fn add_photon(
    pair: &TwoPhotonPair,
    pulse: &PulseSpec,
    atom: AtomParams,
) -> Result<AdditionOutput> {
    pulse.validate_resolution(atom)?;
    if pair.ab.len() != pulse.len() {
        return Err(Error::DimensionMismatch {
            expected: pulse.len(),
            actual: pair.ab.len(),
        });
    }
    let gamma = atom.gamma();
    let drive = AdditionDrive {
        h0: &pair.aa,
        c0: &pair.ab,
        gamma,
    };
    let solution = solve_hierarchy(pulse, gamma, &drive);
    Ok(AdditionOutput {
        aa: solution.aa,
        ab_residual: solution.ab,
        excited_norm: solution.excited_norm,
        norm_drift: solution.norm_drift,
    })
}

/// Reusable gate evaluation at fixed pulse and atom parameters: the
/// subtraction pass is phase-independent, so one solve serves a whole phase
/// sweep.
pub struct GateSolver {
    pulse: PulseSpec,
    atom: AtomParams,
    subtracted: TwoPhotonPair,
}

/// Solver options: `step_scale` rescales the default resolution bound,
/// `span_fwhm` the grid span.
#[derive(Debug, Clone, Copy)]
pub struct GateSolverOptions {
    pub step_scale: f64,
    pub span_fwhm: f64,
}

impl Default for GateSolverOptions {
    fn default() -> Self {
        Self {
            step_scale: 1.0,
            span_fwhm: 8.0,
        }
    }
}

impl GateSolver {
    pub fn new(sigma_over_g: f64, kappa_over_g: f64, opts: GateSolverOptions) -> Result<Self> {
        let atom = AtomParams::new(1.0, kappa_over_g)?;
        let pulse = PulseSpec::for_gate(sigma_over_g, atom, opts.span_fwhm, opts.step_scale)?;
        pulse.validate_span()?;
        pulse.validate_symmetric()?;
        let subtracted = subtract_two_photons(&pulse, atom)?;
        Ok(Self {
            pulse,
            atom,
            subtracted,
        })
    }

    pub fn grid_step(&self) -> f64 {
        self.pulse.step()
    }

    pub fn grid_len(&self) -> usize {
        self.pulse.len()
    }

    pub fn subtraction_norm_drift(&self) -> f64 {
        self.subtracted.norm_drift
    }

    /// Gate fidelity at one phase pair: subtraction output is phased and
    /// time-reversed, added back, and the result overlapped with the ideally
    /// phased input product state. Returns the modulus of the overlap and
    /// the worst norm drift across both passes.
    pub fn fidelity(&self, phi1: f64, phi2: f64) -> Result<(f64, f64)> {
        let reversed = phase_and_time_reverse(&self.subtracted, &self.pulse, phi1, phi2)?;
        let added = add_photon(&reversed, &self.pulse, self.atom)?;
        let n = self.pulse.len();
        let mut target = TwoPhotonAmplitude::zeros(n, self.pulse.step(), PairKind::SymmetricPair);
        let phase = Complex64::from_polar(1.0, phi1 + phi2);
        let scale = phase / 2.0f64.sqrt();
        let xi: Vec<f64> = (0..n).map(|j| self.pulse.xi(self.pulse.time(j))).collect();
        for i in 0..n {
            for j in i..n {
                target.set(i, j, scale * xi[i] * xi[j]);
            }
        }
        let overlap = target.overlap(&added.aa)?;
        let drift = self.subtracted.norm_drift.max(added.norm_drift);
        Ok((overlap.norm(), drift))
    }
}

/// One row of a gate-fidelity evaluation with its convergence evidence.
#[derive(Debug, Clone)]
pub struct GateFidelityReport {
    pub sigma_over_g: f64,
    pub kappa_over_g: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub fidelity: f64,
    pub grid_step: f64,
    pub richardson_delta: f64,
    pub norm_drift: f64,
}

/// Gate fidelity with a Richardson check: the same evaluation at half the
/// step must agree to the reported delta.
pub fn gate_fidelity(
    sigma_over_g: f64,
    kappa_over_g: f64,
    phi1: f64,
    phi2: f64,
    opts: GateSolverOptions,
) -> Result<GateFidelityReport> {
    let base = GateSolver::new(sigma_over_g, kappa_over_g, opts)?;
    let fine = GateSolver::new(
        sigma_over_g,
        kappa_over_g,
        GateSolverOptions {
            step_scale: opts.step_scale / 2.0,
            ..opts
        },
    )?;
    let (f_base, drift) = base.fidelity(phi1, phi2)?;
    let (f_fine, _) = fine.fidelity(phi1, phi2)?;
    Ok(GateFidelityReport {
        sigma_over_g,
        kappa_over_g,
        phi1,
        phi2,
        fidelity: f_base,
        grid_step: base.grid_step(),
        richardson_delta: (f_base - f_fine).abs(),
        norm_drift: drift,
    })
}

/// Phase/width sweep of the gate fidelity, one subtraction solve per
/// `(sigma, kappa)` pair. Each row carries its own Richardson delta.
pub fn gate_sweep(
    sigma_over_g: &[f64],
    kappa_over_g: f64,
    phase_pairs: &[(f64, f64)],
    opts: GateSolverOptions,
) -> Result<Vec<GateFidelityReport>> {
    let mut rows = Vec::with_capacity(sigma_over_g.len() * phase_pairs.len());
    for &sigma in sigma_over_g {
        let base = GateSolver::new(sigma, kappa_over_g, opts)?;
        let fine = GateSolver::new(
            sigma,
            kappa_over_g,
            GateSolverOptions {
                step_scale: opts.step_scale / 2.0,
                ..opts
            },
        )?;
        for &(phi1, phi2) in phase_pairs {
            let (f_base, drift) = base.fidelity(phi1, phi2)?;
            let (f_fine, _) = fine.fidelity(phi1, phi2)?;
            rows.push(GateFidelityReport {
                sigma_over_g: sigma,
                kappa_over_g,
                phi1,
                phi2,
                fidelity: f_base,
                grid_step: base.grid_step(),
                richardson_delta: (f_base - f_fine).abs(),
                norm_drift: drift,
            });
        }
    }
    Ok(rows)
}

/// CSV rendering of sweep rows with the stable column set.
pub fn sweep_to_csv(rows: &[GateFidelityReport]) -> String {
    let mut out =
        String::from("sigma_over_g,kappa_over_g,phi1,phi2,fidelity,grid_step,richardson_delta\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.sigma_over_g,
            row.kappa_over_g,
            row.phi1,
            row.phi2,
            row.fidelity,
            row.grid_step,
            row.richardson_delta
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn overlap_1d(a: &[Complex64], b: &[Complex64], dt: f64) -> Complex64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.conj() * y)
            .sum::<Complex64>()
            * dt
    }

    #[test]
    fn pulse_is_normalized_on_grid() {
        let atom = AtomParams::new(1.0, 1.0).unwrap();
        let pulse = PulseSpec::for_gate(0.5, atom, 8.0, 1.0).unwrap();
        let dt = pulse.step();
        let sum: f64 = (0..pulse.len())
            .map(|j| pulse.xi(pulse.time(j)).powi(2))
            .sum::<f64>()
            * dt;
        assert!((sum - 1.0).abs() < 1e-8);
        pulse.validate_span().unwrap();
        pulse.validate_symmetric().unwrap();
    }

    #[test]
    fn under_resolved_grid_is_rejected() {
        let atom = AtomParams::new(1.0, 1.0).unwrap(); // Gamma = 2
        let pulse = PulseSpec::new(0.3, -20.0, 20.0, 0.2).unwrap(); // step > 1/20
        assert!(matches!(
            pulse.validate_resolution(atom),
            Err(Error::GridUnderResolved { .. })
        ));
    }

    #[test]
    fn narrow_pulse_subtraction_emits_minus_xi() {
        // sigma/Gamma small: output b amplitude approaches -xi(t).
        let atom = AtomParams::new(1.0, 1.0).unwrap(); // Gamma = 2
        let pulse = PulseSpec::for_gate(0.02, atom, 8.0, 1.0).unwrap(); // sigma = 0.02 g
        let (out, residual) = subtract_one_photon(&pulse, atom).unwrap();
        let xi: Vec<Complex64> = (0..pulse.len())
            .map(|j| Complex64::new(pulse.xi(pulse.time(j)), 0.0))
            .collect();
        let overlap = overlap_1d(&xi, &out, pulse.step());
        assert!(
            overlap.norm() > 0.999,
            "subtraction overlap {} too small",
            overlap.norm()
        );
        // The amplitude really is negative relative to xi.
        assert!(overlap.re < -0.999);
        assert!(residual < 1e-6);
    }

    #[test]
    fn broadband_subtraction_is_imperfect() {
        let atom = AtomParams::new(1.0, 1.0).unwrap();
        let pulse = PulseSpec::for_gate(2.0, atom, 8.0, 1.0).unwrap(); // sigma = Gamma
        let (out, _) = subtract_one_photon(&pulse, atom).unwrap();
        let b_norm: f64 = out.iter().map(|x| x.norm_sqr()).sum::<f64>() * pulse.step();
        assert!(b_norm < 0.999, "broadband pulse should leak, got {b_norm}");
    }

    #[test]
    fn markovian_results_depend_only_on_gamma() {
        // Same Gamma from different (g, kappa), same explicit grid.
        let a1 = AtomParams::new(1.0, 2.0).unwrap(); // Gamma = 1
        let a2 = AtomParams::new(2.0, 8.0).unwrap(); // Gamma = 1
        let pulse = PulseSpec::new(0.05, -80.0, 80.0, 0.0125).unwrap();
        let (o1, r1) = subtract_one_photon(&pulse, a1).unwrap();
        let (o2, r2) = subtract_one_photon(&pulse, a2).unwrap();
        assert_eq!(r1, r2);
        assert!(o1
            .iter()
            .zip(&o2)
            .all(|(x, y)| (x - y).norm() == 0.0));
    }

    #[test]
    fn two_photon_subtraction_matches_analytic_form() {
        // Narrow pulse: the ab amplitude approaches
        // -sqrt(2) xi(ta) xi(tb) Theta(ta >= tb). The hard-Theta form is the
        // adiabatic limit; the exact solution replaces the step with an
        // exponential layer exp(Gamma (ta - tb)) below the diagonal, so the
        // plain-step comparison converges only linearly in sigma'/Gamma while
        // the layer-corrected one is sharp.
        let atom = AtomParams::new(1.0, 1.0).unwrap();
        let gamma = atom.gamma();
        let pulse = PulseSpec::for_gate(0.1, atom, 8.0, 1.0).unwrap();
        let pair = subtract_two_photons(&pulse, atom).unwrap();
        let n = pulse.len();
        let mut hard = TwoPhotonAmplitude::zeros(n, pulse.step(), PairKind::DistinctPair);
        let mut layered = TwoPhotonAmplitude::zeros(n, pulse.step(), PairKind::DistinctPair);
        for a in 0..n {
            for b in 0..n {
                let product =
                    -(2.0f64).sqrt() * pulse.xi(pulse.time(a)) * pulse.xi(pulse.time(b));
                if a >= b {
                    hard.set(a, b, Complex64::new(product, 0.0));
                }
                let layer = (gamma * (pulse.time(a) - pulse.time(b))).min(0.0).exp();
                layered.set(a, b, Complex64::new(product * layer, 0.0));
            }
        }
        let cosine = |target: &TwoPhotonAmplitude| {
            let overlap = target.overlap(&pair.ab).unwrap();
            overlap.norm() / (target.norm_sqr().sqrt() * pair.ab.norm_sqr().sqrt())
        };
        assert!(
            cosine(&hard) > 0.99,
            "subtracted state misses the adiabatic form: cosine {}",
            cosine(&hard)
        );
        assert!(
            cosine(&layered) > 0.999,
            "subtracted state misses the layer-corrected form: cosine {}",
            cosine(&layered)
        );
        // Subtraction is nearly complete: the ab branch carries the norm.
        assert!(pair.ab.norm_sqr() > 0.98, "ab norm {}", pair.ab.norm_sqr());
        assert!(pair.excited_norm < 1e-4);
        assert!(pair.norm_drift < 1e-4, "norm drift {}", pair.norm_drift);
    }

    #[test]
    fn adiabatic_agreement_improves_as_the_pulse_narrows() {
        let atom = AtomParams::new(1.0, 1.0).unwrap();
        let mut deficits = Vec::new();
        for sigma in [0.4, 0.2, 0.1] {
            let pulse = PulseSpec::for_gate(sigma, atom, 8.0, 1.0).unwrap();
            let pair = subtract_two_photons(&pulse, atom).unwrap();
            let n = pulse.len();
            let mut hard = TwoPhotonAmplitude::zeros(n, pulse.step(), PairKind::DistinctPair);
            for a in 0..n {
                for b in 0..=a {
                    let value =
                        -(2.0f64).sqrt() * pulse.xi(pulse.time(a)) * pulse.xi(pulse.time(b));
                    hard.set(a, b, Complex64::new(value, 0.0));
                }
            }
            let overlap = hard.overlap(&pair.ab).unwrap();
            let cosine = overlap.norm() / (hard.norm_sqr().sqrt() * pair.ab.norm_sqr().sqrt());
            deficits.push(1.0 - cosine);
        }
        assert!(
            deficits[0] > deficits[1] && deficits[1] > deficits[2],
            "adiabatic deficit not shrinking: {deficits:?}"
        );
    }

    #[test]
    fn norm_is_conserved_through_the_hierarchy() {
        let atom = AtomParams::new(1.0, 1.0).unwrap();
        let pulse = PulseSpec::for_gate(0.6, atom, 8.0, 0.125).unwrap();
        let pair = subtract_two_photons(&pulse, atom).unwrap();
        assert!(
            pair.norm_drift < 1e-6,
            "probe drift {} exceeds 1e-6",
            pair.norm_drift
        );
        let total = pair.ab.norm_sqr() + pair.aa.norm_sqr() + pair.excited_norm;
        assert!((total - 1.0).abs() < 1e-6, "final norm {total}");
    }

    #[test]
    fn reversal_is_an_involution_and_preserves_norm() {
        let atom = AtomParams::new(1.0, 1.0).unwrap();
        let pulse = PulseSpec::for_gate(0.8, atom, 8.0, 1.0).unwrap();
        let pair = subtract_two_photons(&pulse, atom).unwrap();
        let once = phase_and_time_reverse(&pair, &pulse, 0.7, -0.3).unwrap();
        assert!((once.ab.norm_sqr() - pair.ab.norm_sqr()).abs() < 1e-12);
        assert!((once.aa.norm_sqr() - pair.aa.norm_sqr()).abs() < 1e-12);
        let twice = phase_and_time_reverse(&once, &pulse, 0.7, -0.3).unwrap();
        let mut dev: f64 = 0.0;
        for a in 0..pulse.len() {
            for b in 0..pulse.len() {
                dev = dev.max((twice.ab.get(a, b) - pair.ab.get(a, b)).norm());
            }
        }
        assert!(dev < 1e-12, "double reversal deviates by {dev}");
    }

    #[test]
    fn narrow_pulse_addition_recovers_the_product_state() {
        let atom = AtomParams::new(1.0, 1.0).unwrap();
        let pulse = PulseSpec::for_gate(0.1, atom, 8.0, 1.0).unwrap();
        let pair = subtract_two_photons(&pulse, atom).unwrap();
        let reversed = phase_and_time_reverse(&pair, &pulse, 0.0, 0.0).unwrap();
        let added = add_photon(&reversed, &pulse, atom).unwrap();
        let n = pulse.len();
        let mut target = TwoPhotonAmplitude::zeros(n, pulse.step(), PairKind::SymmetricPair);
        for i in 0..n {
            for j in i..n {
                target.set(
                    i,
                    j,
                    Complex64::new(
                        pulse.xi(pulse.time(i)) * pulse.xi(pulse.time(j)) / 2.0f64.sqrt(),
                        0.0,
                    ),
                );
            }
        }
        let overlap = target.overlap(&added.aa).unwrap();
        assert!(
            overlap.norm() > 0.999,
            "addition overlap {} too small",
            overlap.norm()
        );
        assert!(added.norm_drift < 1e-4);
    }

    #[test]
    fn equal_phases_give_unit_fidelity_at_any_bandwidth() {
        for sigma in [0.3, 1.0] {
            let solver = GateSolver::new(sigma, 1.0, GateSolverOptions::default()).unwrap();
            let (f, _) = solver.fidelity(1.1, 1.1).unwrap();
            assert!(
                f > 0.999,
                "perfect time reversal failed at sigma {sigma}: F = {f}"
            );
        }
    }

    #[test]
    fn fidelity_depends_on_the_phase_difference_only() {
        let solver = GateSolver::new(0.8, 1.0, GateSolverOptions::default()).unwrap();
        let (f1, _) = solver.fidelity(0.9, 0.9 - 1.3).unwrap();
        let (f2, _) = solver.fidelity(-0.4, -0.4 - 1.3).unwrap();
        assert!((f1 - f2).abs() < 1e-4, "{f1} vs {f2}");
    }

    #[test]
    fn pi_phase_difference_is_the_minimum() {
        let solver = GateSolver::new(1.0, 1.0, GateSolverOptions::default()).unwrap();
        let mut values = Vec::new();
        for k in 0..=8 {
            let dphi = PI * k as f64 / 8.0;
            let (f, _) = solver.fidelity(0.0, dphi).unwrap();
            values.push(f);
        }
        let min_pos = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(min_pos, 8, "fidelity minimum not at |dphi| = pi: {values:?}");
        // And the curve is non-increasing toward pi.
        for w in values.windows(2) {
            assert!(w[1] <= w[0] + 1e-6);
        }
    }

    #[test]
    fn richardson_delta_is_small() {
        let report = gate_fidelity(1.0, 1.0, 0.0, PI, GateSolverOptions::default()).unwrap();
        assert!(
            report.richardson_delta < 1e-4,
            "richardson delta {}",
            report.richardson_delta
        );
        assert!(report.norm_drift < 2e-3);
    }

    #[test]
    fn sweep_csv_has_expected_header() {
        let rows = gate_sweep(
            &[1.0],
            1.0,
            &[(0.0, 0.0), (0.0, PI)],
            GateSolverOptions::default(),
        )
        .unwrap();
        let csv = sweep_to_csv(&rows);
        assert!(csv.starts_with(
            "sigma_over_g,kappa_over_g,phi1,phi2,fidelity,grid_step,richardson_delta\n"
        ));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn overlap_is_parseval_invariant_under_dft() {
        // The time-domain overlap used by the solver equals the
        // frequency-domain overlap of the transformed amplitudes, with the
        // continuum convention A~(w1, w2) = dt^2/(2 pi) sum A e^{-i w t}.
        let n = 64;
        let dt = 0.25;
        let mut a = TwoPhotonAmplitude::zeros(n, dt, PairKind::DistinctPair);
        let mut b = TwoPhotonAmplitude::zeros(n, dt, PairKind::DistinctPair);
        for i in 0..n {
            for j in 0..n {
                let x = (i as f64 - 32.0) / 8.0;
                let y = (j as f64 - 32.0) / 8.0;
                a.set(i, j, Complex64::new((-0.5 * (x * x + y * y)).exp(), 0.1 * x));
                b.set(i, j, Complex64::new((-0.3 * (x * x + y * y)).exp(), -0.2 * y));
            }
        }
        let mut direct = Complex64::ZERO;
        for i in 0..n {
            for j in 0..n {
                direct += a.get(i, j).conj() * b.get(i, j);
            }
        }
        let direct = direct * dt * dt;
        let dft = |amp: &TwoPhotonAmplitude| -> Vec<Complex64> {
            let mut out = vec![Complex64::ZERO; n * n];
            for p in 0..n {
                for q in 0..n {
                    let mut acc = Complex64::ZERO;
                    for i in 0..n {
                        for j in 0..n {
                            let phase = -2.0 * PI * ((p * i + q * j) % n) as f64 / n as f64;
                            acc += amp.get(i, j) * Complex64::from_polar(1.0, phase);
                        }
                    }
                    out[p * n + q] = acc * dt * dt / (2.0 * PI);
                }
            }
            out
        };
        let fa = dft(&a);
        let fb = dft(&b);
        let dw = 2.0 * PI / (n as f64 * dt);
        let freq = fa
            .iter()
            .zip(&fb)
            .map(|(x, y)| x.conj() * y)
            .sum::<Complex64>()
            * dw
            * dw;
        let rel = (freq / direct - Complex64::ONE).norm();
        assert!(rel < 1e-8, "Parseval mismatch: {rel}");
    }
}
