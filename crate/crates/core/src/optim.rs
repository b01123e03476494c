//! Fidelity objectives, analytic reverse-mode gradients, and the Adam
//! training loop with a linearly annealed learning rate.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{inner_product, FockState};
use crate::interferometer::{mzi_transfer, mzi_transfer_derivatives, SplitterError};
use crate::lift::apply_one_body_pair;
use crate::network::{
    apply_factor, factor_sequence, forward_on_modes, validate_errors, validate_mode_map, Factor,
    NetworkParams,
};

/// State fidelity `|<target|out>|`; global-phase invariant, 1 iff the states
/// agree up to phase. Sector mismatch contributes zero, not an error.
pub fn state_fidelity(out: &FockState, target: &FockState) -> Result<f64> {
    Ok(inner_product(target, out)?.norm())
}

/// Training loss `(1 - F)^2`.
pub fn loss_from_fidelity(fidelity: f64) -> f64 {
    let miss = 1.0 - fidelity;
    miss * miss
}

/// Process fidelity `|Tr(V^dag M_eff)|^2 / d^2` of an effective code-space
/// matrix against a target unitary.
pub fn process_fidelity(m_eff: &Array2<Complex64>, target: &Array2<Complex64>) -> f64 {
    let d = m_eff.nrows();
    let mut trace = Complex64::ZERO;
    for k in 0..d {
        for l in 0..d {
            trace += target[(l, k)].conj() * m_eff[(l, k)];
        }
    }
    trace.norm_sqr() / (d * d) as f64
}

/// Average (Haar) fidelity from the process fidelity: `(d F_pro + 1)/(d + 1)`.
pub fn average_fidelity(f_pro: f64, d: usize) -> f64 {
    (d as f64 * f_pro + 1.0) / (d as f64 + 1.0)
}

fn check_orthonormal(code: &[FockState]) -> Result<()> {
    let mut dev: f64 = 0.0;
    for (i, a) in code.iter().enumerate() {
        for (j, b) in code.iter().enumerate() {
            let overlap = inner_product(a, b)?;
            let target = if i == j { Complex64::ONE } else { Complex64::ZERO };
            dev = dev.max((overlap - target).norm());
        }
    }
    if dev > 1e-8 {
        return Err(Error::NonOrthonormalCode { deviation: dev });
    }
    Ok(())
}

/// Average channel fidelity of a dense Fock-space matrix `W` against target
/// `V` on the subspace spanned by distinct input and output code isometries.
pub fn channel_fidelity_between(
    w: &Array2<Complex64>,
    code_in: &[FockState],
    code_out: &[FockState],
    target: &Array2<Complex64>,
) -> Result<f64> {
    check_orthonormal(code_in)?;
    check_orthonormal(code_out)?;
    let d = code_in.len();
    if code_out.len() != d || target.nrows() != d || target.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: code_out.len().max(target.nrows()),
        });
    }
    let mut m_eff = Array2::<Complex64>::zeros((d, d));
    for (k, input) in code_in.iter().enumerate() {
        let sector = input.single_sector()?;
        let dim = sector.basis.len();
        if w.nrows() != dim || w.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: w.nrows(),
            });
        }
        let mut image = vec![Complex64::ZERO; dim];
        for (i, out_amp) in image.iter_mut().enumerate() {
            for (j, amp) in sector.amplitudes.iter().enumerate() {
                *out_amp += w[(i, j)] * amp;
            }
        }
        let image = FockState::from_amplitudes(&sector.basis, image)?;
        for (l, out_state) in code_out.iter().enumerate() {
            m_eff[(l, k)] = inner_product(out_state, &image)?;
        }
    }
    Ok(average_fidelity(process_fidelity(&m_eff, target), d))
}

/// [`channel_fidelity_between`] with one isometry on both sides, matching the
/// plain `P^dag W P` restriction.
pub fn channel_fidelity(
    w: &Array2<Complex64>,
    code: &[FockState],
    target: &Array2<Complex64>,
) -> Result<f64> {
    channel_fidelity_between(w, code, code, target)
}

/// How gradients are obtained during training. The analytic path must match
/// central differences to 1e-6 relative error; both stay available so either
/// can serve as the oracle for the other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMethod {
    Analytic,
    CentralDifference { step: f64 },
}

/// Adam training configuration. Defaults follow the benchmark protocol:
/// 2000 iterations with the learning rate annealed from 0.025 to 0.001.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub gradient: GradientMethod,
    pub record_projections: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            lr_start: 0.025,
            lr_end: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 7,
            gradient: GradientMethod::Analytic,
            record_projections: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.lr_end > self.lr_start {
            return Err(Error::InvalidConfig(
                "lr_end must not exceed lr_start".into(),
            ));
        }
        Ok(())
    }

    /// Learning rate at iteration `t`, linear in the iteration index.
    pub fn learning_rate(&self, t: usize) -> f64 {
        if self.iterations <= 1 {
            return self.lr_start;
        }
        let frac = t as f64 / (self.iterations - 1) as f64;
        self.lr_start + (self.lr_end - self.lr_start) * frac
    }
}

/// Per-iteration loss and fidelity, plus optional per-basis-element
/// projection magnitudes of the output state.
#[derive(Debug, Clone, Default)]
pub struct TrainingTrace {
    pub loss: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub projections: Option<Vec<Vec<f64>>>,
}

impl TrainingTrace {
    /// CSV with columns `iteration,loss,fidelity[,projection_k...]`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let width = self
            .projections
            .as_ref()
            .and_then(|p| p.first())
            .map_or(0, |row| row.len());
        out.push_str("iteration,loss,fidelity");
        for k in 0..width {
            out.push_str(&format!(",projection_{k}"));
        }
        out.push('\n');
        for (i, (loss, fid)) in self.loss.iter().zip(&self.fidelity).enumerate() {
            out.push_str(&format!("{i},{loss},{fid}"));
            if let Some(proj) = &self.projections {
                for value in &proj[i] {
                    out.push_str(&format!(",{value}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// A differentiable training objective over network parameters.
pub trait Objective: Sync {
    /// Fidelity in `[0, 1]` at the given parameters, without errors.
    fn fidelity(&self, params: &NetworkParams) -> Result<f64> {
        self.fidelity_with_errors(params, None)
    }

    /// Fidelity with an optional frozen splitter-error draw.
    fn fidelity_with_errors(
        &self,
        params: &NetworkParams,
        errors: Option<&[Vec<SplitterError>]>,
    ) -> Result<f64>;

    fn loss(&self, params: &NetworkParams) -> Result<f64>;

    /// Loss, fidelity, and the analytic gradient in packing order.
    fn loss_fidelity_gradient(&self, params: &NetworkParams) -> Result<(f64, f64, Vec<f64>)>;

    /// Per-basis-element projection magnitudes for trace logging, when the
    /// objective has a single natural output state.
    fn output_projections(&self, _params: &NetworkParams) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }
}

/// Central-difference gradient of an objective's loss; the independent oracle
/// for the analytic path.
pub fn finite_difference_gradient(
    objective: &dyn Objective,
    params: &NetworkParams,
    step: f64,
) -> Result<Vec<f64>> {
    let flat = params.flat();
    let mut grad = vec![0.0; flat.len()];
    let mut probe = params.clone();
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        plus[i] += step;
        probe.set_flat(&plus)?;
        let up = objective.loss(&probe)?;
        let mut minus = flat.clone();
        minus[i] -= step;
        probe.set_flat(&minus)?;
        let down = objective.loss(&probe)?;
        grad[i] = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

/// Accumulates the complex parameter derivatives of one factor into the
/// packed gradient slice for its network, given the costate after the
/// factor's adjoint and the state before the factor.
pub(crate) fn accumulate_factor_gradient(
    params: &NetworkParams,
    mode_map: &[usize],
    factor: Factor,
    costate: &FockState,
    pre: &FockState,
    grad: &mut [Complex64],
) -> Result<()> {
    let m = params.mode_count();
    let per_layer = m * (m - 1) + 3 * m;
    match factor {
        Factor::Mzi { layer, index } => {
            let mzi = &params.layers()[layer].mesh.mzis[index];
            let u = mzi_transfer(mzi.params(), SplitterError::default());
            let (du_dtheta, du_dphi) =
                mzi_transfer_derivatives(mzi.params(), SplitterError::default());
            let modes = (mode_map[mzi.modes().0], mode_map[mzi.modes().1]);
            let base = layer * per_layer + 2 * index;
            for (offset, du) in [(0, &du_dtheta), (1, &du_dphi)] {
                // h = u^dag du, the Lie-algebra generator of the lift
                let mut h = [[Complex64::ZERO; 2]; 2];
                for r in 0..2 {
                    for c in 0..2 {
                        h[r][c] = u[0][r].conj() * du[0][c] + u[1][r].conj() * du[1][c];
                    }
                }
                let moved = apply_one_body_pair(pre, &h, modes)?;
                grad[base + offset] += inner_product(costate, &moved)?;
            }
        }
        Factor::PhaseScreen { layer } => {
            let base = layer * per_layer + m * (m - 1);
            accumulate_diagonal(costate, pre, mode_map, |occ, acc: &mut [Complex64]| {
                for (k, &n) in occ.iter().enumerate() {
                    acc[k] = Complex64::new(n as f64, 0.0);
                }
            }, &mut grad[base..base + m])?;
        }
        Factor::Nonlinear { layer } => {
            let base = layer * per_layer + m * (m - 1) + m;
            let mut both = vec![Complex64::ZERO; 2 * m];
            accumulate_diagonal(costate, pre, mode_map, |occ, acc: &mut [Complex64]| {
                for (k, &n) in occ.iter().enumerate() {
                    acc[k] = Complex64::new(if n >= 1 { 1.0 } else { 0.0 }, 0.0);
                    acc[m + k] = Complex64::new(n.saturating_sub(1) as f64, 0.0);
                }
            }, &mut both)?;
            for (slot, value) in grad[base..base + 2 * m].iter_mut().zip(&both) {
                *slot += value;
            }
        }
    }
    Ok(())
}

/// `<target| W(params) |input>` together with its complex derivative with
/// respect to every packed parameter, by reverse-mode accumulation through
/// the factor chain.
pub fn overlap_with_gradient(
    params: &NetworkParams,
    mode_map: &[usize],
    input: &FockState,
    target: &FockState,
    final_activation: bool,
) -> Result<(Complex64, Vec<Complex64>)> {
    validate_mode_map(input, params, mode_map)?;
    validate_errors(params, None)?;
    let sequence = factor_sequence(params, final_activation);
    let mut states = Vec::with_capacity(sequence.len() + 1);
    states.push(input.clone());
    for factor in &sequence {
        let next = apply_factor(states.last().unwrap(), params, mode_map, *factor, None, false)?;
        states.push(next);
    }
    let overlap = inner_product(target, states.last().unwrap())?;

    let mut grad = vec![Complex64::ZERO; params.parameter_count()];
    let mut costate = target.clone();
    for (j, factor) in sequence.iter().enumerate().rev() {
        // lambda before this factor, i.e. G^dag applied to the costate
        costate = apply_factor(&costate, params, mode_map, *factor, None, true)?;
        accumulate_factor_gradient(params, mode_map, *factor, &costate, &states[j], &mut grad)?;
    }
    Ok((overlap, grad))
}

/// Accumulates `<lambda| i D |psi>` for a family of diagonal weights `D`
/// produced per basis element by `weights_of`.
fn accumulate_diagonal(
    costate: &FockState,
    pre: &FockState,
    mode_map: &[usize],
    weights_of: impl Fn(&[usize], &mut [Complex64]),
    out: &mut [Complex64],
) -> Result<()> {
    let mut weights = vec![Complex64::ZERO; out.len()];
    let mut mapped = vec![0usize; mode_map.len()];
    for (n, sector) in pre.sectors() {
        let Some(co_sector) = costate.sector(n) else {
            continue;
        };
        for (idx, occ) in sector.basis.occupations().enumerate() {
            let pair = co_sector.amplitudes[idx].conj() * sector.amplitudes[idx];
            if pair == Complex64::ZERO {
                continue;
            }
            for (k, &mode) in mode_map.iter().enumerate() {
                mapped[k] = occ[mode];
            }
            weights_of(&mapped, &mut weights);
            for (slot, w) in out.iter_mut().zip(&weights) {
                *slot += Complex64::i() * w * pair;
            }
        }
    }
    Ok(())
}

/// Objective: drive one input state toward one target state.
pub struct StatePrepObjective {
    pub input: FockState,
    pub target: FockState,
    pub final_activation: bool,
}

impl StatePrepObjective {
    pub fn new(input: FockState, target: FockState) -> Self {
        Self {
            input,
            target,
            final_activation: true,
        }
    }

    fn identity_map(&self, params: &NetworkParams) -> Vec<usize> {
        (0..params.mode_count()).collect()
    }
}

impl Objective for StatePrepObjective {
    fn fidelity_with_errors(
        &self,
        params: &NetworkParams,
        errors: Option<&[Vec<SplitterError>]>,
    ) -> Result<f64> {
        let out = forward_on_modes(
            &self.input,
            params,
            &self.identity_map(params),
            errors,
            self.final_activation,
        )?;
        state_fidelity(&out, &self.target)
    }

    fn loss(&self, params: &NetworkParams) -> Result<f64> {
        Ok(loss_from_fidelity(self.fidelity(params)?))
    }

    fn loss_fidelity_gradient(&self, params: &NetworkParams) -> Result<(f64, f64, Vec<f64>)> {
        let (overlap, d_overlap) = overlap_with_gradient(
            params,
            &self.identity_map(params),
            &self.input,
            &self.target,
            self.final_activation,
        )?;
        let fidelity = overlap.norm();
        let scale = overlap.conj() / fidelity.max(1e-300);
        let grad = d_overlap
            .iter()
            .map(|dc| -2.0 * (1.0 - fidelity) * (scale * dc).re)
            .collect();
        Ok((loss_from_fidelity(fidelity), fidelity, grad))
    }

    fn output_projections(&self, params: &NetworkParams) -> Result<Option<Vec<f64>>> {
        let out = forward_on_modes(
            &self.input,
            params,
            &self.identity_map(params),
            None,
            self.final_activation,
        )?;
        let sector = out.single_sector()?;
        Ok(Some(sector.amplitudes.iter().map(|a| a.norm()).collect()))
    }
}

/// Objective: realize a target unitary `V` between input and output code
/// isometries, scored by the average channel fidelity.
pub struct ChannelObjective {
    pub inputs: Vec<FockState>,
    pub outputs: Vec<FockState>,
    pub target: Array2<Complex64>,
    pub final_activation: bool,
}

impl ChannelObjective {
    pub fn new(
        inputs: Vec<FockState>,
        outputs: Vec<FockState>,
        target: Array2<Complex64>,
    ) -> Result<Self> {
        check_orthonormal(&inputs)?;
        check_orthonormal(&outputs)?;
        if inputs.len() != outputs.len() || target.nrows() != inputs.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                actual: outputs.len().max(target.nrows()),
            });
        }
        Ok(Self {
            inputs,
            outputs,
            target,
            final_activation: true,
        })
    }

    fn dimension(&self) -> usize {
        self.inputs.len()
    }

    /// The costate of input `k` is `sum_l V[l][k] |out_l>`.
    fn costate(&self, k: usize) -> Result<FockState> {
        let mut acc = self.outputs[0].scaled(self.target[(0, k)]);
        for l in 1..self.dimension() {
            acc = acc.add(&self.outputs[l].scaled(self.target[(l, k)]))?;
        }
        Ok(acc)
    }

    fn trace_overlap(
        &self,
        params: &NetworkParams,
        errors: Option<&[Vec<SplitterError>]>,
    ) -> Result<Complex64> {
        let map: Vec<usize> = (0..params.mode_count()).collect();
        let mut trace = Complex64::ZERO;
        for k in 0..self.dimension() {
            let image = forward_on_modes(&self.inputs[k], params, &map, errors, self.final_activation)?;
            trace += inner_product(&self.costate(k)?, &image)?;
        }
        Ok(trace)
    }
}

impl Objective for ChannelObjective {
    fn fidelity_with_errors(
        &self,
        params: &NetworkParams,
        errors: Option<&[Vec<SplitterError>]>,
    ) -> Result<f64> {
        let d = self.dimension();
        let trace = self.trace_overlap(params, errors)?;
        Ok(average_fidelity(trace.norm_sqr() / (d * d) as f64, d))
    }

    fn loss(&self, params: &NetworkParams) -> Result<f64> {
        Ok(loss_from_fidelity(self.fidelity(params)?))
    }

    fn loss_fidelity_gradient(&self, params: &NetworkParams) -> Result<(f64, f64, Vec<f64>)> {
        let d = self.dimension();
        let map: Vec<usize> = (0..params.mode_count()).collect();
        let mut trace = Complex64::ZERO;
        let mut d_trace = vec![Complex64::ZERO; params.parameter_count()];
        for k in 0..d {
            let (c_k, grad_k) = overlap_with_gradient(
                params,
                &map,
                &self.inputs[k],
                &self.costate(k)?,
                self.final_activation,
            )?;
            trace += c_k;
            for (acc, g) in d_trace.iter_mut().zip(&grad_k) {
                *acc += g;
            }
        }
        let f_pro = trace.norm_sqr() / (d * d) as f64;
        let fidelity = average_fidelity(f_pro, d);
        // dF_av/dp = d/(d+1) * 2 Re(conj(tr) dtr/dp) / d^2
        let prefactor = (d as f64 / (d as f64 + 1.0)) * 2.0 / (d * d) as f64;
        let grad = d_trace
            .iter()
            .map(|dc| {
                let df = prefactor * (trace.conj() * dc).re;
                -2.0 * (1.0 - fidelity) * df
            })
            .collect();
        Ok((loss_from_fidelity(fidelity), fidelity, grad))
    }
}

/// Objective: mean of per-pair state-preparation losses, used for jointly
/// trained multi-sector tasks such as the routing gate.
pub struct MultiPairObjective {
    pub pairs: Vec<(FockState, FockState)>,
    pub final_activation: bool,
}

impl MultiPairObjective {
    pub fn new(pairs: Vec<(FockState, FockState)>) -> Self {
        Self {
            pairs,
            final_activation: true,
        }
    }

    pub fn per_pair_fidelities(
        &self,
        params: &NetworkParams,
        errors: Option<&[Vec<SplitterError>]>,
    ) -> Result<Vec<f64>> {
        let map: Vec<usize> = (0..params.mode_count()).collect();
        self.pairs
            .iter()
            .map(|(input, target)| {
                let out = forward_on_modes(input, params, &map, errors, self.final_activation)?;
                state_fidelity(&out, target)
            })
            .collect()
    }
}

impl Objective for MultiPairObjective {
    fn fidelity_with_errors(
        &self,
        params: &NetworkParams,
        errors: Option<&[Vec<SplitterError>]>,
    ) -> Result<f64> {
        let fids = self.per_pair_fidelities(params, errors)?;
        Ok(fids.iter().sum::<f64>() / fids.len() as f64)
    }

    fn loss(&self, params: &NetworkParams) -> Result<f64> {
        let fids = self.per_pair_fidelities(params, None)?;
        Ok(fids.iter().map(|&f| loss_from_fidelity(f)).sum::<f64>() / fids.len() as f64)
    }

    fn loss_fidelity_gradient(&self, params: &NetworkParams) -> Result<(f64, f64, Vec<f64>)> {
        let map: Vec<usize> = (0..params.mode_count()).collect();
        let count = self.pairs.len() as f64;
        let mut loss = 0.0;
        let mut fid_sum = 0.0;
        let mut grad = vec![0.0; params.parameter_count()];
        for (input, target) in &self.pairs {
            let (overlap, d_overlap) =
                overlap_with_gradient(params, &map, input, target, self.final_activation)?;
            let fidelity = overlap.norm();
            fid_sum += fidelity;
            loss += loss_from_fidelity(fidelity);
            let scale = overlap.conj() / fidelity.max(1e-300);
            for (slot, dc) in grad.iter_mut().zip(&d_overlap) {
                *slot += -2.0 * (1.0 - fidelity) * (scale * dc).re / count;
            }
        }
        Ok((loss / count, fid_sum / count, grad))
    }
}

/// Adam minimization over a flat parameter vector. `eval` returns
/// `(loss, fidelity, gradient)` at the current point and may record extras
/// through its captures; the loop itself is deterministic.
pub fn adam_minimize(
    flat0: Vec<f64>,
    cfg: &TrainConfig,
    mut eval: impl FnMut(&[f64], usize) -> Result<(f64, f64, Vec<f64>)>,
) -> Result<(Vec<f64>, TrainingTrace)> {
    cfg.validate()?;
    let mut flat = flat0;
    let n = flat.len();
    let mut m = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];
    let mut trace = TrainingTrace::default();
    for t in 0..cfg.iterations {
        let (loss, fidelity, grad) = eval(&flat, t)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: t });
        }
        trace.loss.push(loss);
        trace.fidelity.push(fidelity);
        let lr = cfg.learning_rate(t);
        let step = (t + 1) as f64;
        let bias1 = 1.0 - cfg.beta1.powf(step);
        let bias2 = 1.0 - cfg.beta2.powf(step);
        for i in 0..n {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            flat[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok((flat, trace))
}

/// Adam minimization of an objective. The trace records loss and fidelity at
/// the parameters used for each iteration's update; deterministic given the
/// config and gradient method.
pub fn train(
    params0: &NetworkParams,
    objective: &dyn Objective,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, TrainingTrace)> {
    let mut params = params0.clone();
    let mut projections: Vec<Vec<f64>> = Vec::new();
    let record = cfg.record_projections;
    let (flat, mut trace) = adam_minimize(params0.flat(), cfg, |flat, _t| {
        params.set_flat(flat)?;
        if record {
            projections.push(objective.output_projections(&params)?.unwrap_or_default());
        }
        match cfg.gradient {
            GradientMethod::Analytic => objective.loss_fidelity_gradient(&params),
            GradientMethod::CentralDifference { step } => {
                let fidelity = objective.fidelity(&params)?;
                let loss = objective.loss(&params)?;
                let grad = finite_difference_gradient(objective, &params, step)?;
                Ok((loss, fidelity, grad))
            }
        }
    })?;
    params.set_flat(&flat)?;
    if record {
        trace.projections = Some(projections);
    }
    Ok((params, trace))
}
