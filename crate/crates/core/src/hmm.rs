//! Left-to-right hidden Markov model with one diagonal Gaussian per state.
//!
//! The topology is fixed: every path starts in state 0, and state `i` may
//! only stay (`i -> i`) or advance (`i -> i+1`); the last state loops on
//! itself. Training is multi-sequence Baum-Welch with a uniform-segmentation
//! start. All probabilities are handled in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dataset, FeatureSequence, FrameSet, StateLabel};

pub const DEFAULT_STATES: usize = 5;
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const ROW_SUM_TOL: f64 = 1e-9;

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Serialized form; converted through [`HmmModel::new`] so a loaded model is
/// always validated.
#[derive(Serialize, Deserialize)]
struct RawModel {
    n_states: usize,
    dim: usize,
    start: Vec<f64>,
    transitions: Vec<Vec<f64>>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct HmmModel {
    start: Vec<f64>,
    transitions: Vec<Vec<f64>>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl TryFrom<RawModel> for HmmModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        let m = HmmModel::new(raw.start, raw.transitions, raw.means, raw.variances)?;
        if m.n_states() != raw.n_states || m.dim() != raw.dim {
            return Err(Error::validation(format!(
                "model header says {} states of dimension {}, parameters have {} of dimension {}",
                raw.n_states,
                raw.dim,
                m.n_states(),
                m.dim()
            )));
        }
        Ok(m)
    }
}

impl From<HmmModel> for RawModel {
    fn from(m: HmmModel) -> Self {
        RawModel {
            n_states: m.n_states(),
            dim: m.dim(),
            start: m.start,
            transitions: m.transitions,
            means: m.means,
            variances: m.variances,
        }
    }
}

impl HmmModel {
    /// Validates and wraps model parameters.
    pub fn new(
        start: Vec<f64>,
        transitions: Vec<Vec<f64>>,
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = start.len();
        if n == 0 {
            return Err(Error::validation("model needs at least one state"));
        }
        if transitions.len() != n || means.len() != n || variances.len() != n {
            return Err(Error::validation(format!(
                "parameter blocks disagree on the state count ({n} start probabilities)"
            )));
        }
        if start[0] != 1.0 || start[1..].iter().any(|&p| p != 0.0) {
            return Err(Error::validation(
                "left-to-right model must start in state 0 with probability 1",
            ));
        }
        for (i, row) in transitions.iter().enumerate() {
            if row.len() != n {
                return Err(Error::validation(format!(
                    "transition row {i} has {} entries",
                    row.len()
                )));
            }
            for (j, &p) in row.iter().enumerate() {
                let allowed = j == i || j == i + 1;
                if !(p.is_finite() && p >= 0.0) || (!allowed && p != 0.0) {
                    return Err(Error::validation(format!(
                        "transition {i}->{j} = {p} breaks the left-to-right structure"
                    )));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::validation(format!(
                    "transition row {i} sums to {sum}"
                )));
            }
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::validation("emission dimension must be at least 1"));
        }
        for i in 0..n {
            if means[i].len() != dim || variances[i].len() != dim {
                return Err(Error::validation(format!(
                    "state {i} emission has the wrong dimension"
                )));
            }
            if means[i].iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("state {i} mean is not finite")));
            }
            if variances[i].iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                return Err(Error::validation(format!(
                    "state {i} variance must be positive"
                )));
            }
        }
        Ok(HmmModel {
            start,
            transitions,
            means,
            variances,
        })
    }

    pub fn n_states(&self) -> usize {
        self.start.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.transitions
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    /// Log density of `x` under state `i`'s Gaussian.
    pub fn log_emission(&self, i: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((xd, mu), var) in x.iter().zip(&self.means[i]).zip(&self.variances[i]) {
            let diff = xd - mu;
            acc += LN_2PI + var.ln() + diff * diff / var;
        }
        -0.5 * acc
    }

    fn check_dim(&self, seq: &FeatureSequence) -> Result<()> {
        if seq.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: seq.dim(),
            });
        }
        Ok(())
    }

    fn log_transitions(&self) -> Vec<Vec<f64>> {
        self.transitions
            .iter()
            .map(|row| row.iter().map(|p| p.ln()).collect())
            .collect()
    }

    /// `log p(seq | model)` by the forward algorithm.
    pub fn log_likelihood(&self, seq: &FeatureSequence) -> Result<f64> {
        self.check_dim(seq)?;
        if seq.is_empty() {
            return Err(Error::validation("cannot score an empty sequence"));
        }
        let lattice = Lattice::new(self, seq);
        Ok(lattice.log_likelihood)
    }
}

/// Forward-backward quantities of one sequence under one model.
struct Lattice {
    /// `emit[t][i]`: log emission density.
    emit: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
    log_likelihood: f64,
}

impl Lattice {
    fn new(model: &HmmModel, seq: &FeatureSequence) -> Self {
        let n = model.n_states();
        let len = seq.len();
        let log_a = model.log_transitions();
        let emit: Vec<Vec<f64>> = seq
            .steps()
            .map(|x| (0..n).map(|i| model.log_emission(i, x)).collect())
            .collect();

        let mut alpha = vec![vec![f64::NEG_INFINITY; n]; len];
        for i in 0..n {
            alpha[0][i] = model.start[i].ln() + emit[0][i];
        }
        for t in 1..len {
            for j in 0..n {
                let prev = &alpha[t - 1];
                let incoming = (0..n).map(|i| prev[i] + log_a[i][j]);
                alpha[t][j] = log_sum_exp(incoming) + emit[t][j];
            }
        }
        let log_likelihood = log_sum_exp(alpha[len - 1].iter().copied());
        Lattice {
            emit,
            alpha,
            log_likelihood,
        }
    }

    fn beta(&self, log_a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let len = self.alpha.len();
        let n = log_a.len();
        let mut beta = vec![vec![0.0; n]; len];
        for t in (0..len - 1).rev() {
            for i in 0..n {
                let next = &beta[t + 1];
                let emit = &self.emit[t + 1];
                beta[t][i] = log_sum_exp((0..n).map(|j| log_a[i][j] + emit[j] + next[j]));
            }
        }
        beta
    }
}

/// Hyperparameters of Baum-Welch training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub n_states: usize,
    pub max_iters: usize,
    /// Stop once the relative total log-likelihood gain drops below this.
    pub ll_tol: f64,
    pub variance_floor: f64,
    /// Unused by the deterministic initialization.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_states: DEFAULT_STATES,
            max_iters: 100,
            ll_tol: 1e-6,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.n_states == 0 {
            return Err(Error::validation("n_states must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::validation("max_iters must be at least 1"));
        }
        if !(self.ll_tol > 0.0) {
            return Err(Error::validation("ll_tol must be positive"));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(Error::validation("variance_floor must be positive"));
        }
        Ok(())
    }
}

fn check_training_set(seqs: &[FeatureSequence]) -> Result<usize> {
    let Some(first) = seqs.first() else {
        return Err(Error::validation("training needs at least one sequence"));
    };
    let dim = first.dim();
    for s in seqs {
        if s.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.dim(),
            });
        }
    }
    Ok(dim)
}

/// Uniform-segmentation start with [`DEFAULT_VARIANCE_FLOOR`].
pub fn init_model(n_states: usize, seqs: &[FeatureSequence]) -> Result<HmmModel> {
    init_model_with_floor(n_states, seqs, DEFAULT_VARIANCE_FLOOR)
}

/// Cuts every sequence into `n_states` contiguous, near-equal segments
/// (segment `k` covers steps `k*L/n .. (k+1)*L/n`) and gives state `k` the
/// pooled mean and variance of all `k`-th segments. Transitions start at
/// 0.5 stay / 0.5 advance.
pub fn init_model_with_floor(
    n_states: usize,
    seqs: &[FeatureSequence],
    variance_floor: f64,
) -> Result<HmmModel> {
    if n_states == 0 {
        return Err(Error::validation("n_states must be at least 1"));
    }
    let dim = check_training_set(seqs)?;
    if let Some(i) = seqs.iter().position(|s| s.len() < n_states) {
        return Err(Error::validation(format!(
            "training sequence {i} has {} steps, fewer than the {n_states} states",
            seqs[i].len()
        )));
    }

    let segment = |s: &FeatureSequence, k: usize| {
        let len = s.len();
        (k * len / n_states)..((k + 1) * len / n_states)
    };
    let mut means = vec![vec![0.0; dim]; n_states];
    let mut variances = vec![vec![0.0; dim]; n_states];
    for k in 0..n_states {
        let mut count = 0usize;
        for s in seqs {
            for t in segment(s, k) {
                count += 1;
                for (m, v) in means[k].iter_mut().zip(s.step(t)) {
                    *m += v;
                }
            }
        }
        means[k].iter_mut().for_each(|m| *m /= count as f64);
        for s in seqs {
            for t in segment(s, k) {
                for ((acc, v), m) in variances[k].iter_mut().zip(s.step(t)).zip(&means[k]) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        variances[k]
            .iter_mut()
            .for_each(|v| *v = (*v / count as f64).max(variance_floor));
    }

    let mut start = vec![0.0; n_states];
    start[0] = 1.0;
    let transitions = (0..n_states)
        .map(|i| {
            let mut row = vec![0.0; n_states];
            if i + 1 < n_states {
                row[i] = 0.5;
                row[i + 1] = 0.5;
            } else {
                row[i] = 1.0;
            }
            row
        })
        .collect();
    HmmModel::new(start, transitions, means, variances)
}

/// Multi-sequence Baum-Welch.
///
/// Returns the trained model and the total log-likelihood of every model
/// visited: `trace[0]` scores `m0` and `trace.last()` scores the returned
/// model. Training stops after `cfg.max_iters` re-estimations or once the
/// relative gain falls below `cfg.ll_tol`. Zero transition and start
/// probabilities stay exactly zero.
pub fn baum_welch(
    m0: &HmmModel,
    seqs: &[FeatureSequence],
    cfg: &TrainConfig,
) -> Result<(HmmModel, Vec<f64>)> {
    cfg.validate()?;
    check_training_set(seqs)?;
    for s in seqs {
        m0.check_dim(s)?;
    }

    let mut model = m0.clone();
    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    for iter in 0..=cfg.max_iters {
        let stats = EStep::run(&model, seqs);
        trace.push(stats.total_ll);
        if iter > 0 {
            let prev = trace[iter - 1];
            let gain = (stats.total_ll - prev) / prev.abs().max(f64::MIN_POSITIVE);
            if gain < cfg.ll_tol {
                break;
            }
        }
        if iter == cfg.max_iters {
            break;
        }
        model = stats.maximize(&model, seqs, cfg.variance_floor)?;
    }
    Ok((model, trace))
}

/// Expected sufficient statistics pooled over all training sequences.
struct EStep {
    total_ll: f64,
    /// Per sequence, `gamma[t][i]` state posteriors.
    gammas: Vec<Vec<Vec<f64>>>,
    /// Expected transition counts.
    xi: Vec<Vec<f64>>,
}

impl EStep {
    fn run(model: &HmmModel, seqs: &[FeatureSequence]) -> Self {
        let n = model.n_states();
        let log_a = model.log_transitions();
        let mut total_ll = 0.0;
        let mut gammas = Vec::with_capacity(seqs.len());
        let mut xi = vec![vec![0.0; n]; n];

        for seq in seqs {
            let lattice = Lattice::new(model, seq);
            let beta = lattice.beta(&log_a);
            let ll = lattice.log_likelihood;
            total_ll += ll;

            let gamma: Vec<Vec<f64>> = lattice
                .alpha
                .iter()
                .zip(&beta)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x + y - ll).exp()).collect())
                .collect();
            gammas.push(gamma);

            for t in 0..seq.len().saturating_sub(1) {
                for i in 0..n {
                    for j in 0..n {
                        if log_a[i][j] == f64::NEG_INFINITY {
                            continue;
                        }
                        xi[i][j] += (lattice.alpha[t][i]
                            + log_a[i][j]
                            + lattice.emit[t + 1][j]
                            + beta[t + 1][j]
                            - ll)
                            .exp();
                    }
                }
            }
        }
        EStep {
            total_ll,
            gammas,
            xi,
        }
    }

    fn maximize(&self, model: &HmmModel, seqs: &[FeatureSequence], floor: f64) -> Result<HmmModel> {
        let n = model.n_states();
        let dim = model.dim();

        let transitions = (0..n)
            .map(|i| {
                let total: f64 = self.xi[i].iter().sum();
                if total > 0.0 {
                    self.xi[i].iter().map(|x| x / total).collect()
                } else {
                    model.transitions[i].clone()
                }
            })
            .collect();

        let mut weight = vec![0.0; n];
        let mut means = vec![vec![0.0; dim]; n];
        for (seq, gamma) in seqs.iter().zip(&self.gammas) {
            for (x, g) in seq.steps().zip(gamma) {
                for i in 0..n {
                    weight[i] += g[i];
                    for (m, v) in means[i].iter_mut().zip(x) {
                        *m += g[i] * v;
                    }
                }
            }
        }
        for i in 0..n {
            if weight[i] > 0.0 {
                means[i].iter_mut().for_each(|m| *m /= weight[i]);
            } else {
                means[i] = model.means[i].clone();
            }
        }

        let mut variances = vec![vec![0.0; dim]; n];
        for (seq, gamma) in seqs.iter().zip(&self.gammas) {
            for (x, g) in seq.steps().zip(gamma) {
                for i in 0..n {
                    for ((acc, v), m) in variances[i].iter_mut().zip(x).zip(&means[i]) {
                        *acc += g[i] * (v - m) * (v - m);
                    }
                }
            }
        }
        for i in 0..n {
            if weight[i] > 0.0 {
                variances[i]
                    .iter_mut()
                    .for_each(|v| *v = (*v / weight[i]).max(floor));
            } else {
                variances[i] = model.variances[i].clone();
            }
        }

        HmmModel::new(model.start.clone(), transitions, means, variances)
    }
}

/// A pair of class models scored against each other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoClassModel {
    pub rest: HmmModel,
    #[serde(rename = "move")]
    pub motion: HmmModel,
}

impl TwoClassModel {
    pub fn dim(&self) -> usize {
        self.rest.dim()
    }

    /// Label of the model with the larger log-likelihood; an exact tie is
    /// `Rest`.
    pub fn classify(&self, seq: &FeatureSequence) -> Result<StateLabel> {
        let rest = self.rest.log_likelihood(seq)?;
        let motion = self.motion.log_likelihood(seq)?;
        Ok(if motion > rest {
            StateLabel::Move
        } else {
            StateLabel::Rest
        })
    }
}

pub fn classify(models: &TwoClassModel, seq: &FeatureSequence) -> Result<StateLabel> {
    models.classify(seq)
}

/// Initializes and trains one model on `seqs`.
pub fn train_model(seqs: &[FeatureSequence], cfg: &TrainConfig) -> Result<HmmModel> {
    cfg.validate()?;
    let m0 = init_model_with_floor(cfg.n_states, seqs, cfg.variance_floor)?;
    Ok(baum_welch(&m0, seqs, cfg)?.0)
}

/// Trains the two class models on already extracted features.
pub fn train_pair(
    rest: &[FeatureSequence],
    motion: &[FeatureSequence],
    cfg: &TrainConfig,
) -> Result<TwoClassModel> {
    for (label, seqs) in [(StateLabel::Rest, rest), (StateLabel::Move, motion)] {
        if seqs.is_empty() {
            return Err(Error::validation(format!(
                "no {label} sequences to train on"
            )));
        }
    }
    let (rest, motion) = rayon::join(|| train_model(rest, cfg), || train_model(motion, cfg));
    let (rest, motion) = (rest?, motion?);
    if rest.dim() != motion.dim() {
        return Err(Error::DimensionMismatch {
            expected: rest.dim(),
            found: motion.dim(),
        });
    }
    Ok(TwoClassModel { rest, motion })
}

/// Extracts features from every frame set and trains one model per label.
pub fn train_classifier<F>(
    dataset: &Dataset,
    extractor: F,
    cfg: &TrainConfig,
) -> Result<TwoClassModel>
where
    F: Fn(&FrameSet) -> Result<FeatureSequence>,
{
    let mut rest = Vec::new();
    let mut motion = Vec::new();
    for (i, fs) in dataset.frame_sets().iter().enumerate() {
        let seq = extractor(fs)?;
        match dataset.label(i) {
            StateLabel::Rest => rest.push(seq),
            StateLabel::Move => motion.push(seq),
        }
    }
    train_pair(&rest, &motion, cfg)
}
