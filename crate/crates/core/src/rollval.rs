//! Online rolling validation and weighted rolling validation for
//! selecting among streaming estimators.
//!
//! Accounting convention: each arriving sample is evaluated against the
//! previous state, then consumed. After `n` arrivals the accumulator
//! holds `sum_{i=1}^{n-1} i^xi * loss(X_{i+1}, f_i)` (the first sample
//! only initializes the estimators).

use serde::Serialize;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::learners::{self, LearnerSpec, LossKind, OnlineState};
use crate::stats::Kahan;

/// Per-candidate rolling accumulators plus the live online estimators.
/// Single-pass: no sample history is retained.
#[derive(Clone, Debug)]
pub struct RollingState {
    candidates: Vec<OnlineState>,
    acc: Vec<Kahan>,
    xi: f64,
    loss: LossKind,
    step: usize,
}

/// Snapshot for checkpoint reporting.
#[derive(Clone, Debug, Serialize)]
pub struct RollingCheckpoint {
    pub n: usize,
    pub xi: f64,
    pub accumulators: Vec<f64>,
    pub selected: usize,
}

impl RollingState {
    pub fn new(specs: &[LearnerSpec], dim: usize, xi: f64, loss: LossKind) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::invalid("rolling validation needs candidates"));
        }
        if xi < 0.0 {
            return Err(Error::invalid("weight exponent xi must be nonnegative"));
        }
        let candidates = specs
            .iter()
            .map(|s| OnlineState::new(*s, dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(RollingState {
            acc: vec![Kahan::default(); specs.len()],
            candidates,
            xi,
            loss,
            step: 0,
        })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn accumulators(&self) -> Vec<f64> {
        self.acc.iter().map(|k| k.value()).collect()
    }

    pub fn candidate(&self, r: usize) -> &OnlineState {
        &self.candidates[r]
    }

    pub fn checkpoint(&self) -> RollingCheckpoint {
        RollingCheckpoint {
            n: self.step,
            xi: self.xi,
            accumulators: self.accumulators(),
            selected: select(self),
        }
    }
}

/// Consume one arriving sample: score every candidate's current model at
/// the sample (weight `i^xi`, `i` = current step count), then let each
/// candidate ingest it. Evaluate-then-update order is mandatory.
pub fn rolling_update(state: &RollingState, x: &Sample) -> Result<RollingState> {
    let mut next = state.clone();
    let i = state.step;
    if i >= 1 {
        let weight = (i as f64).powf(state.xi);
        for (r, cand) in state.candidates.iter().enumerate() {
            let l = learners::loss(cand.model(), x, state.loss).map_err(|e| {
                Error::invalid(format!("loss failed for candidate {r}: {e}"))
            })?;
            next.acc[r].add(weight * l);
        }
    }
    for (r, cand) in state.candidates.iter().enumerate() {
        next.candidates[r] = learners::online_update(cand, x)?;
    }
    next.step = i + 1;
    Ok(next)
}

/// Argmin of the accumulators; ties -> smallest index.
pub fn select(state: &RollingState) -> usize {
    let acc = state.accumulators();
    let mut best = 0;
    for r in 1..acc.len() {
        if acc[r] < acc[best] {
            best = r;
        }
    }
    best
}

/// Noiseless delay-ratio analysis: feed synthetic per-step risks
/// `psi_{1,i} = a1 * i^{-e1}` and `psi_{2,i} = a2 * i^{-e2}` directly as
/// losses and report the first step where the weighted accumulator of
/// candidate 1 drops below candidate 2's (0 when no crossing occurs).
pub fn noiseless_crossing(
    a1: f64,
    e1: f64,
    a2: f64,
    e2: f64,
    xi: f64,
    max_steps: usize,
) -> usize {
    let mut acc1 = Kahan::default();
    let mut acc2 = Kahan::default();
    for i in 1..=max_steps {
        let w = (i as f64).powf(xi);
        acc1.add(w * a1 * (i as f64).powf(-e1));
        acc2.add(w * a2 * (i as f64).powf(-e2));
        if acc1.value() < acc2.value() {
            return i;
        }
    }
    0
}
