//! Feature mappings for the Q-function and reward models: one-hot encodings
//! for tabular settings, per-action intercept-plus-linear blocks for the
//! continuous test bed.

use crate::error::{Error, Result};

/// A state component as seen by an agent: either an index into a finite set
/// or a vector of (already standardized) continuous values.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Idx(usize),
    Vec(Vec<f64>),
}

impl State {
    pub fn idx(&self) -> usize {
        match self {
            State::Idx(i) => *i,
            State::Vec(_) => panic!("expected a discrete state"),
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            State::Vec(v) => v,
            State::Idx(_) => panic!("expected a continuous state"),
        }
    }
}

/// A feature vector. One-hot rows keep their index and per-action block
/// layouts keep only their populated contiguous block, so downstream linear
/// algebra touches only the nonzero support.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureVector {
    OneHot { index: usize, dim: usize },
    /// Zeros everywhere except `values` starting at `offset`.
    Block {
        offset: usize,
        values: Vec<f64>,
        dim: usize,
    },
    Dense(Vec<f64>),
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        match self {
            FeatureVector::OneHot { dim, .. } => *dim,
            FeatureVector::Block { dim, .. } => *dim,
            FeatureVector::Dense(v) => v.len(),
        }
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        match self {
            FeatureVector::OneHot { index, dim } => {
                debug_assert_eq!(weights.len(), *dim);
                weights[*index]
            }
            FeatureVector::Block { offset, values, dim } => {
                debug_assert_eq!(weights.len(), *dim);
                values
                    .iter()
                    .zip(&weights[*offset..])
                    .map(|(a, b)| a * b)
                    .sum()
            }
            FeatureVector::Dense(v) => {
                debug_assert_eq!(weights.len(), v.len());
                v.iter().zip(weights).map(|(a, b)| a * b).sum()
            }
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            FeatureVector::OneHot { index, dim } => {
                let mut v = vec![0.0; *dim];
                v[*index] = 1.0;
                v
            }
            FeatureVector::Block { offset, values, dim } => {
                let mut v = vec![0.0; *dim];
                v[*offset..*offset + values.len()].copy_from_slice(values);
                v
            }
            FeatureVector::Dense(v) => v.clone(),
        }
    }
}

/// Cardinalities of the discrete components encoded by [`one_hot`]. Callers
/// that need an NA value reserve an extra level for it.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceSpec {
    cards: Vec<usize>,
}

impl SpaceSpec {
    pub fn new(cards: Vec<usize>) -> Result<Self> {
        if cards.contains(&0) {
            return Err(Error::invalid("every cardinality must be >= 1"));
        }
        Ok(SpaceSpec { cards })
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    /// Total one-hot dimension: the product of all cardinalities.
    pub fn dim(&self) -> usize {
        self.cards.iter().product()
    }

    /// Mixed-radix position of an index tuple; the first component is the
    /// most significant digit.
    pub fn index_of(&self, indices: &[usize]) -> Result<usize> {
        if indices.len() != self.cards.len() {
            return Err(Error::invalid(format!(
                "expected {} indices, got {}",
                self.cards.len(),
                indices.len()
            )));
        }
        let mut pos = 0usize;
        for (&i, &c) in indices.iter().zip(&self.cards) {
            if i >= c {
                return Err(Error::invalid(format!(
                    "index {i} out of range for cardinality {c}"
                )));
            }
            pos = pos * c + i;
        }
        Ok(pos)
    }
}

/// One-hot encoding of an index tuple under `spec`.
pub fn one_hot(spec: &SpaceSpec, indices: &[usize]) -> Result<FeatureVector> {
    Ok(FeatureVector::OneHot {
        index: spec.index_of(indices)?,
        dim: spec.dim(),
    })
}

/// Intercept-plus-state features replicated per action level, with only the
/// chosen action's block populated. Dimension: `action_levels * (1 + state.len())`.
pub fn linear_features(state: &[f64], action_levels: usize, action: usize) -> Result<FeatureVector> {
    if action_levels == 0 || action >= action_levels {
        return Err(Error::invalid(format!(
            "action {action} out of range for {action_levels} levels"
        )));
    }
    if state.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite state entry"));
    }
    let block = 1 + state.len();
    let mut v = vec![0.0; action_levels * block];
    let base = action * block;
    v[base] = 1.0;
    v[base + 1..base + block].copy_from_slice(state);
    Ok(FeatureVector::Dense(v))
}

/// Which Q-model featurization a fit uses.
///
/// `DyadicLow` is the per-period map of the hierarchical low-level agent: the
/// high action is part of the state and the action slot ranges over low
/// actions only. `Composite` is the map the flat baselines share: the high
/// action rides in the action slot so a joint (high, low) choice is a single
/// argmax. In tabular mode the two produce identical one-hot cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QKind {
    DyadicLow,
    Composite,
}

/// Concrete feature layout for one environment family.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureScheme {
    Tabular {
        high_states: usize,
        high_actions: usize,
        low_states: usize,
        low_actions: usize,
    },
    Linear {
        high_dim: usize,
        low_dim: usize,
        high_actions: usize,
        low_actions: usize,
    },
}

impl FeatureScheme {
    pub fn high_actions(&self) -> usize {
        match self {
            FeatureScheme::Tabular { high_actions, .. }
            | FeatureScheme::Linear { high_actions, .. } => *high_actions,
        }
    }

    pub fn low_actions(&self) -> usize {
        match self {
            FeatureScheme::Tabular { low_actions, .. }
            | FeatureScheme::Linear { low_actions, .. } => *low_actions,
        }
    }

    pub fn is_tabular(&self) -> bool {
        matches!(self, FeatureScheme::Tabular { .. })
    }

    pub fn low_states(&self) -> Option<usize> {
        match self {
            FeatureScheme::Tabular { low_states, .. } => Some(*low_states),
            FeatureScheme::Linear { .. } => None,
        }
    }

    /// Dimension of the reward-model features of the high-level agent.
    pub fn psi_dim(&self) -> usize {
        match self {
            FeatureScheme::Tabular {
                high_states,
                high_actions,
                ..
            } => high_states * high_actions,
            FeatureScheme::Linear {
                high_dim,
                high_actions,
                ..
            } => high_actions * (1 + high_dim),
        }
    }

    pub fn q_dim(&self, kind: QKind) -> usize {
        match (self, kind) {
            (
                FeatureScheme::Tabular {
                    high_states,
                    high_actions,
                    low_states,
                    low_actions,
                },
                _,
            ) => high_states * high_actions * low_states * low_actions,
            (
                FeatureScheme::Linear {
                    high_dim,
                    low_dim,
                    low_actions,
                    ..
                },
                QKind::DyadicLow,
            ) => low_actions * (1 + high_dim + 1 + low_dim),
            (
                FeatureScheme::Linear {
                    high_dim,
                    low_dim,
                    high_actions,
                    low_actions,
                },
                QKind::Composite,
            ) => high_actions * low_actions * (1 + high_dim + low_dim),
        }
    }

    /// ψ(s_high, a_high) of the high-level Thompson Sampling agent.
    pub fn psi(&self, high: &State, a_high: usize) -> FeatureVector {
        match self {
            FeatureScheme::Tabular {
                high_states,
                high_actions,
                ..
            } => {
                let h = high.idx();
                assert!(h < *high_states && a_high < *high_actions);
                FeatureVector::OneHot {
                    index: h * high_actions + a_high,
                    dim: high_states * high_actions,
                }
            }
            FeatureScheme::Linear {
                high_dim,
                high_actions,
                ..
            } => {
                let hv = high.values();
                assert_eq!(hv.len(), *high_dim);
                assert!(a_high < *high_actions);
                let block = 1 + high_dim;
                let mut values = Vec::with_capacity(block);
                values.push(1.0);
                values.extend_from_slice(hv);
                FeatureVector::Block {
                    offset: a_high * block,
                    values,
                    dim: high_actions * block,
                }
            }
        }
    }

    /// θᵀψ(s_high, a_high) without materializing the feature vector.
    pub fn psi_value(&self, theta: &[f64], high: &State, a_high: usize) -> f64 {
        match self {
            FeatureScheme::Tabular { high_actions, .. } => {
                theta[high.idx() * high_actions + a_high]
            }
            FeatureScheme::Linear { high_dim, .. } => {
                let base = a_high * (1 + high_dim);
                theta[base]
                    + high
                        .values()
                        .iter()
                        .zip(&theta[base + 1..])
                        .map(|(x, w)| x * w)
                        .sum::<f64>()
            }
        }
    }

    /// Q features of a composite (high state, high action, low state) and a
    /// low action, under either featurization.
    pub fn q_features(
        &self,
        kind: QKind,
        high: &State,
        a_high: usize,
        low: &State,
        a_low: usize,
    ) -> FeatureVector {
        match self {
            FeatureScheme::Tabular {
                high_states,
                high_actions,
                low_states,
                low_actions,
            } => {
                let (h, l) = (high.idx(), low.idx());
                assert!(
                    h < *high_states && a_high < *high_actions && l < *low_states && a_low < *low_actions
                );
                let index = ((h * high_actions + a_high) * low_states + l) * low_actions + a_low;
                FeatureVector::OneHot {
                    index,
                    dim: self.q_dim(kind),
                }
            }
            FeatureScheme::Linear {
                high_dim,
                low_dim,
                high_actions,
                low_actions,
            } => {
                let hv = high.values();
                let lv = low.values();
                assert_eq!(hv.len(), *high_dim);
                assert_eq!(lv.len(), *low_dim);
                match kind {
                    QKind::DyadicLow => {
                        let block = 1 + high_dim + 1 + low_dim;
                        let mut values = Vec::with_capacity(block);
                        values.push(1.0);
                        values.extend_from_slice(hv);
                        values.push(a_high as f64);
                        values.extend_from_slice(lv);
                        FeatureVector::Block {
                            offset: a_low * block,
                            values,
                            dim: low_actions * block,
                        }
                    }
                    QKind::Composite => {
                        let block = 1 + high_dim + low_dim;
                        let mut values = Vec::with_capacity(block);
                        values.push(1.0);
                        values.extend_from_slice(hv);
                        values.extend_from_slice(lv);
                        FeatureVector::Block {
                            offset: (a_high * low_actions + a_low) * block,
                            values,
                            dim: high_actions * low_actions * block,
                        }
                    }
                }
            }
        }
    }

    /// θᵀf(composite state, action) without materializing the feature vector.
    pub fn q_value(
        &self,
        kind: QKind,
        high: &State,
        a_high: usize,
        low: &State,
        a_low: usize,
        theta: &[f64],
    ) -> f64 {
        match self {
            FeatureScheme::Tabular {
                high_actions,
                low_states,
                low_actions,
                ..
            } => {
                let index = ((high.idx() * high_actions + a_high) * low_states + low.idx())
                    * low_actions
                    + a_low;
                theta[index]
            }
            FeatureScheme::Linear {
                high_dim,
                low_dim,
                low_actions,
                ..
            } => {
                let hv = high.values();
                let lv = low.values();
                match kind {
                    QKind::DyadicLow => {
                        let block = 1 + high_dim + 1 + low_dim;
                        let base = a_low * block;
                        let mut v = theta[base] + theta[base + 1 + high_dim] * a_high as f64;
                        for (x, w) in hv.iter().zip(&theta[base + 1..]) {
                            v += x * w;
                        }
                        for (x, w) in lv.iter().zip(&theta[base + 2 + high_dim..]) {
                            v += x * w;
                        }
                        v
                    }
                    QKind::Composite => {
                        let block = 1 + high_dim + low_dim;
                        let base = (a_high * low_actions + a_low) * block;
                        let mut v = theta[base];
                        for (x, w) in hv.iter().zip(&theta[base + 1..]) {
                            v += x * w;
                        }
                        for (x, w) in lv.iter().zip(&theta[base + 1 + high_dim..]) {
                            v += x * w;
                        }
                        v
                    }
                }
            }
        }
    }
}
