//! Reference values of the SFT and DPO objectives over token log-probabilities.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("a sequence needs at least one token")]
    Empty,
    #[error("token log-probability {0} is not a finite value <= 0")]
    BadLogProb(f64),
    #[error("beta must be positive and finite, got {0}")]
    BadBeta(f64),
}

/// Natural-log probabilities of the generated tokens of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SequenceLogProb(Vec<f64>);

impl SequenceLogProb {
    pub fn new(token_logprobs: Vec<f64>) -> Result<Self, LossError> {
        if token_logprobs.is_empty() {
            return Err(LossError::Empty);
        }
        if let Some(&bad) = token_logprobs.iter().find(|x| !x.is_finite() || **x > 0.0) {
            return Err(LossError::BadLogProb(bad));
        }
        Ok(SequenceLogProb(token_logprobs))
    }

    pub fn tokens(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `log pi(y|x)`: the sum of token log-probabilities.
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.total() / self.0.len() as f64
    }
}

impl TryFrom<Vec<f64>> for SequenceLogProb {
    type Error = LossError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        SequenceLogProb::new(v)
    }
}

impl From<SequenceLogProb> for Vec<f64> {
    fn from(s: SequenceLogProb) -> Self {
        s.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoInputs {
    pub policy_chosen: SequenceLogProb,
    pub policy_rejected: SequenceLogProb,
    pub ref_chosen: SequenceLogProb,
    pub ref_rejected: SequenceLogProb,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

impl DpoInputs {
    pub fn validate(&self) -> Result<(), LossError> {
        if self.beta > 0.0 && self.beta.is_finite() {
            Ok(())
        } else {
            Err(LossError::BadBeta(self.beta))
        }
    }

    /// The same comparison with chosen and rejected exchanged on both models.
    pub fn swapped(&self) -> Self {
        DpoInputs {
            policy_chosen: self.policy_rejected.clone(),
            policy_rejected: self.policy_chosen.clone(),
            ref_chosen: self.ref_rejected.clone(),
            ref_rejected: self.ref_chosen.clone(),
            beta: self.beta,
        }
    }
}

/// `-log pi(y|x)`, optionally divided by the token count.
pub fn sft_loss(seq: &SequenceLogProb, normalize: bool) -> f64 {
    let nll = -seq.total();
    // -0.0 for an all-zero sequence reads badly; report +0.
    let nll = if nll == 0.0 { 0.0 } else { nll };
    if normalize {
        nll / seq.len() as f64
    } else {
        nll
    }
}

/// `log sigma(x)` without overflow for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -libm::log1p(libm::exp(-x))
    } else {
        x - libm::log1p(libm::exp(x))
    }
}

/// `beta * ((log pi(y_w) - log ref(y_w)) - (log pi(y_l) - log ref(y_l)))`.
pub fn implicit_reward_margin(inputs: &DpoInputs) -> f64 {
    let chosen = inputs.policy_chosen.total() - inputs.ref_chosen.total();
    let rejected = inputs.policy_rejected.total() - inputs.ref_rejected.total();
    inputs.beta * (chosen - rejected)
}

/// Loss for a precomputed margin: `-log sigma(margin)`.
pub fn dpo_loss_from_margin(margin: f64) -> f64 {
    -log_sigmoid(margin)
}

pub fn dpo_loss(inputs: &DpoInputs) -> f64 {
    dpo_loss_from_margin(implicit_reward_margin(inputs))
}

/// Margin computed from length-normalized sequence scores. Reported for
/// comparison only; [`dpo_loss`] always uses sequence sums.
pub fn normalized_margin(inputs: &DpoInputs) -> f64 {
    let chosen = inputs.policy_chosen.mean() - inputs.ref_chosen.mean();
    let rejected = inputs.policy_rejected.mean() - inputs.ref_rejected.mean();
    inputs.beta * (chosen - rejected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn seq(v: &[f64]) -> SequenceLogProb {
        SequenceLogProb::new(v.to_vec()).unwrap()
    }

    fn inputs(pc: f64, pr: f64, rc: f64, rr: f64, beta: f64) -> DpoInputs {
        DpoInputs {
            policy_chosen: seq(&[pc]),
            policy_rejected: seq(&[pr]),
            ref_chosen: seq(&[rc]),
            ref_rejected: seq(&[rr]),
            beta,
        }
    }

    #[test]
    fn sft_examples() {
        assert_eq!(sft_loss(&seq(&[-1.0]), false), 1.0);
        assert_eq!(sft_loss(&seq(&[-0.5, -1.5]), true), 1.0);
        assert_eq!(sft_loss(&seq(&[0.0, 0.0]), false), 0.0);
        assert!(sft_loss(&seq(&[0.0, 0.0]), false).is_sign_positive());
    }

    #[test]
    fn sequence_validation() {
        assert_eq!(SequenceLogProb::new(vec![]), Err(LossError::Empty));
        assert_eq!(SequenceLogProb::new(vec![0.1]), Err(LossError::BadLogProb(0.1)));
        assert!(SequenceLogProb::new(vec![f64::NAN]).is_err());
        assert!(inputs(-1.0, -1.0, -1.0, -1.0, 0.0).validate().is_err());
    }

    #[test]
    fn symmetric_inputs() {
        let i = inputs(-3.0, -5.0, -3.0, -5.0, DEFAULT_BETA);
        assert_eq!(implicit_reward_margin(&i), 0.0);
        assert!((dpo_loss(&i) - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn beta_linearity() {
        let a = inputs(-1.0, -6.0, -2.0, -4.0, 0.1);
        let b = DpoInputs { beta: 0.2, ..a.clone() };
        assert!((implicit_reward_margin(&b) - 2.0 * implicit_reward_margin(&a)).abs() < 1e-12);
        let m = implicit_reward_margin(&a);
        assert_eq!(dpo_loss(&a), -log_sigmoid(m));
    }

    #[test]
    fn extreme_margins() {
        assert!(dpo_loss_from_margin(1e4) >= 0.0);
        assert!(dpo_loss_from_margin(1e4) < 1e-300);
        assert!((dpo_loss_from_margin(-1e4) - 1e4).abs() < 1e-9);
        assert!(dpo_loss_from_margin(-1e4).is_finite());
    }
}
