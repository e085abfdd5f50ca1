use serde::{Deserialize, Serialize};

use super::{clip_gradients, update_parameters};
use crate::corpus::Encoded;
use crate::error::{Error, Result};
use crate::evaluation::EvalReport;
use crate::models::Network;
use crate::numerics::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub clip: Option<f64>,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        DynamicConfig {
            learning_rate: 0.1,
            l2: 0.0,
            clip: Some(5.0),
        }
    }
}

/// Scores each sentence in corpus order, then takes one gradient step on it.
/// Reported probabilities come from the parameters before the sentence's update.
pub fn dynamic_evaluate<S: Scalar>(net: &mut Network<S>, sentences: &[Encoded], config: &DynamicConfig) -> Result<EvalReport> {
    if sentences.is_empty() {
        return Err(Error::Empty("evaluation sentences"));
    }
    if !(config.learning_rate >= 0.0 && config.l2 >= 0.0) {
        return Err(Error::InvalidArgument("dynamic learning rate and decay must be non-negative".into()));
    }
    let adapt = config.learning_rate != 0.0 || config.l2 != 0.0;
    let start = std::time::Instant::now();
    let mut totals = Vec::with_capacity(sentences.len());
    let mut tokens = 0;
    let mut grads = net.zero_gradients();
    let init = net.initial_state();
    for s in sentences {
        let score = if adapt {
            use crate::models::ParameterSet;
            grads.fill_zero();
            let score = net.sentence_gradient(&s.ids, &init, &mut grads)?;
            if let Some(c) = config.clip {
                clip_gradients(&mut grads, c);
            }
            update_parameters(net, &grads, S::of(config.learning_rate), S::of(config.l2))?;
            score
        } else {
            net.score_sentence(&s.ids, &init)?
        };
        tokens += score.log_probs.len();
        totals.push(score.total().as_f64());
    }
    EvalReport::from_sentence_logs(&totals, tokens, start.elapsed().as_secs_f64())
}
