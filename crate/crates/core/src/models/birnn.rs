use super::{Core, HiddenState};
use crate::error::{Error, Result};
use crate::numerics::Scalar;

/// Encode a word sequence as `[s_fwd_T ; s_bwd_1]`: the final state of a
/// forward pass over `w_1…w_T` concatenated with the final state of a
/// separate backward pass over `w_T…w_1`.
pub fn birnn_encode<S: Scalar>(forward: &Core<S>, backward: &Core<S>, words: &[usize]) -> Result<Vec<S>> {
    if words.is_empty() {
        return Err(Error::Empty("sentence to encode"));
    }
    let recurrent = |c: &Core<S>| matches!(c, Core::Rnn(_) | Core::Lstm(_));
    if !recurrent(forward) || forward.architecture() != backward.architecture() {
        return Err(Error::InvalidArgument("BiRNN encoding needs two recurrent cores of the same kind".into()));
    }
    if forward.hidden_size() != backward.hidden_size() || forward.embedding_size() != backward.embedding_size() {
        return Err(Error::shape(
            "birnn_encode",
            format!("m={}, n_h={}", forward.embedding_size(), forward.hidden_size()),
            format!("m={}, n_h={}", backward.embedding_size(), backward.hidden_size()),
        ));
    }
    let nh = forward.hidden_size();
    let init = HiddenState {
        s: vec![S::zero(); nh],
        c: if matches!(forward, Core::Lstm(_)) { vec![S::zero(); nh] } else { vec![] },
    };
    let fwd = forward.forward(words, &init)?.final_state(&init);
    let reversed: Vec<usize> = words.iter().rev().copied().collect();
    let bwd = backward.forward(&reversed, &init)?.final_state(&init);
    let mut out = fwd.s;
    out.extend(bwd.s);
    Ok(out)
}
