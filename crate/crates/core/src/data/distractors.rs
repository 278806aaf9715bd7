use super::scene::Sample;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Draws `k` distinct false captions for one object of `sample`.
///
/// Eligible captions are the distinct pool entries that describe none of the
/// sample's objects, so a distractor can never also be a true answer.
pub fn draw_distractors(
    sample: &Sample,
    object_index: usize,
    pool: &[String],
    rng: &mut Rng,
    k: usize,
) -> Result<Vec<String>> {
    if object_index >= sample.objects.len() {
        return Err(Error::InvalidInput(format!(
            "object {object_index} out of range for sample {}",
            sample.id
        )));
    }
    let mut eligible: Vec<&String> = pool
        .iter()
        .filter(|c| !sample.objects.iter().any(|o| &o.caption == *c))
        .collect();
    eligible.sort();
    eligible.dedup();
    if eligible.len() < k {
        return Err(Error::InvalidInput(format!(
            "distractor pool has {} eligible captions for sample {}, need {k}",
            eligible.len(),
            sample.id
        )));
    }
    Ok(rng
        .choose_distinct(&eligible, k)
        .into_iter()
        .cloned()
        .collect())
}
