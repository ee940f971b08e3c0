use crate::error::{contract, Result};

/// Unit-cost edit distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `levenshtein(hyp, reference) / len(reference)`; may exceed 1.
pub fn error_rate<T: PartialEq>(hyp: &[T], reference: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(contract("error rate needs a nonempty reference"));
    }
    Ok(levenshtein(hyp, reference) as f64 / reference.len() as f64)
}

/// Edit distance divided by the longer length; 0 for two empty sequences.
pub fn normalized_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let n = a.len().max(b.len());
    if n == 0 {
        0.0
    } else {
        levenshtein(a, b) as f64 / n as f64
    }
}
