//! Snippet selection over a trailer's clip sequence.
//!
//! A snippet is `c` clip indices. Training draws one snippet per trailer per
//! epoch with a uniformly random start over the 0-based range
//! `[0, T_len − c]`; trailers shorter than `c` clips cycle their indices
//! (`0, 1, …, T_len−1, 0, 1, …`) so every snippet still has exactly `c`
//! entries. Inference tiles the trailer at starts `0, c, 2c, …` and the
//! final partial snippet cycles from its own first clip, so every clip is
//! seen at least once.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};

/// Clip indices making up one snippet; always exactly `c` entries.
pub type Snippet = Vec<usize>;

fn check_args(t_len: usize, c: usize) -> Result<()> {
    if c == 0 {
        return Err(Error::validation("snippet length c must be positive"));
    }
    if t_len == 0 {
        return Err(Error::validation("trailer has no clips"));
    }
    Ok(())
}

/// Indices `start, start+1, …` cycling back to `start` at `t_len`.
fn cyclic_from(start: usize, t_len: usize, c: usize) -> Snippet {
    let span = t_len - start;
    (0..c).map(|j| start + j % span).collect()
}

/// Draw one training snippet: uniform start over `[0, t_len − c]`, or a
/// cycle-padded snippet from clip 0 when the trailer is shorter than `c`.
pub fn sample_training_snippet<R: Rng + ?Sized>(t_len: usize, c: usize, rng: &mut R) -> Result<Snippet> {
    check_args(t_len, c)?;
    if t_len < c {
        return Ok(cyclic_from(0, t_len, c));
    }
    let start = rng.gen_range(0..=t_len - c);
    Ok((start..start + c).collect())
}

/// Enumerate the `⌈t_len / c⌉` inference snippets at starts `0, c, 2c, …`.
/// The last snippet cycle-pads from its own first clip.
pub fn enumerate_inference_snippets(t_len: usize, c: usize) -> Result<Vec<Snippet>> {
    check_args(t_len, c)?;
    let q = t_len.div_ceil(c);
    let mut snippets = Vec::with_capacity(q);
    for i in 0..q {
        let start = i * c;
        if start + c <= t_len {
            snippets.push((start..start + c).collect());
        } else {
            snippets.push(cyclic_from(start, t_len, c));
        }
    }
    Ok(snippets)
}

/// Stack the selected clip rows into a `c × b` matrix.
pub fn gather_rows(features: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    let b = features.ncols();
    let mut out = Array2::zeros((indices.len(), b));
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).assign(&features.row(i));
    }
    out
}
