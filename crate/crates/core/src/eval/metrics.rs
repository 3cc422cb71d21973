//! Output statistics beyond ROUGE.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::attention::Token;
use crate::error::{Error, Result};

/// Percentage of hypothesis positions whose token never occurs in the source.
pub fn novel_word_pct(source: &[Token], hypothesis: &[Token]) -> Result<f64> {
    if hypothesis.is_empty() {
        return Err(Error::EmptyHypothesis);
    }
    let vocab: HashSet<Token> = source.iter().copied().collect();
    let novel = hypothesis.iter().filter(|t| !vocab.contains(t)).count();
    Ok(100.0 * novel as f64 / hypothesis.len() as f64)
}

/// 1-based index of the first position where two sequences differ, or
/// `None` if they are identical. A strict prefix diverges one past its end.
pub fn divergence_position(a: &[Token], b: &[Token]) -> Option<usize> {
    match a.iter().zip(b).position(|(x, y)| x != y) {
        Some(i) => Some(i + 1),
        None if a.len() == b.len() => None,
        None => Some(a.len().min(b.len()) + 1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean_length: f64,
    /// Mean of `|length − Z|`.
    pub mean_deviation: f64,
}

/// Mean length and mean absolute deviation from the optimal length over
/// `(length, Z)` pairs.
pub fn length_stats(results: &[(usize, f64)]) -> Result<LengthStats> {
    if results.is_empty() {
        return Err(Error::EmptySet);
    }
    let n = results.len() as f64;
    let mean_length = results.iter().map(|(l, _)| *l as f64).sum::<f64>() / n;
    let mean_deviation = results
        .iter()
        .map(|(l, z)| (*l as f64 - z).abs())
        .sum::<f64>()
        / n;
    Ok(LengthStats {
        mean_length,
        mean_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::tokens;

    #[test]
    fn novel_words() {
        let src = tokens(&[1, 2, 3, 4]);
        assert_eq!(novel_word_pct(&src, &tokens(&[1, 2, 2])).unwrap(), 0.0);
        assert_eq!(novel_word_pct(&src, &tokens(&[1, 2, 3, 9])).unwrap(), 25.0);
        assert_eq!(novel_word_pct(&src, &tokens(&[7, 8])).unwrap(), 100.0);
        assert_eq!(novel_word_pct(&src, &[]), Err(Error::EmptyHypothesis));
    }

    #[test]
    fn divergence() {
        assert_eq!(
            divergence_position(&tokens(&[0, 1, 2]), &tokens(&[0, 1, 2])),
            None
        );
        assert_eq!(
            divergence_position(&tokens(&[5, 1]), &tokens(&[0, 1])),
            Some(1)
        );
        assert_eq!(
            divergence_position(&tokens(&[0, 1, 2]), &tokens(&[0, 1, 3])),
            Some(3)
        );
        assert_eq!(
            divergence_position(&tokens(&[0, 1]), &tokens(&[0, 1, 3])),
            Some(3)
        );
    }

    #[test]
    fn lengths() {
        let s = length_stats(&[(5, 5.0)]).unwrap();
        assert_eq!((s.mean_length, s.mean_deviation), (5.0, 0.0));
        let s = length_stats(&[(4, 5.0), (6, 5.0)]).unwrap();
        assert_eq!((s.mean_length, s.mean_deviation), (5.0, 1.0));
        let s = length_stats(&[(3, 3.0), (7, 7.0), (2, 2.0)]).unwrap();
        assert_eq!(s.mean_deviation, 0.0);
        assert_eq!(length_stats(&[]), Err(Error::EmptySet));
    }
}
