use crate::error::{Error, Result};

/// Default patch length.
pub const DEFAULT_PATCH: usize = 96;

/// A series cut into `n` non-overlapping patches of `s` points, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    pub n: usize,
    pub s: usize,
    pub data: Vec<f64>,
}

impl TokenSequence {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.s..(i + 1) * self.s]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.s)
    }
}

/// Token `i` holds points `i·S .. (i+1)·S`.
pub fn tokenize(series: &[f64], s: usize) -> Result<TokenSequence> {
    if s == 0 || series.is_empty() || series.len() % s != 0 {
        return Err(Error::invalid(format!(
            "series of length {} cannot be cut into patches of {s}",
            series.len()
        )));
    }
    Ok(TokenSequence {
        n: series.len() / s,
        s,
        data: series.to_vec(),
    })
}

pub fn detokenize(tokens: &TokenSequence) -> Vec<f64> {
    tokens.data.clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_follow_patch_order() {
        let t = tokenize(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3).unwrap();
        assert_eq!((t.n, t.s), (2, 3));
        assert_eq!(t.row(0), [1.0, 2.0, 3.0]);
        assert_eq!(t.row(1), [4.0, 5.0, 6.0]);
    }

    #[test]
    fn full_window_gives_eight_tokens() {
        let x: Vec<f64> = (0..768).map(|i| i as f64).collect();
        let t = tokenize(&x, DEFAULT_PATCH).unwrap();
        assert_eq!(t.n, 8);
        assert_eq!(t.row(7)[0], 672.0);
        let whole = tokenize(&x, 768).unwrap();
        assert_eq!((whole.n, whole.row(0)), (1, &x[..]));
    }

    #[test]
    fn edge_cases() {
        assert_eq!(detokenize(&tokenize(&[7.0], 1).unwrap()), vec![7.0]);
        assert!(tokenize(&[1.0; 10], 3).is_err());
        assert!(tokenize(&[1.0; 10], 0).is_err());
        assert!(tokenize(&[], 2).is_err());
    }
}
