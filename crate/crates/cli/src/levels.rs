//! Level lists as typed on the command line: `3`, `0..2` (inclusive),
//! `0..=2`, or comma lists such as `0,1,3` (which may mix in ranges).

use discrete_riemann::mesh::MAX_LEVEL;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LevelsError {
    #[error("empty level list")]
    Empty,
    #[error("cannot read level {0:?}")]
    BadNumber(String),
    #[error("level {0} exceeds the maximum {MAX_LEVEL}")]
    TooLarge(u64),
    #[error("range {0}..{1} is descending")]
    Descending(u32, u32),
    #[error("levels must be strictly increasing")]
    NotIncreasing,
}

fn number(s: &str) -> Result<u32, LevelsError> {
    let s = s.trim();
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(LevelsError::BadNumber(s.to_string()));
    }
    let n: u64 = s
        .parse()
        .map_err(|_| LevelsError::BadNumber(s.to_string()))?;
    if n > MAX_LEVEL as u64 {
        return Err(LevelsError::TooLarge(n));
    }
    Ok(n as u32)
}

/// Parses a level list into a strictly increasing vector.
pub fn parse_levels(input: &str) -> Result<Vec<u32>, LevelsError> {
    let mut out = Vec::new();
    for part in input.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err(LevelsError::Empty);
        }
        if let Some((lo, hi)) = part.split_once("..") {
            let hi = hi.strip_prefix('=').unwrap_or(hi);
            let (lo, hi) = (number(lo)?, number(hi)?);
            if hi < lo {
                return Err(LevelsError::Descending(lo, hi));
            }
            out.extend(lo..=hi);
        } else {
            out.push(number(part)?);
        }
    }
    if out.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LevelsError::NotIncreasing);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forms() {
        assert_eq!(parse_levels("3").unwrap(), vec![3]);
        assert_eq!(parse_levels("0..2").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_levels("0..=2").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_levels("0, 1,3..4").unwrap(), vec![0, 1, 3, 4]);
    }

    #[test]
    fn rejects() {
        assert_eq!(parse_levels(""), Err(LevelsError::Empty));
        assert_eq!(parse_levels("1,,2"), Err(LevelsError::Empty));
        assert_eq!(parse_levels("2..1"), Err(LevelsError::Descending(2, 1)));
        assert_eq!(parse_levels("1,1"), Err(LevelsError::NotIncreasing));
        assert_eq!(parse_levels("3,2"), Err(LevelsError::NotIncreasing));
        assert!(matches!(parse_levels("-1"), Err(LevelsError::BadNumber(_))));
        assert!(matches!(parse_levels("+1"), Err(LevelsError::BadNumber(_))));
        assert_eq!(parse_levels("21"), Err(LevelsError::TooLarge(21)));
        assert!(matches!(
            parse_levels("99999999999999999999"),
            Err(LevelsError::BadNumber(_))
        ));
    }
}
