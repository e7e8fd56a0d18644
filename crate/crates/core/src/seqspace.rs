//! Token alphabets, partially masked sequences, and exhaustive enumeration.
//!
//! The MASK sentinel is encoded as token index `D`, one past the data
//! alphabet, so per-position distributions over data tokens have exactly `D`
//! entries.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Token = u16;

/// Default cap on `D^L` for exhaustive enumeration.
pub const DEFAULT_ENUM_CAP: u128 = 1_000_000;

/// Character used for MASK in string form.
pub const MASK_CHAR: char = '?';

const FALLBACK_LETTERS: &str = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    size: u16,
    letters: Vec<char>,
}

impl Alphabet {
    /// Alphabet with the default letter map: `ACGT` for `D = 4`, otherwise
    /// `0-9a-zA-Z`.
    pub fn new(size: usize) -> Result<Self> {
        let letters = if size == 4 {
            "ACGT".to_string()
        } else {
            FALLBACK_LETTERS.chars().take(size).collect()
        };
        if size > FALLBACK_LETTERS.len() {
            // Sequences over larger alphabets can exist, they just have no string form.
            return Self::check_size(size).map(|size| Self { size, letters: Vec::new() });
        }
        Self::with_letters(&letters)
    }

    pub fn with_letters(letters: &str) -> Result<Self> {
        let letters: Vec<char> = letters.chars().collect();
        let size = Self::check_size(letters.len())?;
        let mut seen = letters.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != letters.len() {
            return Err(Error::Alphabet("duplicate letters".into()));
        }
        if letters.contains(&MASK_CHAR) {
            return Err(Error::Alphabet(format!("'{MASK_CHAR}' is reserved for MASK")));
        }
        Ok(Self { size, letters })
    }

    fn check_size(size: usize) -> Result<u16> {
        if size < 2 {
            return Err(Error::Alphabet(format!("alphabet size must be >= 2, got {size}")));
        }
        u16::try_from(size)
            .ok()
            .filter(|&s| s < u16::MAX)
            .ok_or_else(|| Error::Alphabet(format!("alphabet size {size} too large")))
    }

    pub fn size(&self) -> usize {
        self.size as usize
    }

    pub fn mask_id(&self) -> Token {
        self.size
    }

    pub fn letters(&self) -> &[char] {
        &self.letters
    }

    pub fn letter(&self, token: Token) -> Option<char> {
        if token == self.size {
            Some(MASK_CHAR)
        } else {
            self.letters.get(token as usize).copied()
        }
    }

    pub fn token(&self, c: char) -> Result<Token> {
        if c == MASK_CHAR {
            return Ok(self.size);
        }
        self.letters
            .iter()
            .position(|&l| l == c)
            .map(|p| p as Token)
            .ok_or_else(|| Error::Alphabet(format!("unknown letter '{c}'")))
    }

    pub fn parse(&self, s: &str) -> Result<Sequence> {
        let tokens = s.chars().map(|c| self.token(c)).collect::<Result<Vec<_>>>()?;
        Sequence::new(tokens, self.size())
    }

    pub fn render(&self, x: &Sequence) -> Result<String> {
        x.tokens()
            .iter()
            .map(|&t| {
                self.letter(t)
                    .ok_or_else(|| Error::Alphabet(format!("no letter for token {t}")))
            })
            .collect()
    }
}

/// A fixed-length sequence over `{0..D-1} ∪ {MASK}`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sequence {
    tokens: Box<[Token]>,
    size: Token,
}

impl Sequence {
    pub fn new(tokens: Vec<Token>, alphabet_size: usize) -> Result<Self> {
        let size = Alphabet::check_size(alphabet_size)?;
        if tokens.is_empty() {
            return Err(Error::Empty("sequence"));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t > size) {
            return Err(Error::InvalidToken { token: bad as u32, size: size as u32 });
        }
        Ok(Self { tokens: tokens.into_boxed_slice(), size })
    }

    pub fn fully_masked(len: usize, alphabet_size: usize) -> Self {
        let size = alphabet_size as Token;
        Self { tokens: vec![size; len].into_boxed_slice(), size }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn alphabet_size(&self) -> usize {
        self.size as usize
    }

    pub fn mask_id(&self) -> Token {
        self.size
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn get(&self, pos: usize) -> Token {
        self.tokens[pos]
    }

    pub fn is_masked(&self, pos: usize) -> bool {
        self.tokens[pos] == self.size
    }

    pub fn is_clean(&self) -> bool {
        self.tokens.iter().all(|&t| t != self.size)
    }

    pub fn is_fully_masked(&self) -> bool {
        self.tokens.iter().all(|&t| t == self.size)
    }

    pub fn num_masked(&self) -> usize {
        self.tokens.iter().filter(|&&t| t == self.size).count()
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&p| self.is_masked(p)).collect()
    }

    /// Non-mask positions and their tokens, ascending by position.
    pub fn unmasked_view(&self) -> Vec<(usize, Token)> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, &t)| t != self.size)
            .map(|(p, &t)| (p, t))
            .collect()
    }

    /// `x^{ℓ←d}`: fill a masked position with a data token.
    pub fn substitute(&self, pos: usize, token: Token) -> Result<Self> {
        if pos >= self.len() {
            return Err(Error::PositionOutOfRange { pos, len: self.len() });
        }
        if token >= self.size {
            return Err(Error::InvalidToken { token: token as u32, size: self.size as u32 });
        }
        if !self.is_masked(pos) {
            return Err(Error::NotMasked(pos));
        }
        let mut tokens = self.tokens.clone();
        tokens[pos] = token;
        Ok(Self { tokens, size: self.size })
    }

    /// Copy with the given positions replaced by MASK.
    pub fn masked_at(&self, positions: &[usize]) -> Self {
        let mut tokens = self.tokens.clone();
        for &p in positions {
            tokens[p] = self.size;
        }
        Self { tokens, size: self.size }
    }

    /// Lexicographic rank among clean sequences of the same length (base `D`).
    pub fn clean_index(&self) -> Result<usize> {
        let d = self.size as usize;
        self.tokens.iter().try_fold(0usize, |acc, &t| {
            if t == self.size {
                Err(Error::NotClean)
            } else {
                Ok(acc * d + t as usize)
            }
        })
    }

    /// Rank among partially masked sequences (base `D + 1`, MASK = digit `D`).
    pub fn partial_index(&self) -> usize {
        let b = self.size as usize + 1;
        self.tokens.iter().fold(0usize, |acc, &t| acc * b + t as usize)
    }

    pub fn from_clean_index(mut index: usize, len: usize, alphabet_size: usize) -> Self {
        let mut tokens = vec![0 as Token; len];
        for slot in tokens.iter_mut().rev() {
            *slot = (index % alphabet_size) as Token;
            index /= alphabet_size;
        }
        Self { tokens: tokens.into_boxed_slice(), size: alphabet_size as Token }
    }

    pub fn from_partial_index(mut index: usize, len: usize, alphabet_size: usize) -> Self {
        let b = alphabet_size + 1;
        let mut tokens = vec![0 as Token; len];
        for slot in tokens.iter_mut().rev() {
            *slot = (index % b) as Token;
            index /= b;
        }
        Self { tokens: tokens.into_boxed_slice(), size: alphabet_size as Token }
    }
}

impl fmt::Debug for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, &t) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            if t == self.size {
                f.write_str("M")?;
            } else {
                write!(f, "{t}")?;
            }
        }
        f.write_str("]")
    }
}

/// `D^L` as an exact integer, saturating.
pub fn clean_count(len: usize, alphabet_size: usize) -> u128 {
    (0..len).fold(1u128, |acc, _| acc.saturating_mul(alphabet_size as u128))
}

pub fn check_cap(required: u128, cap: u128) -> Result<()> {
    if required > cap {
        Err(Error::CapExceeded { required, cap })
    } else {
        Ok(())
    }
}

/// All `D^L` clean sequences in lexicographic order.
pub fn enumerate_clean(len: usize, alphabet_size: usize) -> Result<Vec<Sequence>> {
    enumerate_clean_capped(len, alphabet_size, DEFAULT_ENUM_CAP)
}

pub fn enumerate_clean_capped(len: usize, alphabet_size: usize, cap: u128) -> Result<Vec<Sequence>> {
    Alphabet::check_size(alphabet_size)?;
    if len == 0 {
        return Err(Error::Empty("sequence length"));
    }
    let n = clean_count(len, alphabet_size);
    check_cap(n, cap)?;
    Ok((0..n as usize)
        .map(|i| Sequence::from_clean_index(i, len, alphabet_size))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const M: Token = 2;

    fn seq(t: &[Token]) -> Sequence {
        Sequence::new(t.to_vec(), 2).unwrap()
    }

    #[test]
    fn unmasked_view_examples() {
        assert!(seq(&[M, M]).unmasked_view().is_empty());
        assert_eq!(seq(&[0, M, 1]).unmasked_view(), vec![(0, 0), (2, 1)]);
        assert_eq!(seq(&[1, 0, 1, 1]).unmasked_view().len(), 4);
    }

    #[test]
    fn substitute_examples() {
        assert_eq!(seq(&[M, M]).substitute(0, 1).unwrap(), seq(&[1, M]));
        assert_eq!(seq(&[0, M]).substitute(1, 0).unwrap(), seq(&[0, 0]));
        assert_eq!(seq(&[0, 1]).substitute(0, 1), Err(Error::NotMasked(0)));
        assert!(matches!(seq(&[M]).substitute(0, M), Err(Error::InvalidToken { .. })));
        let x = seq(&[M, M]);
        let _ = x.substitute(1, 0).unwrap();
        assert_eq!(x, seq(&[M, M]));
    }

    #[test]
    fn enumerate_examples() {
        assert_eq!(enumerate_clean(1, 2).unwrap(), vec![seq(&[0]), seq(&[1])]);
        assert_eq!(
            enumerate_clean(2, 2).unwrap(),
            vec![seq(&[0, 0]), seq(&[0, 1]), seq(&[1, 0]), seq(&[1, 1])]
        );
        assert_eq!(enumerate_clean(8, 4).unwrap().len(), 65536);
        assert_eq!(
            enumerate_clean(11, 4),
            Err(Error::CapExceeded { required: 4_194_304, cap: DEFAULT_ENUM_CAP })
        );
    }

    #[test]
    fn enumerate_is_distinct_and_clean_up_to_length_four() {
        for d in 2..=4 {
            for l in 1..=4 {
                let all = enumerate_clean(l, d).unwrap();
                assert!(all.iter().all(Sequence::is_clean));
                assert!(all.windows(2).all(|w| w[0] < w[1]), "sorted and distinct");
                for (i, x) in all.iter().enumerate() {
                    assert_eq!(x.clean_index().unwrap(), i);
                }
            }
        }
    }

    #[test]
    fn dna_string_round_trip() {
        let a = Alphabet::new(4).unwrap();
        let x = a.parse("AC?T").unwrap();
        assert_eq!(x.tokens(), &[0, 1, 4, 3]);
        assert_eq!(a.render(&x).unwrap(), "AC?T");
        assert!(a.parse("ACX").is_err());
        assert!(Alphabet::new(1).is_err());
    }

    #[test]
    fn partial_index_round_trip() {
        let x = Sequence::new(vec![0, 3, 1, 3], 3).unwrap();
        let i = x.partial_index();
        assert_eq!(Sequence::from_partial_index(i, 4, 3), x);
    }

    fn masked_seq() -> impl Strategy<Value = Sequence> {
        (2usize..5, 1usize..7).prop_flat_map(|(d, l)| {
            proptest::collection::vec(0..=(d as Token), l)
                .prop_map(move |t| Sequence::new(t, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn substitute_extends_unmasked_view(x in masked_seq(), pick in 0usize..64, tok in 0u16..64) {
            let masked = x.masked_positions();
            prop_assume!(!masked.is_empty());
            let pos = masked[pick % masked.len()];
            let d = tok % x.alphabet_size() as Token;
            let y = x.substitute(pos, d).unwrap();
            let mut expected = x.unmasked_view();
            expected.push((pos, d));
            expected.sort_unstable();
            prop_assert_eq!(y.unmasked_view(), expected);
        }
    }
}
