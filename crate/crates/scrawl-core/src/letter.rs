//! The 26-letter lowercase alphabet used as the class set.

use serde::{Deserialize, Serialize};

/// Number of letter classes.
pub const ALPHABET: usize = 26;

/// A lowercase letter `a`..`z`, stored as its alphabet index 0..=25.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Letter(u8);

impl Letter {
    /// Builds a letter from its alphabet index; `None` if out of range.
    pub fn from_index(index: usize) -> Option<Self> {
        (index < ALPHABET).then(|| Letter(index as u8))
    }

    /// Builds a letter from a lowercase ASCII character.
    pub fn from_char(c: char) -> Option<Self> {
        c.is_ascii_lowercase().then(|| Letter(c as u8 - b'a'))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn as_char(self) -> char {
        (b'a' + self.0) as char
    }

    /// All 26 letters in alphabet order.
    pub fn all() -> impl Iterator<Item = Letter> {
        (0..ALPHABET as u8).map(Letter)
    }
}

impl std::fmt::Display for Letter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Parses a word spelling into letters; `None` on any non a-z character.
pub fn letters_of(word: &str) -> Option<Vec<Letter>> {
    word.chars().map(Letter::from_char).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_round_trip() {
        for c in 'a'..='z' {
            let l = Letter::from_char(c).unwrap();
            assert_eq!(l.as_char(), c);
            assert_eq!(Letter::from_index(l.index()), Some(l));
        }
        assert_eq!(Letter::from_char('A'), None);
        assert_eq!(Letter::from_char('0'), None);
        assert_eq!(Letter::from_index(26), None);
    }

    #[test]
    fn spelling_parses() {
        let w = letters_of("cab").unwrap();
        assert_eq!(w.iter().map(|l| l.index()).collect::<Vec<_>>(), [2, 0, 1]);
        assert!(letters_of("c4b").is_none());
    }
}
