//! Task symbols and the reserved blank label.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a symbol within an [`Alphabet`]. The blank is `alphabet.len()`.
pub type Label = usize;

/// A transcription as alphabet indices. Never contains the blank.
pub type LabelSequence = Vec<Label>;

/// Number of task symbols in the default alphabet.
pub const DEFAULT_SIZE: usize = 42;

/// An ordered set of distinct symbol identifiers.
///
/// Symbols occupy indices `0..N`; the blank is index `N` and is not a
/// member of the symbol list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Alphabet {
    symbols: Vec<String>,
    index: HashMap<String, Label>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Result<Self> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(Error::invalid("alphabet must contain at least one symbol"));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() || s.chars().any(|c| c.is_whitespace() || c == '|') {
                return Err(Error::invalid(format!(
                    "symbol {s:?} must be non-empty without whitespace or '|'"
                )));
            }
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate symbol {s:?}")));
            }
        }
        Ok(Alphabet { symbols, index })
    }

    /// Alphabet of `size` generated symbols `g00`, `g01`, ...
    pub fn with_size(size: usize) -> Result<Self> {
        Self::new((0..size).map(|i| format!("g{i:02}")))
    }

    /// Number of task symbols (excluding the blank).
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn blank(&self) -> Label {
        self.symbols.len()
    }

    /// Width of a network output frame: symbols plus blank.
    pub fn output_size(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, label: Label) -> Option<&str> {
        self.symbols.get(label).map(String::as_str)
    }

    pub fn label(&self, symbol: &str) -> Option<Label> {
        self.index.get(symbol).copied()
    }

    pub fn check(&self, labels: &[Label]) -> Result<()> {
        match labels.iter().find(|&&l| l >= self.len()) {
            Some(&label) => Err(Error::LabelOutOfRange {
                label,
                size: self.len(),
            }),
            None => Ok(()),
        }
    }

    /// Space-separated symbol identifiers.
    pub fn render(&self, labels: &[Label]) -> String {
        labels
            .iter()
            .map(|&l| self.symbol(l).unwrap_or("?"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Parses space-separated symbol identifiers.
    pub fn parse(&self, text: &str) -> std::result::Result<LabelSequence, String> {
        text.split_whitespace()
            .map(|s| self.label(s).ok_or_else(|| s.to_string()))
            .collect()
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Self::with_size(DEFAULT_SIZE).expect("generated symbols are distinct")
    }
}

impl TryFrom<Vec<String>> for Alphabet {
    type Error = Error;

    fn try_from(symbols: Vec<String>) -> Result<Self> {
        Alphabet::new(symbols)
    }
}

impl From<Alphabet> for Vec<String> {
    fn from(a: Alphabet) -> Self {
        a.symbols
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_has_42_symbols_and_blank_last() {
        let a = Alphabet::default();
        assert_eq!(a.len(), 42);
        assert_eq!(a.blank(), 42);
        assert_eq!(a.output_size(), 43);
        assert_eq!(a.symbol(0), Some("g00"));
        assert_eq!(a.symbol(42), None);
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        assert!(Alphabet::new(["a", "b", "a"]).is_err());
        assert!(Alphabet::new(Vec::<String>::new()).is_err());
        assert!(Alphabet::new(["a b"]).is_err());
    }

    #[test]
    fn parse_and_render() {
        let a = Alphabet::new(["a", "b", "c"]).unwrap();
        assert_eq!(a.parse("c a").unwrap(), vec![2, 0]);
        assert_eq!(a.parse("a z").unwrap_err(), "z");
        assert_eq!(a.render(&[1, 2]), "b c");
        assert!(a.check(&[0, 3]).is_err());
    }
}
