use crate::error::{Error, Result};

/// Position excluded from loss and metrics.
pub const MISSING_LABEL: char = '.';

/// A labeling task and its ordered class alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskScheme {
    pub name: String,
    pub alphabet: Vec<char>,
}

const STANDARD: [(&str, &str); 4] = [
    ("dssp", "HBEGITSL"),
    ("ssp", "HEC"),
    ("sar", "AI"),
    ("saa", "AI"),
];

impl TaskScheme {
    pub fn new(name: &str, alphabet: &str) -> Result<Self> {
        let chars: Vec<char> = alphabet.chars().collect();
        if chars.len() < 2 {
            return Err(Error::Config(format!("task {name} needs at least 2 classes")));
        }
        for (i, c) in chars.iter().enumerate() {
            if chars[..i].contains(c) || *c == MISSING_LABEL || c.is_whitespace() {
                return Err(Error::Config(format!(
                    "task {name}: invalid or duplicate class letter '{c}'"
                )));
            }
        }
        Ok(TaskScheme {
            name: name.to_string(),
            alphabet: chars,
        })
    }

    /// One of the four built-in schemes: dssp, ssp, sar, saa.
    pub fn by_name(name: &str) -> Option<Self> {
        STANDARD
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, a)| TaskScheme::new(n, a).expect("built-in schemes are valid"))
    }

    pub fn standard() -> Vec<Self> {
        STANDARD
            .iter()
            .map(|(n, _)| Self::by_name(n).expect("built-in"))
            .collect()
    }

    pub fn class_count(&self) -> usize {
        self.alphabet.len()
    }

    pub fn class_index(&self, c: char) -> Option<usize> {
        self.alphabet.iter().position(|&a| a == c)
    }

    /// Class indices per position, `None` for missing labels.
    pub fn encode(&self, labels: &str) -> Result<Vec<Option<usize>>> {
        labels
            .chars()
            .enumerate()
            .map(|(pos, c)| {
                if c == MISSING_LABEL {
                    Ok(None)
                } else {
                    self.class_index(c).map(Some).ok_or_else(|| {
                        Error::Data(format!(
                            "'{c}' at position {} is not a {} class",
                            pos + 1,
                            self.name
                        ))
                    })
                }
            })
            .collect()
    }

    pub fn decode(&self, classes: &[usize]) -> String {
        classes.iter().map(|&c| self.alphabet[c]).collect()
    }
}

/// Collapses 8-class labels to 3 classes: {H,G} to H, {B,E} to E, {I,S,T,L} to C.
pub fn collapse_ssp(dssp: &str) -> Result<String> {
    dssp.chars()
        .enumerate()
        .map(|(pos, c)| match c {
            'H' | 'G' => Ok('H'),
            'B' | 'E' => Ok('E'),
            'I' | 'S' | 'T' | 'L' => Ok('C'),
            MISSING_LABEL => Ok(MISSING_LABEL),
            other => Err(Error::Data(format!(
                "'{other}' at position {} is not an 8-class secondary structure label",
                pos + 1
            ))),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolventMode {
    /// Accessible when the area exceeds 0.15 of the chain maximum.
    Relative,
    /// Accessible when the area exceeds 0.15.
    Absolute,
}

pub const SOLVENT_THRESHOLD: f64 = 0.15;

/// `A`/`I` labels from per-residue accessible surface areas; equality is inaccessible.
pub fn solvent_labels(asa: &[f64], mode: SolventMode) -> Result<String> {
    if let Some((pos, v)) = asa.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Data(format!(
            "surface area {v} at position {} must be finite and non-negative",
            pos + 1
        )));
    }
    let threshold = match mode {
        SolventMode::Relative => SOLVENT_THRESHOLD * asa.iter().copied().fold(0.0, f64::max),
        SolventMode::Absolute => SOLVENT_THRESHOLD,
    };
    Ok(asa
        .iter()
        .map(|&a| if a > threshold { 'A' } else { 'I' })
        .collect())
}
