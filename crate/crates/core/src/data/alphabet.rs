/// The 20 standard residues in alphabetical order, then the catch-all `X`.
pub const AMINO_ALPHABET: &str = "ACDEFGHIKLMNPQRSTVWYX";
pub const VOCAB_SIZE: usize = 21;
pub const PSSM_WIDTH: usize = 20;

/// Upper-cases a residue code and folds ambiguous codes (B, J, O, U, Z) to `X`.
/// Returns `None` for characters that are not letters.
pub fn normalize_residue(c: char) -> Option<char> {
    if !c.is_ascii_alphabetic() {
        return None;
    }
    let u = c.to_ascii_uppercase();
    Some(if AMINO_ALPHABET.contains(u) { u } else { 'X' })
}

pub fn residue_index(c: char) -> Option<usize> {
    AMINO_ALPHABET.find(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mapping() {
        assert_eq!(residue_index('A'), Some(0));
        assert_eq!(residue_index('Y'), Some(19));
        assert_eq!(residue_index('X'), Some(20));
        for c in ['B', 'J', 'O', 'U', 'Z', 'b'] {
            assert_eq!(normalize_residue(c), Some('X'));
        }
        assert_eq!(normalize_residue('-'), None);
        assert_eq!(AMINO_ALPHABET.len(), VOCAB_SIZE);
    }
}
