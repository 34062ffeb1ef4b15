use super::{Token, TreebankError};

const DETACHED: &[char] = &['.', ',', ';', ':', '!', '?'];

/// Splits a sentence on whitespace and detaches leading and trailing
/// `. , ; : ! ?` as tokens of their own. Casing is preserved.
pub fn tokenize(sentence: &str) -> Result<Vec<Token>, TreebankError> {
    let mut pieces: Vec<&str> = Vec::new();
    for word in sentence.split_whitespace() {
        let mut core = word;
        let mut leading = Vec::new();
        while let Some(c) = core.chars().next().filter(|c| DETACHED.contains(c)) {
            let (p, rest) = core.split_at(c.len_utf8());
            leading.push(p);
            core = rest;
        }
        let mut trailing = Vec::new();
        while let Some(c) = core.chars().next_back().filter(|c| DETACHED.contains(c)) {
            let (rest, p) = core.split_at(core.len() - c.len_utf8());
            trailing.push(p);
            core = rest;
        }
        pieces.extend(leading);
        if !core.is_empty() {
            pieces.push(core);
        }
        pieces.extend(trailing.into_iter().rev());
    }
    if pieces.is_empty() {
        return Err(TreebankError::EmptySentence);
    }
    Ok(pieces.into_iter().enumerate().map(|(i, p)| Token::new(p, i)).collect())
}
