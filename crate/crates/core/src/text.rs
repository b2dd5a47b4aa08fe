//! Tokenisation shared by the ontology loader and the concept extractor, so
//! dictionary phrases and report text are normalised identically.

/// Lowercased alphanumeric tokens; every other character separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Canonical single-space form of a phrase.
pub fn normalize_phrase(phrase: &str) -> String {
    tokenize(phrase).join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_punctuation_and_lowercases() {
        assert_eq!(tokenize("Opacities,  LEFT lung!"), ["opacities", "left", "lung"]);
        assert_eq!(normalize_phrase("  Derrame   Pleural "), "derrame pleural");
        assert_eq!(tokenize("neumotórax"), ["neumotórax"]);
    }
}
