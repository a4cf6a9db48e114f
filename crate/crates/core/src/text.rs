//! Tokenisation shared by the chatbot, sentiment engine and composer.

/// Lowercases `text` and splits it into word tokens.
///
/// A token is a maximal run of alphanumeric characters or apostrophes;
/// leading and trailing apostrophes are dropped.
pub fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}
