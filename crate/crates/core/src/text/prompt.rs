use super::vocab::{language_token, Vocabulary};
use super::TextError;

/// Instantiates the cross-lingual query generation template:
/// `Generate <language token> question: <document>`, single spaces between
/// segments.
pub fn build_prompt(vocab: &Vocabulary, lang: &str, doc_text: &str) -> Result<String, TextError> {
    if !vocab.has_language(lang) {
        return Err(TextError::UnknownLanguage(lang.to_string()));
    }
    Ok(format!("Generate {} question: {doc_text}", language_token(lang)))
}
