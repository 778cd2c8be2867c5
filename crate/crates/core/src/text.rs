use unicode_normalization::{is_nfc_quick, IsNormalized, UnicodeNormalization};

/// NFC form of `word`; no case folding.
pub fn normalize_word(word: &str) -> String {
    match is_nfc_quick(word.chars()) {
        IsNormalized::Yes => word.to_string(),
        _ => word.nfc().collect(),
    }
}
