//! Small string helpers shared by the loaders, the tokenizer and the parser.

/// Collapses every run of whitespace to a single space and trims both ends.
pub fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Key used to decide whether two sentences are "the same sample":
/// case-folded and whitespace-collapsed.
pub fn sentence_key(s: &str) -> String {
    collapse_whitespace(&s.to_lowercase())
}

/// Punctuation that may be stripped from the edges of a term or span.
pub fn is_edge_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'
                | '\u{2019}'
                | '\u{201C}'
                | '\u{201D}'
                | '\u{2026}'
                | '\u{2013}'
                | '\u{2014}'
                | '\u{00AB}'
                | '\u{00BB}'
        )
}

pub fn trim_edge_punct(s: &str) -> &str {
    s.trim_matches(is_edge_punct)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapses_internal_runs() {
        assert_eq!(collapse_whitespace("  orange \t  juice\n"), "orange juice");
        assert_eq!(collapse_whitespace(""), "");
    }

    #[test]
    fn sentence_key_folds_case() {
        assert_eq!(sentence_key("The  Burger"), sentence_key("the burger "));
    }

    #[test]
    fn trims_only_edges() {
        assert_eq!(trim_edge_punct("\"don't!\""), "don't");
        assert_eq!(trim_edge_punct("..."), "");
    }
}
