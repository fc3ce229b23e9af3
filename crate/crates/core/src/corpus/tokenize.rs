/// Lowercases and splits on whitespace; every punctuation character becomes its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_whitespace() {
            flush(&mut cur, &mut out);
        } else if ch.is_ascii_punctuation() || (!ch.is_alphanumeric() && !ch.is_whitespace()) {
            flush(&mut cur, &mut out);
            out.push(ch.to_string());
        } else {
            cur.push(ch);
        }
    }
    flush(&mut cur, &mut out);
    out
}

fn flush(cur: &mut String, out: &mut Vec<String>) {
    if !cur.is_empty() {
        out.push(std::mem::take(cur));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("A Man runs, fast."),
            vec!["a", "man", "runs", ",", "fast", "."]
        );
        assert_eq!(tokenize("doesn't"), vec!["doesn", "'", "t"]);
        assert_eq!(tokenize("  \t "), Vec::<String>::new());
    }
}
