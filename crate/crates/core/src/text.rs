//! Text utilities shared across the pipeline: tokenization, surface-form
//! normalization, pluralization, and stable seed derivation.

/// Sentence punctuation that [`tokenize`] splits into standalone tokens.
const EDGE_PUNCT: &[char] = &['.', ',', '?', '!', ';', ':'];

/// Splits text on whitespace, peeling leading/trailing sentence punctuation
/// into their own tokens so that `"age @AGE."` becomes `["age", "@AGE", "."]`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut rest = word;
        let mut leading = Vec::new();
        while let Some(c) = rest.chars().next() {
            if EDGE_PUNCT.contains(&c) {
                leading.push(c.to_string());
                rest = &rest[c.len_utf8()..];
            } else {
                break;
            }
        }
        let mut trailing = Vec::new();
        while let Some(c) = rest.chars().last() {
            if EDGE_PUNCT.contains(&c) {
                trailing.push(c.to_string());
                rest = &rest[..rest.len() - c.len_utf8()];
            } else {
                break;
            }
        }
        tokens.extend(leading);
        if !rest.is_empty() {
            tokens.push(rest.to_string());
        }
        tokens.extend(trailing.into_iter().rev());
    }
    tokens
}

/// Joins tokens with spaces, attaching punctuation tokens to the previous word.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let tok = tok.as_ref();
        let is_punct = tok.chars().count() == 1
            && tok.chars().next().map(|c| EDGE_PUNCT.contains(&c)).unwrap_or(false);
        if !out.is_empty() && !is_punct {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// Case-fold + trim. Idempotent; no stemming so anonymization stays reversible.
pub fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}

/// True for tokens shaped like a bare numeric literal: optional sign,
/// digits, optional decimal part.
pub fn is_numeric_literal(tok: &str) -> bool {
    let body = tok.strip_prefix(['+', '-']).unwrap_or(tok);
    if body.is_empty() {
        return false;
    }
    match body.split_once('.') {
        None => body.chars().all(|c| c.is_ascii_digit()),
        Some((int, frac)) => {
            !int.is_empty()
                && !frac.is_empty()
                && int.chars().all(|c| c.is_ascii_digit())
                && frac.chars().all(|c| c.is_ascii_digit())
        }
    }
}

/// True for `@NAME`-style placeholder tokens.
pub fn is_placeholder_token(tok: &str) -> bool {
    tok.len() > 1
        && tok.starts_with('@')
        && tok[1..].chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn pluralize_word(word: &str) -> String {
    let lower = word.to_lowercase();
    if lower.ends_with("is") {
        return format!("{}es", &word[..word.len() - 2]);
    }
    if lower.ends_with('s') {
        return word.to_string();
    }
    if lower.ends_with('x')
        || lower.ends_with('z')
        || lower.ends_with("ch")
        || lower.ends_with("sh")
    {
        return format!("{word}es");
    }
    if lower.ends_with('y') {
        let before = lower.chars().rev().nth(1);
        if before.map(|c| !"aeiou".contains(c)).unwrap_or(false) {
            return format!("{}ies", &word[..word.len() - 1]);
        }
    }
    format!("{word}s")
}

/// Pluralizes a surface form, inflecting the head noun: the word before the
/// first "of" when present ("length of stay" -> "lengths of stay"),
/// otherwise the last word.
pub fn pluralize(surface: &str) -> String {
    let words: Vec<&str> = surface.split_whitespace().collect();
    if words.is_empty() {
        return surface.to_string();
    }
    let head = words
        .iter()
        .position(|w| w.eq_ignore_ascii_case("of"))
        .filter(|&i| i > 0)
        .map(|i| i - 1)
        .unwrap_or(words.len() - 1);
    words
        .iter()
        .enumerate()
        .map(|(i, w)| if i == head { pluralize_word(w) } else { w.to_string() })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Uppercases the first alphabetic character of a sentence.
pub fn sentence_case(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut done = false;
    for c in s.chars() {
        if !done && c.is_alphabetic() {
            out.extend(c.to_uppercase());
            done = true;
        } else {
            out.push(c);
        }
    }
    out
}

/// Uppercases the first character of a word (used to carry capitalization
/// over to paraphrase replacements).
pub fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

/// True when the word starts with an uppercase letter.
pub fn starts_capitalized(s: &str) -> bool {
    s.chars().next().map(|c| c.is_uppercase()).unwrap_or(false)
}

/// Splitmix64 finalizer; stable across platforms and releases.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// FNV-1a over bytes; used to fold string ids into seed material.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derives an independent RNG stream seed from a base seed and stream parts.
/// Same parts always yield the same seed, so parallel and serial runs agree.
pub fn stream_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x853c49e6748fea9b;
    for &p in parts {
        h = mix64(h ^ p);
    }
    h
}
