//! English short-scale number verbalization and its inverse.
//!
//! Integers are spelled with hyphenated tens ("forty-two") and no "and";
//! fractions are read digit by digit after "point"; negatives are prefixed
//! with "minus". Magnitudes at or above 10^15 are not verbalized.

use thiserror::Error;

const ONES: [&str; 20] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
];

const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

const SCALES: [(u64, &str); 4] = [
    (1_000_000_000_000, "trillion"),
    (1_000_000_000, "billion"),
    (1_000_000, "million"),
    (1_000, "thousand"),
];

/// Integer magnitudes at or above this bound stay as digits.
pub const VERBALIZE_LIMIT: u64 = 1_000_000_000_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerbalizeError {
    #[error("unrecognized number word `{0}`")]
    UnknownWord(String),
    #[error("malformed verbalized number `{0}`")]
    Malformed(String),
}

/// Returns true when `word` is an optionally signed decimal literal such as
/// `35`, `-2.5`, `+.5` or `7.`.
pub fn is_decimal_literal(word: &str) -> bool {
    let body = word.strip_prefix(['+', '-']).unwrap_or(word);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    match frac {
        None => !int.is_empty() && digits(int),
        Some(f) => (!int.is_empty() || !f.is_empty()) && digits(int) && digits(f),
    }
}

fn below_thousand(n: u64, out: &mut Vec<String>) {
    debug_assert!(n < 1000);
    let hundreds = n / 100;
    let rest = n % 100;
    if hundreds > 0 {
        out.push(ONES[hundreds as usize].to_string());
        out.push("hundred".to_string());
    }
    if rest > 0 {
        if rest < 20 {
            out.push(ONES[rest as usize].to_string());
        } else if rest.is_multiple_of(10) {
            out.push(TENS[(rest / 10) as usize].to_string());
        } else {
            out.push(format!("{}-{}", TENS[(rest / 10) as usize], ONES[(rest % 10) as usize]));
        }
    }
}

/// Spells a non-negative integer below [`VERBALIZE_LIMIT`].
pub fn integer_words(mut n: u64) -> String {
    assert!(n < VERBALIZE_LIMIT);
    if n == 0 {
        return ONES[0].to_string();
    }
    let mut words = Vec::new();
    for (scale, name) in SCALES {
        if n >= scale {
            below_thousand(n / scale, &mut words);
            words.push(name.to_string());
            n %= scale;
        }
    }
    below_thousand(n, &mut words);
    words.join(" ")
}

/// Verbalizes one word if it is a decimal literal in range, else `None`.
pub fn verbalize_word(word: &str) -> Option<String> {
    if !is_decimal_literal(word) {
        return None;
    }
    let negative = word.starts_with('-');
    let body = word.strip_prefix(['+', '-']).unwrap_or(word);
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    let int_trimmed = int.trim_start_matches('0');
    // More than 15 significant integer digits is always >= 10^15.
    if int_trimmed.len() > 15 {
        return None;
    }
    let value: u64 = if int_trimmed.is_empty() {
        0
    } else {
        int_trimmed.parse().ok()?
    };
    if value >= VERBALIZE_LIMIT {
        return None;
    }
    let mut out = String::new();
    if negative {
        out.push_str("minus ");
    }
    out.push_str(&integer_words(value));
    if !frac.is_empty() {
        out.push_str(" point");
        for d in frac.bytes() {
            out.push(' ');
            out.push_str(ONES[(d - b'0') as usize]);
        }
    }
    Some(out)
}

/// Verbalizes a finite number through its shortest round-trip decimal form.
pub fn verbalize_number(x: f64) -> Option<String> {
    if !x.is_finite() {
        return None;
    }
    verbalize_word(&format!("{x}"))
}

/// Replaces every whitespace-delimited numeric word of `text`, keeping the
/// original whitespace verbatim.
pub fn verbalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len() * 2);
    let mut word_start: Option<usize> = None;
    let flush = |out: &mut String, word: &str| match verbalize_word(word) {
        Some(v) => out.push_str(&v),
        None => out.push_str(word),
    };
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = word_start.take() {
                flush(&mut out, &text[s..i]);
            }
            out.push(ch);
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    if let Some(s) = word_start {
        flush(&mut out, &text[s..]);
    }
    out
}

fn unit_value(word: &str) -> Option<u64> {
    ONES.iter().position(|w| *w == word).map(|p| p as u64)
}

fn tens_value(word: &str) -> Option<u64> {
    TENS.iter()
        .position(|w| !w.is_empty() && *w == word)
        .map(|p| p as u64 * 10)
}

fn parse_small(word: &str) -> Result<u64, VerbalizeError> {
    if let Some((t, u)) = word.split_once('-') {
        let tens = tens_value(t).ok_or_else(|| VerbalizeError::UnknownWord(word.to_string()))?;
        let unit = unit_value(u)
            .filter(|v| (1..10).contains(v))
            .ok_or_else(|| VerbalizeError::UnknownWord(word.to_string()))?;
        return Ok(tens + unit);
    }
    unit_value(word)
        .or_else(|| tens_value(word))
        .ok_or_else(|| VerbalizeError::UnknownWord(word.to_string()))
}

/// Inverse of the verbalization scheme: `"minus two point five"` → `-2.5`.
pub fn parse_verbalized(words: &str) -> Result<f64, VerbalizeError> {
    let malformed = || VerbalizeError::Malformed(words.to_string());
    let mut tokens = words.split_whitespace().peekable();
    let negative = tokens.next_if_eq(&"minus").is_some();

    let mut total: u64 = 0;
    let mut current: u64 = 0;
    let mut seen_int = false;
    let mut fraction = String::new();
    while let Some(tok) = tokens.next() {
        match tok {
            "point" => {
                for d in tokens.by_ref() {
                    let v = unit_value(d)
                        .filter(|v| *v < 10)
                        .ok_or_else(|| VerbalizeError::UnknownWord(d.to_string()))?;
                    fraction.push(char::from(b'0' + v as u8));
                }
                if fraction.is_empty() {
                    return Err(malformed());
                }
            }
            "hundred" => {
                if current == 0 || current >= 10 {
                    return Err(malformed());
                }
                current *= 100;
            }
            _ => {
                if let Some((scale, _)) = SCALES.iter().find(|(_, name)| *name == tok) {
                    if current == 0 {
                        return Err(malformed());
                    }
                    total += current * scale;
                    current = 0;
                } else {
                    current += parse_small(tok)?;
                    seen_int = true;
                }
            }
        }
    }
    if !seen_int {
        return Err(malformed());
    }
    let int = total + current;
    let literal = if fraction.is_empty() {
        format!("{}{int}", if negative { "-" } else { "" })
    } else {
        format!("{}{int}.{fraction}", if negative { "-" } else { "" })
    };
    literal.parse::<f64>().map_err(|_| malformed())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_detection() {
        for w in ["35", "-2.5", "+3", ".5", "7.", "007"] {
            assert!(is_decimal_literal(w), "{w}");
        }
        for w in ["", "-", ".", "1e5", "admin.", "room205", "3,5", "--1"] {
            assert!(!is_decimal_literal(w), "{w}");
        }
    }

    #[test]
    fn spelled_examples() {
        assert_eq!(verbalize_word("35").unwrap(), "thirty-five");
        assert_eq!(verbalize_word("-2.5").unwrap(), "minus two point five");
        assert_eq!(verbalize_word("0").unwrap(), "zero");
        assert_eq!(verbalize_word("100").unwrap(), "one hundred");
        assert_eq!(
            verbalize_word("1234567").unwrap(),
            "one million two hundred thirty-four thousand five hundred sixty-seven"
        );
        assert_eq!(verbalize_word(".25").unwrap(), "zero point two five");
        assert_eq!(verbalize_word("admin."), None);
    }

    #[test]
    fn large_and_non_finite_left_alone() {
        assert_eq!(verbalize_word("1000000000000000"), None);
        assert!(verbalize_word("999999999999999").is_some());
        assert_eq!(verbalize_number(f64::NAN), None);
        assert_eq!(verbalize_number(f64::INFINITY), None);
    }

    #[test]
    fn text_keeps_whitespace_and_non_numbers() {
        assert_eq!(verbalize_text("room 205  b"), "room two hundred five  b");
        assert_eq!(verbalize_text("room205"), "room205");
    }

    #[test]
    fn parse_examples() {
        assert_eq!(parse_verbalized("thirty-five").unwrap(), 35.0);
        assert_eq!(parse_verbalized("zero").unwrap(), 0.0);
        assert_eq!(parse_verbalized("minus two point five").unwrap(), -2.5);
        assert!(matches!(
            parse_verbalized("thirty-banana"),
            Err(VerbalizeError::UnknownWord(_))
        ));
        assert!(parse_verbalized("").is_err());
        assert!(parse_verbalized("point five").is_err());
    }

    #[test]
    fn integer_round_trip_exhaustive() {
        for i in -10_000i64..=10_000 {
            let w = verbalize_number(i as f64).unwrap();
            assert_eq!(parse_verbalized(&w).unwrap(), i as f64, "{w}");
        }
    }
}
