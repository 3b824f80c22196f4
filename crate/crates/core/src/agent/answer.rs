//! Lenient answer comparison and the three-word answer rule.

const ARTICLES: [&str; 3] = ["a", "an", "the"];
const NUMBER_WORDS: [&str; 11] =
    ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];

/// Lowercases, strips punctuation, drops leading articles and maps the
/// number words zero..ten to digits; returns the remaining tokens.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let cleaned: String = lowered
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else if c == '\'' {
                '\0'
            } else {
                ' '
            }
        })
        .filter(|c| *c != '\0')
        .collect();
    let mut tokens: Vec<String> = cleaned
        .split_whitespace()
        .map(|t| match NUMBER_WORDS.iter().position(|w| *w == t) {
            Some(n) => n.to_string(),
            None => t.to_string(),
        })
        .collect();
    let leading = tokens.iter().take_while(|t| ARTICLES.contains(&t.as_str())).count();
    tokens.drain(..leading);
    tokens
}

pub fn normalize(text: &str) -> String {
    normalize_tokens(text).join(" ")
}

/// Whether `short` occurs in `long` as an order-preserving token subsequence.
fn is_subsequence(short: &[String], long: &[String]) -> bool {
    let mut it = long.iter();
    short.iter().all(|s| it.any(|l| l == s))
}

/// True iff the normalized answers are equal or one is a whole-token
/// subsequence of the other. Empty answers never match.
pub fn soft_match(answer: &str, gt: &str) -> bool {
    let a = normalize_tokens(answer);
    let g = normalize_tokens(gt);
    if a.is_empty() || g.is_empty() {
        return false;
    }
    a == g || is_subsequence(&a, &g) || is_subsequence(&g, &a)
}

/// Number of words after normalization.
pub fn word_count(answer: &str) -> usize {
    normalize_tokens(answer).len()
}

/// The first `n` whitespace-separated words of the raw answer.
pub fn first_words(answer: &str, n: usize) -> String {
    answer.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}
