//! Anchored wildcard matching for `~` (`*`, `?`) and LIKE (`%`, `_`).

/// Greedy matcher with single-star backtracking; linear in practice.
fn wildcard(text: &str, pattern: &str, many: char, one: char) -> bool {
    let t: Vec<char> = text.chars().collect();
    let p: Vec<char> = pattern.chars().collect();
    let (mut ti, mut pi) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && p[pi] == many {
            star = Some((pi, ti));
            pi += 1;
        } else if pi < p.len() && (p[pi] == one || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|c| *c == many)
}

/// `~` operator: `*` any run, `?` one character, whole-string match.
pub fn glob_match(text: &str, pattern: &str) -> bool {
    wildcard(text, pattern, '*', '?')
}

/// SQL LIKE: `%` any run, `_` one character, whole-string match.
pub fn like_match(text: &str, pattern: &str) -> bool {
    wildcard(text, pattern, '%', '_')
}

/// Literal prefix of a LIKE pattern, up to its first wildcard.
pub fn like_prefix(pattern: &str) -> &str {
    let end = pattern.find(['%', '_']).unwrap_or(pattern.len());
    &pattern[..end]
}
