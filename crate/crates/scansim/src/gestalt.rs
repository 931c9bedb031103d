//! Ratcliff-Obershelp gestalt pattern matching.
//!
//! The similarity of two strings is `2*M / (|a| + |b|)` where `M` is the
//! total number of matched characters from recursively taking the longest
//! common substring and matching the pieces to its left and right. No junk
//! heuristics. Ties on block length are broken by the smallest index in `a`,
//! then the smallest index in `b`.

/// Longest common substring of `a[a_lo..a_hi]` and `b[b_lo..b_hi]`.
/// Returns (start_a, start_b, len).
fn longest_block(
    a: &[char],
    b: &[char],
    a_lo: usize,
    a_hi: usize,
    b_lo: usize,
    b_hi: usize,
) -> (usize, usize, usize) {
    let (mut best_i, mut best_j, mut best_len) = (a_lo, b_lo, 0usize);
    // lengths[j] = length of the common suffix ending at a[i], b[j]
    let mut prev = vec![0usize; b_hi - b_lo];
    let mut cur = vec![0usize; b_hi - b_lo];
    for i in a_lo..a_hi {
        for j in b_lo..b_hi {
            let jj = j - b_lo;
            if a[i] == b[j] {
                cur[jj] = if jj == 0 { 1 } else { prev[jj - 1] + 1 };
                let len = cur[jj];
                let (si, sj) = (i + 1 - len, j + 1 - len);
                if len > best_len || (len == best_len && (si, sj) < (best_i, best_j)) {
                    best_i = si;
                    best_j = sj;
                    best_len = len;
                }
            } else {
                cur[jj] = 0;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    (best_i, best_j, best_len)
}

fn matched_chars(
    a: &[char],
    b: &[char],
    a_lo: usize,
    a_hi: usize,
    b_lo: usize,
    b_hi: usize,
) -> usize {
    if a_lo >= a_hi || b_lo >= b_hi {
        return 0;
    }
    let (i, j, len) = longest_block(a, b, a_lo, a_hi, b_lo, b_hi);
    if len == 0 {
        return 0;
    }
    len + matched_chars(a, b, a_lo, i, b_lo, j)
        + matched_chars(a, b, i + len, a_hi, j + len, b_hi)
}

/// Gestalt (Ratcliff-Obershelp) similarity in `[0, 1]`.
/// Two empty strings are defined to be identical (1.0).
///
/// Arguments are put in a canonical order before matching so the score is
/// exactly symmetric regardless of how block-length ties fall.
pub fn gestalt_similarity(a: &str, b: &str) -> f64 {
    let mut av: Vec<char> = a.chars().collect();
    let mut bv: Vec<char> = b.chars().collect();
    if av.is_empty() && bv.is_empty() {
        return 1.0;
    }
    if (bv.len(), &bv) < (av.len(), &av) {
        std::mem::swap(&mut av, &mut bv);
    }
    let m = matched_chars(&av, &bv, 0, av.len(), 0, bv.len());
    2.0 * m as f64 / (av.len() + bv.len()) as f64
}
