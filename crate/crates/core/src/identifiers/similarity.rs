//! Ratcliff/Obershelp gestalt pattern matching.

/// Similarity `2·M / (|a| + |b|)`, where `M` counts the characters matched by
/// taking the longest common substring and recursing on the unmatched text
/// to its left and right.
///
/// Ties between equally long substrings go to the leftmost start in the
/// first argument, then the leftmost start in the second. The arguments are
/// put in lexicographic order first, so the measure is symmetric.
/// Two empty strings are identical (1.0).
pub fn ratcliff_obershelp(a: &str, b: &str) -> f64 {
    let (a, b) = if b < a { (b, a) } else { (a, b) };
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    2.0 * matching_chars(&a, &b) as f64 / total as f64
}

/// `M` for already-ordered character slices.
pub fn matching_chars(a: &[char], b: &[char]) -> usize {
    let mut matched = 0;
    let mut stack = vec![(0, a.len(), 0, b.len())];
    // Reused DP rows.
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    while let Some((a_lo, a_hi, b_lo, b_hi)) = stack.pop() {
        if a_lo >= a_hi || b_lo >= b_hi {
            continue;
        }
        let (len, i, j) = longest_common_substring(a, b, (a_lo, a_hi), (b_lo, b_hi), &mut prev, &mut cur);
        if len == 0 {
            continue;
        }
        matched += len;
        stack.push((a_lo, i, b_lo, j));
        stack.push((i + len, a_hi, j + len, b_hi));
    }
    matched
}

/// Returns (length, start in a, start in b).
#[allow(clippy::needless_range_loop)]
fn longest_common_substring(
    a: &[char],
    b: &[char],
    (a_lo, a_hi): (usize, usize),
    (b_lo, b_hi): (usize, usize),
    prev: &mut Vec<usize>,
    cur: &mut Vec<usize>,
) -> (usize, usize, usize) {
    let width = b_hi - b_lo;
    prev[..=width].fill(0);
    let mut best = (0, a_lo, b_lo);
    // Scanning end positions in ascending order and only replacing on a
    // strictly longer run keeps the leftmost start in `a`, then in `b`.
    for i in a_lo..a_hi {
        cur[0] = 0;
        for j in b_lo..b_hi {
            let k = j - b_lo + 1;
            cur[k] = if a[i] == b[j] { prev[k - 1] + 1 } else { 0 };
            if cur[k] > best.0 {
                best = (cur[k], i + 1 - cur[k], j + 1 - cur[k]);
            }
        }
        std::mem::swap(prev, cur);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_disjoint() {
        assert_eq!(ratcliff_obershelp("abcdefgh", "abcdefgh"), 1.0);
        assert_eq!(ratcliff_obershelp("abcd", "wxyz"), 0.0);
        assert_eq!(ratcliff_obershelp("", ""), 1.0);
        assert_eq!(ratcliff_obershelp("", "a"), 0.0);
    }

    #[test]
    fn one_substitution() {
        assert_eq!(ratcliff_obershelp("abcd", "abce"), 0.75);
        let s = ratcliff_obershelp("AAAAAAAAAAAA", "AAAAAAAAAAAB");
        assert!((s - 22.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn greedy_not_optimal() {
        // The greedy choice of "ccc" leaves nothing matchable; an optimal
        // alignment would match four characters.
        let a: Vec<char> = "cbccc".chars().collect();
        let b: Vec<char> = "cccccc".chars().collect();
        assert_eq!(matching_chars(&a, &b), 3);
    }

    #[test]
    fn tie_break_leftmost() {
        // "ab" and "cd" tie at length 2; "ab" starts first in `a`.
        let a: Vec<char> = "abxcd".chars().collect();
        let b: Vec<char> = "cdyab".chars().collect();
        let lcs = longest_common_substring(&a, &b, (0, 5), (0, 5), &mut vec![0; 6], &mut vec![0; 6]);
        assert_eq!(lcs, (2, 0, 3));
        assert_eq!(matching_chars(&a, &b), 2);
        let b: Vec<char> = "abxab".chars().collect();
        // Same start in `a`: the earlier occurrence in `b` wins.
        let a: Vec<char> = "ab".chars().collect();
        let lcs = longest_common_substring(&a, &b, (0, 2), (0, 5), &mut vec![0; 6], &mut vec![0; 6]);
        assert_eq!(lcs, (2, 0, 0));
    }

    #[test]
    fn symmetric_by_ordering() {
        assert_eq!(ratcliff_obershelp("cbccc", "cccccc"), ratcliff_obershelp("cccccc", "cbccc"));
    }
}
