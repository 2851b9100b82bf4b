/// Probabilists' Hermite polynomial `He_n(x)` via the three-term
/// recurrence `He_{n+1} = x He_n - n He_{n-1}`.
pub fn hermite(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Integer coefficients of `He_n`, lowest degree first.
pub fn hermite_coefficients(n: usize) -> Vec<i64> {
    let mut prev = vec![1i64];
    if n == 0 {
        return prev;
    }
    let mut cur = vec![0, 1];
    for k in 1..n {
        let mut next = vec![0i64; k + 2];
        for (i, &c) in cur.iter().enumerate() {
            next[i + 1] += c;
        }
        for (i, &c) in prev.iter().enumerate() {
            next[i] -= k as i64 * c;
        }
        prev = cur;
        cur = next;
    }
    cur
}
