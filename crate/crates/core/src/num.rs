//! Small float helpers that `core` does not provide.

/// `x^n` for non-negative integer exponents, by repeated squaring.
pub fn powi(x: f64, n: u64) -> f64 {
    let mut base = x;
    let mut exp = n;
    let mut acc = 1.0;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= base;
        }
        base *= base;
        exp >>= 1;
    }
    acc
}
